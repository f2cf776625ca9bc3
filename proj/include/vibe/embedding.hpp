#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vibe/body_typing.hpp"
#include "vibe/catalog.hpp"
#include "vibe/numkit.hpp"

namespace vibe {

// Hinge margins for positive and negative pairs; hypersphere distances lie in [0,2].
struct Margins {
  double alpha_p = 0.2;
  double alpha_n = 0.4;
};

// Joint body-garment embedding: four projection heads feeding two embedding heads,
// outputs unit vectors on the d-sphere.
//   garment: concat(h_attr(attributes), h_cnn(std visual)) -> f_cloth -> normalize
//   body:    concat(h_smpl(std smpl), h_meas(std vitals))  -> f_body  -> normalize
struct VibeModel {
  Mlp h_attr;   // A -> A -> 32 -> 8
  Mlp h_cnn;    // V -> V -> 256 -> 8
  Mlp h_smpl;   // 10 -> 10 -> 8 -> 4
  Mlp h_meas;   // 4 -> 4 -> 4 -> 4
  Mlp f_cloth;  // 16 -> 8 -> 4
  Mlp f_body;   // 8 -> 16 -> 4
  StandardizationStats stats;
  std::size_t attr_dim = 0, visual_dim = 0, embed_dim = 4;

  std::size_t param_count() const;
};

VibeModel make_vibe_model(std::size_t attr_dim, std::size_t visual_dim, Rng& rng);

void flatten_params(const VibeModel& m, std::vector<double>& out);
void unflatten_params(VibeModel& m, std::span<const double> flat);

struct VibeGrads {
  MlpGrads h_attr, h_cnn, h_smpl, h_meas, f_cloth, f_body;
};
VibeGrads make_vibe_grads(const VibeModel& m);
void zero_vibe_grads(VibeGrads& g);
void flatten_grads(const VibeGrads& g, std::vector<double>& out);

std::vector<double> embed_garment(const VibeModel& m, const GarmentRecord& g);
std::vector<double> embed_body(const VibeModel& m, const BodyRecord& b);

// Negative Euclidean distance between the two embeddings; higher is more compatible.
double score_affinity(const VibeModel& m, const BodyRecord& b, const GarmentRecord& g);

double euclidean_distance(std::span<const double> a, std::span<const double> b);

// (D(z_a,z_p) - alpha_p)_+ + (alpha_n - D(z_a,z_n))_+
double margin_loss(std::span<const double> z_a, std::span<const double> z_p,
                   std::span<const double> z_n, const Margins& m);

struct MarginLossGrads {
  double loss = 0.0;
  std::vector<double> d_a, d_p, d_n;
};
MarginLossGrads margin_loss_backward(std::span<const double> z_a, std::span<const double> z_p,
                                     std::span<const double> z_n, const Margins& m);

// Index triplets over the catalog; embeddings are materialized during loss evaluation.
struct TripletBatch {
  struct BodyCloth {
    int body, pos_garment, neg_garment;
  };
  struct BodyBody {
    int anchor, pos, neg;
  };
  std::vector<BodyCloth> body_cloth;
  std::vector<BodyBody> body_body;
};

struct SamplerOptions {
  bool body_body = true;
  std::optional<int> restrict_type;  // train only on this type's bodies and labels
};

// Uniform triplet sampling over the training partition. Types that cannot supply a
// role (no positives, no negatives, or a single training body for body-body
// anchors) are skipped with a warning.
class TripletSampler {
 public:
  TripletSampler(const Catalog& catalog, const Split& split, const PropagatedLabels& labels,
                 const Clustering& clustering, const SamplerOptions& opts,
                 std::vector<std::string>* warnings = nullptr);

  TripletBatch sample(int body_cloth_count, int body_body_count, Rng& rng) const;

  const std::vector<int>& anchor_bodies() const { return bc_anchor_bodies_; }

 private:
  const PropagatedLabels* labels_;
  const Clustering* clustering_;
  std::vector<int> bc_anchor_bodies_;
  std::vector<int> bb_anchor_bodies_;
  std::vector<std::vector<int>> pos_pool_, neg_pool_;   // per type, training garments
  std::vector<std::vector<int>> same_type_, other_type_;  // per type, training bodies
};

TripletBatch sample_triplets(const Split& split, const PropagatedLabels& labels,
                             const Clustering& clustering, const Catalog& catalog, int count,
                             Rng& rng, const SamplerOptions& opts = {},
                             std::vector<std::string>* warnings = nullptr);

// Mean body-cloth margin loss plus mean body-body margin loss over the batch.
// With `grads` non-null, accumulates exact parameter gradients.
double total_loss(const VibeModel& m, const Catalog& catalog, const TripletBatch& batch,
                  const Margins& margins, VibeGrads* grads = nullptr);

struct VibeTrainConfig {
  double learning_rate = 3e-3;
  double weight_decay = 0.01;
  std::vector<std::pair<int, double>> lr_schedule = {{100, 0.3}, {130, 0.3}};
  int epochs = 180;
  int triplets_per_batch = 64;  // per kind
  int batches_per_epoch = 20;
  Margins margins;
  std::uint64_t seed = 1;
  bool body_body_enabled = true;
  // ablation: train on the largest cluster only, body-body loss off
  bool restrict_to_largest_type = false;
};

// Paper-scale defaults for the single-type ablation (higher lr, shorter run).
VibeTrainConfig agnostic_embed_defaults();

struct VibeTrainResult {
  VibeModel model;
  std::vector<double> epoch_loss;
  std::vector<std::string> warnings;
};

VibeTrainResult train_vibe(const VibeTrainConfig& config, const Catalog& catalog,
                           const Split& split, const PropagatedLabels& labels,
                           const Clustering& clustering);

}  // namespace vibe
