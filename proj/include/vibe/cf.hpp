#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "vibe/body_typing.hpp"
#include "vibe/catalog.hpp"
#include "vibe/numkit.hpp"

namespace vibe {

enum class CFVariant { agnostic, aware };

const char* cf_variant_name(CFVariant v);

// Matrix-completion baseline: per-user/per-item latents and biases plus a global
// bias; the aware variant appends feature-projected side vectors to both latents.
struct CFModel {
  CFVariant variant = CFVariant::agnostic;
  int latent_dim = 20;
  int side_dim = 5;
  double global_bias = 0.0;
  std::unordered_map<std::string, int> user_slot, item_slot;
  std::vector<double> user_latent, user_bias;  // slots*d, slots
  std::vector<double> item_latent, item_bias;
  Matrix side_user;  // n x 14        (aware only)
  Matrix side_item;  // n x (A+V)     (aware only)
  FeatureStats body_feat_stats, garment_feat_stats;  // aware only

  std::vector<double> body_features(const BodyRecord& b) const;     // standardized 14-D
  std::vector<double> garment_features(const GarmentRecord& g) const;  // standardized (A+V)-D
};

// logistic(<x_u', y_i'> + b_u + b_i + b_g). Unseen users/items contribute zero
// latent and zero bias; the aware side vector is always computed from features.
double cf_predict(const CFModel& m, const BodyRecord& body, const GarmentRecord& garment);
double cf_predict_logit(const CFModel& m, const BodyRecord& body, const GarmentRecord& garment);

struct CFTrainConfig {
  int latent_dim = 20;
  int side_dim = 5;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  int epochs = 60;  // paper: 60 agnostic, 80 aware
  // empty = derived as x0.1 at (epochs-20) and (epochs-10)
  std::vector<std::pair<int, double>> lr_schedule;
  int negatives_per_positive = 1;
  bool use_propagated_positives = true;  // false: raw observed pairs only
  bool side_init_zero = false;           // keeps side projections at their zero fixed point
  std::uint64_t seed = 1;
};

struct CFTrainResult {
  CFModel model;
  std::vector<double> epoch_loss;  // mean per-sample BCE
};

CFTrainResult cf_train(const CFTrainConfig& config, const Catalog& catalog, const Split& split,
                       const PropagatedLabels& labels, const Clustering& clustering,
                       CFVariant variant);

// Full-batch BCE over labeled samples; with `grads` non-null fills dense gradients
// laid out like flatten_cf_params. Used by the gradient-check harness.
struct CFSample {
  int body, garment;
  double label;
};
double cf_bce_batch(const CFModel& m, const Catalog& catalog, const std::vector<CFSample>& samples,
                    std::vector<double>* grads);

std::size_t cf_param_count(const CFModel& m);
void flatten_cf_params(const CFModel& m, std::vector<double>& out);
void unflatten_cf_params(CFModel& m, std::span<const double> flat);

}  // namespace vibe
