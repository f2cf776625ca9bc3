#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vibe/catalog.hpp"

namespace vibe {

struct KmeansResult {
  int k = 0;
  std::vector<std::vector<double>> centroids;
  std::vector<int> assignment;  // per input point
  double wcss = 0.0;
};

// Lloyd's algorithm with k-means++ seeding; best of `restarts` by within-cluster
// sum of squares; empty clusters reseeded to the point farthest from its centroid.
// Nearest-centroid ties break to the lowest index. Deterministic given seed.
KmeansResult kmeans_fit(const std::vector<std::vector<double>>& features, int k,
                        std::uint64_t seed, int max_iter = 100, int restarts = 8,
                        std::vector<double>* wcss_trace = nullptr);

// Quantized body types over standardized smpl+vitals features.
struct Clustering {
  int k = 0;
  std::vector<std::vector<double>> centroids;              // k x 14
  std::unordered_map<std::string, int> assignment;         // body_id -> type
  std::vector<int> assignment_by_index;                    // parallel to catalog bodies
  FeatureStats feature_stats;                              // defines the clustering feature space
  double wcss = 0.0;
};

Clustering cluster_bodies(const Catalog& catalog, int k, std::uint64_t seed,
                          int max_iter = 100, int restarts = 8);

std::vector<double> clustering_feature(const Clustering& c, const BodyRecord& body);

// Index of the nearest centroid; ties break to the lowest index.
int assign_type(const Clustering& c, std::span<const double> feature);

void save_clustering(const Clustering& c, const std::string& path);
Clustering load_clustering(const std::string& path, const Catalog& catalog);

// Per type: positives = garments worn by any body of the type,
// negatives = garments worn by no body of the type.
struct PropagatedLabels {
  int num_types = 0;
  std::vector<std::vector<int>> positive;               // per type, sorted garment indices
  std::vector<std::vector<int>> negative;               // complement per type
  std::vector<std::vector<std::uint8_t>> is_positive;   // [type][garment]

  // number of distinct types whose positive set contains the garment
  int versatility(int garment) const {
    int n = 0;
    for (int t = 0; t < num_types; ++t) n += is_positive[t][garment] ? 1 : 0;
    return n;
  }
};

PropagatedLabels propagate_labels(const Catalog& catalog, const Clustering& clustering);

struct ScenarioPair {
  int body = 0, garment = 0;
  bool label = false;
};

struct Split {
  std::vector<int> train_bodies, test_bodies;        // catalog body indices
  std::vector<std::vector<int>> heldout_by_type;     // per type, this type's heldout positives
  std::vector<int> heldout_garments;                 // global union, sorted
  std::vector<int> train_garments;                   // complement, sorted
  std::vector<std::uint8_t> is_train_body, is_heldout_garment;
  // (i) person seen / garment unseen, (ii) person unseen / garment seen,
  // (iii) person unseen / garment unseen
  std::vector<ScenarioPair> scenario_i, scenario_ii, scenario_iii;
};

// Holds out max(ceil(body_holdout * type size), 2) bodies per type plus
// ceil(garment_holdout * |positives|) of each type's positive garments; a garment
// heldout for any type is excluded from all training. Pair labels come from the
// type-level propagated labels.
Split build_split(const Catalog& catalog, const PropagatedLabels& labels,
                  const Clustering& clustering, double body_holdout, double garment_holdout,
                  std::uint64_t seed);

void save_split(const Split& s, const Catalog& catalog, const std::string& path);
Split load_split(const std::string& path, const Catalog& catalog, const PropagatedLabels& labels,
                 const Clustering& clustering);

}  // namespace vibe
