#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vibe/body_typing.hpp"
#include "vibe/catalog.hpp"

namespace vibe {

// Mann-Whitney rank statistic: fraction of (pos, neg) pairs with pos > neg,
// ties counted 1/2. Computed via sorting; equals the pair enumeration exactly.
double auc(std::span<const double> positive_scores, std::span<const double> negative_scores);

using Scorer = std::function<double(int body_idx, int garment_idx)>;
using TrainerFn = std::function<Scorer(const Catalog&, const Clustering&, const PropagatedLabels&,
                                       const Split&, std::uint64_t run_seed)>;

struct ScenarioStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample std across runs
  std::vector<double> per_run;
};

struct ScenarioReport {
  int runs = 0;
  ScenarioStats scenario_i, scenario_ii, scenario_iii;
};

struct QuantilePoint {
  int quantile = 0;
  double auc = 0.0;
  bool valid = false;  // a quantile leaving an empty side is reported invalid
};

struct EvalOptions {
  int runs = 10;
  std::uint64_t seed = 1;
  double body_holdout = 0.2;
  double garment_holdout = 0.2;
  int jobs = 1;
  std::vector<int> quantiles;  // e.g. {100, 75, 50, 25}; empty = skip the curve
};

struct EvalResult {
  ScenarioReport report;
  // scenario (iii) versatility curve per run, when quantiles were requested
  std::vector<std::vector<QuantilePoint>> quantile_per_run;
  std::vector<QuantilePoint> quantile_mean;  // mean over runs with all points valid
};

// For each run r: build a split with seed+r, train via `trainer`, score every
// scenario pair list, and report mean +- std AUC per scenario.
EvalResult evaluate_scenarios(const TrainerFn& trainer, const Catalog& catalog,
                              const Clustering& clustering, const PropagatedLabels& labels,
                              const EvalOptions& options);

struct ScoredPair {
  int body, garment;
  bool label;
  double score;
};

// At quantile q keep the q% most body-specific garments (lowest versatility,
// ties by garment id) and recompute AUC over the surviving pairs.
std::vector<QuantilePoint> versatility_quantile_curve(const std::vector<ScoredPair>& pairs,
                                                      const PropagatedLabels& labels,
                                                      const Catalog& catalog,
                                                      const std::vector<int>& quantiles,
                                                      std::vector<std::string>* warnings = nullptr);

struct PreferencePair {
  std::string body_id, preferred_id, rejected_id;
};

std::vector<PreferencePair> load_preference_pairs(const std::string& path);

using RecordScorer = std::function<double(const BodyRecord&, const GarmentRecord&)>;

// Fraction of pairs ranking the preferred garment above the rejected one, ties 1/2.
double preference_auc(const RecordScorer& scorer, const std::vector<PreferencePair>& pairs,
                      const Catalog& catalog);

std::string format_metrics_file(const std::string& method, std::uint64_t config_hash,
                                const EvalResult& result);
std::string format_metrics_table(const std::string& method, const EvalResult& result);

}  // namespace vibe
