#include "vibe/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace vibe {

double auc(std::span<const double> positive_scores, std::span<const double> negative_scores) {
  if (positive_scores.empty() || negative_scores.empty())
    throw data_error("auc: both score lists must be nonempty");
  struct Entry {
    double score;
    bool pos;
  };
  std::vector<Entry> all;
  all.reserve(positive_scores.size() + negative_scores.size());
  for (const double s : positive_scores) all.push_back({s, true});
  for (const double s : negative_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // midranks over tie groups; U = sum of positive ranks - m(m+1)/2 counts
  // wins + ties/2 exactly in half-integer arithmetic
  const std::size_t n = all.size();
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && all[j + 1].score == all[i].score) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t t = i; t <= j; ++t)
      if (all[t].pos) pos_rank_sum += midrank;
    i = j + 1;
  }
  const double m = static_cast<double>(positive_scores.size());
  const double u = pos_rank_sum - m * (m + 1.0) / 2.0;
  return u / (m * static_cast<double>(negative_scores.size()));
}

namespace {

double score_pairs_auc(const Scorer& scorer, const std::vector<ScenarioPair>& pairs,
                       std::vector<ScoredPair>* scored_out) {
  std::vector<double> pos, neg;
  for (const ScenarioPair& p : pairs) {
    const double s = scorer(p.body, p.garment);
    (p.label ? pos : neg).push_back(s);
    if (scored_out) scored_out->push_back({p.body, p.garment, p.label, s});
  }
  return auc(pos, neg);
}

ScenarioStats summarize(std::vector<double> values) {
  ScenarioStats s;
  s.per_run = std::move(values);
  const double n = static_cast<double>(s.per_run.size());
  s.mean = std::accumulate(s.per_run.begin(), s.per_run.end(), 0.0) / n;
  if (s.per_run.size() > 1) {
    double acc = 0.0;
    for (const double v : s.per_run) acc += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(acc / (n - 1.0));
  }
  return s;
}

}  // namespace

EvalResult evaluate_scenarios(const TrainerFn& trainer, const Catalog& catalog,
                              const Clustering& clustering, const PropagatedLabels& labels,
                              const EvalOptions& options) {
  if (options.runs < 1) throw data_error("evaluate_scenarios: runs must be >= 1");
  struct RunOut {
    double auc_i = 0.0, auc_ii = 0.0, auc_iii = 0.0;
    std::vector<QuantilePoint> quantile;
  };
  std::vector<RunOut> runs(options.runs);

  auto run_one = [&](int r) {
    const std::uint64_t run_seed = options.seed + static_cast<std::uint64_t>(r);
    const Split split = build_split(catalog, labels, clustering, options.body_holdout,
                                    options.garment_holdout, run_seed);
    const Scorer scorer = trainer(catalog, clustering, labels, split, run_seed);
    std::vector<ScoredPair> scored_iii;
    runs[r].auc_i = score_pairs_auc(scorer, split.scenario_i, nullptr);
    runs[r].auc_ii = score_pairs_auc(scorer, split.scenario_ii, nullptr);
    runs[r].auc_iii = score_pairs_auc(scorer, split.scenario_iii,
                                      options.quantiles.empty() ? nullptr : &scored_iii);
    if (!options.quantiles.empty())
      runs[r].quantile = versatility_quantile_curve(scored_iii, labels, catalog, options.quantiles);
  };

  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
    for (int r = 0; r < options.runs; ++r) run_one(r);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < std::min(jobs, options.runs); ++w)
      pool.emplace_back([&] {
        for (;;) {
          const int r = next.fetch_add(1);
          if (r >= options.runs) return;
          run_one(r);
        }
      });
    for (auto& t : pool) t.join();
  }

  EvalResult out;
  out.report.runs = options.runs;
  std::vector<double> a, b, c;
  for (const RunOut& r : runs) {
    a.push_back(r.auc_i);
    b.push_back(r.auc_ii);
    c.push_back(r.auc_iii);
  }
  out.report.scenario_i = summarize(std::move(a));
  out.report.scenario_ii = summarize(std::move(b));
  out.report.scenario_iii = summarize(std::move(c));
  if (!options.quantiles.empty()) {
    for (RunOut& r : runs) out.quantile_per_run.push_back(std::move(r.quantile));
    for (std::size_t q = 0; q < options.quantiles.size(); ++q) {
      QuantilePoint mean{options.quantiles[q], 0.0, true};
      int valid = 0;
      for (const auto& run : out.quantile_per_run)
        if (run[q].valid) {
          mean.auc += run[q].auc;
          ++valid;
        }
      if (valid == static_cast<int>(out.quantile_per_run.size()))
        mean.auc /= valid;
      else
        mean.valid = false;
      out.quantile_mean.push_back(mean);
    }
  }
  return out;
}

std::vector<QuantilePoint> versatility_quantile_curve(const std::vector<ScoredPair>& pairs,
                                                      const PropagatedLabels& labels,
                                                      const Catalog& catalog,
                                                      const std::vector<int>& quantiles,
                                                      std::vector<std::string>* warnings) {
  std::vector<int> garments;
  for (const ScoredPair& p : pairs) garments.push_back(p.garment);
  std::sort(garments.begin(), garments.end());
  garments.erase(std::unique(garments.begin(), garments.end()), garments.end());
  // most body-specific first: ascending versatility, garment id breaks ties
  std::sort(garments.begin(), garments.end(), [&](int x, int y) {
    const int vx = labels.versatility(x), vy = labels.versatility(y);
    if (vx != vy) return vx < vy;
    return catalog.garments[x].garment_id < catalog.garments[y].garment_id;
  });

  std::vector<QuantilePoint> out;
  for (const int q : quantiles) {
    if (q < 1 || q > 100) throw data_error("versatility_quantile_curve: quantile outside [1,100]");
    const std::size_t keep = static_cast<std::size_t>(
        std::ceil(static_cast<double>(garments.size()) * q / 100.0));
    std::vector<std::uint8_t> kept(catalog.garments.size(), 0);
    for (std::size_t i = 0; i < keep && i < garments.size(); ++i) kept[garments[i]] = 1;
    std::vector<double> pos, neg;
    for (const ScoredPair& p : pairs)
      if (kept[p.garment]) (p.label ? pos : neg).push_back(p.score);
    QuantilePoint pt{q, 0.0, false};
    if (pos.empty() || neg.empty()) {
      if (warnings)
        warnings->push_back("quantile " + std::to_string(q) +
                            "% leaves an empty side; point omitted");
    } else {
      pt.auc = auc(pos, neg);
      pt.valid = true;
    }
    out.push_back(pt);
  }
  return out;
}

std::vector<PreferencePair> load_preference_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open preference file '" + path + "'");
  std::vector<PreferencePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    if (f.size() != 3)
      throw data_error(path + ":" + std::to_string(lineno) +
                       ": expected body_id preferred_id rejected_id");
    PreferencePair p{std::string(f[0]), std::string(f[1]), std::string(f[2])};
    if (p.preferred_id == p.rejected_id)
      throw data_error(path + ":" + std::to_string(lineno) + ": preferred and rejected must differ");
    out.push_back(std::move(p));
  }
  return out;
}

double preference_auc(const RecordScorer& scorer, const std::vector<PreferencePair>& pairs,
                      const Catalog& catalog) {
  if (pairs.empty()) throw data_error("preference_auc: no pairs");
  double wins = 0.0;
  for (const PreferencePair& p : pairs) {
    const BodyRecord& b = catalog.bodies[catalog.body_idx(p.body_id)];
    const GarmentRecord& gp = catalog.garments[catalog.garment_idx(p.preferred_id)];
    const GarmentRecord& gr = catalog.garments[catalog.garment_idx(p.rejected_id)];
    const double sp = scorer(b, gp);
    const double sr = scorer(b, gr);
    if (sp > sr)
      wins += 1.0;
    else if (sp == sr)
      wins += 0.5;
  }
  return wins / static_cast<double>(pairs.size());
}

namespace {

void emit_scenario(std::string& out, const char* key, const ScenarioStats& s) {
  out += std::string("scenario_") + key + ".mean = " + fmt_double(s.mean) + "\n";
  out += std::string("scenario_") + key + ".std = " + fmt_double(s.stddev) + "\n";
  out += std::string("scenario_") + key + ".runs =";
  for (const double v : s.per_run) out += " " + fmt_double(v);
  out += "\n";
}

}  // namespace

std::string format_metrics_file(const std::string& method, std::uint64_t config_hash,
                                const EvalResult& result) {
  std::string out = "# metrics v1\n";
  out += "method = " + method + "\n";
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(config_hash));
  out += "config_hash = " + std::string(hex) + "\n";
  out += "runs = " + std::to_string(result.report.runs) + "\n";
  emit_scenario(out, "i", result.report.scenario_i);
  emit_scenario(out, "ii", result.report.scenario_ii);
  emit_scenario(out, "iii", result.report.scenario_iii);
  for (const QuantilePoint& q : result.quantile_mean) {
    out += "quantile." + std::to_string(q.quantile) + " = " +
           (q.valid ? fmt_double(q.auc) : std::string("omitted")) + "\n";
  }
  return out;
}

std::string format_metrics_table(const std::string& method, const EvalResult& result) {
  std::ostringstream os;
  os << "method: " << method << " (" << result.report.runs << " runs)\n";
  auto row = [&](const char* name, const ScenarioStats& s) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "  %-28s %.4f +- %.4f\n", name, s.mean, s.stddev);
    os << buf;
  };
  row("person seen, garment unseen", result.report.scenario_i);
  row("person unseen, garment seen", result.report.scenario_ii);
  row("person unseen, garment unseen", result.report.scenario_iii);
  if (!result.quantile_mean.empty()) {
    os << "  specificity quantiles (scenario iii):";
    for (const QuantilePoint& q : result.quantile_mean) {
      char buf[48];
      if (q.valid)
        std::snprintf(buf, sizeof(buf), " %d%%=%.4f", q.quantile, q.auc);
      else
        std::snprintf(buf, sizeof(buf), " %d%%=omitted", q.quantile);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace vibe
