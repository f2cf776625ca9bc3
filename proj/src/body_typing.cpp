#include "vibe/body_typing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace vibe {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

int nearest_centroid(const std::vector<std::vector<double>>& centroids,
                     std::span<const double> p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(centroids[c], p);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

KmeansResult lloyd_once(const std::vector<std::vector<double>>& pts, int k, Rng& rng,
                        int max_iter, std::vector<double>* wcss_trace) {
  const std::size_t n = pts.size();
  const std::size_t dim = pts.front().size();
  KmeansResult r;
  r.k = k;

  // k-means++ seeding
  r.centroids.push_back(pts[rng.uniform_index(n)]);
  std::vector<double> d2(n);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& ctr : r.centroids) best = std::min(best, sq_dist(ctr, pts[i]));
      d2[i] = best;
      total += best;
    }
    std::size_t pick;
    if (total <= 0.0) {
      pick = rng.uniform_index(n);  // all points coincide with chosen centroids
    } else {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    r.centroids.push_back(pts[pick]);
  }

  r.assignment.assign(n, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int a = nearest_centroid(r.centroids, pts[i]);
      if (a != r.assignment[i]) {
        r.assignment[i] = a;
        changed = true;
      }
    }
    // repair empty clusters: move the centroid onto the farthest point
    for (int c = 0; c < k; ++c) {
      const bool empty = std::none_of(r.assignment.begin(), r.assignment.end(),
                                      [c](int a) { return a == c; });
      if (!empty) continue;
      std::size_t far_i = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = sq_dist(r.centroids[r.assignment[i]], pts[i]);
        if (d > far_d) {
          far_d = d;
          far_i = i;
        }
      }
      r.centroids[c] = pts[far_i];
      r.assignment[far_i] = c;
      changed = true;
    }
    for (int c = 0; c < k; ++c) {
      std::vector<double> mean(dim, 0.0);
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (r.assignment[i] == c) {
          for (std::size_t j = 0; j < dim; ++j) mean[j] += pts[i][j];
          ++cnt;
        }
      if (cnt > 0) {
        for (double& m : mean) m /= static_cast<double>(cnt);
        r.centroids[c] = std::move(mean);
      }
    }
    if (wcss_trace) {
      double w = 0.0;
      for (std::size_t i = 0; i < n; ++i) w += sq_dist(r.centroids[r.assignment[i]], pts[i]);
      wcss_trace->push_back(w);
    }
    if (!changed && iter > 0) break;
  }
  // final assignment against the final centroids
  for (std::size_t i = 0; i < n; ++i) r.assignment[i] = nearest_centroid(r.centroids, pts[i]);
  r.wcss = 0.0;
  for (std::size_t i = 0; i < n; ++i) r.wcss += sq_dist(r.centroids[r.assignment[i]], pts[i]);
  return r;
}

}  // namespace

KmeansResult kmeans_fit(const std::vector<std::vector<double>>& features, int k,
                        std::uint64_t seed, int max_iter, int restarts,
                        std::vector<double>* wcss_trace) {
  if (k < 1) throw data_error("kmeans_fit: k must be >= 1");
  if (features.size() < static_cast<std::size_t>(k))
    throw data_error("kmeans_fit: k = " + std::to_string(k) + " exceeds " +
                     std::to_string(features.size()) + " points");
  KmeansResult best;
  bool have = false;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(r + 1)));
    std::vector<double> trace;
    KmeansResult cur = lloyd_once(features, k, rng, max_iter, wcss_trace ? &trace : nullptr);
    if (!have || cur.wcss < best.wcss) {
      best = std::move(cur);
      have = true;
      if (wcss_trace) *wcss_trace = trace;
    }
  }
  return best;
}

Clustering cluster_bodies(const Catalog& catalog, int k, std::uint64_t seed, int max_iter,
                          int restarts) {
  if (catalog.bodies.empty()) throw data_error("cluster_bodies: catalog has no bodies");
  std::vector<std::vector<double>> raw;
  raw.reserve(catalog.bodies.size());
  for (const auto& b : catalog.bodies) {
    std::vector<double> f = b.smpl;
    f.insert(f.end(), b.vitals.begin(), b.vitals.end());
    raw.push_back(std::move(f));
  }
  auto [features, stats] = standardize(raw);
  const KmeansResult km = kmeans_fit(features, k, seed, max_iter, restarts);
  Clustering c;
  c.k = k;
  c.centroids = km.centroids;
  c.assignment_by_index = km.assignment;
  c.feature_stats = std::move(stats);
  c.wcss = km.wcss;
  for (std::size_t i = 0; i < catalog.bodies.size(); ++i)
    c.assignment[catalog.bodies[i].body_id] = km.assignment[i];
  return c;
}

std::vector<double> clustering_feature(const Clustering& c, const BodyRecord& body) {
  std::vector<double> f = body.smpl;
  f.insert(f.end(), body.vitals.begin(), body.vitals.end());
  return apply_stats(c.feature_stats, f);
}

int assign_type(const Clustering& c, std::span<const double> feature) {
  if (c.centroids.empty() || feature.size() != c.centroids.front().size())
    throw std::invalid_argument("assign_type: feature length does not match centroids");
  return nearest_centroid(c.centroids, feature);
}

void save_clustering(const Clustering& c, const std::string& path) {
  std::string out = "# clustering v1\n";
  out += "k " + std::to_string(c.k) + "\n";
  out += "feature_mean";
  for (const double v : c.feature_stats.mean) out += " " + fmt_double(v);
  out += "\nfeature_std";
  for (const double v : c.feature_stats.stddev) out += " " + fmt_double(v);
  out += "\n";
  for (int t = 0; t < c.k; ++t) {
    out += "centroid " + std::to_string(t);
    for (const double v : c.centroids[t]) out += " " + fmt_double(v);
    out += "\n";
  }
  std::vector<std::pair<std::string, int>> rows(c.assignment.begin(), c.assignment.end());
  std::sort(rows.begin(), rows.end());
  for (const auto& [id, t] : rows) out += "assign " + id + " " + std::to_string(t) + "\n";
  write_file_atomic(path, out);
}

Clustering load_clustering(const std::string& path, const Catalog& catalog) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open clustering file '" + path + "'");
  Clustering c;
  std::string line;
  std::size_t lineno = 0;
  auto nums = [&](const std::vector<std::string_view>& f, std::size_t from) {
    std::vector<double> v;
    for (std::size_t i = from; i < f.size(); ++i) {
      double x;
      if (!try_parse_double(f[i], x))
        throw data_error(path + ":" + std::to_string(lineno) + ": bad number");
      v.push_back(x);
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    if (f[0] == "k") {
      long long k;
      if (f.size() != 2 || !try_parse_int(f[1], k) || k < 1)
        throw data_error(path + ":" + std::to_string(lineno) + ": bad k line");
      c.k = static_cast<int>(k);
      c.centroids.assign(c.k, {});
    } else if (f[0] == "feature_mean") {
      c.feature_stats.mean = nums(f, 1);
    } else if (f[0] == "feature_std") {
      c.feature_stats.stddev = nums(f, 1);
    } else if (f[0] == "centroid") {
      long long t;
      if (f.size() < 3 || !try_parse_int(f[1], t) || t < 0 || t >= c.k)
        throw data_error(path + ":" + std::to_string(lineno) + ": bad centroid line");
      c.centroids[static_cast<std::size_t>(t)] = nums(f, 2);
    } else if (f[0] == "assign") {
      long long t;
      if (f.size() != 3 || !try_parse_int(f[2], t) || t < 0 || t >= c.k)
        throw data_error(path + ":" + std::to_string(lineno) + ": bad assign line");
      c.assignment[std::string(f[1])] = static_cast<int>(t);
    } else {
      throw data_error(path + ":" + std::to_string(lineno) + ": unknown record '" +
                       std::string(f[0]) + "'");
    }
  }
  c.assignment_by_index.assign(catalog.bodies.size(), -1);
  for (std::size_t i = 0; i < catalog.bodies.size(); ++i) {
    const auto it = c.assignment.find(catalog.bodies[i].body_id);
    if (it == c.assignment.end())
      throw data_error(path + ": no assignment for body '" + catalog.bodies[i].body_id + "'");
    c.assignment_by_index[i] = it->second;
  }
  return c;
}

PropagatedLabels propagate_labels(const Catalog& catalog, const Clustering& clustering) {
  if (clustering.assignment_by_index.size() != catalog.bodies.size())
    throw data_error("propagate_labels: clustering does not cover all catalog bodies");
  PropagatedLabels pl;
  pl.num_types = clustering.k;
  const std::size_t ng = catalog.garments.size();
  pl.is_positive.assign(clustering.k, std::vector<std::uint8_t>(ng, 0));
  for (const auto& [b, g] : catalog.positives)
    pl.is_positive[clustering.assignment_by_index[b]][g] = 1;
  pl.positive.assign(clustering.k, {});
  pl.negative.assign(clustering.k, {});
  for (int t = 0; t < clustering.k; ++t)
    for (std::size_t g = 0; g < ng; ++g)
      (pl.is_positive[t][g] ? pl.positive[t] : pl.negative[t]).push_back(static_cast<int>(g));
  return pl;
}

Split build_split(const Catalog& catalog, const PropagatedLabels& labels,
                  const Clustering& clustering, double body_holdout, double garment_holdout,
                  std::uint64_t seed) {
  Rng rng(seed);
  Split s;
  const int k = clustering.k;
  std::vector<std::vector<int>> bodies_of_type(k);
  for (std::size_t i = 0; i < catalog.bodies.size(); ++i)
    bodies_of_type[clustering.assignment_by_index[i]].push_back(static_cast<int>(i));

  s.is_train_body.assign(catalog.bodies.size(), 0);
  for (int t = 0; t < k; ++t) {
    const auto& bodies = bodies_of_type[t];
    if (bodies.size() < 3)
      throw data_error("build_split: type " + std::to_string(t) + " has " +
                       std::to_string(bodies.size()) + " bodies; need at least 3");
    const std::size_t n_test = std::max<std::size_t>(
        static_cast<std::size_t>(std::ceil(body_holdout * static_cast<double>(bodies.size()))), 2);
    std::vector<std::size_t> picks = rng.sample_indices(bodies.size(), n_test);
    std::vector<std::uint8_t> is_test(bodies.size(), 0);
    for (const std::size_t p : picks) is_test[p] = 1;
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      if (is_test[i])
        s.test_bodies.push_back(bodies[i]);
      else {
        s.train_bodies.push_back(bodies[i]);
        s.is_train_body[bodies[i]] = 1;
      }
    }
  }
  std::sort(s.train_bodies.begin(), s.train_bodies.end());
  std::sort(s.test_bodies.begin(), s.test_bodies.end());

  s.heldout_by_type.assign(k, {});
  s.is_heldout_garment.assign(catalog.garments.size(), 0);
  for (int t = 0; t < k; ++t) {
    const auto& pos = labels.positive[t];
    if (pos.empty()) continue;
    const std::size_t n_held =
        static_cast<std::size_t>(std::ceil(garment_holdout * static_cast<double>(pos.size())));
    std::vector<std::size_t> picks = rng.sample_indices(pos.size(), n_held);
    std::sort(picks.begin(), picks.end());
    for (const std::size_t p : picks) {
      s.heldout_by_type[t].push_back(pos[p]);
      s.is_heldout_garment[pos[p]] = 1;
    }
  }
  for (std::size_t g = 0; g < catalog.garments.size(); ++g)
    (s.is_heldout_garment[g] ? s.heldout_garments : s.train_garments).push_back(static_cast<int>(g));

  auto emit = [&](const std::vector<int>& bodies, const std::vector<int>& garments,
                  std::vector<ScenarioPair>& out) {
    out.reserve(bodies.size() * garments.size());
    for (const int b : bodies) {
      const int t = clustering.assignment_by_index[b];
      for (const int g : garments)
        out.push_back({b, g, labels.is_positive[t][g] != 0});
    }
  };
  emit(s.train_bodies, s.heldout_garments, s.scenario_i);
  emit(s.test_bodies, s.train_garments, s.scenario_ii);
  emit(s.test_bodies, s.heldout_garments, s.scenario_iii);
  return s;
}

void save_split(const Split& s, const Catalog& catalog, const std::string& path) {
  std::string out = "# split v1\n";
  for (const int b : s.train_bodies) out += "train_body " + catalog.bodies[b].body_id + "\n";
  for (const int b : s.test_bodies) out += "test_body " + catalog.bodies[b].body_id + "\n";
  for (std::size_t t = 0; t < s.heldout_by_type.size(); ++t)
    for (const int g : s.heldout_by_type[t])
      out += "heldout " + std::to_string(t) + " " + catalog.garments[g].garment_id + "\n";
  write_file_atomic(path, out);
}

Split load_split(const std::string& path, const Catalog& catalog, const PropagatedLabels& labels,
                 const Clustering& clustering) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open split file '" + path + "'");
  Split s;
  s.is_train_body.assign(catalog.bodies.size(), 0);
  s.is_heldout_garment.assign(catalog.garments.size(), 0);
  s.heldout_by_type.assign(clustering.k, {});
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    if (f[0] == "train_body" && f.size() == 2) {
      const int b = catalog.body_idx(std::string(f[1]));
      s.train_bodies.push_back(b);
      s.is_train_body[b] = 1;
    } else if (f[0] == "test_body" && f.size() == 2) {
      s.test_bodies.push_back(catalog.body_idx(std::string(f[1])));
    } else if (f[0] == "heldout" && f.size() == 3) {
      long long t;
      if (!try_parse_int(f[1], t) || t < 0 || t >= clustering.k)
        throw data_error(path + ":" + std::to_string(lineno) + ": bad heldout type");
      const int g = catalog.garment_idx(std::string(f[2]));
      s.heldout_by_type[static_cast<std::size_t>(t)].push_back(g);
      s.is_heldout_garment[g] = 1;
    } else {
      throw data_error(path + ":" + std::to_string(lineno) + ": bad split record");
    }
  }
  if (s.train_bodies.size() + s.test_bodies.size() != catalog.bodies.size())
    throw data_error(path + ": split does not cover all catalog bodies");
  std::sort(s.train_bodies.begin(), s.train_bodies.end());
  std::sort(s.test_bodies.begin(), s.test_bodies.end());
  for (std::size_t g = 0; g < catalog.garments.size(); ++g)
    (s.is_heldout_garment[g] ? s.heldout_garments : s.train_garments).push_back(static_cast<int>(g));
  auto emit = [&](const std::vector<int>& bodies, const std::vector<int>& garments,
                  std::vector<ScenarioPair>& out) {
    for (const int b : bodies) {
      const int t = clustering.assignment_by_index[b];
      for (const int g : garments) out.push_back({b, g, labels.is_positive[t][g] != 0});
    }
  };
  emit(s.train_bodies, s.heldout_garments, s.scenario_i);
  emit(s.test_bodies, s.train_garments, s.scenario_ii);
  emit(s.test_bodies, s.heldout_garments, s.scenario_iii);
  return s;
}

}  // namespace vibe
