#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "vibe/body_typing.hpp"

using namespace vibe;

namespace {

// definitional label propagation, kept independent of the implementation
struct BruteLabels {
  std::vector<std::set<int>> positive, negative;
};

BruteLabels brute_propagate(int num_types, int num_garments,
                            const std::vector<int>& body_type,
                            const std::vector<std::pair<int, int>>& positives) {
  BruteLabels out;
  out.positive.assign(num_types, {});
  out.negative.assign(num_types, {});
  for (int t = 0; t < num_types; ++t) {
    for (int g = 0; g < num_garments; ++g) {
      bool worn = false;
      for (const auto& [b, gg] : positives)
        if (gg == g && body_type[b] == t) worn = true;
      (worn ? out.positive[t] : out.negative[t]).insert(g);
    }
  }
  return out;
}

// adjusted Rand index between two labelings
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, long long> table;
  std::map<int, long long> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}]++;
    ra[a[i]]++;
    rb[b[i]]++;
  }
  auto choose2 = [](long long n) { return n * (n - 1) / 2.0; };
  double sum_table = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : table) sum_table += choose2(v);
  for (const auto& [k, v] : ra) sum_a += choose2(v);
  for (const auto& [k, v] : rb) sum_b += choose2(v);
  const double total = choose2(static_cast<long long>(a.size()));
  const double expected = sum_a * sum_b / total;
  const double maxi = 0.5 * (sum_a + sum_b);
  return (sum_table - expected) / (maxi - expected);
}

// a tiny hand-built clustering over an explicit assignment
Clustering fixed_clustering(const Catalog& catalog, int k, const std::vector<int>& assignment) {
  Clustering c;
  c.k = k;
  c.assignment_by_index = assignment;
  c.centroids.assign(k, std::vector<double>(14, 0.0));
  for (std::size_t i = 0; i < catalog.bodies.size(); ++i)
    c.assignment[catalog.bodies[i].body_id] = assignment[i];
  c.feature_stats.mean.assign(14, 0.0);
  c.feature_stats.stddev.assign(14, 1.0);
  return c;
}

Catalog tiny_catalog(int num_bodies, int num_garments,
                     const std::vector<std::pair<int, int>>& positives) {
  Catalog c;
  for (int i = 0; i < num_bodies; ++i) {
    BodyRecord b;
    b.body_id = "b" + std::to_string(i);
    b.smpl.assign(10, static_cast<double>(i));
    b.vitals = {160.0, 90.0, 70.0, 95.0};
    c.bodies.push_back(std::move(b));
  }
  for (int i = 0; i < num_garments; ++i) {
    GarmentRecord g;
    g.garment_id = "g" + std::to_string(i);
    g.attributes = {1.0, 0.0};
    g.visual = {0.5};
    c.garments.push_back(std::move(g));
  }
  c.positives = positives;
  c.finalize();
  return c;
}

int planted_type(const std::string& body_id) {
  // generated ids look like body_t<type>_<i>
  const std::size_t p = body_id.find("_t");
  return std::stoi(body_id.substr(p + 2));
}

}  // namespace

TEST_CASE("kmeans separates two well-separated pairs") {
  const std::vector<std::vector<double>> pts{{0, 0}, {0.1, 0}, {5, 5}, {5.1, 5}};
  const KmeansResult r = kmeans_fit(pts, 2, 1);
  CHECK(r.assignment[0] == r.assignment[1]);
  CHECK(r.assignment[2] == r.assignment[3]);
  CHECK(r.assignment[0] != r.assignment[2]);
}

TEST_CASE("kmeans with k=1 returns the coordinate-wise mean") {
  const std::vector<std::vector<double>> pts{{1, 2}, {3, 4}, {5, 0}};
  const KmeansResult r = kmeans_fit(pts, 1, 1);
  CHECK(r.centroids[0][0] == doctest::Approx(3.0));
  CHECK(r.centroids[0][1] == doctest::Approx(2.0));
}

TEST_CASE("kmeans rejects k beyond the point count") {
  CHECK_THROWS_AS(kmeans_fit({{1.0}, {2.0}}, 3, 1), data_error);
}

TEST_CASE("kmeans wcss never increases across iterations") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 40; ++i) pts.push_back({rng.normal() * 2, rng.normal() * 2, rng.normal()});
    std::vector<double> trace;
    kmeans_fit(pts, 4, 17 + trial, 100, 1, &trace);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-9);
  }
}

TEST_CASE("cluster_bodies recovers planted types on low-noise synthetic data") {
  SyntheticSpec spec;
  spec.num_types = 5;
  spec.bodies_per_type = {23, 9, 14, 6, 8};
  spec.num_garments = 50;
  spec.versatility_distribution = {0.29, 0.41, 0.19, 0.10, 0.01};
  spec.attribute_dim = 16;
  spec.visual_dim = 8;
  spec.body_noise = 0.2;
  const Catalog c = generate_synthetic(spec);
  const Clustering cl = cluster_bodies(c, 5, 42);
  std::vector<int> planted;
  for (const auto& b : c.bodies) planted.push_back(planted_type(b.body_id));
  CHECK(adjusted_rand_index(planted, cl.assignment_by_index) >= 0.9);
}

TEST_CASE("assign_type consistency, exact match, and tie-break") {
  Clustering c;
  c.k = 3;
  c.centroids = {{0.0, 0.0}, {2.0, 0.0}, {4.0, 0.0}};
  c.feature_stats.mean = {0.0, 0.0};
  c.feature_stats.stddev = {1.0, 1.0};
  CHECK(assign_type(c, std::vector<double>{4.0, 0.0}) == 2);
  // equidistant between centroids 0 and 1: lowest index wins
  CHECK(assign_type(c, std::vector<double>{1.0, 0.0}) == 0);
  // equidistant between 1 and 2
  CHECK(assign_type(c, std::vector<double>{3.0, 0.0}) == 1);
}

TEST_CASE("training bodies keep their stored assignment") {
  SyntheticSpec spec;
  spec.num_types = 3;
  spec.bodies_per_type = {5, 5, 5};
  spec.num_garments = 10;
  spec.versatility_distribution = {0.5, 0.3, 0.2};
  spec.attribute_dim = 8;
  spec.visual_dim = 4;
  const Catalog cat = generate_synthetic(spec);
  const Clustering cl = cluster_bodies(cat, 3, 7);
  for (std::size_t i = 0; i < cat.bodies.size(); ++i)
    CHECK(assign_type(cl, clustering_feature(cl, cat.bodies[i])) == cl.assignment_by_index[i]);
}

TEST_CASE("propagate_labels on the worked example") {
  // b0,b1 type 0; b2 type 1; positives (b0,g0),(b2,g1)
  const Catalog cat = tiny_catalog(3, 2, {{0, 0}, {2, 1}});
  const Clustering cl = fixed_clustering(cat, 2, {0, 0, 1});
  const PropagatedLabels pl = propagate_labels(cat, cl);
  CHECK(pl.positive[0] == std::vector<int>{0});
  CHECK(pl.negative[0] == std::vector<int>{1});
  CHECK(pl.positive[1] == std::vector<int>{1});
  CHECK(pl.negative[1] == std::vector<int>{0});
}

TEST_CASE("garment worn by all types is positive everywhere") {
  const Catalog cat = tiny_catalog(2, 2, {{0, 0}, {1, 0}});
  const Clustering cl = fixed_clustering(cat, 2, {0, 1});
  const PropagatedLabels pl = propagate_labels(cat, cl);
  for (int t = 0; t < 2; ++t) {
    CHECK(pl.is_positive[t][0] == 1);
    CHECK(pl.is_positive[t][1] == 0);
  }
}

TEST_CASE("no positives means everything is negative for all types") {
  const Catalog cat = tiny_catalog(3, 4, {});
  const Clustering cl = fixed_clustering(cat, 2, {0, 0, 1});
  const PropagatedLabels pl = propagate_labels(cat, cl);
  for (int t = 0; t < 2; ++t) {
    CHECK(pl.positive[t].empty());
    CHECK(pl.negative[t].size() == 4);
  }
}

TEST_CASE("propagate_labels matches the brute-force definition on random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int nb = 1 + static_cast<int>(rng.uniform_index(8));
    const int ng = 1 + static_cast<int>(rng.uniform_index(12));
    const int nt = 1 + static_cast<int>(rng.uniform_index(3));
    std::vector<int> types(nb);
    for (int& t : types) t = static_cast<int>(rng.uniform_index(nt));
    std::vector<std::pair<int, int>> pos;
    for (int b = 0; b < nb; ++b)
      for (int g = 0; g < ng; ++g)
        if (rng.uniform() < 0.25) pos.emplace_back(b, g);
    const Catalog cat = tiny_catalog(nb, ng, pos);
    const Clustering cl = fixed_clustering(cat, nt, types);
    const PropagatedLabels pl = propagate_labels(cat, cl);
    const BruteLabels ref = brute_propagate(nt, ng, types, pos);
    for (int t = 0; t < nt; ++t) {
      CHECK(std::set<int>(pl.positive[t].begin(), pl.positive[t].end()) == ref.positive[t]);
      CHECK(std::set<int>(pl.negative[t].begin(), pl.negative[t].end()) == ref.negative[t]);
    }
  }
}

TEST_CASE("build_split holdout counts follow the ceil-with-floor-2 rule") {
  SyntheticSpec spec;
  spec.num_types = 2;
  spec.bodies_per_type = {5, 18};
  spec.num_garments = 40;
  spec.versatility_distribution = {0.6, 0.4};
  spec.attribute_dim = 8;
  spec.visual_dim = 4;
  const Catalog cat = generate_synthetic(spec);
  std::vector<int> planted;
  for (const auto& b : cat.bodies) planted.push_back(planted_type(b.body_id));
  const Clustering cl = fixed_clustering(cat, 2, planted);
  const PropagatedLabels pl = propagate_labels(cat, cl);
  const Split s = build_split(cat, pl, cl, 0.2, 0.2, 5);

  int test_t0 = 0, test_t1 = 0;
  for (const int b : s.test_bodies) (planted[b] == 0 ? test_t0 : test_t1)++;
  CHECK(test_t0 == 2);  // ceil(1.0) < 2 floor applies
  CHECK(test_t1 == 4);  // ceil(3.6)
}

TEST_CASE("build_split rejects types with fewer than three bodies") {
  const Catalog cat = tiny_catalog(4, 3, {{0, 0}});
  const Clustering cl = fixed_clustering(cat, 2, {0, 0, 0, 1});
  const PropagatedLabels pl = propagate_labels(cat, cl);
  try {
    build_split(cat, pl, cl, 0.2, 0.2, 1);
    FAIL("expected throw");
  } catch (const data_error& e) {
    CHECK(std::string(e.what()).find("type 1") != std::string::npos);
  }
}

TEST_CASE("scenario lists respect their partitions and are exhaustive") {
  SyntheticSpec spec;
  spec.num_types = 3;
  spec.bodies_per_type = {6, 5, 4};
  spec.num_garments = 30;
  spec.versatility_distribution = {0.4, 0.4, 0.2};
  spec.attribute_dim = 8;
  spec.visual_dim = 4;
  const Catalog cat = generate_synthetic(spec);
  const Clustering cl = cluster_bodies(cat, 3, 11);
  const PropagatedLabels pl = propagate_labels(cat, cl);
  const Split s = build_split(cat, pl, cl, 0.2, 0.2, 3);

  CHECK(s.scenario_i.size() == s.train_bodies.size() * s.heldout_garments.size());
  CHECK(s.scenario_ii.size() == s.test_bodies.size() * s.train_garments.size());
  CHECK(s.scenario_iii.size() == s.test_bodies.size() * s.heldout_garments.size());
  for (const auto& p : s.scenario_iii) {
    CHECK(!s.is_train_body[p.body]);
    CHECK(s.is_heldout_garment[p.garment]);
    const int t = cl.assignment_by_index[p.body];
    CHECK(p.label == (pl.is_positive[t][p.garment] != 0));
  }
  for (const auto& p : s.scenario_ii) CHECK(!s.is_heldout_garment[p.garment]);

  // bodies partition, garments partition
  CHECK(s.train_bodies.size() + s.test_bodies.size() == cat.bodies.size());
  CHECK(s.train_garments.size() + s.heldout_garments.size() == cat.garments.size());
}

TEST_CASE("splits are reproducible per seed") {
  SyntheticSpec spec;
  spec.num_types = 2;
  spec.bodies_per_type = {6, 7};
  spec.num_garments = 25;
  spec.versatility_distribution = {0.5, 0.5};
  spec.attribute_dim = 8;
  spec.visual_dim = 4;
  const Catalog cat = generate_synthetic(spec);
  const Clustering cl = cluster_bodies(cat, 2, 4);
  const PropagatedLabels pl = propagate_labels(cat, cl);
  const Split a = build_split(cat, pl, cl, 0.2, 0.2, 77);
  const Split b = build_split(cat, pl, cl, 0.2, 0.2, 77);
  CHECK(a.train_bodies == b.train_bodies);
  CHECK(a.heldout_garments == b.heldout_garments);
  const Split c = build_split(cat, pl, cl, 0.2, 0.2, 78);
  CHECK((a.train_bodies != c.train_bodies || a.heldout_garments != c.heldout_garments));
}

TEST_CASE("clustering and split files round-trip") {
  SyntheticSpec spec;
  spec.num_types = 2;
  spec.bodies_per_type = {5, 6};
  spec.num_garments = 18;
  spec.versatility_distribution = {0.5, 0.5};
  spec.attribute_dim = 8;
  spec.visual_dim = 4;
  const Catalog cat = generate_synthetic(spec);
  const Clustering cl = cluster_bodies(cat, 2, 4);
  save_clustering(cl, "cl_test.txt");
  const Clustering cl2 = load_clustering("cl_test.txt", cat);
  CHECK(cl2.k == cl.k);
  CHECK(cl2.centroids == cl.centroids);
  CHECK(cl2.assignment_by_index == cl.assignment_by_index);
  CHECK(cl2.feature_stats.mean == cl.feature_stats.mean);
  CHECK(cl2.feature_stats.stddev == cl.feature_stats.stddev);

  const PropagatedLabels pl = propagate_labels(cat, cl);
  const Split s = build_split(cat, pl, cl, 0.2, 0.2, 9);
  save_split(s, cat, "split_test.txt");
  const Split s2 = load_split("split_test.txt", cat, pl, cl);
  CHECK(s2.train_bodies == s.train_bodies);
  CHECK(s2.test_bodies == s.test_bodies);
  CHECK(s2.heldout_garments == s.heldout_garments);
  CHECK(s2.train_garments == s.train_garments);
  CHECK(s2.scenario_iii.size() == s.scenario_iii.size());
  for (std::size_t i = 0; i < s.scenario_iii.size(); ++i) {
    CHECK(s2.scenario_iii[i].body == s.scenario_iii[i].body);
    CHECK(s2.scenario_iii[i].garment == s.scenario_iii[i].garment);
    CHECK(s2.scenario_iii[i].label == s.scenario_iii[i].label);
  }
  std::remove("cl_test.txt");
  std::remove("split_test.txt");
}
