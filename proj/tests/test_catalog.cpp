#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "vibe/catalog.hpp"

using namespace vibe;

namespace {

std::string write_temp(const std::string& content) {
  static int counter = 0;
  const std::string path = "cat_test_" + std::to_string(counter++) + ".txt";
  std::ofstream out(path);
  out << content;
  return path;
}

const char* kMinimal =
    "# minimal\n"
    "vocab a0\n"
    "vocab a1\n"
    "body b1 0 0 0 0 0 0 0 0 0 0 160 90 70 95\n"
    "garment g1 dress 1 0 0.5 -0.25\n"
    "positive b1 g1\n";

}  // namespace

TEST_CASE("load_catalog parses the minimal file") {
  const std::string path = write_temp(kMinimal);
  const Catalog c = load_catalog(path);
  CHECK(c.bodies.size() == 1);
  CHECK(c.garments.size() == 1);
  CHECK(c.positives.size() == 1);
  CHECK(c.attr_dim() == 2);
  CHECK(c.visual_dim() == 2);
  CHECK(c.attribute_vocabulary == std::vector<std::string>{"a0", "a1"});
  std::remove(path.c_str());
}

TEST_CASE("load_catalog rejects dangling positive with id and line") {
  const std::string path = write_temp(
      "vocab a0\n"
      "body b1 0 0 0 0 0 0 0 0 0 0 160 90 70 95\n"
      "garment g1 dress 1 0.5\n"
      "positive b1 gX\n");
  try {
    load_catalog(path);
    FAIL("expected throw");
  } catch (const data_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("gX") != std::string::npos);
    CHECK(msg.find(":4") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("load_catalog rejects non-binary attributes") {
  const std::string path = write_temp(
      "vocab a0\n"
      "body b1 0 0 0 0 0 0 0 0 0 0 160 90 70 95\n"
      "garment g1 dress 2 0.5\n");
  try {
    load_catalog(path);
    FAIL("expected throw");
  } catch (const data_error& e) {
    CHECK(std::string(e.what()).find("non-binary attribute") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("catalog round-trips through save and load") {
  SyntheticSpec spec;
  spec.num_types = 3;
  spec.bodies_per_type = {4, 5, 3};
  spec.num_garments = 20;
  spec.versatility_distribution = {0.5, 0.3, 0.2};
  spec.attribute_dim = 8;
  spec.visual_dim = 5;
  spec.seed = 99;
  const Catalog a = generate_synthetic(spec);
  const std::string path = write_temp(serialize_catalog(a));
  const Catalog b = load_catalog(path);
  REQUIRE(b.bodies.size() == a.bodies.size());
  REQUIRE(b.garments.size() == a.garments.size());
  CHECK(b.positives == a.positives);
  CHECK(b.attribute_vocabulary == a.attribute_vocabulary);
  for (std::size_t i = 0; i < a.bodies.size(); ++i) {
    CHECK(b.bodies[i].body_id == a.bodies[i].body_id);
    CHECK(b.bodies[i].smpl == a.bodies[i].smpl);
    CHECK(b.bodies[i].vitals == a.bodies[i].vitals);
  }
  for (std::size_t i = 0; i < a.garments.size(); ++i) {
    CHECK(b.garments[i].garment_id == a.garments[i].garment_id);
    CHECK(b.garments[i].category == a.garments[i].category);
    CHECK(b.garments[i].attributes == a.garments[i].attributes);
    CHECK(b.garments[i].visual == a.garments[i].visual);
  }
  std::remove(path.c_str());
}

TEST_CASE("oracle file round-trips") {
  SyntheticSpec spec;
  spec.num_types = 2;
  spec.bodies_per_type = {3, 3};
  spec.num_garments = 10;
  spec.versatility_distribution = {0.6, 0.4};
  spec.attribute_dim = 6;
  spec.visual_dim = 4;
  Catalog a = generate_synthetic(spec);
  save_oracle(a, "oracle_test.txt");
  Catalog b = a;
  b.has_oracle = false;
  b.oracle_map.clear();
  load_oracle(b, "oracle_test.txt");
  CHECK(b.oracle_map == a.oracle_map);
  std::remove("oracle_test.txt");
}

TEST_CASE("standardize computes population stats and applies them") {
  const auto [rows, stats] = standardize({{1.0}, {3.0}});
  CHECK(stats.mean[0] == 2.0);
  CHECK(stats.stddev[0] == 1.0);
  CHECK(rows[0][0] == -1.0);
  CHECK(rows[1][0] == 1.0);

  // inference mode reuses training stats
  const auto [rows2, stats2] = standardize({{5.0}}, stats);
  CHECK(rows2[0][0] == 3.0);
  CHECK(stats2.mean == stats.mean);
}

TEST_CASE("standardize maps constant columns to zero") {
  const auto [rows, stats] = standardize({{7.0, 1.0}, {7.0, 3.0}});
  CHECK(stats.stddev[0] == 0.0);
  CHECK(rows[0][0] == 0.0);
  CHECK(rows[1][0] == 0.0);
  CHECK(rows[0][1] == -1.0);
}

TEST_CASE("median_aggregate") {
  CHECK(median_aggregate({{1, 5}, {3, 1}, {2, 9}}) == std::vector<double>{2, 5});
  CHECK(median_aggregate({{4.0, -1.0}}) == std::vector<double>{4.0, -1.0});
  CHECK(median_aggregate({{1, 0}, {3, 0}}) == std::vector<double>{2, 0});
  CHECK_THROWS_AS(median_aggregate({}), std::invalid_argument);
}

TEST_CASE("generate_synthetic is deterministic per seed") {
  SyntheticSpec spec;
  spec.num_types = 2;
  spec.bodies_per_type = {3, 4};
  spec.num_garments = 12;
  spec.versatility_distribution = {0.7, 0.3};
  spec.attribute_dim = 6;
  spec.visual_dim = 3;
  spec.seed = 123;
  CHECK(serialize_catalog(generate_synthetic(spec)) ==
        serialize_catalog(generate_synthetic(spec)));
  spec.seed = 124;
  CHECK(serialize_catalog(generate_synthetic(spec)) !=
        serialize_catalog(generate_synthetic(SyntheticSpec{spec})));
}

TEST_CASE("observation_rate 1 makes positives exactly the oracle-true pairs") {
  SyntheticSpec spec;
  spec.num_types = 2;
  spec.bodies_per_type = {3, 3};
  spec.num_garments = 15;
  spec.versatility_distribution = {0.5, 0.5};
  spec.attribute_dim = 8;
  spec.visual_dim = 4;
  spec.observation_rate = 1.0;
  const Catalog c = generate_synthetic(spec);
  std::size_t oracle_true = 0;
  for (std::size_t b = 0; b < c.bodies.size(); ++b)
    for (std::size_t g = 0; g < c.garments.size(); ++g)
      if (c.oracle(b, g)) ++oracle_true;
  CHECK(c.positives.size() == oracle_true);
  for (const auto& [b, g] : c.positives) CHECK(c.oracle(b, g));
}

TEST_CASE("every emitted positive is oracle-true") {
  SyntheticSpec spec;
  spec.num_types = 3;
  spec.bodies_per_type = {3, 4, 5};
  spec.num_garments = 30;
  spec.versatility_distribution = {0.4, 0.4, 0.2};
  spec.attribute_dim = 12;
  spec.visual_dim = 6;
  spec.observation_rate = 0.4;
  const Catalog c = generate_synthetic(spec);
  for (const auto& [b, g] : c.positives) CHECK(c.oracle(b, g));
}

TEST_CASE("versatility concentrated on num_types makes everything compatible") {
  SyntheticSpec spec;
  spec.num_types = 3;
  spec.bodies_per_type = {3, 3, 3};
  spec.num_garments = 10;
  spec.versatility_distribution = {0.0, 0.0, 1.0};
  spec.attribute_dim = 8;
  spec.visual_dim = 4;
  const Catalog c = generate_synthetic(spec);
  for (std::size_t b = 0; b < c.bodies.size(); ++b)
    for (std::size_t g = 0; g < c.garments.size(); ++g) CHECK(c.oracle(b, g));
}

TEST_CASE("body_noise zero makes same-type bodies identical") {
  SyntheticSpec spec;
  spec.num_types = 2;
  spec.bodies_per_type = {4, 3};
  spec.num_garments = 5;
  spec.versatility_distribution = {0.5, 0.5};
  spec.attribute_dim = 6;
  spec.visual_dim = 3;
  spec.body_noise = 0.0;
  const Catalog c = generate_synthetic(spec);
  for (int i = 1; i < 4; ++i) {
    CHECK(c.bodies[i].smpl == c.bodies[0].smpl);
    CHECK(c.bodies[i].vitals == c.bodies[0].vitals);
  }
}

TEST_CASE("infeasible specs are rejected") {
  SyntheticSpec spec;
  spec.num_types = 2;
  spec.bodies_per_type = {3, 0};  // empty type
  spec.num_garments = 5;
  spec.versatility_distribution = {0.5, 0.5};
  CHECK_THROWS_AS(generate_synthetic(spec), data_error);

  spec.bodies_per_type = {3, 3};
  spec.observation_rate = 0.0;
  CHECK_THROWS_AS(generate_synthetic(spec), data_error);
}
