#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vibe/common.hpp"

namespace vibe {

inline constexpr std::size_t kSmplDim = 10;
inline constexpr std::size_t kVitalsDim = 4;

struct BodyRecord {
  std::string body_id;
  std::vector<double> smpl;    // 10 shape principal coefficients
  std::vector<double> vitals;  // height, bust, waist, hips (cm)
};

enum class GarmentCategory { dress, top };

const char* category_name(GarmentCategory c);
std::optional<GarmentCategory> parse_category(std::string_view s);

struct GarmentRecord {
  std::string garment_id;
  GarmentCategory category = GarmentCategory::dress;
  std::vector<double> attributes;  // binary, length A
  std::vector<double> visual;      // dense, length V
};

struct Catalog {
  std::vector<BodyRecord> bodies;
  std::vector<GarmentRecord> garments;
  std::vector<std::pair<int, int>> positives;  // (body index, garment index), sorted unique
  std::vector<std::string> attribute_vocabulary;

  bool has_oracle = false;
  std::vector<std::uint8_t> oracle_map;  // row-major bodies x garments

  std::unordered_map<std::string, int> body_index;
  std::unordered_map<std::string, int> garment_index;

  std::size_t attr_dim() const { return garments.empty() ? 0 : garments.front().attributes.size(); }
  std::size_t visual_dim() const { return garments.empty() ? 0 : garments.front().visual.size(); }

  int body_idx(const std::string& id) const;
  int garment_idx(const std::string& id) const;
  bool oracle(int body, int garment) const {
    return oracle_map[static_cast<std::size_t>(body) * garments.size() + garment] != 0;
  }

  // rebuilds index maps and validates invariants; throws data_error on violation
  void finalize();
};

Catalog load_catalog(const std::string& path);
void save_catalog(const Catalog& c, const std::string& path);
std::string serialize_catalog(const Catalog& c);

// Companion ground-truth file: one (body_id, garment_id, 0/1) triple per line.
void save_oracle(const Catalog& c, const std::string& path);
void load_oracle(Catalog& c, const std::string& path);

// Per-dimension mean and population standard deviation.
struct FeatureStats {
  std::vector<double> mean, stddev;
};

FeatureStats compute_stats(const std::vector<std::vector<double>>& rows);
std::vector<double> apply_stats(const FeatureStats& s, std::span<const double> x);

// Training mode (stats absent): compute stats from the inputs and return them.
// Zero-variance dimensions map to 0 in either mode.
std::pair<std::vector<std::vector<double>>, FeatureStats> standardize(
    const std::vector<std::vector<double>>& values,
    const std::optional<FeatureStats>& stats = std::nullopt);

// Persisted with every trained model; computed on the training partition only.
struct StandardizationStats {
  FeatureStats smpl, vitals, visual;
};

// Coordinate-wise median; even counts average the two central values.
std::vector<double> median_aggregate(const std::vector<std::vector<double>>& samples);

struct SyntheticSpec {
  int num_types = 5;
  std::vector<int> bodies_per_type = {23, 9, 14, 6, 8};  // 46 train + 14 test at the default split
  int num_garments = 950;
  // P(#compatible types = 1..num_types)
  std::vector<double> versatility_distribution = {0.29, 0.41, 0.19, 0.10, 0.01};
  double body_noise = 0.25;
  double attribute_noise_flip_rate = 0.05;
  int attribute_dim = 64;
  int visual_dim = 64;
  GarmentCategory category = GarmentCategory::dress;
  double observation_rate = 0.6;
  std::uint64_t seed = 7;
};

// Planted-structure catalog with a full compatibility oracle. Body ids encode the
// planted type ("body_t<type>_<i>") so verification code can recover ground truth.
Catalog generate_synthetic(const SyntheticSpec& spec);

}  // namespace vibe
