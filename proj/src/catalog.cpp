#include "vibe/catalog.hpp"

#include "vibe/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace vibe {

const char* category_name(GarmentCategory c) {
  return c == GarmentCategory::dress ? "dress" : "top";
}

std::optional<GarmentCategory> parse_category(std::string_view s) {
  if (s == "dress") return GarmentCategory::dress;
  if (s == "top") return GarmentCategory::top;
  return std::nullopt;
}

int Catalog::body_idx(const std::string& id) const {
  const auto it = body_index.find(id);
  if (it == body_index.end()) throw data_error("unknown body_id '" + id + "'");
  return it->second;
}

int Catalog::garment_idx(const std::string& id) const {
  const auto it = garment_index.find(id);
  if (it == garment_index.end()) throw data_error("unknown garment_id '" + id + "'");
  return it->second;
}

void Catalog::finalize() {
  body_index.clear();
  garment_index.clear();
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    const BodyRecord& b = bodies[i];
    if (!body_index.emplace(b.body_id, static_cast<int>(i)).second)
      throw data_error("duplicate body_id '" + b.body_id + "'");
    if (b.smpl.size() != kSmplDim)
      throw data_error("body '" + b.body_id + "': expected 10 smpl values, got " +
                       std::to_string(b.smpl.size()));
    if (b.vitals.size() != kVitalsDim)
      throw data_error("body '" + b.body_id + "': expected 4 vitals values, got " +
                       std::to_string(b.vitals.size()));
    for (const double v : b.smpl)
      if (!std::isfinite(v)) throw data_error("body '" + b.body_id + "': non-finite smpl value");
    for (const double v : b.vitals)
      if (!(std::isfinite(v) && v > 0.0))
        throw data_error("body '" + b.body_id + "': vitals must be finite and positive");
  }
  for (std::size_t i = 0; i < garments.size(); ++i) {
    const GarmentRecord& g = garments[i];
    if (!garment_index.emplace(g.garment_id, static_cast<int>(i)).second)
      throw data_error("duplicate garment_id '" + g.garment_id + "'");
    if (g.category != garments.front().category)
      throw data_error("garment '" + g.garment_id + "': mixed categories within one catalog");
    if (g.attributes.size() != attr_dim() || g.visual.size() != visual_dim())
      throw data_error("garment '" + g.garment_id + "': inconsistent vector lengths");
    for (const double a : g.attributes)
      if (a != 0.0 && a != 1.0)
        throw data_error("garment '" + g.garment_id + "': non-binary attribute");
    for (const double v : g.visual)
      if (!std::isfinite(v)) throw data_error("garment '" + g.garment_id + "': non-finite visual value");
  }
  if (!attribute_vocabulary.empty() && attribute_vocabulary.size() != attr_dim())
    throw data_error("attribute vocabulary size " + std::to_string(attribute_vocabulary.size()) +
                     " != attribute dimension " + std::to_string(attr_dim()));
  if (attribute_vocabulary.empty()) {
    for (std::size_t i = 0; i < attr_dim(); ++i)
      attribute_vocabulary.push_back("attr_" + std::to_string(i));
  }
  std::sort(positives.begin(), positives.end());
  positives.erase(std::unique(positives.begin(), positives.end()), positives.end());
  for (const auto& [b, g] : positives) {
    if (b < 0 || b >= static_cast<int>(bodies.size()) || g < 0 ||
        g >= static_cast<int>(garments.size()))
      throw data_error("positive pair references out-of-range index");
  }
  if (has_oracle && oracle_map.size() != bodies.size() * garments.size())
    throw data_error("oracle map size mismatch");
}

namespace {

double parse_num(std::string_view tok, const std::string& path, std::size_t lineno) {
  double v;
  if (!try_parse_double(tok, v))
    throw data_error(path + ":" + std::to_string(lineno) + ": bad number '" + std::string(tok) + "'");
  return v;
}

}  // namespace

Catalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open catalog file '" + path + "'");
  Catalog c;
  std::vector<std::pair<std::string, std::string>> positive_ids;
  std::vector<std::size_t> positive_lines;
  std::string line;
  std::size_t lineno = 0;
  std::size_t attr_n = 0, vis_n = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    const std::string_view kind = f[0];
    if (kind == "vocab") {
      if (f.size() != 2)
        throw data_error(path + ":" + std::to_string(lineno) + ": vocab line needs one name");
      c.attribute_vocabulary.emplace_back(f[1]);
    } else if (kind == "body") {
      if (f.size() != 1 + 1 + kSmplDim + kVitalsDim)
        throw data_error(path + ":" + std::to_string(lineno) + ": body line needs id + 10 smpl + 4 vitals");
      BodyRecord b;
      b.body_id = std::string(f[1]);
      for (std::size_t i = 0; i < kSmplDim; ++i) b.smpl.push_back(parse_num(f[2 + i], path, lineno));
      for (std::size_t i = 0; i < kVitalsDim; ++i)
        b.vitals.push_back(parse_num(f[2 + kSmplDim + i], path, lineno));
      c.bodies.push_back(std::move(b));
    } else if (kind == "garment") {
      if (f.size() < 3)
        throw data_error(path + ":" + std::to_string(lineno) + ": garment line needs id and category");
      GarmentRecord g;
      g.garment_id = std::string(f[1]);
      const auto cat = parse_category(f[2]);
      if (!cat)
        throw data_error(path + ":" + std::to_string(lineno) + ": unknown category '" +
                         std::string(f[2]) + "'");
      g.category = *cat;
      const std::size_t payload = f.size() - 3;
      if (c.garments.empty()) {
        if (c.attribute_vocabulary.empty())
          throw data_error(path + ":" + std::to_string(lineno) +
                           ": vocab lines must precede garments (attribute count is taken from them)");
        attr_n = c.attribute_vocabulary.size();
        if (payload < attr_n)
          throw data_error(path + ":" + std::to_string(lineno) + ": garment '" + g.garment_id +
                           "' shorter than the attribute vocabulary");
        vis_n = payload - attr_n;
      }
      if (payload != attr_n + vis_n)
        throw data_error(path + ":" + std::to_string(lineno) + ": garment '" + g.garment_id +
                         "' has " + std::to_string(payload) + " values, expected " +
                         std::to_string(attr_n + vis_n));
      for (std::size_t i = 0; i < attr_n; ++i) {
        const double a = parse_num(f[3 + i], path, lineno);
        if (a != 0.0 && a != 1.0)
          throw data_error(path + ":" + std::to_string(lineno) + ": non-binary attribute");
        g.attributes.push_back(a);
      }
      for (std::size_t i = 0; i < vis_n; ++i)
        g.visual.push_back(parse_num(f[3 + attr_n + i], path, lineno));
      c.garments.push_back(std::move(g));
    } else if (kind == "positive") {
      if (f.size() != 3)
        throw data_error(path + ":" + std::to_string(lineno) + ": positive line needs body_id garment_id");
      positive_ids.emplace_back(std::string(f[1]), std::string(f[2]));
      positive_lines.push_back(lineno);
    } else {
      throw data_error(path + ":" + std::to_string(lineno) + ": unknown record kind '" +
                       std::string(kind) + "'");
    }
  }
  try {
    c.finalize();
  } catch (const data_error& e) {
    throw data_error(path + ": " + e.what());
  }
  for (std::size_t i = 0; i < positive_ids.size(); ++i) {
    const auto& [bid, gid] = positive_ids[i];
    const auto bi = c.body_index.find(bid);
    if (bi == c.body_index.end())
      throw data_error(path + ":" + std::to_string(positive_lines[i]) +
                       ": positive references unknown body_id '" + bid + "'");
    const auto gi = c.garment_index.find(gid);
    if (gi == c.garment_index.end())
      throw data_error(path + ":" + std::to_string(positive_lines[i]) +
                       ": positive references unknown garment_id '" + gid + "'");
    c.positives.emplace_back(bi->second, gi->second);
  }
  c.finalize();
  return c;
}

std::string serialize_catalog(const Catalog& c) {
  std::string out;
  out += "# catalog v1\n";
  for (const auto& name : c.attribute_vocabulary) out += "vocab " + name + "\n";
  for (const auto& b : c.bodies) {
    out += "body " + b.body_id;
    for (const double v : b.smpl) out += " " + fmt_double(v);
    for (const double v : b.vitals) out += " " + fmt_double(v);
    out += "\n";
  }
  for (const auto& g : c.garments) {
    out += "garment " + g.garment_id + " " + category_name(g.category);
    for (const double v : g.attributes) out += v == 0.0 ? " 0" : " 1";
    for (const double v : g.visual) out += " " + fmt_double(v);
    out += "\n";
  }
  for (const auto& [b, g] : c.positives)
    out += "positive " + c.bodies[b].body_id + " " + c.garments[g].garment_id + "\n";
  return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write file '" + tmp + "'");
    out << content;
    if (!out) throw data_error("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw data_error("cannot rename '" + tmp + "' to '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_catalog(const Catalog& c, const std::string& path) {
  write_file_atomic(path, serialize_catalog(c));
}

void save_oracle(const Catalog& c, const std::string& path) {
  if (!c.has_oracle) throw data_error("catalog has no oracle to save");
  std::string out;
  out += "# oracle v1\n";
  for (std::size_t b = 0; b < c.bodies.size(); ++b)
    for (std::size_t g = 0; g < c.garments.size(); ++g)
      out += c.bodies[b].body_id + " " + c.garments[g].garment_id + " " +
             (c.oracle(static_cast<int>(b), static_cast<int>(g)) ? "1" : "0") + "\n";
  write_file_atomic(path, out);
}

void load_oracle(Catalog& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open oracle file '" + path + "'");
  std::vector<std::uint8_t> seen(c.bodies.size() * c.garments.size(), 0);
  std::vector<std::uint8_t> values(c.bodies.size() * c.garments.size(), 0);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    if (f.size() != 3)
      throw data_error(path + ":" + std::to_string(lineno) + ": expected body_id garment_id 0/1");
    const auto bi = c.body_index.find(std::string(f[0]));
    if (bi == c.body_index.end())
      throw data_error(path + ":" + std::to_string(lineno) + ": unknown body_id '" + std::string(f[0]) + "'");
    const auto gi = c.garment_index.find(std::string(f[1]));
    if (gi == c.garment_index.end())
      throw data_error(path + ":" + std::to_string(lineno) + ": unknown garment_id '" + std::string(f[1]) + "'");
    if (f[2] != "0" && f[2] != "1")
      throw data_error(path + ":" + std::to_string(lineno) + ": oracle value must be 0 or 1");
    const std::size_t idx = static_cast<std::size_t>(bi->second) * c.garments.size() + gi->second;
    if (seen[idx])
      throw data_error(path + ":" + std::to_string(lineno) + ": duplicate oracle pair");
    seen[idx] = 1;
    values[idx] = (f[2] == "1") ? 1 : 0;
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw data_error(path + ": oracle file is missing pairs");
  c.oracle_map = std::move(values);
  c.has_oracle = true;
}

FeatureStats compute_stats(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("compute_stats: no rows");
  const std::size_t dim = rows.front().size();
  FeatureStats s;
  s.mean.assign(dim, 0.0);
  s.stddev.assign(dim, 0.0);
  for (const auto& r : rows) {
    if (r.size() != dim) throw std::invalid_argument("compute_stats: ragged rows");
    for (std::size_t j = 0; j < dim; ++j) s.mean[j] += r[j];
  }
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < dim; ++j) s.mean[j] /= n;
  for (const auto& r : rows)
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = r[j] - s.mean[j];
      s.stddev[j] += d * d;
    }
  for (std::size_t j = 0; j < dim; ++j) {
    s.stddev[j] = std::sqrt(s.stddev[j] / n);
    if (s.stddev[j] < 1e-12) s.stddev[j] = 0.0;  // zero-variance marker
  }
  return s;
}

std::vector<double> apply_stats(const FeatureStats& s, std::span<const double> x) {
  if (x.size() != s.mean.size()) throw std::invalid_argument("apply_stats: dimension mismatch");
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j)
    out[j] = s.stddev[j] == 0.0 ? 0.0 : (x[j] - s.mean[j]) / s.stddev[j];
  return out;
}

std::pair<std::vector<std::vector<double>>, FeatureStats> standardize(
    const std::vector<std::vector<double>>& values, const std::optional<FeatureStats>& stats) {
  const FeatureStats s = stats ? *stats : compute_stats(values);
  std::vector<std::vector<double>> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(apply_stats(s, v));
  return {std::move(out), s};
}

std::vector<double> median_aggregate(const std::vector<std::vector<double>>& samples) {
  if (samples.empty()) throw std::invalid_argument("median_aggregate: empty sample list");
  const std::size_t dim = samples.front().size();
  for (const auto& s : samples)
    if (s.size() != dim) throw std::invalid_argument("median_aggregate: ragged samples");
  std::vector<double> out(dim);
  std::vector<double> col(samples.size());
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t i = 0; i < samples.size(); ++i) col[i] = samples[i][j];
    std::sort(col.begin(), col.end());
    const std::size_t n = col.size();
    out[j] = (n % 2 == 1) ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  }
  return out;
}

Catalog generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_types < 1) throw data_error("synthetic spec: num_types must be >= 1");
  if (static_cast<int>(spec.bodies_per_type.size()) != spec.num_types)
    throw data_error("synthetic spec: bodies_per_type must list one count per type");
  for (const int n : spec.bodies_per_type)
    if (n < 1) throw data_error("synthetic spec: empty type");
  if (spec.num_garments < 1) throw data_error("synthetic spec: num_garments must be >= 1");
  if (static_cast<int>(spec.versatility_distribution.size()) != spec.num_types)
    throw data_error("synthetic spec: versatility_distribution must have num_types entries");
  double vsum = 0.0;
  for (const double p : spec.versatility_distribution) {
    if (p < 0.0) throw data_error("synthetic spec: negative versatility probability");
    vsum += p;
  }
  if (vsum <= 0.0) throw data_error("synthetic spec: versatility_distribution sums to zero");
  if (spec.attribute_noise_flip_rate < 0.0 || spec.attribute_noise_flip_rate > 1.0)
    throw data_error("synthetic spec: attribute_noise_flip_rate outside [0,1]");
  if (!(spec.observation_rate > 0.0 && spec.observation_rate <= 1.0))
    throw data_error("synthetic spec: observation_rate outside (0,1]");
  if (spec.attribute_dim < spec.num_types)
    throw data_error("synthetic spec: attribute_dim must be >= num_types (indicator block)");
  if (spec.visual_dim < 1) throw data_error("synthetic spec: visual_dim must be >= 1");
  if (spec.body_noise < 0.0) throw data_error("synthetic spec: body_noise must be >= 0");

  Rng rng(spec.seed);
  const int k = spec.num_types;
  const int A = spec.attribute_dim;
  const int V = spec.visual_dim;

  // type centroids in smpl space, redrawn until pairwise separation holds
  std::vector<std::vector<double>> smpl_centroid(k, std::vector<double>(kSmplDim));
  for (;;) {
    for (auto& c : smpl_centroid)
      for (double& x : c) x = 2.5 * rng.normal();
    double min_dist = 1e300;
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < kSmplDim; ++j) {
          const double d = smpl_centroid[a][j] - smpl_centroid[b][j];
          d2 += d * d;
        }
        min_dist = std::min(min_dist, std::sqrt(d2));
      }
    if (k == 1 || min_dist >= 6.0) break;
  }

  // vitals centroids correlated with smpl via a fixed linear map
  const double vitals_base[kVitalsDim] = {165.0, 95.0, 75.0, 100.0};
  Matrix vitals_map(kVitalsDim, kSmplDim);
  for (double& x : vitals_map.a) x = 0.8 * rng.normal();
  std::vector<std::vector<double>> vitals_centroid(k, std::vector<double>(kVitalsDim));
  for (int t = 0; t < k; ++t)
    for (std::size_t i = 0; i < kVitalsDim; ++i) {
      double acc = vitals_base[i];
      for (std::size_t j = 0; j < kSmplDim; ++j) acc += vitals_map(i, j) * smpl_centroid[t][j];
      vitals_centroid[t][i] = acc;
    }

  Catalog c;
  for (int t = 0; t < k; ++t) {
    for (int i = 0; i < spec.bodies_per_type[t]; ++i) {
      BodyRecord b;
      b.body_id = "body_t" + std::to_string(t) + "_" + std::to_string(i);
      b.smpl.resize(kSmplDim);
      b.vitals.resize(kVitalsDim);
      for (std::size_t j = 0; j < kSmplDim; ++j)
        b.smpl[j] = smpl_centroid[t][j] + spec.body_noise * rng.normal();
      for (std::size_t j = 0; j < kVitalsDim; ++j)
        b.vitals[j] = std::max(30.0, vitals_centroid[t][j] + 4.0 * spec.body_noise * rng.normal());
      c.bodies.push_back(std::move(b));
    }
  }

  // fixed random linear map from attributes to visual space
  Matrix visual_map(V, A);
  const double mscale = 1.0 / std::sqrt(static_cast<double>(A));
  for (double& x : visual_map.a) x = mscale * rng.normal();
  const double visual_noise_sd = 0.25;

  std::vector<double> vers_cdf(k);
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    acc += spec.versatility_distribution[i] / vsum;
    vers_cdf[i] = acc;
  }

  std::vector<std::vector<int>> garment_types(spec.num_garments);
  int id_width = 1;
  for (int n = spec.num_garments - 1; n >= 10; n /= 10) ++id_width;
  for (int g = 0; g < spec.num_garments; ++g) {
    GarmentRecord rec;
    std::string num = std::to_string(g);
    rec.garment_id = "g" + std::string(id_width - num.size(), '0') + num;
    rec.category = spec.category;
    // versatility = how many distinct types this garment fits
    const double u = rng.uniform();
    int size = 1;
    while (size < k && u > vers_cdf[size - 1]) ++size;
    std::vector<std::size_t> chosen = rng.sample_indices(k, size);
    std::sort(chosen.begin(), chosen.end());
    for (const std::size_t t : chosen) garment_types[g].push_back(static_cast<int>(t));

    rec.attributes.assign(A, 0.0);
    for (const int t : garment_types[g]) rec.attributes[t] = 1.0;
    for (int j = k; j < A; ++j) rec.attributes[j] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    for (int j = 0; j < A; ++j)
      if (rng.uniform() < spec.attribute_noise_flip_rate) rec.attributes[j] = 1.0 - rec.attributes[j];

    rec.visual.assign(V, 0.0);
    for (int i = 0; i < V; ++i) {
      double s = 0.0;
      const double* row = &visual_map.a[static_cast<std::size_t>(i) * A];
      for (int j = 0; j < A; ++j) s += row[j] * rec.attributes[j];
      rec.visual[i] = s + visual_noise_sd * rng.normal();
    }
    c.garments.push_back(std::move(rec));
  }

  c.attribute_vocabulary.clear();
  for (int t = 0; t < k; ++t) c.attribute_vocabulary.push_back("type" + std::to_string(t) + "_fit");
  for (int j = k; j < A; ++j) c.attribute_vocabulary.push_back("style_" + std::to_string(j - k));

  c.oracle_map.assign(c.bodies.size() * c.garments.size(), 0);
  c.has_oracle = true;
  std::vector<int> body_type;
  for (int t = 0; t < k; ++t)
    for (int i = 0; i < spec.bodies_per_type[t]; ++i) body_type.push_back(t);
  for (std::size_t b = 0; b < c.bodies.size(); ++b)
    for (int g = 0; g < spec.num_garments; ++g) {
      const auto& ts = garment_types[g];
      const bool compat = std::find(ts.begin(), ts.end(), body_type[b]) != ts.end();
      c.oracle_map[b * c.garments.size() + g] = compat ? 1 : 0;
      if (compat && rng.uniform() < spec.observation_rate)
        c.positives.emplace_back(static_cast<int>(b), g);
    }

  c.finalize();
  return c;
}

}  // namespace vibe
