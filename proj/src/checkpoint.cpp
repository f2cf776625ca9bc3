#include "vibe/checkpoint.hpp"

#include <algorithm>
#include <cstdio>

namespace vibe {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void emit_vec(std::string& out, const std::string& key, std::span<const double> v) {
  out += key;
  for (const double x : v) out += " " + fmt_double(x);
  out += "\n";
}

void emit_mlp(std::string& out, const std::string& name, const Mlp& net) {
  out += "mlp " + name + " " + std::to_string(net.layers.size()) + "\n";
  for (const auto& l : net.layers) {
    out += "layer " + std::to_string(l.out_dim()) + " " + std::to_string(l.in_dim()) + "\n";
    emit_vec(out, "w", l.w.a);
    emit_vec(out, "b", l.b);
  }
}

void emit_stats(std::string& out, const std::string& name, const FeatureStats& s) {
  emit_vec(out, "stats " + name + "_mean", s.mean);
  emit_vec(out, "stats " + name + "_std", s.stddev);
}

std::string header(const CheckpointInfo& info) {
  std::string out = "checkpoint v" + std::to_string(info.format_version) + "\n";
  out += "method " + info.method + "\n";
  out += "seed " + std::to_string(info.seed) + "\n";
  out += "config " + (info.config_echo.empty() ? "-" : info.config_echo) + "\n";
  return out;
}

void finish(std::string& out, const std::string& path) {
  out += "checksum " + hex64(fnv1a64(out)) + "\n";
  write_file_atomic(path, out);
}

// Tokenized checkpoint reader; validates the checksum before parsing.
class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    const std::string content = read_file(path);
    const std::size_t tail = content.rfind("checksum ");
    if (tail == std::string::npos || (tail != 0 && content[tail - 1] != '\n'))
      throw numeric_error(path + ": missing checksum line");
    const std::string body = content.substr(0, tail);
    std::string sum = content.substr(tail + 9);
    while (!sum.empty() && (sum.back() == '\n' || sum.back() == '\r')) sum.pop_back();
    if (sum != hex64(fnv1a64(body)))
      throw numeric_error(path + ": checksum mismatch (corrupted checkpoint)");
    std::size_t start = 0;
    while (start < body.size()) {
      std::size_t end = body.find('\n', start);
      if (end == std::string::npos) end = body.size();
      lines_.push_back(body.substr(start, end - start));
      start = end + 1;
    }
  }

  bool done() const { return pos_ >= lines_.size(); }

  const std::string& peek() const {
    if (done()) throw data_error(path_ + ": unexpected end of checkpoint");
    return lines_[pos_];
  }

  std::vector<std::string_view> next(const std::string& expect_kind) {
    const std::string& line = peek();
    auto f = split_fields(line);
    if (f.empty() || std::string(f[0]) != expect_kind)
      throw data_error(path_ + ": expected '" + expect_kind + "' record, got '" + line + "'");
    ++pos_;
    return f;
  }

  std::vector<double> next_vec(const std::string& key, std::size_t expected) {
    auto f = next(key);
    std::vector<double> v;
    for (std::size_t i = 1; i < f.size(); ++i) {
      double x;
      if (!try_parse_double(f[i], x)) throw data_error(path_ + ": bad number in '" + key + "'");
      v.push_back(x);
    }
    if (v.size() != expected)
      throw data_error(path_ + ": '" + key + "' has " + std::to_string(v.size()) +
                       " values, expected " + std::to_string(expected));
    return v;
  }

  FeatureStats next_stats(const std::string& name, std::size_t dim) {
    FeatureStats s;
    auto f = next("stats");
    if (std::string(f.at(1)) != name + "_mean")
      throw data_error(path_ + ": expected stats " + name + "_mean");
    for (std::size_t i = 2; i < f.size(); ++i) s.mean.push_back(parse(f[i]));
    f = next("stats");
    if (std::string(f.at(1)) != name + "_std")
      throw data_error(path_ + ": expected stats " + name + "_std");
    for (std::size_t i = 2; i < f.size(); ++i) s.stddev.push_back(parse(f[i]));
    if (s.mean.size() != dim || s.stddev.size() != dim)
      throw data_error(path_ + ": stats " + name + " dimension mismatch");
    return s;
  }

  Mlp next_mlp(const std::string& name) {
    auto f = next("mlp");
    if (std::string(f[1]) != name) throw data_error(path_ + ": expected mlp " + name);
    long long layers;
    if (!try_parse_int(f[2], layers) || layers < 1)
      throw data_error(path_ + ": bad mlp layer count");
    Mlp net;
    for (long long i = 0; i < layers; ++i) {
      auto lf = next("layer");
      long long out_d, in_d;
      if (lf.size() != 3 || !try_parse_int(lf[1], out_d) || !try_parse_int(lf[2], in_d))
        throw data_error(path_ + ": bad layer record");
      LinearLayer l;
      l.w = Matrix(out_d, in_d);
      const std::vector<double> w = next_vec("w", static_cast<std::size_t>(out_d * in_d));
      std::copy(w.begin(), w.end(), l.w.a.begin());
      l.b = next_vec("b", static_cast<std::size_t>(out_d));
      net.layers.push_back(std::move(l));
    }
    return net;
  }

  double parse(std::string_view tok) {
    double x;
    if (!try_parse_double(tok, x)) throw data_error(path_ + ": bad number '" + std::string(tok) + "'");
    return x;
  }

  long long parse_int(std::string_view tok) {
    long long x;
    if (!try_parse_int(tok, x)) throw data_error(path_ + ": bad integer '" + std::string(tok) + "'");
    return x;
  }

  CheckpointInfo read_header() {
    CheckpointInfo info;
    auto v = next("checkpoint");
    if (v.size() != 2 || std::string(v[1]) != "v1")
      throw data_error(path_ + ": unrecognized checkpoint version");
    info.format_version = 1;
    info.method = std::string(next("method").at(1));
    info.seed = static_cast<std::uint64_t>(parse_int(next("seed").at(1)));
    auto cf = next("config");
    std::string echo;
    for (std::size_t i = 1; i < cf.size(); ++i) {
      if (i > 1) echo += " ";
      echo += std::string(cf[i]);
    }
    info.config_echo = echo == "-" ? "" : echo;
    return info;
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<std::string> lines_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_vibe_checkpoint(const VibeModel& model, const CheckpointInfo& info,
                          const std::string& path) {
  std::string out = header(info);
  out += "dims attr " + std::to_string(model.attr_dim) + " visual " +
         std::to_string(model.visual_dim) + " embed " + std::to_string(model.embed_dim) + "\n";
  emit_stats(out, "smpl", model.stats.smpl);
  emit_stats(out, "vitals", model.stats.vitals);
  emit_stats(out, "visual", model.stats.visual);
  emit_mlp(out, "h_attr", model.h_attr);
  emit_mlp(out, "h_cnn", model.h_cnn);
  emit_mlp(out, "h_smpl", model.h_smpl);
  emit_mlp(out, "h_meas", model.h_meas);
  emit_mlp(out, "f_cloth", model.f_cloth);
  emit_mlp(out, "f_body", model.f_body);
  finish(out, path);
}

VibeModel load_vibe_checkpoint(const std::string& path, CheckpointInfo* info_out) {
  Reader r(path);
  const CheckpointInfo info = r.read_header();
  if (info.method != "vibe" && info.method != "agnostic-embed")
    throw data_error(path + ": method tag '" + info.method + "' is not an embedding checkpoint");
  auto d = r.next("dims");
  if (d.size() != 7) throw data_error(path + ": bad dims record");
  VibeModel m;
  m.attr_dim = static_cast<std::size_t>(r.parse_int(d[2]));
  m.visual_dim = static_cast<std::size_t>(r.parse_int(d[4]));
  m.embed_dim = static_cast<std::size_t>(r.parse_int(d[6]));
  m.stats.smpl = r.next_stats("smpl", kSmplDim);
  m.stats.vitals = r.next_stats("vitals", kVitalsDim);
  m.stats.visual = r.next_stats("visual", m.visual_dim);
  m.h_attr = r.next_mlp("h_attr");
  m.h_cnn = r.next_mlp("h_cnn");
  m.h_smpl = r.next_mlp("h_smpl");
  m.h_meas = r.next_mlp("h_meas");
  m.f_cloth = r.next_mlp("f_cloth");
  m.f_body = r.next_mlp("f_body");
  if (info_out) *info_out = info;
  return m;
}

void save_cf_checkpoint(const CFModel& model, const CheckpointInfo& info, const std::string& path) {
  std::string out = header(info);
  out += "dims latent " + std::to_string(model.latent_dim) + " side " +
         std::to_string(model.side_dim) + "\n";
  out += "variant " + std::string(cf_variant_name(model.variant)) + "\n";
  out += "global_bias " + fmt_double(model.global_bias) + "\n";
  std::vector<std::pair<std::string, int>> users(model.user_slot.begin(), model.user_slot.end());
  std::sort(users.begin(), users.end());
  out += "users " + std::to_string(users.size()) + "\n";
  for (const auto& [id, slot] : users) {
    out += "user " + id + " " + fmt_double(model.user_bias[slot]);
    for (int j = 0; j < model.latent_dim; ++j)
      out += " " + fmt_double(model.user_latent[static_cast<std::size_t>(slot) * model.latent_dim + j]);
    out += "\n";
  }
  std::vector<std::pair<std::string, int>> items(model.item_slot.begin(), model.item_slot.end());
  std::sort(items.begin(), items.end());
  out += "items " + std::to_string(items.size()) + "\n";
  for (const auto& [id, slot] : items) {
    out += "item " + id + " " + fmt_double(model.item_bias[slot]);
    for (int j = 0; j < model.latent_dim; ++j)
      out += " " + fmt_double(model.item_latent[static_cast<std::size_t>(slot) * model.latent_dim + j]);
    out += "\n";
  }
  if (model.variant == CFVariant::aware) {
    out += "side_user " + std::to_string(model.side_user.rows) + " " +
           std::to_string(model.side_user.cols) + "\n";
    emit_vec(out, "w", model.side_user.a);
    out += "side_item " + std::to_string(model.side_item.rows) + " " +
           std::to_string(model.side_item.cols) + "\n";
    emit_vec(out, "w", model.side_item.a);
    emit_stats(out, "body", model.body_feat_stats);
    emit_stats(out, "garment", model.garment_feat_stats);
  }
  finish(out, path);
}

CFModel load_cf_checkpoint(const std::string& path, CheckpointInfo* info_out) {
  Reader r(path);
  const CheckpointInfo info = r.read_header();
  if (info.method != "cf-agnostic" && info.method != "cf-aware")
    throw data_error(path + ": method tag '" + info.method + "' is not a CF checkpoint");
  CFModel m;
  auto d = r.next("dims");
  if (d.size() != 5) throw data_error(path + ": bad dims record");
  m.latent_dim = static_cast<int>(r.parse_int(d[2]));
  m.side_dim = static_cast<int>(r.parse_int(d[4]));
  auto v = r.next("variant");
  if (std::string(v.at(1)) == "aware")
    m.variant = CFVariant::aware;
  else
    m.variant = CFVariant::agnostic;
  m.global_bias = r.parse(r.next("global_bias").at(1));
  const long long nu = r.parse_int(r.next("users").at(1));
  m.user_latent.resize(static_cast<std::size_t>(nu) * m.latent_dim);
  m.user_bias.resize(static_cast<std::size_t>(nu));
  for (long long i = 0; i < nu; ++i) {
    auto f = r.next("user");
    if (f.size() != 3 + static_cast<std::size_t>(m.latent_dim))
      throw data_error(path + ": bad user record");
    m.user_slot[std::string(f[1])] = static_cast<int>(i);
    m.user_bias[i] = r.parse(f[2]);
    for (int j = 0; j < m.latent_dim; ++j)
      m.user_latent[static_cast<std::size_t>(i) * m.latent_dim + j] = r.parse(f[3 + j]);
  }
  const long long ni = r.parse_int(r.next("items").at(1));
  m.item_latent.resize(static_cast<std::size_t>(ni) * m.latent_dim);
  m.item_bias.resize(static_cast<std::size_t>(ni));
  for (long long i = 0; i < ni; ++i) {
    auto f = r.next("item");
    if (f.size() != 3 + static_cast<std::size_t>(m.latent_dim))
      throw data_error(path + ": bad item record");
    m.item_slot[std::string(f[1])] = static_cast<int>(i);
    m.item_bias[i] = r.parse(f[2]);
    for (int j = 0; j < m.latent_dim; ++j)
      m.item_latent[static_cast<std::size_t>(i) * m.latent_dim + j] = r.parse(f[3 + j]);
  }
  if (m.variant == CFVariant::aware) {
    auto su = r.next("side_user");
    m.side_user = Matrix(static_cast<std::size_t>(r.parse_int(su.at(1))),
                         static_cast<std::size_t>(r.parse_int(su.at(2))));
    const std::vector<double> wu = r.next_vec("w", m.side_user.a.size());
    std::copy(wu.begin(), wu.end(), m.side_user.a.begin());
    auto si = r.next("side_item");
    m.side_item = Matrix(static_cast<std::size_t>(r.parse_int(si.at(1))),
                         static_cast<std::size_t>(r.parse_int(si.at(2))));
    const std::vector<double> wi = r.next_vec("w", m.side_item.a.size());
    std::copy(wi.begin(), wi.end(), m.side_item.a.begin());
    m.body_feat_stats = r.next_stats("body", m.side_user.cols);
    m.garment_feat_stats = r.next_stats("garment", m.side_item.cols);
  }
  if (info_out) *info_out = info;
  return m;
}

std::string checkpoint_method(const std::string& path) {
  Reader r(path);
  return r.read_header().method;
}

}  // namespace vibe
