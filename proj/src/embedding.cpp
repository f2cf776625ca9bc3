#include "vibe/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace vibe {

std::size_t VibeModel::param_count() const {
  return h_attr.param_count() + h_cnn.param_count() + h_smpl.param_count() +
         h_meas.param_count() + f_cloth.param_count() + f_body.param_count();
}

VibeModel make_vibe_model(std::size_t attr_dim, std::size_t visual_dim, Rng& rng) {
  VibeModel m;
  m.attr_dim = attr_dim;
  m.visual_dim = visual_dim;
  m.h_attr = make_mlp({attr_dim, attr_dim, 32, 8}, rng);
  m.h_cnn = make_mlp({visual_dim, visual_dim, 256, 8}, rng);
  m.h_smpl = make_mlp({10, 10, 8, 4}, rng);
  m.h_meas = make_mlp({4, 4, 4, 4}, rng);
  m.f_cloth = make_mlp({16, 8, 4}, rng);
  m.f_body = make_mlp({8, 16, 4}, rng);
  return m;
}

template <class Fn>
static void for_each_mlp(VibeModel& m, Fn&& fn) {
  fn(m.h_attr);
  fn(m.h_cnn);
  fn(m.h_smpl);
  fn(m.h_meas);
  fn(m.f_cloth);
  fn(m.f_body);
}

template <class Fn>
static void for_each_mlp(const VibeModel& m, Fn&& fn) {
  fn(m.h_attr);
  fn(m.h_cnn);
  fn(m.h_smpl);
  fn(m.h_meas);
  fn(m.f_cloth);
  fn(m.f_body);
}

void flatten_params(const VibeModel& m, std::vector<double>& out) {
  out.clear();
  out.reserve(m.param_count());
  for_each_mlp(m, [&](const Mlp& net) {
    for (const auto& l : net.layers) {
      out.insert(out.end(), l.w.a.begin(), l.w.a.end());
      out.insert(out.end(), l.b.begin(), l.b.end());
    }
  });
}

void unflatten_params(VibeModel& m, std::span<const double> flat) {
  std::size_t pos = 0;
  for_each_mlp(m, [&](Mlp& net) {
    for (auto& l : net.layers) {
      std::copy_n(flat.begin() + pos, l.w.a.size(), l.w.a.begin());
      pos += l.w.a.size();
      std::copy_n(flat.begin() + pos, l.b.size(), l.b.begin());
      pos += l.b.size();
    }
  });
  if (pos != flat.size()) throw std::invalid_argument("unflatten_params: length mismatch");
}

VibeGrads make_vibe_grads(const VibeModel& m) {
  return {make_grads(m.h_attr), make_grads(m.h_cnn),  make_grads(m.h_smpl),
          make_grads(m.h_meas), make_grads(m.f_cloth), make_grads(m.f_body)};
}

void zero_vibe_grads(VibeGrads& g) {
  zero_grads(g.h_attr);
  zero_grads(g.h_cnn);
  zero_grads(g.h_smpl);
  zero_grads(g.h_meas);
  zero_grads(g.f_cloth);
  zero_grads(g.f_body);
}

void flatten_grads(const VibeGrads& g, std::vector<double>& out) {
  out.clear();
  const MlpGrads* all[] = {&g.h_attr, &g.h_cnn, &g.h_smpl, &g.h_meas, &g.f_cloth, &g.f_body};
  for (const MlpGrads* mg : all) {
    for (std::size_t i = 0; i < mg->dw.size(); ++i) {
      out.insert(out.end(), mg->dw[i].a.begin(), mg->dw[i].a.end());
      out.insert(out.end(), mg->db[i].begin(), mg->db[i].end());
    }
  }
}

namespace {

// forward state for one embedded entity; enough to run the exact backward pass
struct EntityTape {
  MlpTape head1, head2, f;
  std::vector<double> unit;
  double norm = 0.0;
  std::vector<double> dz;  // accumulated dL/d(unit embedding)
};

void forward_garment(const VibeModel& m, const GarmentRecord& g, EntityTape& t) {
  const std::vector<double> vis = apply_stats(m.stats.visual, g.visual);
  const std::vector<double> a1 = mlp_apply(m.h_attr, g.attributes, &t.head1);
  const std::vector<double> a2 = mlp_apply(m.h_cnn, vis, &t.head2);
  std::vector<double> x;
  x.reserve(a1.size() + a2.size());
  x.insert(x.end(), a1.begin(), a1.end());
  x.insert(x.end(), a2.begin(), a2.end());
  const std::vector<double> y = mlp_apply(m.f_cloth, x, &t.f);
  t.unit = l2_normalize(y, &t.norm);
  t.dz.assign(t.unit.size(), 0.0);
}

void forward_body(const VibeModel& m, const BodyRecord& b, EntityTape& t) {
  const std::vector<double> s = apply_stats(m.stats.smpl, b.smpl);
  const std::vector<double> v = apply_stats(m.stats.vitals, b.vitals);
  const std::vector<double> a1 = mlp_apply(m.h_smpl, s, &t.head1);
  const std::vector<double> a2 = mlp_apply(m.h_meas, v, &t.head2);
  std::vector<double> x;
  x.reserve(a1.size() + a2.size());
  x.insert(x.end(), a1.begin(), a1.end());
  x.insert(x.end(), a2.begin(), a2.end());
  const std::vector<double> y = mlp_apply(m.f_body, x, &t.f);
  t.unit = l2_normalize(y, &t.norm);
  t.dz.assign(t.unit.size(), 0.0);
}

void backward_entity(const Mlp& f, const Mlp& head1_net, const Mlp& head2_net, EntityTape& t,
                     MlpGrads& f_g, MlpGrads& h1_g, MlpGrads& h2_g) {
  const std::vector<double> dy = l2_normalize_backprop(t.unit, t.norm, t.dz);
  const std::vector<double> dx = mlp_backprop(f, t.f, dy, f_g);
  const std::size_t n1 = head1_net.out_dim();
  const std::span<const double> dx1(dx.data(), n1);
  const std::span<const double> dx2(dx.data() + n1, dx.size() - n1);
  mlp_backprop(head1_net, t.head1, dx1, h1_g);
  mlp_backprop(head2_net, t.head2, dx2, h2_g);
}

}  // namespace

std::vector<double> embed_garment(const VibeModel& m, const GarmentRecord& g) {
  if (g.attributes.size() != m.attr_dim || g.visual.size() != m.visual_dim)
    throw std::invalid_argument("embed_garment: garment vector lengths do not match model dims");
  EntityTape t;
  forward_garment(m, g, t);
  return t.unit;
}

std::vector<double> embed_body(const VibeModel& m, const BodyRecord& b) {
  if (b.smpl.size() != kSmplDim || b.vitals.size() != kVitalsDim)
    throw std::invalid_argument("embed_body: body vector lengths do not match model dims");
  EntityTape t;
  forward_body(m, b, t);
  return t.unit;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double score_affinity(const VibeModel& m, const BodyRecord& b, const GarmentRecord& g) {
  const std::vector<double> zb = embed_body(m, b);
  const std::vector<double> zg = embed_garment(m, g);
  return -euclidean_distance(zb, zg);
}

double margin_loss(std::span<const double> z_a, std::span<const double> z_p,
                   std::span<const double> z_n, const Margins& m) {
  const double dp = euclidean_distance(z_a, z_p);
  const double dn = euclidean_distance(z_a, z_n);
  return std::max(0.0, dp - m.alpha_p) + std::max(0.0, m.alpha_n - dn);
}

MarginLossGrads margin_loss_backward(std::span<const double> z_a, std::span<const double> z_p,
                                     std::span<const double> z_n, const Margins& m) {
  MarginLossGrads out;
  const std::size_t d = z_a.size();
  out.d_a.assign(d, 0.0);
  out.d_p.assign(d, 0.0);
  out.d_n.assign(d, 0.0);
  const double dp = euclidean_distance(z_a, z_p);
  const double dn = euclidean_distance(z_a, z_n);
  out.loss = std::max(0.0, dp - m.alpha_p) + std::max(0.0, m.alpha_n - dn);
  if (dp > m.alpha_p && dp > 1e-12) {
    for (std::size_t i = 0; i < d; ++i) {
      const double g = (z_a[i] - z_p[i]) / dp;
      out.d_a[i] += g;
      out.d_p[i] -= g;
    }
  }
  if (dn < m.alpha_n && dn > 1e-12) {
    for (std::size_t i = 0; i < d; ++i) {
      const double g = (z_a[i] - z_n[i]) / dn;
      out.d_a[i] -= g;
      out.d_n[i] += g;
    }
  }
  return out;
}

TripletSampler::TripletSampler(const Catalog& catalog, const Split& split,
                               const PropagatedLabels& labels, const Clustering& clustering,
                               const SamplerOptions& opts, std::vector<std::string>* warnings)
    : labels_(&labels), clustering_(&clustering) {
  (void)catalog;
  const int k = clustering.k;
  if (opts.restrict_type && (*opts.restrict_type < 0 || *opts.restrict_type >= k))
    throw data_error("TripletSampler: restrict_type out of range");

  std::vector<std::vector<int>> train_of_type(k);
  for (const int b : split.train_bodies) train_of_type[clustering.assignment_by_index[b]].push_back(b);

  pos_pool_.assign(k, {});
  neg_pool_.assign(k, {});
  same_type_ = train_of_type;
  other_type_.assign(k, {});
  for (int t = 0; t < k; ++t) {
    if (opts.restrict_type && t != *opts.restrict_type) continue;
    for (const int g : split.train_garments)
      (labels.is_positive[t][g] ? pos_pool_[t] : neg_pool_[t]).push_back(g);
    for (int u = 0; u < k; ++u)
      if (u != t)
        other_type_[t].insert(other_type_[t].end(), train_of_type[u].begin(),
                              train_of_type[u].end());
  }

  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };
  for (int t = 0; t < k; ++t) {
    if (opts.restrict_type && t != *opts.restrict_type) continue;
    const auto& bodies = train_of_type[t];
    if (bodies.empty()) continue;
    if (pos_pool_[t].empty() || neg_pool_[t].empty()) {
      warn("type " + std::to_string(t) + " lacks training " +
           (pos_pool_[t].empty() ? "positives" : "negatives") + "; skipped for body-cloth anchors");
    } else {
      bc_anchor_bodies_.insert(bc_anchor_bodies_.end(), bodies.begin(), bodies.end());
    }
    if (opts.body_body) {
      if (bodies.size() < 2) {
        warn("type " + std::to_string(t) +
             " has a single training body; skipped for body-body anchors");
      } else if (other_type_[t].empty()) {
        warn("type " + std::to_string(t) + " has no other-type training bodies");
      } else {
        bb_anchor_bodies_.insert(bb_anchor_bodies_.end(), bodies.begin(), bodies.end());
      }
    }
  }
  if (bc_anchor_bodies_.empty())
    throw data_error("TripletSampler: no type can form body-cloth triplets");
  if (opts.body_body && bb_anchor_bodies_.empty())
    throw data_error("TripletSampler: no type can form body-body triplets (need >= 2 types)");
}

TripletBatch TripletSampler::sample(int body_cloth_count, int body_body_count, Rng& rng) const {
  TripletBatch batch;
  batch.body_cloth.reserve(body_cloth_count);
  for (int i = 0; i < body_cloth_count; ++i) {
    const int b = bc_anchor_bodies_[rng.uniform_index(bc_anchor_bodies_.size())];
    const int t = clustering_->assignment_by_index[b];
    const int gp = pos_pool_[t][rng.uniform_index(pos_pool_[t].size())];
    const int gn = neg_pool_[t][rng.uniform_index(neg_pool_[t].size())];
    batch.body_cloth.push_back({b, gp, gn});
  }
  batch.body_body.reserve(body_body_count);
  for (int i = 0; i < body_body_count; ++i) {
    const int a = bb_anchor_bodies_[rng.uniform_index(bb_anchor_bodies_.size())];
    const int t = clustering_->assignment_by_index[a];
    const auto& same = same_type_[t];
    int p = a;
    while (p == a) p = same[rng.uniform_index(same.size())];
    const int n = other_type_[t][rng.uniform_index(other_type_[t].size())];
    batch.body_body.push_back({a, p, n});
  }
  return batch;
}

TripletBatch sample_triplets(const Split& split, const PropagatedLabels& labels,
                             const Clustering& clustering, const Catalog& catalog, int count,
                             Rng& rng, const SamplerOptions& opts,
                             std::vector<std::string>* warnings) {
  const TripletSampler sampler(catalog, split, labels, clustering, opts, warnings);
  return sampler.sample(count, opts.body_body ? count : 0, rng);
}

double total_loss(const VibeModel& m, const Catalog& catalog, const TripletBatch& batch,
                  const Margins& margins, VibeGrads* grads) {
  std::unordered_map<int, EntityTape> bodies, garments;
  auto body_tape = [&](int idx) -> EntityTape& {
    auto [it, fresh] = bodies.try_emplace(idx);
    if (fresh) forward_body(m, catalog.bodies[idx], it->second);
    return it->second;
  };
  auto garment_tape = [&](int idx) -> EntityTape& {
    auto [it, fresh] = garments.try_emplace(idx);
    if (fresh) forward_garment(m, catalog.garments[idx], it->second);
    return it->second;
  };

  double loss = 0.0;
  const double wc = batch.body_cloth.empty() ? 0.0 : 1.0 / batch.body_cloth.size();
  const double wb = batch.body_body.empty() ? 0.0 : 1.0 / batch.body_body.size();
  double loss_bc = 0.0, loss_bb = 0.0;
  for (const auto& t : batch.body_cloth) {
    EntityTape& a = body_tape(t.body);
    EntityTape& p = garment_tape(t.pos_garment);
    EntityTape& n = garment_tape(t.neg_garment);
    if (!grads) {
      loss_bc += margin_loss(a.unit, p.unit, n.unit, margins);
      continue;
    }
    const MarginLossGrads g = margin_loss_backward(a.unit, p.unit, n.unit, margins);
    loss_bc += g.loss;
    for (std::size_t i = 0; i < a.unit.size(); ++i) {
      a.dz[i] += wc * g.d_a[i];
      p.dz[i] += wc * g.d_p[i];
      n.dz[i] += wc * g.d_n[i];
    }
  }
  for (const auto& t : batch.body_body) {
    EntityTape& a = body_tape(t.anchor);
    EntityTape& p = body_tape(t.pos);
    EntityTape& n = body_tape(t.neg);
    if (!grads) {
      loss_bb += margin_loss(a.unit, p.unit, n.unit, margins);
      continue;
    }
    const MarginLossGrads g = margin_loss_backward(a.unit, p.unit, n.unit, margins);
    loss_bb += g.loss;
    for (std::size_t i = 0; i < a.unit.size(); ++i) {
      a.dz[i] += wb * g.d_a[i];
      p.dz[i] += wb * g.d_p[i];
      n.dz[i] += wb * g.d_n[i];
    }
  }
  loss = loss_bc * wc + loss_bb * wb;

  if (grads) {
    // entities may repeat across triplets; one backward pass per entity with the
    // summed embedding gradient is the exact reverse-mode derivative
    std::vector<int> order;
    order.reserve(bodies.size());
    for (const auto& [idx, _] : bodies) order.push_back(idx);
    std::sort(order.begin(), order.end());
    for (const int idx : order)
      backward_entity(m.f_body, m.h_smpl, m.h_meas, bodies.at(idx), grads->f_body, grads->h_smpl,
                      grads->h_meas);
    order.clear();
    for (const auto& [idx, _] : garments) order.push_back(idx);
    std::sort(order.begin(), order.end());
    for (const int idx : order)
      backward_entity(m.f_cloth, m.h_attr, m.h_cnn, garments.at(idx), grads->f_cloth,
                      grads->h_attr, grads->h_cnn);
  }
  return loss;
}

VibeTrainConfig agnostic_embed_defaults() {
  VibeTrainConfig c;
  c.learning_rate = 0.05;
  c.lr_schedule = {{70, 0.3}, {100, 0.3}};
  c.epochs = 130;
  c.body_body_enabled = false;
  c.restrict_to_largest_type = true;
  return c;
}

VibeTrainResult train_vibe(const VibeTrainConfig& config, const Catalog& catalog,
                           const Split& split, const PropagatedLabels& labels,
                           const Clustering& clustering) {
  if (config.epochs <= 0) throw data_error("train_vibe: epochs must be positive");
  for (const auto& [epoch, mult] : config.lr_schedule)
    if (epoch >= config.epochs)
      throw data_error("train_vibe: schedule epoch " + std::to_string(epoch) +
                       " not below total epochs");

  VibeTrainResult out;
  Rng rng(config.seed);

  SamplerOptions sopts;
  sopts.body_body = config.body_body_enabled;
  if (config.restrict_to_largest_type) {
    std::vector<int> count(clustering.k, 0);
    for (const int b : split.train_bodies) count[clustering.assignment_by_index[b]]++;
    const int largest = static_cast<int>(
        std::max_element(count.begin(), count.end()) - count.begin());
    sopts.restrict_type = largest;
  }

  // standardization from the training partition only; the restricted ablation
  // sees only its own cluster's bodies
  std::vector<std::vector<double>> smpl_rows, vitals_rows, visual_rows;
  for (const int b : split.train_bodies) {
    if (sopts.restrict_type &&
        clustering.assignment_by_index[b] != *sopts.restrict_type)
      continue;
    smpl_rows.push_back(catalog.bodies[b].smpl);
    vitals_rows.push_back(catalog.bodies[b].vitals);
  }
  for (const int g : split.train_garments) visual_rows.push_back(catalog.garments[g].visual);
  if (smpl_rows.empty() || visual_rows.empty())
    throw data_error("train_vibe: empty training partition");
  if (catalog.attr_dim() < 1 || catalog.visual_dim() < 1)
    throw data_error("train_vibe: catalog must carry attribute and visual features");

  VibeModel model = make_vibe_model(catalog.attr_dim(), catalog.visual_dim(), rng);
  model.stats.smpl = compute_stats(smpl_rows);
  model.stats.vitals = compute_stats(vitals_rows);
  model.stats.visual = compute_stats(visual_rows);

  const TripletSampler sampler(catalog, split, labels, clustering, sopts, &out.warnings);

  std::vector<double> params, gflat;
  flatten_params(model, params);
  AdamState adam = make_adam(params.size(), config.learning_rate, config.weight_decay,
                             config.lr_schedule);
  VibeGrads grads = make_vibe_grads(model);

  const int bb_count = config.body_body_enabled ? config.triplets_per_batch : 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int b = 0; b < config.batches_per_epoch; ++b) {
      const TripletBatch batch = sampler.sample(config.triplets_per_batch, bb_count, rng);
      zero_vibe_grads(grads);
      const double loss = total_loss(model, catalog, batch, config.margins, &grads);
      if (!std::isfinite(loss))
        throw numeric_error("train_vibe: non-finite loss at epoch " + std::to_string(epoch) +
                            " batch " + std::to_string(b));
      epoch_loss += loss;
      flatten_grads(grads, gflat);
      adam_step(params, gflat, adam, epoch);
      unflatten_params(model, params);
    }
    out.epoch_loss.push_back(epoch_loss / config.batches_per_epoch);
  }
  out.model = std::move(model);
  return out;
}

}  // namespace vibe
