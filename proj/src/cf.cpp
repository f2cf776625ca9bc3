#include "vibe/cf.hpp"

#include <algorithm>
#include <cmath>

namespace vibe {

const char* cf_variant_name(CFVariant v) {
  return v == CFVariant::agnostic ? "agnostic" : "aware";
}

std::vector<double> CFModel::body_features(const BodyRecord& b) const {
  std::vector<double> f = b.smpl;
  f.insert(f.end(), b.vitals.begin(), b.vitals.end());
  return apply_stats(body_feat_stats, f);
}

std::vector<double> CFModel::garment_features(const GarmentRecord& g) const {
  std::vector<double> f = g.attributes;
  f.insert(f.end(), g.visual.begin(), g.visual.end());
  return apply_stats(garment_feat_stats, f);
}

namespace {

double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// numerically safe -[p log q + (1-p) log(1-q)] computed from the logit
double bce_from_logit(double logit, double p) {
  const double softplus = logit > 0.0 ? logit + std::log1p(std::exp(-logit))
                                      : std::log1p(std::exp(logit));
  return softplus - p * logit;
}

void side_vector(const Matrix& proj, std::span<const double> feat, std::vector<double>& out) {
  out.assign(proj.rows, 0.0);
  for (std::size_t i = 0; i < proj.rows; ++i) {
    const double* row = &proj.a[i * proj.cols];
    double acc = 0.0;
    for (std::size_t j = 0; j < proj.cols; ++j) acc += row[j] * feat[j];
    out[i] = acc;
  }
}

}  // namespace

double cf_predict_logit(const CFModel& m, const BodyRecord& body, const GarmentRecord& garment) {
  const auto ui = m.user_slot.find(body.body_id);
  const auto ii = m.item_slot.find(garment.garment_id);
  double logit = m.global_bias;
  const int d = m.latent_dim;
  const double* xu = nullptr;
  const double* yi = nullptr;
  if (ui != m.user_slot.end()) {
    logit += m.user_bias[ui->second];
    xu = &m.user_latent[static_cast<std::size_t>(ui->second) * d];
  }
  if (ii != m.item_slot.end()) {
    logit += m.item_bias[ii->second];
    yi = &m.item_latent[static_cast<std::size_t>(ii->second) * d];
  }
  if (xu && yi)
    for (int j = 0; j < d; ++j) logit += xu[j] * yi[j];
  if (m.variant == CFVariant::aware) {
    std::vector<double> vu, vi;
    side_vector(m.side_user, m.body_features(body), vu);
    side_vector(m.side_item, m.garment_features(garment), vi);
    for (int j = 0; j < m.side_dim; ++j) logit += vu[j] * vi[j];
  }
  return logit;
}

double cf_predict(const CFModel& m, const BodyRecord& body, const GarmentRecord& garment) {
  return logistic(cf_predict_logit(m, body, garment));
}

std::size_t cf_param_count(const CFModel& m) {
  std::size_t n = 1 + m.user_latent.size() + m.user_bias.size() + m.item_latent.size() +
                  m.item_bias.size();
  if (m.variant == CFVariant::aware) n += m.side_user.a.size() + m.side_item.a.size();
  return n;
}

void flatten_cf_params(const CFModel& m, std::vector<double>& out) {
  out.clear();
  out.reserve(cf_param_count(m));
  out.push_back(m.global_bias);
  out.insert(out.end(), m.user_latent.begin(), m.user_latent.end());
  out.insert(out.end(), m.user_bias.begin(), m.user_bias.end());
  out.insert(out.end(), m.item_latent.begin(), m.item_latent.end());
  out.insert(out.end(), m.item_bias.begin(), m.item_bias.end());
  if (m.variant == CFVariant::aware) {
    out.insert(out.end(), m.side_user.a.begin(), m.side_user.a.end());
    out.insert(out.end(), m.side_item.a.begin(), m.side_item.a.end());
  }
}

void unflatten_cf_params(CFModel& m, std::span<const double> flat) {
  std::size_t pos = 0;
  auto take = [&](double* dst, std::size_t n) {
    std::copy_n(flat.begin() + pos, n, dst);
    pos += n;
  };
  m.global_bias = flat[pos++];
  take(m.user_latent.data(), m.user_latent.size());
  take(m.user_bias.data(), m.user_bias.size());
  take(m.item_latent.data(), m.item_latent.size());
  take(m.item_bias.data(), m.item_bias.size());
  if (m.variant == CFVariant::aware) {
    take(m.side_user.a.data(), m.side_user.a.size());
    take(m.side_item.a.data(), m.side_item.a.size());
  }
  if (pos != flat.size()) throw std::invalid_argument("unflatten_cf_params: length mismatch");
}

double cf_bce_batch(const CFModel& m, const Catalog& catalog, const std::vector<CFSample>& samples,
                    std::vector<double>* grads) {
  if (grads) grads->assign(cf_param_count(m), 0.0);
  const int d = m.latent_dim;
  const std::size_t off_ul = 1;
  const std::size_t off_ub = off_ul + m.user_latent.size();
  const std::size_t off_il = off_ub + m.user_bias.size();
  const std::size_t off_ib = off_il + m.item_latent.size();
  const std::size_t off_su = off_ib + m.item_bias.size();
  const std::size_t off_si = off_su + m.side_user.a.size();

  double total = 0.0;
  std::vector<double> vu, vi;
  for (const CFSample& s : samples) {
    const BodyRecord& body = catalog.bodies[s.body];
    const GarmentRecord& garment = catalog.garments[s.garment];
    const double logit = cf_predict_logit(m, body, garment);
    total += bce_from_logit(logit, s.label);
    if (!grads) continue;
    const double r = logistic(logit) - s.label;  // dBCE/dlogit
    (*grads)[0] += r;
    const auto ui = m.user_slot.find(body.body_id);
    const auto ii = m.item_slot.find(garment.garment_id);
    if (ui != m.user_slot.end()) (*grads)[off_ub + ui->second] += r;
    if (ii != m.item_slot.end()) (*grads)[off_ib + ii->second] += r;
    if (ui != m.user_slot.end() && ii != m.item_slot.end()) {
      const double* xu = &m.user_latent[static_cast<std::size_t>(ui->second) * d];
      const double* yi = &m.item_latent[static_cast<std::size_t>(ii->second) * d];
      for (int j = 0; j < d; ++j) {
        (*grads)[off_ul + static_cast<std::size_t>(ui->second) * d + j] += r * yi[j];
        (*grads)[off_il + static_cast<std::size_t>(ii->second) * d + j] += r * xu[j];
      }
    }
    if (m.variant == CFVariant::aware) {
      const std::vector<double> fu = m.body_features(body);
      const std::vector<double> fi = m.garment_features(garment);
      side_vector(m.side_user, fu, vu);
      side_vector(m.side_item, fi, vi);
      for (int a = 0; a < m.side_dim; ++a) {
        for (std::size_t j = 0; j < m.side_user.cols; ++j)
          (*grads)[off_su + a * m.side_user.cols + j] += r * vi[a] * fu[j];
        for (std::size_t j = 0; j < m.side_item.cols; ++j)
          (*grads)[off_si + a * m.side_item.cols + j] += r * vu[a] * fi[j];
      }
    }
  }
  const double inv = samples.empty() ? 0.0 : 1.0 / samples.size();
  if (grads)
    for (double& g : *grads) g *= inv;
  return total * inv;
}

CFTrainResult cf_train(const CFTrainConfig& config, const Catalog& catalog, const Split& split,
                       const PropagatedLabels& labels, const Clustering& clustering,
                       CFVariant variant) {
  if (config.epochs <= 20) throw data_error("cf_train: epochs must exceed 20");
  if (split.train_bodies.empty() || split.train_garments.empty())
    throw data_error("cf_train: empty training partition");

  CFTrainResult out;
  CFModel& m = out.model;
  m.variant = variant;
  m.latent_dim = config.latent_dim;
  m.side_dim = config.side_dim;

  for (const int b : split.train_bodies)
    m.user_slot.emplace(catalog.bodies[b].body_id, static_cast<int>(m.user_slot.size()));
  for (const int g : split.train_garments)
    m.item_slot.emplace(catalog.garments[g].garment_id, static_cast<int>(m.item_slot.size()));
  const std::size_t nu = m.user_slot.size();
  const std::size_t ni = m.item_slot.size();
  const int d = config.latent_dim;

  Rng init_rng(config.seed);
  m.user_latent.resize(nu * d);
  m.item_latent.resize(ni * d);
  m.user_bias.assign(nu, 0.0);
  m.item_bias.assign(ni, 0.0);
  for (double& v : m.user_latent) v = init_rng.uniform(-0.05, 0.05);
  for (double& v : m.item_latent) v = init_rng.uniform(-0.05, 0.05);

  if (variant == CFVariant::aware) {
    std::vector<std::vector<double>> body_rows, garment_rows;
    for (const int b : split.train_bodies) {
      std::vector<double> f = catalog.bodies[b].smpl;
      f.insert(f.end(), catalog.bodies[b].vitals.begin(), catalog.bodies[b].vitals.end());
      body_rows.push_back(std::move(f));
    }
    for (const int g : split.train_garments) {
      std::vector<double> f = catalog.garments[g].attributes;
      f.insert(f.end(), catalog.garments[g].visual.begin(), catalog.garments[g].visual.end());
      garment_rows.push_back(std::move(f));
    }
    m.body_feat_stats = compute_stats(body_rows);
    m.garment_feat_stats = compute_stats(garment_rows);
    m.side_user = Matrix(config.side_dim, kSmplDim + kVitalsDim);
    m.side_item = Matrix(config.side_dim, catalog.attr_dim() + catalog.visual_dim());
    if (!config.side_init_zero) {
      for (double& v : m.side_user.a) v = init_rng.uniform(-0.05, 0.05);
      for (double& v : m.side_item.a) v = init_rng.uniform(-0.05, 0.05);
    }
  }

  // training pairs: propagated type-level positives by default
  std::vector<std::pair<int, int>> positives;
  if (config.use_propagated_positives) {
    for (const int b : split.train_bodies) {
      const int t = clustering.assignment_by_index[b];
      for (const int g : split.train_garments)
        if (labels.is_positive[t][g]) positives.emplace_back(b, g);
    }
  } else {
    for (const auto& [b, g] : catalog.positives)
      if (split.is_train_body[b] && !split.is_heldout_garment[g]) positives.emplace_back(b, g);
  }
  if (positives.empty()) throw data_error("cf_train: no training positives");

  std::vector<std::vector<int>> neg_pool(clustering.k);
  for (int t = 0; t < clustering.k; ++t)
    for (const int g : split.train_garments)
      if (!labels.is_positive[t][g]) neg_pool[t].push_back(g);

  std::vector<std::pair<int, double>> schedule = config.lr_schedule;
  if (schedule.empty())
    schedule = {{config.epochs - 20, 0.1}, {config.epochs - 10, 0.1}};

  Rng rng(config.seed ^ 0x5deece66dULL);
  std::vector<double> vu, vi, xu_old(d), fu, fi;
  const double wd = config.weight_decay;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double lr = config.learning_rate;
    for (const auto& [e, mult] : schedule)
      if (epoch >= e) lr *= mult;

    rng.shuffle(positives);
    double epoch_loss = 0.0;
    std::size_t samples = 0;
    for (const auto& [b, g] : positives) {
      const int t = clustering.assignment_by_index[b];
      for (int rep = 0; rep < 1 + config.negatives_per_positive; ++rep) {
        int garment = g;
        double label = 1.0;
        if (rep > 0) {
          if (neg_pool[t].empty()) continue;
          garment = neg_pool[t][rng.uniform_index(neg_pool[t].size())];
          label = 0.0;
        }
        const BodyRecord& body = catalog.bodies[b];
        const GarmentRecord& item = catalog.garments[garment];
        const double logit = cf_predict_logit(m, body, item);
        const double loss = bce_from_logit(logit, label);
        if (!std::isfinite(loss))
          throw numeric_error("cf_train: non-finite loss at epoch " + std::to_string(epoch));
        epoch_loss += loss;
        ++samples;
        const double r = logistic(logit) - label;

        const int us = m.user_slot.at(body.body_id);
        const int is = m.item_slot.at(item.garment_id);
        double* xu = &m.user_latent[static_cast<std::size_t>(us) * d];
        double* yi = &m.item_latent[static_cast<std::size_t>(is) * d];
        std::copy_n(xu, d, xu_old.begin());

        m.global_bias -= lr * (r + wd * m.global_bias);
        m.user_bias[us] -= lr * (r + wd * m.user_bias[us]);
        m.item_bias[is] -= lr * (r + wd * m.item_bias[is]);
        for (int j = 0; j < d; ++j) {
          const double gx = r * yi[j] + wd * xu[j];
          const double gy = r * xu_old[j] + wd * yi[j];
          xu[j] -= lr * gx;
          yi[j] -= lr * gy;
        }
        if (variant == CFVariant::aware) {
          fu = m.body_features(body);
          fi = m.garment_features(item);
          side_vector(m.side_user, fu, vu);
          side_vector(m.side_item, fi, vi);
          for (int a = 0; a < m.side_dim; ++a) {
            double* pu = &m.side_user.a[static_cast<std::size_t>(a) * m.side_user.cols];
            double* pi = &m.side_item.a[static_cast<std::size_t>(a) * m.side_item.cols];
            for (std::size_t j = 0; j < m.side_user.cols; ++j)
              pu[j] -= lr * (r * vi[a] * fu[j] + wd * pu[j]);
            for (std::size_t j = 0; j < m.side_item.cols; ++j)
              pi[j] -= lr * (r * vu[a] * fi[j] + wd * pi[j]);
          }
        }
      }
    }
    out.epoch_loss.push_back(samples ? epoch_loss / samples : 0.0);
  }
  return out;
}

}  // namespace vibe
