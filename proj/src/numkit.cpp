#include "vibe/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vibe {

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.a.size() + l.b.size();
  return n;
}

Mlp make_mlp(const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least one layer");
  Mlp net;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    LinearLayer l;
    l.w = Matrix(widths[i + 1], widths[i]);
    l.b.assign(widths[i + 1], 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(widths[i]));
    for (double& w : l.w.a) w = rng.uniform(-scale, scale);
    net.layers.push_back(std::move(l));
  }
  return net;
}

static void matvec(const Matrix& w, std::span<const double> x, std::vector<double>& out) {
  out.assign(w.rows, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* row = &w.a[i * w.cols];
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

std::vector<double> mlp_apply(const Mlp& net, std::span<const double> input, MlpTape* tape) {
  if (net.layers.empty()) throw std::invalid_argument("mlp_apply: empty network");
  if (input.size() != net.in_dim()) {
    throw std::invalid_argument("mlp_apply: input length " + std::to_string(input.size()) +
                                " != layer in-dimension " + std::to_string(net.in_dim()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->preacts.clear();
  }
  std::vector<double> cur(input.begin(), input.end());
  std::vector<double> pre;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LinearLayer& l = net.layers[i];
    if (tape) tape->inputs.push_back(cur);
    matvec(l.w, cur, pre);
    for (std::size_t j = 0; j < pre.size(); ++j) pre[j] += l.b[j];
    if (tape) tape->preacts.push_back(pre);
    if (i + 1 < net.layers.size()) {
      cur.assign(pre.size(), 0.0);
      for (std::size_t j = 0; j < pre.size(); ++j) cur[j] = pre[j] > 0.0 ? pre[j] : 0.0;
    } else {
      cur = pre;
    }
  }
  return cur;
}

MlpGrads make_grads(const Mlp& net) {
  MlpGrads g;
  for (const auto& l : net.layers) {
    g.dw.emplace_back(l.w.rows, l.w.cols);
    g.db.emplace_back(l.b.size(), 0.0);
  }
  return g;
}

void zero_grads(MlpGrads& g) {
  for (auto& m : g.dw) std::fill(m.a.begin(), m.a.end(), 0.0);
  for (auto& v : g.db) std::fill(v.begin(), v.end(), 0.0);
}

std::vector<double> mlp_backprop(const Mlp& net, const MlpTape& tape,
                                 std::span<const double> output_gradient, MlpGrads& grads) {
  const std::size_t n = net.layers.size();
  if (tape.inputs.size() != n || tape.preacts.size() != n)
    throw std::invalid_argument("mlp_backprop: tape does not match network layer count");
  for (std::size_t i = 0; i < n; ++i) {
    if (tape.inputs[i].size() != net.layers[i].in_dim() ||
        tape.preacts[i].size() != net.layers[i].out_dim())
      throw std::invalid_argument("mlp_backprop: tape dimensions stale for layer " + std::to_string(i));
  }
  if (output_gradient.size() != net.out_dim())
    throw std::invalid_argument("mlp_backprop: output gradient length mismatch");
  if (grads.dw.size() != n)
    throw std::invalid_argument("mlp_backprop: gradient buffers do not match network");

  std::vector<double> d(output_gradient.begin(), output_gradient.end());
  std::vector<double> dprev;
  for (std::size_t ii = n; ii-- > 0;) {
    const LinearLayer& l = net.layers[ii];
    const std::vector<double>& x = tape.inputs[ii];
    Matrix& dw = grads.dw[ii];
    for (std::size_t i = 0; i < l.w.rows; ++i) {
      const double di = d[i];
      grads.db[ii][i] += di;
      double* dwrow = &dw.a[i * dw.cols];
      for (std::size_t j = 0; j < l.w.cols; ++j) dwrow[j] += di * x[j];
    }
    dprev.assign(l.w.cols, 0.0);
    for (std::size_t i = 0; i < l.w.rows; ++i) {
      const double di = d[i];
      const double* row = &l.w.a[i * l.w.cols];
      for (std::size_t j = 0; j < l.w.cols; ++j) dprev[j] += row[j] * di;
    }
    if (ii > 0) {
      const std::vector<double>& pre = tape.preacts[ii - 1];
      for (std::size_t j = 0; j < dprev.size(); ++j)
        if (!(pre[j] > 0.0)) dprev[j] = 0.0;
    }
    d = dprev;
  }
  return d;
}

std::vector<double> l2_normalize(std::span<const double> v, double* norm_out) {
  double sq = 0.0;
  for (const double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > kNormFloor))
    throw numeric_error("l2_normalize: input norm " + fmt_double(norm) +
                        " below floor " + fmt_double(kNormFloor) + " (degenerate direction)");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  if (norm_out) *norm_out = norm;
  return out;
}

std::vector<double> l2_normalize_backprop(std::span<const double> unit, double norm,
                                          std::span<const double> dout) {
  if (unit.size() != dout.size())
    throw std::invalid_argument("l2_normalize_backprop: size mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < unit.size(); ++i) dot += unit[i] * dout[i];
  std::vector<double> din(unit.size());
  for (std::size_t i = 0; i < unit.size(); ++i) din[i] = (dout[i] - unit[i] * dot) / norm;
  return din;
}

double AdamState::effective_lr(int current_epoch) const {
  double lr = base_learning_rate;
  for (const auto& [epoch, mult] : schedule)
    if (current_epoch >= epoch) lr *= mult;
  return lr;
}

AdamState make_adam(std::size_t n, double lr, double wd,
                    std::vector<std::pair<int, double>> schedule) {
  AdamState s;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  s.base_learning_rate = lr;
  s.weight_decay = wd;
  s.schedule = std::move(schedule);
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               int current_epoch) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw std::invalid_argument("adam_step: params/grads/moments length mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i]))
      throw numeric_error("adam_step: non-finite gradient at parameter " + std::to_string(i));
  }
  const double lr = state.effective_lr(current_epoch);
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  const double decay = 1.0 - lr * state.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] *= decay;
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = b1 * m + (1.0 - b1) * grads[i];
    v = b2 * v + (1.0 - b2) * grads[i] * grads[i];
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

GradCheckResult grad_check(const LossWithGrad& loss, std::span<double> params, double perturbation) {
  if (!(perturbation >= 1e-7 && perturbation <= 1e-3))
    throw std::invalid_argument("grad_check: perturbation outside [1e-7, 1e-3]");
  const double h = perturbation;
  std::vector<double> analytic(params.size(), 0.0);
  const double f0 = loss(params, analytic);
  GradCheckResult res;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double fp = loss(params, {});
    params[i] = saved - h;
    const double fm = loss(params, {});
    params[i] = saved;
    const double fwd = (fp - f0) / h;
    const double bwd = (f0 - fm) / h;
    // one-sided slopes disagreeing means the function has a kink inside [p-h, p+h]
    if (std::abs(fwd - bwd) > 1e-3 * std::max({1.0, std::abs(fwd), std::abs(bwd)})) {
      ++res.kinks_skipped;
      continue;
    }
    const double central = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(central), 1e-8});
    const double rel = std::abs(analytic[i] - central) / denom;
    res.max_rel_error = std::max(res.max_rel_error, rel);
    ++res.params_checked;
  }
  return res;
}

}  // namespace vibe
