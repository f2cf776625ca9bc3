#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "vibe/common.hpp"

namespace vibe {

// Dense row-major matrix of doubles. All model arithmetic is 64-bit.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

struct LinearLayer {
  Matrix w;               // out x in
  std::vector<double> b;  // out

  std::size_t in_dim() const { return w.cols; }
  std::size_t out_dim() const { return w.rows; }
};

// Fully connected stack. ReLU between layers, linear after the last one.
struct Mlp {
  std::vector<LinearLayer> layers;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
  std::size_t param_count() const;
};

// Weights uniform in +-1/sqrt(fan_in), biases zero.
Mlp make_mlp(const std::vector<std::size_t>& widths, Rng& rng);

// Activation cache from one mlp_apply call, consumed by mlp_backprop.
struct MlpTape {
  std::vector<std::vector<double>> inputs;   // inputs[i] = vector fed into layer i
  std::vector<std::vector<double>> preacts;  // preacts[i] = w*x + b of layer i
};

std::vector<double> mlp_apply(const Mlp& net, std::span<const double> input, MlpTape* tape = nullptr);

struct MlpGrads {
  std::vector<Matrix> dw;
  std::vector<std::vector<double>> db;
};

MlpGrads make_grads(const Mlp& net);
void zero_grads(MlpGrads& g);

// Accumulates parameter gradients into `grads`, returns dL/dinput.
// ReLU subgradient at 0 is 0.
std::vector<double> mlp_backprop(const Mlp& net, const MlpTape& tape,
                                 std::span<const double> output_gradient, MlpGrads& grads);

// Inputs with norm below this are rejected as directionless.
inline constexpr double kNormFloor = 1e-8;

std::vector<double> l2_normalize(std::span<const double> v, double* norm_out = nullptr);

// Exact Jacobian (I - u u^T)/|v| applied to dout; `unit` and `norm` come from the forward pass.
std::vector<double> l2_normalize_backprop(std::span<const double> unit, double norm,
                                          std::span<const double> dout);

struct AdamState {
  std::vector<double> first_moment, second_moment;
  std::uint64_t step_count = 0;
  double base_learning_rate = 3e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  // (epoch, multiplier); multiplier active once current_epoch >= epoch
  std::vector<std::pair<int, double>> schedule;

  double effective_lr(int current_epoch) const;
};

AdamState make_adam(std::size_t n, double lr, double wd,
                    std::vector<std::pair<int, double>> schedule = {});

// Decoupled weight decay: params *= (1 - lr*wd) before the moment update.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               int current_epoch);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t params_checked = 0;
  std::size_t kinks_skipped = 0;
};

// Loss callback: returns the loss at `params`; when `grad_out` is nonempty it
// must also be filled with the analytic gradient.
using LossWithGrad = std::function<double(std::span<const double> params, std::span<double> grad_out)>;

// Central finite differences against the analytic gradient. Parameters where the
// one-sided differences disagree (a hinge or ReLU kink inside [p-h, p+h]) are skipped.
GradCheckResult grad_check(const LossWithGrad& loss, std::span<double> params, double perturbation);

}  // namespace vibe
