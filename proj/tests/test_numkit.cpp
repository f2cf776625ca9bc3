#include "doctest.h"

#include <cmath>

#include "vibe/numkit.hpp"

using namespace vibe;

namespace {

Mlp single_layer(const Matrix& w, const std::vector<double>& b) {
  Mlp net;
  net.layers.push_back({w, b});
  return net;
}

Matrix identity2() {
  Matrix m(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = 1.0;
  return m;
}

// flattens an Mlp into a parameter vector and back, for grad_check harnesses
std::vector<double> net_params(const Mlp& net) {
  std::vector<double> p;
  for (const auto& l : net.layers) {
    p.insert(p.end(), l.w.a.begin(), l.w.a.end());
    p.insert(p.end(), l.b.begin(), l.b.end());
  }
  return p;
}

void set_net_params(Mlp& net, std::span<const double> p) {
  std::size_t pos = 0;
  for (auto& l : net.layers) {
    std::copy_n(p.begin() + pos, l.w.a.size(), l.w.a.begin());
    pos += l.w.a.size();
    std::copy_n(p.begin() + pos, l.b.size(), l.b.begin());
    pos += l.b.size();
  }
}

}  // namespace

TEST_CASE("mlp_apply identity layer") {
  const Mlp net = single_layer(identity2(), {0.0, 0.0});
  const auto out = mlp_apply(net, std::vector<double>{1.0, 2.0});
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 2.0);
}

TEST_CASE("mlp_apply zero weights pass bias through") {
  const Mlp net = single_layer(Matrix(1, 3), {0.5});
  const auto out = mlp_apply(net, std::vector<double>{9.0, -4.0, 2.5});
  CHECK(out.size() == 1);
  CHECK(out[0] == 0.5);
}

TEST_CASE("mlp_apply two layers match hand computation") {
  Matrix w1(2, 2);
  w1(0, 0) = 1.0; w1(0, 1) = 2.0;
  w1(1, 0) = 3.0; w1(1, 1) = 4.0;
  Matrix w2(1, 2);
  w2(0, 0) = 1.0; w2(0, 1) = -1.0;
  Mlp net;
  net.layers.push_back({w1, {0.5, -0.5}});
  net.layers.push_back({w2, {0.25}});

  // x=[1,1]: pre1=[3.5,6.5], relu keeps both, out = 3.5-6.5+0.25
  CHECK(mlp_apply(net, std::vector<double>{1.0, 1.0})[0] == doctest::Approx(-2.75));
  // x=[1,-1]: pre1=[-0.5,-1.5], relu zeroes both, out = 0.25
  CHECK(mlp_apply(net, std::vector<double>{1.0, -1.0})[0] == doctest::Approx(0.25));
}

TEST_CASE("mlp_apply rejects dimension mismatch naming both sizes") {
  const Mlp net = single_layer(identity2(), {0.0, 0.0});
  try {
    mlp_apply(net, std::vector<double>{1.0, 2.0, 3.0});
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
  }
}

TEST_CASE("mlp_backprop identity layer chain rule") {
  const Mlp net = single_layer(identity2(), {0.0, 0.0});
  MlpTape tape;
  mlp_apply(net, std::vector<double>{3.0, -1.0}, &tape);
  MlpGrads g = make_grads(net);
  const auto din = mlp_backprop(net, tape, std::vector<double>{0.5, 2.0}, g);
  CHECK(din[0] == 0.5);
  CHECK(din[1] == 2.0);
  // weight gradient = dout (x) input
  CHECK(g.dw[0](0, 0) == 0.5 * 3.0);
  CHECK(g.dw[0](0, 1) == 0.5 * -1.0);
  CHECK(g.dw[0](1, 0) == 2.0 * 3.0);
  CHECK(g.dw[0](1, 1) == 2.0 * -1.0);
  CHECK(g.db[0][0] == 0.5);
  CHECK(g.db[0][1] == 2.0);
}

TEST_CASE("relu unit with pre-activation exactly zero propagates zero gradient") {
  Matrix w1(1, 1);
  w1(0, 0) = 1.0;
  Matrix w2(1, 1);
  w2(0, 0) = 1.0;
  Mlp net;
  net.layers.push_back({w1, {-1.0}});  // x=1 -> pre = 0
  net.layers.push_back({w2, {0.0}});
  MlpTape tape;
  const auto out = mlp_apply(net, std::vector<double>{1.0}, &tape);
  CHECK(out[0] == 0.0);
  CHECK(tape.preacts[0][0] == 0.0);
  MlpGrads g = make_grads(net);
  const auto din = mlp_backprop(net, tape, std::vector<double>{1.0}, g);
  CHECK(din[0] == 0.0);
  CHECK(g.dw[0](0, 0) == 0.0);
  CHECK(g.db[0][0] == 0.0);
  CHECK(g.db[1][0] == 1.0);
}

TEST_CASE("mlp_backprop rejects stale tape") {
  const Mlp net = single_layer(identity2(), {0.0, 0.0});
  MlpTape tape;
  mlp_apply(net, std::vector<double>{1.0, 1.0}, &tape);
  Mlp other;
  Matrix w(3, 2);
  other.layers.push_back({w, {0.0, 0.0, 0.0}});
  MlpGrads g = make_grads(other);
  CHECK_THROWS_AS(mlp_backprop(other, tape, std::vector<double>{1, 1, 1}, g),
                  std::invalid_argument);
}

TEST_CASE("random mlps: backprop matches central finite differences") {
  Rng rng(42);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t layers = 1 + rng.uniform_index(3);
    std::vector<std::size_t> widths{1 + rng.uniform_index(32)};
    for (std::size_t i = 0; i < layers; ++i) widths.push_back(1 + rng.uniform_index(32));
    Mlp net = make_mlp(widths, rng);
    std::vector<double> x(widths.front());
    for (double& v : x) v = rng.normal();

    std::vector<double> params = net_params(net);
    // loss = 0.5 * |mlp(x)|^2
    const LossWithGrad loss = [&](std::span<const double> p, std::span<double> grad) {
      set_net_params(net, p);
      if (grad.empty()) {
        const auto out = mlp_apply(net, x);
        double s = 0.0;
        for (const double v : out) s += v * v;
        return 0.5 * s;
      }
      MlpTape tape;
      const auto out = mlp_apply(net, x, &tape);
      MlpGrads g = make_grads(net);
      mlp_backprop(net, tape, out, g);
      std::size_t pos = 0;
      for (std::size_t li = 0; li < net.layers.size(); ++li) {
        for (const double v : g.dw[li].a) grad[pos++] = v;
        for (const double v : g.db[li]) grad[pos++] = v;
      }
      double s = 0.0;
      for (const double v : out) s += v * v;
      return 0.5 * s;
    };
    const GradCheckResult res = grad_check(loss, params, 1e-5);
    CHECK(res.max_rel_error < 1e-4);
    CHECK(res.params_checked > 0);
  }
}

TEST_CASE("l2_normalize basics") {
  const auto u = l2_normalize(std::vector<double>{3.0, 4.0});
  CHECK(u[0] == doctest::Approx(0.6));
  CHECK(u[1] == doctest::Approx(0.8));

  // idempotence on the sphere
  const auto again = l2_normalize(u);
  CHECK(again[0] == doctest::Approx(u[0]).epsilon(1e-12));
  CHECK(again[1] == doctest::Approx(u[1]).epsilon(1e-12));

  CHECK_THROWS_AS(l2_normalize(std::vector<double>{1e-9, 0.0}), numeric_error);
}

TEST_CASE("l2_normalize scale invariance and unit norm") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(1 + rng.uniform_index(8));
    for (double& x : v) x = rng.normal();
    double norm = 0.0;
    for (const double x : v) norm += x * x;
    if (std::sqrt(norm) <= kNormFloor) continue;
    const auto u = l2_normalize(v);
    double n = 0.0;
    for (const double x : u) n += x * x;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-6);
    const double c = rng.uniform(0.1, 10.0);
    std::vector<double> scaled = v;
    for (double& x : scaled) x *= c;
    const auto us = l2_normalize(scaled);
    for (std::size_t i = 0; i < u.size(); ++i) CHECK(std::abs(u[i] - us[i]) < 1e-9);
  }
}

TEST_CASE("l2_normalize backward matches finite differences") {
  Rng rng(11);
  std::vector<double> v{0.4, -1.2, 2.0};
  std::vector<double> dout{0.3, 0.7, -0.2};
  double norm;
  const auto u = l2_normalize(v, &norm);
  const auto din = l2_normalize_backprop(u, norm, dout);
  const double h = 1e-6;
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto vp = v, vm = v;
    vp[i] += h;
    vm[i] -= h;
    const auto up = l2_normalize(vp);
    const auto um = l2_normalize(vm);
    double fd = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) fd += dout[j] * (up[j] - um[j]) / (2 * h);
    CHECK(din[i] == doctest::Approx(fd).epsilon(1e-5));
  }
  (void)rng;
}

TEST_CASE("adam_step fixed point on zero gradient") {
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> orig = p;
  AdamState s = make_adam(3, 0.01, 0.0);
  adam_step(p, std::vector<double>{0.0, 0.0, 0.0}, s, 1);
  CHECK(p == orig);
}

TEST_CASE("adam_step first step approximates -lr*sign(g)") {
  std::vector<double> p{0.0, 0.0};
  AdamState s = make_adam(2, 0.01, 0.0);
  adam_step(p, std::vector<double>{0.5, -0.25}, s, 1);
  CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("adam schedule multiplies past multipliers") {
  AdamState s = make_adam(1, 0.003, 0.0, {{100, 0.3}, {130, 0.3}});
  CHECK(s.effective_lr(99) == 0.003);
  CHECK(s.effective_lr(100) == 0.003 * 0.3);
  CHECK(s.effective_lr(135) == 0.003 * 0.3 * 0.3);
}

TEST_CASE("adam rejects non-finite gradients") {
  std::vector<double> p{1.0};
  AdamState s = make_adam(1, 0.01, 0.0);
  CHECK_THROWS_AS(adam_step(p, std::vector<double>{std::nan("")}, s, 1), numeric_error);
}

TEST_CASE("adam decoupled weight decay shrinks parameters before the update") {
  std::vector<double> p{2.0};
  AdamState s = make_adam(1, 0.1, 0.5);
  adam_step(p, std::vector<double>{0.0}, s, 1);
  CHECK(p[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)));
}

TEST_CASE("grad_check on a quadratic is nearly exact") {
  std::vector<double> p{0.3, -1.7, 2.2};
  const LossWithGrad loss = [](std::span<const double> q, std::span<double> g) {
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      s += 0.5 * q[i] * q[i];
      if (!g.empty()) g[i] = q[i];
    }
    return s;
  };
  const GradCheckResult res = grad_check(loss, p, 1e-5);
  CHECK(res.max_rel_error < 1e-8);
  CHECK(res.params_checked == 3);
  CHECK(res.kinks_skipped == 0);
}

TEST_CASE("grad_check kink guard fires at a hinge sitting on a parameter") {
  std::vector<double> p{0.0, 1.0};
  const LossWithGrad loss = [](std::span<const double> q, std::span<double> g) {
    // max(0, q0) + 0.5 q1^2, kink exactly at q0 = 0
    if (!g.empty()) {
      g[0] = q[0] > 0.0 ? 1.0 : 0.0;
      g[1] = q[1];
    }
    return std::max(0.0, q[0]) + 0.5 * q[1] * q[1];
  };
  const GradCheckResult res = grad_check(loss, p, 1e-5);
  CHECK(res.kinks_skipped == 1);
  CHECK(res.params_checked == 1);
  CHECK(res.max_rel_error < 1e-8);
}

TEST_CASE("grad_check validates the perturbation range") {
  std::vector<double> p{1.0};
  const LossWithGrad loss = [](std::span<const double> q, std::span<double> g) {
    if (!g.empty()) g[0] = 1.0;
    return q[0];
  };
  CHECK_THROWS_AS(grad_check(loss, p, 1e-2), std::invalid_argument);
  CHECK_THROWS_AS(grad_check(loss, p, 1e-8), std::invalid_argument);
}

TEST_CASE("mlp_apply is deterministic") {
  Rng rng(5);
  Mlp net = make_mlp({4, 6, 3}, rng);
  std::vector<double> x{0.1, -0.2, 0.3, 0.4};
  CHECK(mlp_apply(net, x) == mlp_apply(net, x));
}
