#pragma once

// The finite-difference cases run by `cgseg gradcheck` and the test suite:
// every differentiable op on its own, then whole generator and
// discriminator chains with respect to inputs and weights.

#include <cgseg/gradcheck.hpp>
#include <cgseg/networks.hpp>

#include <random>

namespace cgseg {

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckStep = 1e-6;

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
  bool passed() const { return result.checked > 0 && result.max_relative_error < kGradCheckTolerance; }
};

namespace detail {

inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

/// sum(out * weights), a scalar whose gradient reaches every output element.
inline Tensor<double> project(const Tensor<double>& out, const Tensor<double>& weights) { return sum(mul(out, weights)); }

}  // namespace detail

inline std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckCase> cases;
  const double h = kGradCheckStep;
  auto check = [&](std::string name, const std::function<Tensor<double>(const Tensor<double>&)>& fn,
                   const Tensor<double>& point, const std::function<bool(std::size_t)>& skip = {}) {
    cases.push_back({std::move(name), finite_difference_report(fn, point, h, skip)});
  };

  {
    const auto x = detail::random_tensor({2, 3, 8, 8}, rng);
    const auto k = detail::random_tensor({4, 3, 4, 4}, rng);
    const auto r = detail::random_tensor({2, 4, 4, 4}, rng);
    check("conv2d/input", [&](const Tensor<double>& v) { return detail::project(conv2d(v, k, 2, 1), r); }, x);
    check("conv2d/kernel", [&](const Tensor<double>& v) { return detail::project(conv2d(x, v, 2, 1), r); }, k);
    const auto k3 = detail::random_tensor({2, 3, 3, 3}, rng);
    const auto r3 = detail::random_tensor({2, 2, 8, 8}, rng);
    check("conv2d/stride1", [&](const Tensor<double>& v) { return detail::project(conv2d(v, k3, 1, 1), r3); }, x);
  }
  {
    const auto x = detail::random_tensor({2, 4, 4, 4}, rng);
    const auto k = detail::random_tensor({4, 3, 4, 4}, rng);
    const auto r = detail::random_tensor({2, 3, 8, 8}, rng);
    check("deconv2d/input", [&](const Tensor<double>& v) { return detail::project(deconv2d(v, k, 2, 1), r); }, x);
    check("deconv2d/kernel", [&](const Tensor<double>& v) { return detail::project(deconv2d(x, v, 2, 1), r); }, k);
  }
  {
    const auto x = detail::random_tensor({3, 2, 4, 4}, rng);
    const auto g = detail::random_tensor({2}, rng, 0.5, 1.5);
    const auto b = detail::random_tensor({2}, rng);
    const auto r = detail::random_tensor({3, 2, 4, 4}, rng);
    auto train_bn = [&](const Tensor<double>& in, const Tensor<double>& gg, const Tensor<double>& bb) {
      BatchNormState<double> st(2);
      return batch_norm(in, gg, bb, st, NormMode::train);
    };
    check("batch_norm/train/input", [&](const Tensor<double>& v) { return detail::project(train_bn(v, g, b), r); }, x);
    check("batch_norm/train/gamma", [&](const Tensor<double>& v) { return detail::project(train_bn(x, v, b), r); }, g);
    check("batch_norm/train/beta", [&](const Tensor<double>& v) { return detail::project(train_bn(x, g, v), r); }, b);
    BatchNormState<double> fixed(2);
    fixed.running_mean = {0.3, -0.2};
    fixed.running_var = {0.8, 1.7};
    check("batch_norm/eval/input",
          [&](const Tensor<double>& v) { return detail::project(batch_norm(v, g, b, std::as_const(fixed)), r); }, x);
  }
  {
    const auto x = detail::random_tensor({2, 3, 5, 5}, rng, -2.0, 2.0);
    const auto r = detail::random_tensor({2, 3, 5, 5}, rng);
    auto near_kink = [&](std::size_t i) { return std::abs(x[i]) < 1e3 * h; };
    for (const auto& act : {Activation::relu(), Activation::leaky_relu(), Activation::sigmoid(), Activation::tanh()}) {
      const bool kinked = act.kind == ActivationKind::relu || act.kind == ActivationKind::leaky_relu;
      check("activation/" + to_string(act), [&](const Tensor<double>& v) { return detail::project(activation(v, act), r); },
            x, kinked ? std::function<bool(std::size_t)>(near_kink) : std::function<bool(std::size_t)>{});
    }
  }
  {
    const auto p = detail::random_tensor({2, 1, 4, 4}, rng, 0.05, 0.95);
    const auto t = detail::random_tensor({2, 1, 4, 4}, rng, 0.0, 1.0);
    check("bce/pred", [&](const Tensor<double>& v) { return bce(v, t); }, p);
    const auto y = detail::random_tensor({2, 1, 4, 4}, rng);
    const auto q = detail::random_tensor({2, 1, 4, 4}, rng);
    check("l1/pred", [&](const Tensor<double>& v) { return l1(v, y); }, q,
          [&](std::size_t i) { return std::abs(q[i] - y[i]) < 1e3 * h; });
  }
  {
    // Targets outside tanh's range keep the L1 term away from its kink.
    NetSpec spec{3, 2, 8, 1, 1, mirror_skips(3)};
    Network<double> gen(NetRole::generator, spec, seed);
    const auto x = detail::random_tensor({2, 1, 8, 8}, rng);
    const Tensor<double> y(Shape{2, 1, 8, 8}, 2.0);
    const auto r = detail::random_tensor({2, 1, 8, 8}, rng);
    auto chain = [&](const Tensor<double>& in) {
      Tensor<double> out = gen.forward(in, NormMode::train);
      return add(l1(out, y), detail::project(out, r));
    };
    check("generator/input", chain, x);
    for (std::size_t li : {std::size_t{0}, std::size_t{1}, gen.layers().size() - 1}) {
      const Tensor<double> original = gen.layers()[li].weight;
      check("generator/" + gen.layers()[li].name + "/weight",
            [&](const Tensor<double>& w) {
              gen.layers()[li].weight = w;
              Tensor<double> loss = chain(x);
              gen.layers()[li].weight = original;
              return loss;
            },
            original);
    }
  }
  {
    NetSpec spec{2, 2, 8, 2, 1, {}};
    Network<double> disc(NetRole::discriminator, spec, seed + 1);
    const auto x = detail::random_tensor({2, 2, 8, 8}, rng);
    const Tensor<double> ones(disc.predict(x).shape(), 1.0);
    check("discriminator/input", [&](const Tensor<double>& in) { return bce(disc.forward(in, NormMode::train), ones); }, x);
  }
  return cases;
}

}  // namespace cgseg
