#pragma once

// Central finite-difference check of backward() in double precision.

#include <cgseg/tensor.hpp>

#include <functional>

namespace cgseg {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares the backward-pass gradient of a scalar function at `point` with
/// (f(x+h) - f(x-h)) / 2h, coordinate by coordinate.
///
/// The error of coordinate i is |analytic_i - numeric_i| / scale, where scale
/// is the largest magnitude of either gradient (floored at 1e-12), so that
/// near-zero entries do not dominate. Coordinates for which `skip` returns
/// true (e.g. inputs sitting on an activation kink) are left out.
inline GradCheckResult finite_difference_report(const std::function<Tensor<double>(const Tensor<double>&)>& fn,
                                                const Tensor<double>& point, double h,
                                                const std::function<bool(std::size_t)>& skip = {}) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  Tensor<double> x = point.detach();
  x.set_requires_grad(true);
  Tensor<double> y = fn(x);
  if (y.size() != 1) throw ShapeError("finite_difference_check: function is not scalar-valued, got " + to_string(y.shape()));
  std::vector<double> analytic(x.size(), 0.0);
  if (y.requires_grad()) {
    backward(y);
    analytic.assign(x.grad().begin(), x.grad().end());
  }

  std::vector<double> numeric(x.size(), 0.0);
  {
    NoGradGuard guard;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (skip && skip(i)) continue;
      Tensor<double> probe = point.detach();
      const double x0 = probe[i];
      probe[i] = x0 + h;
      const double fp = fn(probe).item();
      probe[i] = x0 - h;
      const double fm = fn(probe).item();
      numeric[i] = (fp - fm) / (2.0 * h);
    }
  }

  double scale = 1e-12;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (skip && skip(i)) continue;
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  GradCheckResult result;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (skip && skip(i)) continue;
    ++result.checked;
    const double err = std::abs(analytic[i] - numeric[i]) / scale;
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

inline double finite_difference_check(const std::function<Tensor<double>(const Tensor<double>&)>& fn,
                                      const Tensor<double>& point, double h,
                                      const std::function<bool(std::size_t)>& skip = {}) {
  return finite_difference_report(fn, point, h, skip).max_relative_error;
}

}  // namespace cgseg
