#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace gaslt::gradcheck {

// Central-difference gradient of a deterministic scalar function, evaluated
// coordinate by coordinate: (f(x + h e_i) - f(x - h e_i)) / 2h.
// Test-support oracle; independent of the reverse-mode tape.
inline std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> point, double step = 1e-5) {
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f(x);
    x[i] = saved - step;
    const double down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// Largest relative error between an analytic gradient and the oracle,
// max_i |a_i - b_i| / max(1, |a_i|, |b_i|).
inline double max_rel_error(std::span<const double> analytic,
                            std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric[i])});
    worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace gaslt::gradcheck
