#pragma once

// Cosine noise schedule, forward noising and the DDPM posterior used for
// re-noising during sampling.

#include "stylediff/core/errors.hpp"
#include "stylediff/core/types.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace stylediff {

class NoiseSchedule {
 public:
  /// alpha_bar_n = f(n) / f(0), f(n) = cos^2(((n/N + s) / (1 + s)) * pi/2).
  static NoiseSchedule cosine(int steps, double s = 0.008) {
    detail::require<ParameterError>(steps >= 1, "noise schedule: steps must be >= 1");
    auto f = [&](int n) {
      const double c = std::cos(((static_cast<double>(n) / steps + s) / (1.0 + s)) * std::numbers::pi / 2.0);
      return c * c;
    };
    std::vector<double> ab(steps + 1);
    const double f0 = f(0);
    ab[0] = 1.0;
    for (int n = 1; n <= steps; ++n) ab[n] = f(n) / f0;
    return NoiseSchedule(std::move(ab));
  }

  /// Arbitrary schedule; alpha_bar[0] must be 1 and the sequence
  /// non-increasing within (0, 1].
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar) {
    detail::require<ParameterError>(alpha_bar.size() >= 2, "noise schedule: need at least one step");
    detail::require<ParameterError>(alpha_bar[0] == 1.0, "noise schedule: alpha_bar[0] must be 1");
    for (std::size_t n = 1; n < alpha_bar.size(); ++n)
      detail::require<ParameterError>(alpha_bar[n] > 0.0 && alpha_bar[n] <= alpha_bar[n - 1],
                                      "noise schedule: alpha_bar must be non-increasing in (0, 1]");
    return NoiseSchedule(std::move(alpha_bar));
  }

  int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
  double alpha_bar(int n) const {
    check_step(n, 0);
    return alpha_bar_[n];
  }
  const std::vector<double>& alpha_bar() const { return alpha_bar_; }

  /// Per-step alpha_n = alpha_bar_n / alpha_bar_{n-1}.
  double alpha(int n) const {
    check_step(n, 1);
    return alpha_bar_[n] / alpha_bar_[n - 1];
  }

  struct Posterior {
    double coef_x0;  // multiplies the clean estimate
    double coef_xn;  // multiplies the current noisy sample
    double variance;
  };

  /// Coefficients of q(X^{n-1} | X^0, X^n).
  Posterior posterior(int n) const {
    check_step(n, 1);
    const double ab = alpha_bar_[n];
    const double ab_prev = alpha_bar_[n - 1];
    const double a = ab / ab_prev;
    const double beta = 1.0 - a;
    const double denom = 1.0 - ab;
    if (denom <= 0.0) return {0.0, 1.0, 0.0};
    return {std::sqrt(ab_prev) * beta / denom, std::sqrt(a) * (1.0 - ab_prev) / denom,
            beta * (1.0 - ab_prev) / denom};
  }

  void check_step(int n, int lo) const {
    if (n < lo || n > steps())
      throw ParameterError("diffusion step " + std::to_string(n) + " outside [" + std::to_string(lo) + ", " +
                           std::to_string(steps()) + "]");
  }

 private:
  explicit NoiseSchedule(std::vector<double> ab) : alpha_bar_(std::move(ab)) {}
  std::vector<double> alpha_bar_;
};

/// X^n = sqrt(alpha_bar_n) X^0 + sqrt(1 - alpha_bar_n) eps.
inline Matrix q_sample(const NoiseSchedule& schedule, const Matrix& x0, int n, const Matrix& eps) {
  schedule.check_step(n, 1);
  detail::require<ParameterError>(x0.rows() == eps.rows() && x0.cols() == eps.cols(),
                                  "q_sample: noise shape differs from data shape");
  const double ab = schedule.alpha_bar(n);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

inline Matrix q_sample(const NoiseSchedule& schedule, const Matrix& x0, int n, Rng& rng) {
  return q_sample(schedule, x0, n, rng.normal_matrix(x0.rows(), x0.cols()));
}

/// One forward transition X^{n-1} -> X^n: sqrt(alpha_n) X^{n-1} + sqrt(1 - alpha_n) eps.
inline Matrix q_step(const NoiseSchedule& schedule, const Matrix& x_prev, int n, const Matrix& eps) {
  const double a = schedule.alpha(n);
  return std::sqrt(a) * x_prev + std::sqrt(1.0 - a) * eps;
}

inline Matrix posterior_mean(const NoiseSchedule& schedule, const Matrix& x0_hat, const Matrix& xn, int n) {
  const auto p = schedule.posterior(n);
  return p.coef_x0 * x0_hat + p.coef_xn * xn;
}

/// Draws X^{n-1} from the posterior given the clean estimate. At n = 1 the
/// mean is returned without noise.
inline Matrix renoise(const NoiseSchedule& schedule, const Matrix& x0_hat, const Matrix& xn, int n,
                      const Matrix& eps) {
  detail::require<ParameterError>(x0_hat.rows() == xn.rows() && x0_hat.cols() == xn.cols(),
                                  "renoise: shape mismatch");
  Matrix mean = posterior_mean(schedule, x0_hat, xn, n);
  if (n == 1) return mean;
  return mean + std::sqrt(schedule.posterior(n).variance) * eps;
}

inline Matrix renoise(const NoiseSchedule& schedule, const Matrix& x0_hat, const Matrix& xn, int n, Rng& rng) {
  if (n == 1) return renoise(schedule, x0_hat, xn, n, Matrix());
  return renoise(schedule, x0_hat, xn, n, rng.normal_matrix(xn.rows(), xn.cols()));
}

}  // namespace stylediff
