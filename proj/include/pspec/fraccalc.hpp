// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pspec/error.hpp"

namespace pspec {

/// Samples y(t_k), t_k = t0 + k h.
struct TimeSeries {
  std::vector<double> samples;
  double h = 1.0;
  double t0 = 0.0;

  std::size_t size() const { return samples.size(); }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * h; }
  double end_time() const { return time(samples.empty() ? 0 : samples.size() - 1); }

  void validate() const {
    if (!(h > 0.0) || !std::isfinite(h)) throw ParameterError("time step must be positive");
    if (samples.size() < 2) throw ParameterError("time series needs at least 2 samples");
    for (double v : samples)
      if (!std::isfinite(v)) throw InputError("time series has non-finite samples");
  }
};

enum class Side { left, right };

namespace detail {

inline void require_order(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ParameterError("fractional order must be positive, got " + std::to_string(alpha));
}

inline bool is_integer(double a) { return a == std::floor(a); }

}  // namespace detail

/// Signed generalized binomial weights w_j = (-1)^j C(alpha, j), computed by
/// w_0 = 1, w_j = w_{j-1} (j - 1 - alpha) / j.
///
/// A negative alpha yields the weights of the discrete fractional integral of
/// order -alpha. Computed once per (alpha, n) and shared across all nodes.
inline std::vector<double> grunwald_weights(double alpha, std::size_t n) {
  std::vector<double> w(n);
  if (n == 0) return w;
  w[0] = 1.0;
  for (std::size_t j = 1; j < n; ++j)
    w[j] = w[j - 1] * (static_cast<double>(j) - 1.0 - alpha) / static_cast<double>(j);
  return w;
}

/// Right-sided Grunwald-Letnikov derivative with precomputed weights:
///   out_k = h^{-alpha} sum_{j=0}^{N-1-k} w_j y_{k+j}.
///
/// `support` is one past the last nonzero sample; samples beyond it are
/// treated as zero and skipped.
inline void grunwald_letnikov_right_apply(std::span<const double> y,
                                          std::span<const double> weights,
                                          double scale, std::span<double> out,
                                          std::size_t support) {
  const std::size_t n = y.size();
  support = std::min(support, n);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    if (k < support) {
      const std::size_t m = support - k;
      const double* yk = y.data() + k;
      for (std::size_t j = 0; j < m; ++j) acc += weights[j] * yk[j];
    }
    out[k] = acc * scale;
  }
}

inline TimeSeries grunwald_letnikov_right(const TimeSeries& y, double alpha) {
  y.validate();
  detail::require_order(alpha);
  const auto w = grunwald_weights(alpha, y.size());
  TimeSeries out{std::vector<double>(y.size()), y.h, y.t0};
  grunwald_letnikov_right_apply(y.samples, w, std::pow(y.h, -alpha), out.samples,
                                y.size());
  return out;
}

namespace detail {

// Product-integration rule for the left integral: y is replaced by its
// piecewise-linear interpolant, which is integrated exactly against the
// kernel (t - tau)^{alpha-1} / Gamma(alpha).
inline std::vector<double> product_integral_left(std::span<const double> y, double h,
                                                 double alpha) {
  const std::size_t n = y.size();
  std::vector<double> out(n, 0.0);
  const double c = std::pow(h, alpha) / std::tgamma(alpha + 2.0);
  const double a1 = alpha + 1.0;
  // d_m = (m+1)^{a+1} - 2 m^{a+1} + (m-1)^{a+1}, m >= 1
  std::vector<double> pw(n + 1);
  for (std::size_t m = 0; m <= n; ++m) pw[m] = std::pow(static_cast<double>(m), a1);
  for (std::size_t k = 1; k < n; ++k) {
    const double kd = static_cast<double>(k);
    double acc = (pw[k - 1] - (kd - alpha - 1.0) * std::pow(kd, alpha)) * y[0];
    for (std::size_t j = 1; j < k; ++j) {
      const std::size_t m = k - j;
      acc += (pw[m + 1] - 2.0 * pw[m] + pw[m - 1]) * y[j];
    }
    acc += y[k];
    out[k] = c * acc;
  }
  return out;
}

}  // namespace detail

/// Riemann-Liouville fractional integral of order alpha.
///
/// left:  (1/Gamma(a)) int_{t0}^{t} (t - tau)^{a-1} y(tau) dtau
/// right: (1/Gamma(a)) int_{t}^{b} (tau - t)^{a-1} y(tau) dtau, b = last sample.
inline TimeSeries riemann_liouville_integral(const TimeSeries& y, double alpha,
                                             Side side) {
  y.validate();
  detail::require_order(alpha);
  TimeSeries out{{}, y.h, y.t0};
  if (side == Side::left) {
    out.samples = detail::product_integral_left(y.samples, y.h, alpha);
  } else {
    std::vector<double> rev(y.samples.rbegin(), y.samples.rend());
    auto r = detail::product_integral_left(rev, y.h, alpha);
    out.samples.assign(r.rbegin(), r.rend());
  }
  return out;
}

namespace detail {

// First derivative: second-order central differences inside, second-order
// one-sided differences at both ends.
inline std::vector<double> first_derivative(std::span<const double> y, double h) {
  const std::size_t n = y.size();
  std::vector<double> d(n, 0.0);
  if (n == 2) {
    d[0] = d[1] = (y[1] - y[0]) / h;
    return d;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) d[k] = (y[k + 1] - y[k - 1]) / (2.0 * h);
  d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
  d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * h);
  return d;
}

}  // namespace detail

/// D^alpha_{b-} y = (-1)^n d^n/dt^n I^{n - alpha}_{b-} y with n = ceil(alpha).
///
/// Integer alpha reduces to (-1)^alpha times the ordinary derivative.
inline TimeSeries riemann_liouville_derivative_right(const TimeSeries& y, double alpha) {
  y.validate();
  detail::require_order(alpha);
  const auto order = static_cast<std::size_t>(std::ceil(alpha));
  if (y.size() < order + 2)
    throw ParameterError("time series too short for a derivative of order " +
                         std::to_string(alpha));
  std::vector<double> v = y.samples;
  const double frac = static_cast<double>(order) - alpha;
  if (frac > 0.0)
    v = riemann_liouville_integral(y, frac, Side::right).samples;
  for (std::size_t i = 0; i < order; ++i) v = detail::first_derivative(v, y.h);
  if (order % 2 == 1)
    for (double& x : v) x = -x;
  return TimeSeries{std::move(v), y.h, y.t0};
}

/// Outcome of I^alpha_{b-} { D^alpha_{b-} y }.
struct RoundTrip {
  TimeSeries reconstruction;
  double max_relative_error = 0.0;  ///< max_k |y_k - rec_k| / max_k |y_k|
};

/// Fundamental-theorem round trip: Grunwald-Letnikov derivative followed by the
/// product-integration right integral. y should vanish at the window end.
///
/// The unshifted right-sided stencil is second-order accurate at t_k + alpha h / 2
/// rather than at t_k, so the integral is read back on that shifted grid and
/// linearly interpolated onto the sample times.
inline RoundTrip ftfc_roundtrip(const TimeSeries& y, double alpha) {
  y.validate();
  detail::require_order(alpha);
  const TimeSeries d = grunwald_letnikov_right(y, alpha);
  const auto shifted = riemann_liouville_integral(d, alpha, Side::right).samples;
  const std::size_t n = y.size();
  const double offset = 0.5 * alpha;
  RoundTrip rt{TimeSeries{std::vector<double>(n), y.h, y.t0}, 0.0};
  for (std::size_t k = 0; k < n; ++k) {
    const double x = static_cast<double>(k) - offset;
    const auto j = static_cast<std::size_t>(
        std::clamp(std::floor(x), 0.0, static_cast<double>(n - 2)));
    const double f = x - static_cast<double>(j);
    rt.reconstruction.samples[k] = (1.0 - f) * shifted[j] + f * shifted[j + 1];
  }
  double scale = 0.0, err = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    scale = std::max(scale, std::abs(y.samples[k]));
    err = std::max(err, std::abs(y.samples[k] - rt.reconstruction.samples[k]));
  }
  rt.max_relative_error = scale > 0.0 ? err / scale : err;
  return rt;
}

}  // namespace pspec
