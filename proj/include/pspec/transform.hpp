// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pspec/error.hpp"
#include "pspec/flow.hpp"
#include "pspec/fraccalc.hpp"
#include "pspec/grid.hpp"

namespace pspec {

/// How the t^beta / Gamma(beta + 1) factor is sampled on the time grid.
enum class TimeWeighting {
  /// h^beta Gamma(k + beta + 1) / (Gamma(beta + 1) k!): the Grunwald weights of
  /// the order-(beta+1) discrete integral. Left-endpoint quadrature of the
  /// transform then inverts the derivative exactly.
  discrete,
  /// (k h)^beta / Gamma(beta + 1) sampled pointwise; first-order consistent.
  continuous,
};

struct TransformOptions {
  TimeWeighting weighting = TimeWeighting::discrete;
  /// 0 selects std::thread::hardware_concurrency(). Results do not depend on it.
  unsigned threads = 0;
};

/// phi(., t_k) for every recorded time of a trajectory.
struct SpectralField {
  std::vector<Field> phi;
  double h = 0.0;     ///< time step of the axis
  double beta = 1.0;  ///< 1 / (1 - homogeneity of the generating operator)
  double b = 0.0;     ///< right end of the derivative window
  double p = 2.0;
  bool normalized = false;
  double extinction = 0.0;
  TimeWeighting weighting = TimeWeighting::discrete;

  std::size_t size() const { return phi.size(); }
  double time(std::size_t k) const { return static_cast<double>(k) * h; }
  const GridShape& shape() const { return phi.front().shape(); }
};

struct Spectrum {
  std::vector<double> t;
  std::vector<double> S;

  std::size_t size() const { return S.size(); }
  double h() const { return t.size() > 1 ? t[1] - t[0] : 0.0; }
};

enum class FilterKind { ideal_lpf, ideal_hpf, band_pass, band_stop, liouville };

/// A filter h(t) over the transform's time axis.
struct FilterSpec {
  FilterKind kind = FilterKind::ideal_lpf;
  double t1 = 0.0;
  double t2 = 0.0;  ///< upper cutoff for band filters
  /// Liouville exponent; NaN uses the spectral field's own beta.
  double beta = std::numeric_limits<double>::quiet_NaN();

  static FilterSpec lowpass(double t1) { return {FilterKind::ideal_lpf, t1}; }
  static FilterSpec highpass(double t1) { return {FilterKind::ideal_hpf, t1}; }
  static FilterSpec bandpass(double t1, double t2) {
    return {FilterKind::band_pass, t1, t2};
  }
  static FilterSpec bandstop(double t1, double t2) {
    return {FilterKind::band_stop, t1, t2};
  }
  static FilterSpec liouville(double t1) { return {FilterKind::liouville, t1}; }

  void validate() const {
    if (!(t1 >= 0.0) || !std::isfinite(t1)) throw ParameterError("filter cutoff must be >= 0");
    const bool two = kind == FilterKind::band_pass || kind == FilterKind::band_stop;
    if (two && !(t2 >= t1 && std::isfinite(t2)))
      throw ParameterError("band filter needs t1 <= t2");
  }
};

inline const char* to_string(FilterKind k) {
  switch (k) {
    case FilterKind::ideal_lpf: return "lpf";
    case FilterKind::ideal_hpf: return "hpf";
    case FilterKind::band_pass: return "bandpass";
    case FilterKind::band_stop: return "bandstop";
    case FilterKind::liouville: return "liouville";
  }
  return "?";
}

inline FilterKind filter_kind_from_string(const std::string& s) {
  if (s == "lpf" || s == "ideal_lpf") return FilterKind::ideal_lpf;
  if (s == "hpf" || s == "ideal_hpf") return FilterKind::ideal_hpf;
  if (s == "bandpass" || s == "band_pass") return FilterKind::band_pass;
  if (s == "bandstop" || s == "band_stop") return FilterKind::band_stop;
  if (s == "liouville") return FilterKind::liouville;
  throw ParameterError("unknown filter kind '" + s + "'");
}

/// beta = 1 / (1 - gamma) for a gamma-homogeneous generator.
inline double transform_order(double homogeneity) {
  if (!(homogeneity >= 0.0 && homogeneity < 1.0))
    throw ParameterError("transform needs homogeneity in [0, 1)");
  return 1.0 / (1.0 - homogeneity);
}

namespace detail {

// Discrete analogue of s^beta / Gamma(beta + 1) at s = x h for real x >= 0.
inline double discrete_time_weight(double x, double beta, double h) {
  if (x < 0.0) return 0.0;
  return std::pow(h, beta) *
         std::exp(std::lgamma(x + beta + 1.0) - std::lgamma(beta + 1.0) -
                  std::lgamma(x + 1.0));
}

inline double continuous_time_weight(double s, double beta) {
  if (s <= 0.0) return 0.0;
  return std::pow(s, beta) / std::tgamma(beta + 1.0);
}

inline double time_weight(TimeWeighting w, double s, double beta, double h) {
  return w == TimeWeighting::discrete ? discrete_time_weight(s / h, beta, h)
                                      : continuous_time_weight(s, beta);
}

inline std::vector<double> time_weights(TimeWeighting w, std::size_t n, double beta,
                                        double h) {
  std::vector<double> q(n, 0.0);
  if (w == TimeWeighting::discrete) {
    // Gamma(k + beta + 1) / (Gamma(beta + 1) k!) by recursion.
    double v = 1.0;
    const double hb = std::pow(h, beta);
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0) v *= (static_cast<double>(k) + beta) / static_cast<double>(k);
      q[k] = hb * v;
    }
  } else {
    for (std::size_t k = 0; k < n; ++k)
      q[k] = continuous_time_weight(static_cast<double>(k) * h, beta);
  }
  return q;
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

inline void require_same_axis(const SpectralField& sf) {
  if (sf.phi.empty()) throw ParameterError("empty spectral field");
}

}  // namespace detail

/// phi(x, t) = t^beta / Gamma(beta + 1) * D^{beta+1}_{b-} u(x, t), evaluated
/// per node with the right-sided Grunwald-Letnikov derivative.
inline SpectralField p_transform(const FlowTrajectory& traj, TransformOptions opt = {}) {
  if (traj.frames.size() < 2) throw ParameterError("trajectory needs at least 2 frames");
  if (!traj.extinction_time)
    throw ParameterError("trajectory never reached extinction; rerun with a longer horizon");
  const double b = traj.horizon();
  if (!(b > *traj.extinction_time))
    throw ParameterError("window end b = " + std::to_string(b) +
                         " must exceed the extinction time " +
                         std::to_string(*traj.extinction_time));
  const double gamma = traj.homogeneity();
  const double beta = transform_order(gamma);
  const double alpha = beta + 1.0;
  const double h = traj.frame_dt;
  const std::size_t nt = traj.frames.size();
  const GridShape shape = traj.shape();
  const std::size_t nx = shape.size();

  SpectralField sf;
  sf.h = h;
  sf.beta = beta;
  sf.b = b;
  sf.p = traj.p;
  sf.normalized = traj.normalized;
  sf.extinction = *traj.extinction_time;
  sf.weighting = opt.weighting;
  sf.phi.assign(nt, Field(shape));

  // Frames past the last nonzero one contribute nothing.
  std::size_t support = nt;
  while (support > 0 && traj.frames[support - 1].max_abs() == 0.0) --support;

  const auto w = grunwald_weights(alpha, nt);
  const auto q = detail::time_weights(opt.weighting, nt, beta, h);
  const double scale = std::pow(h, -alpha);

  detail::parallel_for(nx, opt.threads, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> y(nt), d(nt);
    for (std::size_t x = lo; x < hi; ++x) {
      for (std::size_t k = 0; k < nt; ++k) y[k] = traj.frames[k][x];
      grunwald_letnikov_right_apply(y, w, scale, d, support);
      for (std::size_t k = 0; k < nt; ++k) sf.phi[k][x] = q[k] * d[k];
    }
  });
  return sf;
}

namespace detail {

// Per-node compensated (Neumaier) accumulator. The spectral field cancels
// heavily across time, so plain summation loses digits on long axes.
class CompensatedSum {
 public:
  explicit CompensatedSum(std::size_t n) : sum_(n, 0.0), comp_(n, 0.0) {}

  void add(double c, std::span<const double> v) {
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      const double x = c * v[i];
      const double t = sum_[i] + x;
      comp_[i] += std::abs(sum_[i]) >= std::abs(x) ? (sum_[i] - t) + x : (x - t) + sum_[i];
      sum_[i] = t;
    }
  }

  Field result(const GridShape& shape) const {
    Field out(shape);
    for (std::size_t i = 0; i < sum_.size(); ++i) out[i] = sum_[i] + comp_[i];
    return out;
  }

 private:
  std::vector<double> sum_, comp_;
};

}  // namespace detail

/// f_h(x) = int phi(x, t) h(t) dt by the left-endpoint rule.
inline Field integrate_weighted(const SpectralField& sf, const std::vector<double>& weights) {
  detail::require_same_axis(sf);
  detail::CompensatedSum acc(sf.shape().size());
  for (std::size_t k = 0; k < sf.size(); ++k) {
    const double c = sf.h * weights[k];
    if (c != 0.0) acc.add(c, sf.phi[k].values());
  }
  return acc.result(sf.shape());
}

/// f^(x) = int_0^inf phi(x, t) dt.
inline Field inverse_transform(const SpectralField& sf) {
  return integrate_weighted(sf, std::vector<double>(sf.size(), 1.0));
}

/// S(t_k) = <f, phi(t_k)>.
inline Spectrum spectrum(const Field& f, const SpectralField& sf) {
  detail::require_same_axis(sf);
  f.require_same(sf.phi.front());
  Spectrum s;
  s.t.resize(sf.size());
  s.S.resize(sf.size());
  for (std::size_t k = 0; k < sf.size(); ++k) {
    s.t[k] = sf.time(k);
    s.S[k] = inner(f, sf.phi[k]);
  }
  return s;
}

/// int S(t) dt, same quadrature as the inverse transform.
inline double spectrum_integral(const Spectrum& s) {
  detail::CompensatedSum acc(1);
  for (double v : s.S) acc.add(1.0, std::span<const double>(&v, 1));
  return acc.result(GridShape::line(1))[0] * s.h();
}

/// Samples h(t_k) for a filter on the field's time axis.
inline std::vector<double> filter_weights(const SpectralField& sf, const FilterSpec& spec) {
  spec.validate();
  std::vector<double> w(sf.size(), 0.0);
  const double beta = std::isnan(spec.beta) ? sf.beta : spec.beta;
  for (std::size_t k = 0; k < sf.size(); ++k) {
    const double t = sf.time(k);
    switch (spec.kind) {
      case FilterKind::ideal_lpf: w[k] = t >= spec.t1 ? 1.0 : 0.0; break;
      case FilterKind::ideal_hpf: w[k] = t < spec.t1 ? 1.0 : 0.0; break;
      case FilterKind::band_pass: w[k] = (t >= spec.t1 && t < spec.t2) ? 1.0 : 0.0; break;
      case FilterKind::band_stop: w[k] = (t >= spec.t1 && t < spec.t2) ? 0.0 : 1.0; break;
      case FilterKind::liouville: {
        if (t < spec.t1) break;
        // [(t - t1) / t]^beta, with both powers sampled like the transform's.
        const double num = detail::time_weight(sf.weighting, t - spec.t1, beta, sf.h);
        const double den = detail::time_weight(sf.weighting, t, beta, sf.h);
        w[k] = den > 0.0 ? num / den : (spec.t1 == 0.0 ? 1.0 : 0.0);
        break;
      }
    }
  }
  return w;
}

inline Field apply_filter(const SpectralField& sf, const FilterSpec& spec) {
  return integrate_weighted(sf, filter_weights(sf, spec));
}

/// Width against which percentage cutoffs are resolved: the empirical
/// extinction time of the source trajectory.
inline double spectrum_width(const SpectralField& sf) { return sf.extinction; }

/// Splits the time axis at edges * width into contiguous ideal bands
/// [0, c_1), [c_1, c_2), ..., [c_m, inf) and returns the band components.
///
/// `rescale` maps the field's own time axis onto the comparison axis before
/// the cut; the identity by default.
inline std::vector<Field> band_decompose(
    const SpectralField& sf, const std::vector<double>& edges,
    const std::function<double(double)>& rescale = {}) {
  detail::require_same_axis(sf);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!(edges[i] > 0.0 && edges[i] < 1.0))
      throw ParameterError("band edges must lie in (0, 1)");
    if (i > 0 && !(edges[i] > edges[i - 1]))
      throw ParameterError("band edges must be strictly increasing");
  }
  auto map = [&](double t) { return rescale ? rescale(t) : t; };
  const double width = map(spectrum_width(sf));
  std::vector<double> cut;
  for (double e : edges) cut.push_back(e * width);

  std::vector<detail::CompensatedSum> acc(edges.size() + 1,
                                          detail::CompensatedSum(sf.shape().size()));
  for (std::size_t k = 0; k < sf.size(); ++k) {
    const double t = map(sf.time(k));
    const auto band = static_cast<std::size_t>(
        std::upper_bound(cut.begin(), cut.end(), t) - cut.begin());
    acc[band].add(sf.h, sf.phi[k].values());
  }
  std::vector<Field> bands;
  for (const auto& a : acc) bands.push_back(a.result(sf.shape()));
  return bands;
}

/// Discrete image of the ideal transform of an eigenfunction: a single-bin
/// impulse at T = 1 / ((p - 2) lambda) carrying f / h, so that it integrates to f.
inline SpectralField eigenfunction_transform_analytic(const Field& f, double lambda, double p,
                                                      double h, std::size_t n_samples) {
  detail::require_p(p);
  if (!(lambda < 0.0)) throw ParameterError("analytic transform needs lambda < 0");
  if (!(h > 0.0) || n_samples < 2) throw ParameterError("invalid time axis");
  SpectralField sf;
  sf.h = h;
  sf.p = p;
  sf.beta = transform_order(p - 1.0);
  sf.extinction = *extinction_time(lambda, p);
  sf.b = static_cast<double>(n_samples - 1) * h;
  sf.phi.assign(n_samples, Field(f.shape()));
  const auto k = static_cast<std::size_t>(std::llround(sf.extinction / h));
  if (k < n_samples) sf.phi[k] = (1.0 / h) * f;
  return sf;
}

/// Location and sharpness of the dominant spectral peak.
struct PeakReport {
  std::size_t index = 0;
  double time = 0.0;
  double value = 0.0;
  /// Fraction of int |S| within +-window * time of the peak.
  double concentration = 0.0;
};

inline PeakReport spectral_peak(const Spectrum& s, double window = 0.05) {
  PeakReport r;
  if (s.S.empty()) return r;
  for (std::size_t k = 0; k < s.size(); ++k)
    if (std::abs(s.S[k]) > std::abs(s.S[r.index])) r.index = k;
  r.time = s.t[r.index];
  r.value = s.S[r.index];
  double total = 0.0, near = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    total += std::abs(s.S[k]);
    if (std::abs(s.t[k] - r.time) <= window * r.time) near += std::abs(s.S[k]);
  }
  r.concentration = total > 0.0 ? near / total : 0.0;
  return r;
}

/// Per-band relative L2 differences between two decompositions of the same
/// image (e.g. p-flow vs normalized flow). Reported, not bounded.
struct DiscrepancyReport {
  std::vector<double> band_relative_difference;
  double total_relative_difference = 0.0;
};

inline DiscrepancyReport decomposition_discrepancy(const std::vector<Field>& a,
                                                   const std::vector<Field>& b) {
  if (a.size() != b.size()) throw ParameterError("decompositions have different band counts");
  DiscrepancyReport r;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = norm(a[i] - b[i]);
    const double s = std::max(norm(a[i]), norm(b[i]));
    r.band_relative_difference.push_back(s > 0.0 ? d / s : 0.0);
    num += d * d;
    den += s * s;
  }
  r.total_relative_difference = den > 0.0 ? std::sqrt(num / den) : 0.0;
  return r;
}

}  // namespace pspec
