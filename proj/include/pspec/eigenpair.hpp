// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pspec/error.hpp"
#include "pspec/grid.hpp"

namespace pspec {

enum class Provenance { analytic, generated };

inline const char* to_string(Provenance p) {
  return p == Provenance::analytic ? "analytic" : "generated";
}

/// A unit-norm, zero-mean field phi with Lp(phi) ~= lambda phi.
struct EigenPair {
  Field phi;
  double lambda = 0.0;
  double p = 2.0;
  /// ||Lp(phi) - lambda phi|| / (|lambda| ||phi||); NaN when not certified.
  double residual = std::numeric_limits<double>::quiet_NaN();
  Provenance provenance = Provenance::generated;
  bool converged = true;
  std::size_t iterations = 0;

  bool certified(double tol = 5e-2) const {
    return converged && std::isfinite(residual) && residual <= tol;
  }

  /// c phi with c > 0 chosen so that the scaled field has eigenvalue `target`.
  /// Lp is (p-1)-homogeneous, so lambda(c phi) = c^{p-2} lambda(phi).
  Field scaled_to_eigenvalue(double target) const {
    if (!(target < 0.0) || !(lambda < 0.0))
      throw ParameterError("rescaling needs negative eigenvalues");
    if (p == 2.0) throw ParameterError("eigenvalue is scale invariant at p = 2");
    return std::pow(target / lambda, 1.0 / (p - 2.0)) * phi;
  }
};

/// <Lp(phi), phi> / ||phi||^2.
inline double rayleigh_lambda(const Field& phi, double p) {
  const double nn = inner(phi, phi);
  if (!(nn > 0.0)) throw DegenerateError("Rayleigh quotient of a zero field");
  return inner(p_laplacian(phi, p), phi) / nn;
}

/// ||Lp(phi) - lambda phi|| / (|lambda| ||phi||).
inline double residual(const Field& phi, double lambda, double p) {
  const double n = norm(phi);
  if (lambda == 0.0 || n == 0.0)
    throw DegenerateError("eigen-residual undefined for lambda = 0 or a zero field");
  Field r = p_laplacian(phi, p);
  r.axpy(-lambda, phi);
  return norm(r) / (std::abs(lambda) * n);
}

struct EigenConfig {
  /// Pseudo-time of one semi-implicit flow step.
  double step = 1e3;
  std::size_t max_iterations = 2000;
  /// Convergence: successive normalized shapes differ by at most this (L2).
  double shape_tol = 1e-6;
  double residual_tol = 5e-2;
  /// Gradient magnitudes are floored at this fraction of the maximum when
  /// lagging the diffusivity, keeping the linear system finite.
  double gradient_floor = 1e-12;
};

namespace detail {

inline Field normalize_shape(Field u) {
  u = project_kernel_orthogonal(u);
  const double n = norm(u);
  if (!(n > 0.0)) throw DegenerateError("field lies in the kernel (constant)");
  u *= 1.0 / n;
  // Fix the sign so the largest-magnitude entry is positive.
  std::size_t arg = 0;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (std::abs(u[i]) > std::abs(u[arg])) arg = i;
  if (u[arg] < 0.0) u *= -1.0;
  return u;
}

// Assembles I - step * div(w grad .) with w = max(|grad u|, floor)^{p-2}.
inline Eigen::SparseMatrix<double> lagged_system(const Field& u, double p, double step,
                                                 double floor_frac) {
  const GridShape& s = u.shape();
  const std::size_t nr = s.extents[0], nc = s.extents[1], n = s.size();
  const VectorField g = gradient(u);
  std::vector<double> mag(n, 0.0);
  double gmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m2 = 0.0;
    for (const Field& c : g.components) m2 += c[i] * c[i];
    mag[i] = std::sqrt(m2);
    gmax = std::max(gmax, mag[i]);
  }
  const double floor = std::max(gmax * floor_frac, std::numeric_limits<double>::min());

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(n * 5);
  std::vector<double> diag(n, 1.0);
  // Each forward-difference edge (i -> j) along an axis contributes
  // w_i / h^2 * (e_i - e_j)(e_i - e_j)^T to -div(w grad).
  auto edge = [&](std::size_t i, std::size_t j, double h) {
    const double w = (p == 2.0 ? 1.0 : std::pow(std::max(mag[i], floor), p - 2.0));
    const double c = step * w / (h * h);
    diag[i] += c;
    diag[j] += c;
    trip.emplace_back(static_cast<int>(i), static_cast<int>(j), -c);
    trip.emplace_back(static_cast<int>(j), static_cast<int>(i), -c);
  };
  for (std::size_t r = 0; r + 1 < nr; ++r)
    for (std::size_t c = 0; c < nc; ++c) edge(r * nc + c, (r + 1) * nc + c, s.spacing[0]);
  if (s.rank == 2)
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t c = 0; c + 1 < nc; ++c) edge(r * nc + c, r * nc + c + 1, s.spacing[1]);
  for (std::size_t i = 0; i < n; ++i)
    trip.emplace_back(static_cast<int>(i), static_cast<int>(i), diag[i]);
  Eigen::SparseMatrix<double> a(static_cast<int>(n), static_cast<int>(n));
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

}  // namespace detail

/// Nonlinear eigenfunction by flow + renormalization.
///
/// Each iteration takes one semi-implicit (lagged-diffusivity) step of the
/// p-flow of length cfg.step and rescales the result to unit norm and zero
/// mean. Fixed points satisfy Lp(phi) = lambda phi. The returned pair carries
/// the residual of the exact operator; `converged` is false when the shape did
/// not settle within the budget or the residual exceeds cfg.residual_tol.
inline EigenPair generate_eigenfunction(const Field& seed, double p, const EigenConfig& cfg = {}) {
  detail::require_p(p);
  if (!(cfg.step > 0.0)) throw ParameterError("eigen step must be positive");
  detail::require_differentiable(seed.shape());
  Field u = detail::normalize_shape(seed);

  EigenPair out;
  out.p = p;
  out.provenance = Provenance::generated;
  bool settled = false;
  std::size_t it = 0;
  const auto n = static_cast<Eigen::Index>(u.size());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  for (; it < cfg.max_iterations && !settled; ++it) {
    const auto a = detail::lagged_system(u, p, cfg.step, cfg.gradient_floor);
    solver.compute(a);
    if (solver.info() != Eigen::Success)
      throw NonConvergenceError("factorization of the semi-implicit step failed");
    Eigen::Map<const Eigen::VectorXd> rhs(u.data().data(), n);
    Eigen::VectorXd next = solver.solve(rhs);
    Field v(u.shape(), std::vector<double>(next.data(), next.data() + n));
    v = detail::normalize_shape(std::move(v));
    const double change = norm(v - u);
    u = std::move(v);
    settled = change <= cfg.shape_tol;
  }
  out.iterations = it;
  out.phi = std::move(u);
  out.lambda = rayleigh_lambda(out.phi, p);
  out.residual = out.lambda < 0.0 ? residual(out.phi, out.lambda, p)
                                  : std::numeric_limits<double>::infinity();
  out.converged = settled && out.residual <= cfg.residual_tol;
  return out;
}

/// Smooth random starting field: a Gaussian bump at a seeded position plus a
/// small seeded perturbation. Deterministic for a given seed and platform.
inline Field seeded_start(const GridShape& shape, std::uint64_t seed) {
  shape.validate();
  std::mt19937_64 rng(seed);
  auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  const double nr = static_cast<double>(shape.extents[0]);
  const double nc = static_cast<double>(shape.extents[1]);
  const double cr = (0.2 + 0.6 * unit()) * nr;
  const double cc = shape.rank == 2 ? (0.2 + 0.6 * unit()) * nc : 0.0;
  const double len = shape.rank == 2 ? std::max(nr, nc) : nr;
  const double w = (0.15 + 0.1 * unit()) * len;
  Field f(shape);
  for (std::size_t r = 0; r < shape.extents[0]; ++r)
    for (std::size_t c = 0; c < shape.extents[1]; ++c) {
      const double dr = static_cast<double>(r) - cr;
      const double dc = shape.rank == 2 ? static_cast<double>(c) - cc : 0.0;
      f(r, c) = std::exp(-(dr * dr + dc * dc) / (2.0 * w * w)) + 1e-3 * (unit() - 0.5);
    }
  return f;
}

enum class CatalogKind { cosine_p2, step_p1_reference };

inline CatalogKind catalog_kind_from_string(const std::string& s) {
  if (s == "cosine_p2") return CatalogKind::cosine_p2;
  if (s == "step_p1_reference") return CatalogKind::step_p1_reference;
  throw ParameterError("unsupported eigenfunction kind '" + s + "'");
}

/// Closed-form 1D eigenfunctions.
///
/// cosine_p2: cos(pi k (i + 1/2) / n), an exact eigenvector of the discrete
/// Neumann Laplacian with lambda = -(2 - 2 cos(pi k / n)) / h^2 ~ -(pi k / n h)^2.
/// step_p1_reference: the zero-mean two-level step, the p -> 1 limit shape. It
/// is not certified for p in (1, 2); lambda is its total-variation quotient.
inline EigenPair analytic_catalog(CatalogKind kind, std::size_t n, std::size_t half_periods = 1,
                                  double spacing = 1.0) {
  if (n < 2) throw ParameterError("catalog eigenfunctions need n >= 2");
  const GridShape shape = GridShape::line(n, spacing);
  EigenPair out;
  out.provenance = Provenance::analytic;
  if (kind == CatalogKind::cosine_p2) {
    if (half_periods < 1 || half_periods >= n)
      throw ParameterError("half-period count must lie in [1, n)");
    Field f(shape);
    const double pi = std::acos(-1.0);
    for (std::size_t i = 0; i < n; ++i)
      f[i] = std::cos(pi * static_cast<double>(half_periods) * (static_cast<double>(i) + 0.5) /
                      static_cast<double>(n));
    out.phi = detail::normalize_shape(f);
    out.p = 2.0;
    out.lambda = rayleigh_lambda(out.phi, 2.0);
    out.residual = residual(out.phi, out.lambda, 2.0);
    return out;
  }
  Field f(shape);
  for (std::size_t i = 0; i < n; ++i) f[i] = (2 * i < n) ? 1.0 : -1.0;
  out.phi = detail::normalize_shape(f);
  out.p = 1.0;
  double tv = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) tv += std::abs(out.phi[i + 1] - out.phi[i]);
  out.lambda = -tv / inner(out.phi, out.phi);
  out.converged = false;
  return out;
}

}  // namespace pspec
