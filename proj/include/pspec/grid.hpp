// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pspec/error.hpp"

namespace pspec {

/// Node counts and spacing of a uniform 1D or 2D grid.
///
/// Values are stored row-major: axis 0 is the slow (row) index, axis 1 the
/// fast (column) index. A 1D grid has rank 1 and extent(1) == 1.
struct GridShape {
  std::size_t rank = 1;
  std::array<std::size_t, 2> extents{0, 1};
  std::array<double, 2> spacing{1.0, 1.0};

  static GridShape line(std::size_t n, double h = 1.0) {
    return GridShape{1, {n, 1}, {h, 1.0}};
  }
  static GridShape plane(std::size_t rows, std::size_t cols, double hr = 1.0,
                         double hc = 1.0) {
    return GridShape{2, {rows, cols}, {hr, hc}};
  }

  std::size_t size() const { return extents[0] * extents[1]; }

  /// Volume element used by every inner product on this grid.
  double cell_volume() const {
    return rank == 1 ? spacing[0] : spacing[0] * spacing[1];
  }

  bool operator==(const GridShape& o) const {
    if (rank != o.rank) return false;
    for (std::size_t a = 0; a < rank; ++a)
      if (extents[a] != o.extents[a] || spacing[a] != o.spacing[a]) return false;
    return true;
  }

  void validate() const {
    if (rank != 1 && rank != 2)
      throw ParameterError("grid rank must be 1 or 2");
    if (rank == 1 && extents[1] != 1)
      throw ParameterError("1D grid must have a unit second extent");
    for (std::size_t a = 0; a < rank; ++a) {
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
        throw ParameterError("grid spacing must be finite and positive");
    }
  }

  std::string describe() const {
    if (rank == 1) return std::to_string(extents[0]);
    return std::to_string(extents[0]) + "x" + std::to_string(extents[1]);
  }
};

/// Scalar samples on a uniform grid with homogeneous Neumann boundaries.
class Field {
 public:
  Field() = default;

  explicit Field(const GridShape& shape, double fill = 0.0)
      : shape_(shape), values_(shape.size(), fill) {
    shape_.validate();
  }

  Field(const GridShape& shape, std::vector<double> values)
      : shape_(shape), values_(std::move(values)) {
    shape_.validate();
    if (values_.size() != shape_.size())
      throw ParameterError("field value count " + std::to_string(values_.size()) +
                           " does not match grid " + shape_.describe());
  }

  const GridShape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank; }
  std::size_t extent(std::size_t axis) const { return shape_.extents[axis]; }
  double spacing(std::size_t axis) const { return shape_.spacing[axis]; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& data() { return values_; }
  const std::vector<double>& data() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator()(std::size_t i, std::size_t j) {
    return values_[i * shape_.extents[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return values_[i * shape_.extents[1] + j];
  }

  bool same_grid(const Field& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  double mean() const {
    if (values_.empty()) return 0.0;
    return std::accumulate(values_.begin(), values_.end(), 0.0) /
           static_cast<double>(values_.size());
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  Field& operator+=(const Field& o) {
    require_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    require_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  Field& operator*=(double c) {
    for (double& v : values_) v *= c;
    return *this;
  }

  /// this += c * o
  Field& axpy(double c, const Field& o) {
    require_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += c * o.values_[i];
    return *this;
  }

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(double c, Field a) { return a *= c; }
  friend Field operator*(Field a, double c) { return a *= c; }

  void require_same(const Field& o) const {
    if (!same_grid(o))
      throw ParameterError("grid mismatch: " + shape_.describe() + " vs " +
                           o.shape_.describe());
  }

 private:
  GridShape shape_{};
  std::vector<double> values_;
};

/// One forward-difference component per axis, each stored on the node grid.
///
/// Component a at node i holds (u[i + e_a] - u[i]) / h_a; at the last node
/// along axis a it is zero (Neumann).
struct VectorField {
  std::vector<Field> components;

  std::size_t rank() const { return components.size(); }

  void validate() const {
    if (components.empty() || components.size() > 2)
      throw ParameterError("vector field must have 1 or 2 components");
    for (const Field& c : components) {
      if (!c.same_grid(components.front()))
        throw ParameterError("vector field component grids differ");
      if (c.rank() != components.size())
        throw ParameterError("component count must equal grid rank");
    }
  }
};

namespace detail {

inline void require_differentiable(const GridShape& s) {
  for (std::size_t a = 0; a < s.rank; ++a) {
    if (s.extents[a] < 2)
      throw ParameterError("grid " + s.describe() +
                           " needs at least 2 nodes per axis for differences");
  }
}

inline void require_p(double p) {
  if (!(p > 1.0 && p <= 2.0))
    throw ParameterError("p = " + std::to_string(p) +
                         " outside the supported range (1, 2]");
}

// Writes the forward differences of u along axis into out (same grid).
inline void forward_difference(std::span<const double> u, const GridShape& s,
                               std::size_t axis, std::span<double> out) {
  const std::size_t nr = s.extents[0], nc = s.extents[1];
  const double inv_h = 1.0 / s.spacing[axis];
  if (axis == 0) {
    for (std::size_t i = 0; i + 1 < nr; ++i)
      for (std::size_t j = 0; j < nc; ++j)
        out[i * nc + j] = (u[(i + 1) * nc + j] - u[i * nc + j]) * inv_h;
    for (std::size_t j = 0; j < nc; ++j) out[(nr - 1) * nc + j] = 0.0;
  } else {
    for (std::size_t i = 0; i < nr; ++i) {
      for (std::size_t j = 0; j + 1 < nc; ++j)
        out[i * nc + j] = (u[i * nc + j + 1] - u[i * nc + j]) * inv_h;
      out[i * nc + nc - 1] = 0.0;
    }
  }
}

// Accumulates the adjoint (backward) difference of g along axis into out.
inline void accumulate_backward_difference(std::span<const double> g,
                                           const GridShape& s, std::size_t axis,
                                           std::span<double> out) {
  const std::size_t nr = s.extents[0], nc = s.extents[1];
  const double inv_h = 1.0 / s.spacing[axis];
  if (axis == 0) {
    for (std::size_t j = 0; j < nc; ++j) out[j] += g[j] * inv_h;
    for (std::size_t i = 1; i + 1 < nr; ++i)
      for (std::size_t j = 0; j < nc; ++j)
        out[i * nc + j] += (g[i * nc + j] - g[(i - 1) * nc + j]) * inv_h;
    for (std::size_t j = 0; j < nc; ++j)
      out[(nr - 1) * nc + j] -= g[(nr - 2) * nc + j] * inv_h;
  } else {
    for (std::size_t i = 0; i < nr; ++i) {
      const std::size_t r = i * nc;
      out[r] += g[r] * inv_h;
      for (std::size_t j = 1; j + 1 < nc; ++j)
        out[r + j] += (g[r + j] - g[r + j - 1]) * inv_h;
      out[r + nc - 1] -= g[r + nc - 2] * inv_h;
    }
  }
}

}  // namespace detail

inline VectorField gradient(const Field& u) {
  detail::require_differentiable(u.shape());
  VectorField g;
  for (std::size_t a = 0; a < u.rank(); ++a) {
    Field c(u.shape());
    detail::forward_difference(u.values(), u.shape(), a, c.values());
    g.components.push_back(std::move(c));
  }
  return g;
}

/// Negative adjoint of gradient: <gradient(u), g> == -<u, divergence(g)>.
inline Field divergence(const VectorField& g) {
  g.validate();
  const GridShape& s = g.components.front().shape();
  detail::require_differentiable(s);
  Field d(s);
  for (std::size_t a = 0; a < g.rank(); ++a)
    detail::accumulate_backward_difference(g.components[a].values(), s, a,
                                           d.values());
  return d;
}

inline double inner(const Field& u, const Field& v) {
  u.require_same(v);
  double acc = 0.0;
  const auto a = u.values();
  const auto b = v.values();
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc * u.shape().cell_volume();
}

inline double inner(const VectorField& g, const VectorField& k) {
  if (g.rank() != k.rank())
    throw ParameterError("vector field rank mismatch");
  double acc = 0.0;
  for (std::size_t a = 0; a < g.rank(); ++a)
    acc += inner(g.components[a], k.components[a]);
  return acc;
}

inline double norm(const Field& u) { return std::sqrt(inner(u, u)); }

/// Removes the component along the Neumann kernel (constants).
inline Field project_kernel_orthogonal(const Field& u) {
  Field out = u;
  const double m = u.mean();
  for (double& v : out.values()) v -= m;
  return out;
}

/// Reusable evaluator of div(|grad u|^{p-2} grad u).
///
/// Holds scratch buffers so repeated application inside a time loop does not
/// allocate. Flux is exactly zero where the gradient magnitude vanishes.
class PLaplacian {
 public:
  PLaplacian(const GridShape& shape, double p) : shape_(shape), p_(p) {
    detail::require_p(p);
    shape_.validate();
    detail::require_differentiable(shape_);
    for (std::size_t a = 0; a < shape_.rank; ++a) flux_[a].assign(shape_.size(), 0.0);
  }

  double p() const { return p_; }
  const GridShape& shape() const { return shape_; }

  void apply(std::span<const double> u, std::span<double> out) {
    compute_flux(u);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t a = 0; a < shape_.rank; ++a)
      detail::accumulate_backward_difference(flux_[a], shape_, a, out);
  }

  Field operator()(const Field& u) {
    if (!(u.shape() == shape_)) throw ParameterError("p-Laplacian grid mismatch");
    Field out(shape_);
    apply(u.values(), out.values());
    return out;
  }

  /// sum |grad u|^p * cell volume, available after apply().
  double gradient_p_energy() const { return energy_; }

 private:
  void compute_flux(std::span<const double> u) {
    const std::size_t n = shape_.size();
    for (std::size_t a = 0; a < shape_.rank; ++a)
      detail::forward_difference(u, shape_, a, flux_[a]);
    const bool linear = (p_ == 2.0);
    double energy = 0.0;
    if (shape_.rank == 1) {
      auto& g = flux_[0];
      for (std::size_t i = 0; i < n; ++i) {
        const double m = std::abs(g[i]);
        if (m == 0.0) continue;
        const double w = linear ? 1.0 : std::pow(m, p_ - 2.0);
        energy += w * m * m;
        g[i] *= w;
      }
    } else {
      auto& gx = flux_[0];
      auto& gy = flux_[1];
      for (std::size_t i = 0; i < n; ++i) {
        const double m2 = gx[i] * gx[i] + gy[i] * gy[i];
        if (m2 == 0.0) continue;
        const double w = linear ? 1.0 : std::pow(m2, 0.5 * (p_ - 2.0));
        energy += w * m2;
        gx[i] *= w;
        gy[i] *= w;
      }
    }
    energy_ = energy * shape_.cell_volume();
  }

  GridShape shape_;
  double p_;
  std::array<std::vector<double>, 2> flux_;
  double energy_ = 0.0;
};

inline Field p_laplacian(const Field& u, double p) {
  PLaplacian op(u.shape(), p);
  return op(u);
}

/// ||grad u||_p = (sum |grad u|^p * cell volume)^(1/p).
inline double gradient_p_norm(const Field& u, double p) {
  PLaplacian op(u.shape(), p);
  (void)op(u);
  return std::pow(op.gradient_p_energy(), 1.0 / p);
}

}  // namespace pspec
