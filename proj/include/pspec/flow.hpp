// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pspec/error.hpp"
#include "pspec/grid.hpp"

namespace pspec {

struct FlowConfig {
  double p = 1.5;
  double dt = 1e-4;
  /// Integration horizon. Unset means: run until extinction, then pad 10%.
  std::optional<double> t_max;
  /// Extinction is declared once ||u|| <= extinction_tol * ||f||. Unset
  /// means (1e-3)^beta with beta = 1 / (1 - homogeneity): near extinction
  /// ||u|| ~ (T - t)^beta, so the cut lands within about 0.1% of T.
  std::optional<double> extinction_tol;
  /// Explicit stepping of fast diffusion bottoms out at a dt-dependent floor.
  /// Below stall_level * ||f|| the run is declared extinct when the p-energy
  /// rises, or when the norm drops by less than a factor stall_ratio over the
  /// trailing 20% of elapsed time (dated to the start of that plateau).
  bool stall_guard = true;
  double stall_level = 1e-2;
  double stall_ratio = 0.995;
  std::size_t record_stride = 1;
  /// Frame budget. When exceeded, every other frame is dropped and the
  /// recording stride doubles. Zero disables decimation.
  std::size_t max_frames = 2048;
  /// Upper bound on the integration time in auto mode.
  double auto_time_cap = 1e4;
  /// Zero-homogeneous variant u_t = Lp(u) / ||grad u||_p^{p-1}.
  bool normalized = false;

  void validate() const {
    detail::require_p(p);
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("dt must be positive");
    if (t_max && !(*t_max > 0.0)) throw ParameterError("t_max must be positive");
    if (extinction_tol && !(*extinction_tol > 0.0 && *extinction_tol < 1.0))
      throw ParameterError("extinction_tol must lie in (0, 1)");
    if (!(stall_ratio > 0.0 && stall_ratio < 1.0) || !(stall_level > 0.0 && stall_level < 1.0))
      throw ParameterError("stall guard parameters must lie in (0, 1)");
    if (record_stride < 1) throw ParameterError("record_stride must be >= 1");
    if (max_frames != 0 && max_frames < 4)
      throw ParameterError("max_frames must be 0 or at least 4");
    if (!(auto_time_cap > 0.0)) throw ParameterError("auto_time_cap must be positive");
  }

  double effective_extinction_tol() const {
    if (extinction_tol) return *extinction_tol;
    const double gamma = normalized ? 0.0 : p - 1.0;
    if (gamma >= 1.0) return 1e-14;
    return std::max(std::pow(1e-3, 1.0 / (1.0 - gamma)), 1e-14);
  }
};

/// Snapshots u(t_k), t_k = k * frame_dt, of one flow run.
struct FlowTrajectory {
  std::vector<Field> frames;
  double frame_dt = 0.0;  ///< time between recorded frames
  double dt = 0.0;        ///< integration step
  double p = 2.0;
  bool normalized = false;
  std::optional<double> extinction_time;
  /// True when extinction was declared by a guard (energy rise or stalled
  /// norm), not by the threshold.
  bool extinction_by_stall = false;
  double mass_drift = 0.0;
  double initial_norm = 0.0;

  std::size_t size() const { return frames.size(); }
  double time(std::size_t k) const { return static_cast<double>(k) * frame_dt; }
  /// Right end of the recorded window.
  double horizon() const {
    return frames.empty() ? 0.0 : time(frames.size() - 1);
  }
  const GridShape& shape() const { return frames.front().shape(); }

  /// Homogeneity degree of the generating operator (0 for the normalized flow).
  double homogeneity() const { return normalized ? 0.0 : p - 1.0; }

  std::vector<double> norms() const {
    std::vector<double> n;
    n.reserve(frames.size());
    for (const Field& f : frames) n.push_back(norm(f));
    return n;
  }
};

/// a(t) = [((1 - gamma) lambda t + 1)^+]^{1/(1-gamma)}.
inline double decay_profile(double t, double lambda, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw ParameterError("decay profile needs gamma in [0, 1)");
  if (lambda > 0.0) throw ParameterError("decay profile needs lambda <= 0");
  if (t < 0.0) throw ParameterError("decay profile needs t >= 0");
  const double base = (1.0 - gamma) * lambda * t + 1.0;
  if (base <= 0.0) return 0.0;
  return std::pow(base, 1.0 / (1.0 - gamma));
}

/// T = 1 / ((p - 2) lambda); empty when the flow has no finite extinction.
inline std::optional<double> extinction_time(double lambda, double p) {
  if (!(lambda < 0.0) || !(p >= 1.0 && p < 2.0)) return std::nullopt;
  return 1.0 / ((p - 2.0) * lambda);
}

/// a(t) * f for an eigenfunction f of the p-Laplacian with eigenvalue lambda.
inline Field analytic_flow_solution(const Field& f, double lambda, double p,
                                    double t) {
  return decay_profile(t, lambda, p - 1.0) * f;
}

namespace detail {

class TrajectoryRecorder {
 public:
  TrajectoryRecorder(FlowTrajectory& traj, std::size_t stride,
                     std::size_t max_frames, double dt)
      : traj_(traj), stride_(stride), max_frames_(max_frames), dt_(dt) {}

  std::size_t stride() const { return stride_; }

  void maybe_record(std::size_t step, const Field& u) {
    if (step % stride_ != 0) return;
    traj_.frames.push_back(u);
    if (max_frames_ != 0 && traj_.frames.size() > max_frames_) decimate();
  }

  double frame_dt() const { return static_cast<double>(stride_) * dt_; }

 private:
  void decimate() {
    auto& fr = traj_.frames;
    std::size_t w = 0;
    for (std::size_t r = 0; r < fr.size(); r += 2, ++w)
      if (w != r) fr[w] = std::move(fr[r]);
    fr.resize(w);
    stride_ *= 2;
  }

  FlowTrajectory& traj_;
  std::size_t stride_;
  std::size_t max_frames_;
  double dt_;
};

inline FlowTrajectory integrate(const Field& f_in, const FlowConfig& cfg) {
  cfg.validate();
  if (!f_in.all_finite()) throw InputError("initial condition has non-finite values");

  Field u = project_kernel_orthogonal(f_in);
  const double mean0 = u.mean();
  const double f_norm = norm(u);

  FlowTrajectory traj;
  traj.dt = cfg.dt;
  traj.p = cfg.p;
  traj.normalized = cfg.normalized;
  traj.initial_norm = f_norm;

  TrajectoryRecorder rec(traj, cfg.record_stride, cfg.max_frames, cfg.dt);
  const std::size_t n = u.size();
  Field rhs(u.shape());
  PLaplacian op(u.shape(), cfg.p);

  const double t_limit = cfg.t_max ? *cfg.t_max : cfg.auto_time_cap;
  // Round so that t_max lands on an integration step.
  const auto total_steps =
      static_cast<std::size_t>(std::llround(std::ceil(t_limit / cfg.dt - 1e-9)));

  double drift = 0.0;
  std::size_t step = 0;
  rec.maybe_record(0, u);

  bool extinct = (f_norm == 0.0);
  if (extinct) traj.extinction_time = 0.0;

  const double threshold = cfg.effective_extinction_tol() * f_norm;
  // Norm samples every checkpoint_steps steps, for the stall guard.
  const auto checkpoint_steps =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.05 / cfg.dt)));
  std::vector<double> checkpoints;
  const double blowup = 10.0 * f_norm;
  const double p = cfg.p;

  double prev_energy = INFINITY, prev_norm = f_norm;
  while (!extinct && step < total_steps) {
    op.apply(u.values(), rhs.values());
    // The exact flow never raises the p-energy. A rise at small amplitude
    // means the explicit scheme has lost stability as the gradients vanish.
    const double e_now = op.gradient_p_energy();
    if (cfg.stall_guard && e_now > prev_energy && prev_norm <= cfg.stall_level * f_norm) {
      extinct = true;
      traj.extinction_by_stall = true;
      traj.extinction_time = static_cast<double>(step) * cfg.dt;
      break;
    }
    prev_energy = e_now;
    double scale = cfg.dt;
    if (cfg.normalized) {
      const double energy = op.gradient_p_energy();
      if (!(energy > 0.0)) {
        extinct = true;
        traj.extinction_time = static_cast<double>(step) * cfg.dt;
        break;
      }
      scale /= std::pow(std::pow(energy, 1.0 / p), p - 1.0);
    }
    auto uv = u.values();
    auto rv = rhs.values();
    for (std::size_t i = 0; i < n; ++i) uv[i] += scale * rv[i];
    ++step;

    const double un = norm(u);
    prev_norm = un;
    if (!std::isfinite(un) || un > blowup)
      throw InstabilityError("flow diverged at t = " +
                             std::to_string(static_cast<double>(step) * cfg.dt) +
                             " (||u|| grew above 10 ||f||); try a smaller dt");
    bool stalled = false;
    double stall_onset = 0.0;
    if (cfg.stall_guard && step % checkpoint_steps == 0) {
      checkpoints.push_back(un);
      const std::size_t c = checkpoints.size() - 1;
      const std::size_t back = c / 5;
      if (back >= 4 && un <= cfg.stall_level * f_norm &&
          un >= cfg.stall_ratio * checkpoints[c - back]) {
        stalled = true;
        // Date extinction at the start of the plateau, not at its detection.
        std::size_t j = c - back;
        while (j < c && checkpoints[j] > un / cfg.stall_ratio) ++j;
        stall_onset = static_cast<double>((j + 1) * checkpoint_steps) * cfg.dt;
      }
    }
    if (un <= threshold || stalled) {
      extinct = true;
      traj.extinction_by_stall = stalled && un > threshold;
      traj.extinction_time =
          traj.extinction_by_stall ? stall_onset : static_cast<double>(step) * cfg.dt;
      std::fill(uv.begin(), uv.end(), 0.0);
    } else {
      drift = std::max(drift, std::abs(u.mean() - mean0));
    }
    rec.maybe_record(step, u);
  }

  // Zero frames past extinction so the window end lies strictly beyond it.
  if (extinct) {
    const double t_ext = *traj.extinction_time;
    const double horizon = cfg.t_max ? std::max(*cfg.t_max, t_ext) : 1.1 * t_ext;
    const double fdt = rec.frame_dt();
    if (traj.extinction_by_stall)
      for (std::size_t k = 0; k < traj.frames.size(); ++k)
        if (static_cast<double>(k) * fdt >= t_ext - 1e-9 * fdt) traj.frames[k] = Field(traj.frames[k].shape());
    auto last = static_cast<std::size_t>(std::ceil(horizon / fdt - 1e-9));
    // The window must extend past the extinction frame.
    const auto ext_frame = static_cast<std::size_t>(std::ceil(t_ext / fdt - 1e-9));
    last = std::max(last, ext_frame + 1);
    const Field zero(u.shape());
    while (traj.frames.size() < last + 1) traj.frames.push_back(zero);
  }

  traj.frame_dt = rec.frame_dt();
  traj.mass_drift = drift;
  return traj;
}

}  // namespace detail

/// Forward Euler integration of u_t = div(|grad u|^{p-2} grad u), u(0) = f.
///
/// f is projected onto the orthogonal complement of the kernel first.
inline FlowTrajectory run_p_flow(const Field& f, FlowConfig cfg) {
  cfg.normalized = false;
  return detail::integrate(f, cfg);
}

/// Forward Euler integration of the zero-homogeneous flow
/// u_t = div(|grad u|^{p-2} grad u) / ||grad u||_p^{p-1}.
inline FlowTrajectory run_normalized_flow(const Field& f, FlowConfig cfg) {
  cfg.normalized = true;
  return detail::integrate(f, cfg);
}

/// Extinction time of the normalized flow started from an eigenfunction f:
/// the norm decays linearly with slope lambda ||f|| / ||grad f||_p^{p-1}.
inline std::optional<double> normalized_extinction_time(const Field& f,
                                                        double lambda, double p) {
  if (!(lambda < 0.0)) return std::nullopt;
  const double k = std::pow(gradient_p_norm(f, p), p - 1.0);
  return k / (-lambda);
}

}  // namespace pspec
