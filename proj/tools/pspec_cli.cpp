// SPDX-License-Identifier: Apache-2.0
//
// pspec: command-line front end for the p-Laplacian spectral toolkit.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pspec/pspec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Options {
  std::string input;
  double p = 1.5;
  double dt = 1e-4;
  std::optional<double> tmax;
  std::size_t stride = 1;
  std::size_t max_frames = 2048;
  std::optional<double> extinction_tol;
  bool normalized = false;
  std::vector<double> edges{0.015, 0.075, 0.2};
  double t1 = 0.0;
  double t2 = 0.0;
  std::string filter_kind = "lpf";
  std::string weighting = "discrete";
  std::uint64_t seed = 1;
  std::string out = ".";
  bool deterministic = false;
  std::string size = "32x32";
  std::optional<double> lambda_target;
  std::size_t max_iterations = 2000;
  double noise_amp = 1.0;
};

json manifest(const std::string& command, const Options& o) {
  json j;
  j["tool"] = "pspec";
  j["version"] = kVersion;
  j["command"] = command;
  j["input"] = o.input;
  const auto ext = fs::path(o.input).extension().string();
  j["format"] = o.input.empty() ? "none"
                : ext == ".pgm"  ? "pgm"
                : ext == ".pfld" ? "pfld"
                : ext == ".pflw" ? "pflw"
                                 : "csv";
  j["p"] = o.p;
  j["dt"] = o.dt;
  j["t_max"] = o.tmax ? json(*o.tmax) : json("auto");
  j["record_stride"] = o.stride;
  j["max_frames"] = o.max_frames;
  j["extinction_tol"] = o.extinction_tol ? json(*o.extinction_tol) : json("auto");
  j["normalized"] = o.normalized;
  j["edges"] = o.edges;
  j["filter"] = {{"kind", o.filter_kind}, {"t1", o.t1}, {"t2", o.t2}};
  j["weighting"] = o.weighting;
  j["out"] = o.out;
  j["seed"] = o.seed;
  j["deterministic"] = o.deterministic;
  return j;
}

fs::path prepare_out(const Options& o, const std::string& command) {
  fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw pspec::InputError("cannot create output directory '" + dir.string() + "'");
  std::ofstream(dir / "manifest.json") << manifest(command, o).dump(2) << "\n";
  return dir;
}

pspec::TransformOptions transform_options(const Options& o) {
  pspec::TransformOptions t;
  if (o.weighting == "discrete")
    t.weighting = pspec::TimeWeighting::discrete;
  else if (o.weighting == "continuous")
    t.weighting = pspec::TimeWeighting::continuous;
  else
    throw pspec::ParameterError("unknown weighting '" + o.weighting + "'");
  t.threads = o.deterministic ? 1 : 0;
  return t;
}

pspec::FlowConfig flow_config(const Options& o) {
  pspec::FlowConfig c;
  c.p = o.p;
  c.dt = o.dt;
  c.t_max = o.tmax;
  c.record_stride = o.stride;
  c.max_frames = o.max_frames;
  c.extinction_tol = o.extinction_tol;
  c.normalized = o.normalized;
  return c;
}

// Image fields go out as PGM, signals as CSV; both get a raw .pfld sidecar.
void write_output_field(const fs::path& stem, const pspec::Field& f) {
  if (f.rank() == 2)
    pspec::io::write_pgm(fs::path(stem).replace_extension(".pgm"), f);
  else
    pspec::io::write_signal_csv(fs::path(stem).replace_extension(".csv"), f);
  pspec::io::write_field(fs::path(stem).replace_extension(".pfld"), f);
}

pspec::SpectralField load_spectral(const Options& o) {
  const fs::path in(o.input);
  if (!fs::exists(in)) throw pspec::InputError("input '" + o.input + "' does not exist");
  if (in.extension() == ".pspc") return pspec::io::read_spectral(in);
  return pspec::p_transform(pspec::io::read_trajectory(in), transform_options(o));
}

pspec::FilterSpec filter_spec(const Options& o) {
  pspec::FilterSpec s;
  s.kind = pspec::filter_kind_from_string(o.filter_kind);
  s.t1 = o.t1;
  s.t2 = o.t2;
  s.validate();
  return s;
}

pspec::GridShape parse_size(const std::string& s) {
  std::size_t a = 0, b = 0;
  char x = 0;
  std::istringstream is(s);
  if (!(is >> a)) throw pspec::ParameterError("bad --size '" + s + "'");
  if (is >> x) {
    if ((x != 'x' && x != 'X') || !(is >> b)) throw pspec::ParameterError("bad --size '" + s + "'");
    return pspec::GridShape::plane(a, b);
  }
  return pspec::GridShape::line(a);
}

double correlation(const pspec::Field& a, const pspec::Field& b) {
  const pspec::Field ac = pspec::project_kernel_orthogonal(a);
  const pspec::Field bc = pspec::project_kernel_orthogonal(b);
  const double na = pspec::norm(ac), nb = pspec::norm(bc);
  return (na > 0.0 && nb > 0.0) ? pspec::inner(ac, bc) / (na * nb) : 0.0;
}

// --- subcommands -------------------------------------------------------------

int cmd_flow(const Options& o) {
  const pspec::Field f = pspec::io::read_input(o.input);
  const pspec::FlowConfig cfg = flow_config(o);
  cfg.validate();
  const fs::path dir = prepare_out(o, "flow");
  const auto traj = o.normalized ? pspec::run_normalized_flow(f, cfg) : pspec::run_p_flow(f, cfg);
  pspec::io::write_trajectory(dir / "trajectory.pflw", traj);
  if (traj.extinction_time)
    std::printf("extinction_time=%.6g%s\n", *traj.extinction_time,
                traj.extinction_by_stall ? " (stall guard)" : "");
  else
    std::printf("extinction_time=none (horizon %.6g)\n", traj.horizon());
  std::printf("mass_drift=%.3e\nframes=%zu frame_dt=%.6g\n", traj.mass_drift, traj.size(),
              traj.frame_dt);
  return 0;
}

int cmd_transform(const Options& o) {
  const auto sf = load_spectral(o);
  const fs::path dir = prepare_out(o, "transform");
  pspec::io::write_spectral(dir / "spectral.pspc", sf);
  std::printf("samples=%zu h=%.6g beta=%.6g b=%.6g\n", sf.size(), sf.h, sf.beta, sf.b);
  return 0;
}

int cmd_spectrum(const Options& o) {
  const auto sf = load_spectral(o);
  const pspec::Field f = pspec::inverse_transform(sf);
  const auto s = pspec::spectrum(f, sf);
  const fs::path dir = prepare_out(o, "spectrum");
  pspec::io::write_spectrum_csv(dir / "spectrum.csv", s);
  const auto peak = pspec::spectral_peak(s);
  std::printf("peak_time=%.6g peak_value=%.6g concentration=%.4f\n", peak.time, peak.value,
              peak.concentration);
  return 0;
}

int cmd_filter(const Options& o) {
  const fs::path in(o.input);
  const auto spec = filter_spec(o);
  std::optional<pspec::FlowTrajectory> traj;
  pspec::SpectralField sf;
  if (in.extension() == ".pflw" && fs::exists(in)) {
    traj = pspec::io::read_trajectory(in);
    sf = pspec::p_transform(*traj, transform_options(o));
  } else {
    sf = load_spectral(o);
  }
  const pspec::Field out = pspec::apply_filter(sf, spec);
  const fs::path dir = prepare_out(o, "filter");
  write_output_field(dir / "filtered", out);
  json report{{"kind", pspec::to_string(spec.kind)}, {"t1", spec.t1}, {"t2", spec.t2}};
  if (spec.kind == pspec::FilterKind::liouville && traj) {
    const auto k = static_cast<std::size_t>(std::llround(spec.t1 / traj->frame_dt));
    if (k < traj->size()) {
      const pspec::Field& ref = traj->frames[k];
      const double rn = pspec::norm(ref);
      const double err = pspec::norm(out - ref) / (rn > 0.0 ? rn : 1.0);
      report["frame_time"] = traj->time(k);
      report["relative_error"] = err;
      std::printf("liouville: relative difference to u(%.6g) = %.3e\n", traj->time(k), err);
    }
  }
  std::ofstream(dir / "filter_report.json") << report.dump(2) << "\n";
  return 0;
}

int cmd_decompose(const Options& o) {
  const auto sf = load_spectral(o);
  const auto bands = pspec::band_decompose(sf, o.edges);
  const fs::path dir = prepare_out(o, "decompose");
  pspec::Field sum(sf.shape());
  for (std::size_t i = 0; i < bands.size(); ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "band_%02zu", i);
    write_output_field(dir / name, bands[i]);
    sum += bands[i];
  }
  const pspec::Field full = pspec::inverse_transform(sf);
  const double fn = pspec::norm(full);
  const double dev = pspec::norm(sum - full) / (fn > 0.0 ? fn : 1.0);
  const bool pass = dev <= 1e-12;
  std::ofstream(dir / "sum_check.txt")
      << "bands " << bands.size() << "\nrelative_deviation " << pspec::io::format_double(dev)
      << "\ntolerance 1e-12\nresult " << (pass ? "PASS" : "FAIL") << "\n";
  std::printf("bands=%zu sum_check=%s (%.3e)\n", bands.size(), pass ? "PASS" : "FAIL", dev);
  return pass ? 0 : 1;
}

int cmd_eigen(const Options& o) {
  const pspec::GridShape shape = parse_size(o.size);
  pspec::EigenConfig cfg;
  cfg.max_iterations = o.max_iterations;
  const auto pair = pspec::generate_eigenfunction(pspec::seeded_start(shape, o.seed), o.p, cfg);
  const fs::path dir = prepare_out(o, "eigen");
  pspec::io::write_eigenpair(dir / "eigenpair", pair);
  if (o.lambda_target)
    pspec::io::write_field(dir / "eigenfunction_scaled.pfld",
                           pair.scaled_to_eigenvalue(*o.lambda_target), o.p);
  std::printf("lambda=%.8g residual=%.3e iterations=%zu converged=%s\n", pair.lambda,
              pair.residual, pair.iterations, pair.converged ? "yes" : "no");
  if (!pair.converged)
    throw pspec::NonConvergenceError("eigenfunction did not converge (files written)");
  return 0;
}

int cmd_demo_noise(const Options& o) {
  const pspec::EigenPair pair = pspec::io::read_eigenpair(o.input);
  if (!(o.noise_amp >= 0.0)) throw pspec::ParameterError("--noise-amp must be >= 0");
  pspec::Field clean = pair.phi;
  if (o.lambda_target) clean = pair.scaled_to_eigenvalue(*o.lambda_target);
  std::mt19937_64 rng(o.seed);
  pspec::Field noisy = clean;
  for (std::size_t i = 0; i < noisy.size(); ++i)
    noisy[i] += o.noise_amp * static_cast<double>(rng() >> 11) * 0x1.0p-53;

  Options fo = o;
  fo.p = pair.p;
  const auto traj = pspec::run_p_flow(noisy, flow_config(fo));
  const auto sf = pspec::p_transform(traj, transform_options(o));
  const pspec::Field recovered = pspec::apply_filter(sf, pspec::FilterSpec::lowpass(o.t1));
  const pspec::Field noise = pspec::apply_filter(sf, pspec::FilterSpec::highpass(o.t1));

  const fs::path dir = prepare_out(o, "demo-noise");
  write_output_field(dir / "input", noisy);
  write_output_field(dir / "recovered", recovered);
  write_output_field(dir / "noise", noise);
  const double corr = correlation(recovered, clean);
  json report{{"t1", o.t1},
              {"noise_amp", o.noise_amp},
              {"extinction_time", traj.extinction_time ? json(*traj.extinction_time) : json()},
              {"correlation", corr},
              {"noise_norm", pspec::norm(noise)}};
  std::ofstream(dir / "report.json") << report.dump(2) << "\n";
  std::printf("correlation=%.6f\n", corr);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear spectral decomposition with the p-Laplacian flow"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--out", o.out, "Output directory")->capture_default_str();
    c->add_flag("--deterministic", o.deterministic, "Single-threaded transform");
  };
  auto flow_flags = [&](CLI::App* c) {
    c->add_option("--p", o.p, "Exponent p in (1, 2]")->capture_default_str();
    c->add_option("--dt", o.dt, "Explicit time step")->capture_default_str();
    c->add_option("--tmax", o.tmax, "Integration horizon (default: until extinction)");
    c->add_option("--stride", o.stride, "Record every stride-th step")->capture_default_str();
    c->add_option("--max-frames", o.max_frames, "Frame budget (0 = unlimited)")
        ->capture_default_str();
    c->add_option("--extinction-tol", o.extinction_tol, "Relative extinction threshold");
    c->add_flag("--normalized", o.normalized, "Run the normalized flow");
  };
  auto weighting = [&](CLI::App* c) {
    c->add_option("--weighting", o.weighting, "discrete | continuous")->capture_default_str();
  };

  auto* flow = app.add_subcommand("flow", "Run the p-flow on a PGM image or CSV signal");
  flow->add_option("input", o.input, "Input .pgm, .csv or .pfld")->required();
  flow_flags(flow);
  common(flow);

  auto* transform = app.add_subcommand("transform", "Compute the p-transform of a trajectory");
  transform->add_option("input", o.input, "Trajectory .pflw")->required();
  weighting(transform);
  common(transform);

  auto* spectrum = app.add_subcommand("spectrum", "Write the p-spectrum as CSV");
  spectrum->add_option("input", o.input, "Trajectory .pflw or spectral .pspc")->required();
  weighting(spectrum);
  common(spectrum);

  auto* filter = app.add_subcommand("filter", "Apply a spectral filter");
  filter->add_option("input", o.input, "Trajectory .pflw or spectral .pspc")->required();
  filter->add_option("--filter-kind", o.filter_kind, "lpf | hpf | bandpass | bandstop | liouville")
      ->capture_default_str();
  filter->add_option("--t1", o.t1, "Lower cutoff time")->capture_default_str();
  filter->add_option("--t2", o.t2, "Upper cutoff time (band filters)");
  weighting(filter);
  common(filter);

  auto* decompose = app.add_subcommand("decompose", "Split into spectral bands");
  decompose->add_option("input", o.input, "Trajectory .pflw or spectral .pspc")->required();
  decompose->add_option("--edges", o.edges, "Band edges as fractions of the extinction time")
      ->delimiter(',')
      ->capture_default_str();
  weighting(decompose);
  common(decompose);

  auto* eigen = app.add_subcommand("eigen", "Generate a p-Laplacian eigenfunction");
  eigen->add_option("--size", o.size, "Grid size, e.g. 32x32 or 128")->capture_default_str();
  eigen->add_option("--p", o.p, "Exponent p in (1, 2]")->capture_default_str();
  eigen->add_option("--seed", o.seed, "Seed of the starting field")->capture_default_str();
  eigen->add_option("--lambda", o.lambda_target, "Also write a copy rescaled to this eigenvalue");
  eigen->add_option("--max-iter", o.max_iterations, "Iteration budget")->capture_default_str();
  common(eigen);

  auto* demo = app.add_subcommand("demo-noise", "Separate uniform noise from an eigenfunction");
  demo->add_option("input", o.input, "Eigenpair .pfld or .json")->required();
  demo->add_option("--t1", o.t1, "Low-pass cutoff time")->capture_default_str();
  demo->add_option("--noise-amp", o.noise_amp, "Noise amplitude")->capture_default_str();
  demo->add_option("--seed", o.seed, "Noise seed")->capture_default_str();
  demo->add_option("--lambda", o.lambda_target, "Rescale the eigenfunction to this eigenvalue");
  demo->add_option("--dt", o.dt, "Explicit time step")->capture_default_str();
  demo->add_option("--max-frames", o.max_frames, "Frame budget")->capture_default_str();
  weighting(demo);
  common(demo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(pspec::ErrorKind::parameter);
  }

  try {
    if (*flow) return cmd_flow(o);
    if (*transform) return cmd_transform(o);
    if (*spectrum) return cmd_spectrum(o);
    if (*filter) return cmd_filter(o);
    if (*decompose) return cmd_decompose(o);
    if (*eigen) return cmd_eigen(o);
    if (*demo) return cmd_demo_noise(o);
  } catch (const pspec::Error& e) {
    std::fprintf(stderr, "pspec: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pspec: internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
