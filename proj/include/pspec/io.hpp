// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pspec/eigenpair.hpp"
#include "pspec/error.hpp"
#include "pspec/flow.hpp"
#include "pspec/grid.hpp"
#include "pspec/transform.hpp"

namespace pspec::io {

namespace fs = std::filesystem;

inline constexpr char kTrajectoryMagic[] = "PFLW1";
inline constexpr char kSpectralMagic[] = "PSPC1";
inline constexpr char kFieldMagic[] = "PFLD1";

/// Header flag bits.
enum : std::uint32_t {
  kFlagNormalized = 1u << 0,
  kFlagContinuousWeighting = 1u << 1,
};

/// Common header of the frame containers.
///
/// Layout, all little-endian:
///   char[5]  magic
///   u32      flags
///   u32      rank (1 or 2)
///   u64      extents[rank]
///   f64      spacing[rank]
///   f64      p
///   f64      dt_effective (time between frames)
///   u64      frame count
///   f64      extinction time (NaN when none)
///   f64      frames[frame count][extents...] row-major
struct ContainerHeader {
  std::string magic;
  std::uint32_t flags = 0;
  GridShape shape;
  double p = 0.0;
  double dt_effective = 0.0;
  std::uint64_t frame_count = 0;
  double extinction = std::numeric_limits<double>::quiet_NaN();
};

struct Container {
  ContainerHeader header;
  std::vector<Field> frames;
};

namespace detail {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <class T>
void put(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& what) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw InputError("truncated container while reading " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
  return os;
}

inline std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::binary) {
  std::ifstream is(path, mode);
  if (!is) throw InputError("cannot open '" + path.string() + "'");
  return is;
}

}  // namespace detail

inline void write_container(const fs::path& path, const ContainerHeader& hdr,
                            const std::vector<Field>& frames) {
  auto os = detail::open_out(path);
  os.write(hdr.magic.data(), 5);
  detail::put<std::uint32_t>(os, hdr.flags);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(hdr.shape.rank));
  for (std::size_t a = 0; a < hdr.shape.rank; ++a)
    detail::put<std::uint64_t>(os, hdr.shape.extents[a]);
  for (std::size_t a = 0; a < hdr.shape.rank; ++a) detail::put<double>(os, hdr.shape.spacing[a]);
  detail::put<double>(os, hdr.p);
  detail::put<double>(os, hdr.dt_effective);
  detail::put<std::uint64_t>(os, frames.size());
  detail::put<double>(os, hdr.extinction);
  for (const Field& f : frames) {
    if (!(f.shape() == hdr.shape)) throw ParameterError("frame grid differs from header");
    for (double v : f.values()) detail::put<double>(os, v);
  }
  if (!os) throw InputError("write to '" + path.string() + "' failed");
}

inline Container read_container(const fs::path& path, const std::string& expected_magic) {
  auto is = detail::open_in(path);
  Container c;
  char magic[5];
  if (!is.read(magic, 5)) throw InputError("'" + path.string() + "' is too short");
  c.header.magic.assign(magic, 5);
  if (c.header.magic != expected_magic)
    throw InputError("'" + path.string() + "' has magic '" + c.header.magic + "', expected '" +
                     expected_magic + "'");
  c.header.flags = detail::get<std::uint32_t>(is, "flags");
  const auto rank = detail::get<std::uint32_t>(is, "rank");
  if (rank != 1 && rank != 2) throw InputError("container rank must be 1 or 2");
  GridShape s;
  s.rank = rank;
  s.extents = {0, 1};
  for (std::size_t a = 0; a < rank; ++a) {
    const auto e = detail::get<std::uint64_t>(is, "extent");
    if (e == 0 || e > (1u << 24)) throw InputError("implausible container extent");
    s.extents[a] = static_cast<std::size_t>(e);
  }
  for (std::size_t a = 0; a < rank; ++a) s.spacing[a] = detail::get<double>(is, "spacing");
  try {
    s.validate();
  } catch (const ParameterError& e) {
    throw InputError(std::string("corrupt container header: ") + e.what());
  }
  c.header.shape = s;
  c.header.p = detail::get<double>(is, "p");
  c.header.dt_effective = detail::get<double>(is, "dt");
  c.header.frame_count = detail::get<std::uint64_t>(is, "frame count");
  c.header.extinction = detail::get<double>(is, "extinction");

  // Length check before allocating.
  const auto here = is.tellg();
  is.seekg(0, std::ios::end);
  const auto end = is.tellg();
  is.seekg(here);
  const auto expected = static_cast<std::uintmax_t>(c.header.frame_count) * s.size() * 8u;
  if (static_cast<std::uintmax_t>(end - here) != expected)
    throw InputError("'" + path.string() + "': payload length " +
                     std::to_string(static_cast<std::uintmax_t>(end - here)) +
                     " does not match header (" + std::to_string(expected) + ")");
  c.frames.reserve(c.header.frame_count);
  for (std::uint64_t k = 0; k < c.header.frame_count; ++k) {
    Field f(s);
    for (double& v : f.values()) v = detail::get<double>(is, "frame");
    c.frames.push_back(std::move(f));
  }
  return c;
}

inline void write_trajectory(const fs::path& path, const FlowTrajectory& t) {
  ContainerHeader h;
  h.magic = kTrajectoryMagic;
  h.flags = t.normalized ? kFlagNormalized : 0u;
  h.shape = t.shape();
  h.p = t.p;
  h.dt_effective = t.frame_dt;
  h.extinction = t.extinction_time.value_or(std::numeric_limits<double>::quiet_NaN());
  write_container(path, h, t.frames);
}

inline FlowTrajectory read_trajectory(const fs::path& path) {
  Container c = read_container(path, kTrajectoryMagic);
  FlowTrajectory t;
  t.frames = std::move(c.frames);
  if (t.frames.empty()) throw InputError("trajectory has no frames");
  t.frame_dt = c.header.dt_effective;
  t.dt = c.header.dt_effective;
  t.p = c.header.p;
  t.normalized = (c.header.flags & kFlagNormalized) != 0;
  if (!std::isnan(c.header.extinction)) t.extinction_time = c.header.extinction;
  t.initial_norm = norm(t.frames.front());
  return t;
}

inline void write_spectral(const fs::path& path, const SpectralField& sf) {
  ContainerHeader h;
  h.magic = kSpectralMagic;
  h.flags = (sf.normalized ? kFlagNormalized : 0u) |
            (sf.weighting == TimeWeighting::continuous ? kFlagContinuousWeighting : 0u);
  h.shape = sf.shape();
  h.p = sf.p;
  h.dt_effective = sf.h;
  h.extinction = sf.extinction;
  write_container(path, h, sf.phi);
}

inline SpectralField read_spectral(const fs::path& path) {
  Container c = read_container(path, kSpectralMagic);
  SpectralField sf;
  sf.phi = std::move(c.frames);
  if (sf.phi.empty()) throw InputError("spectral container has no frames");
  sf.h = c.header.dt_effective;
  sf.p = c.header.p;
  sf.normalized = (c.header.flags & kFlagNormalized) != 0;
  sf.weighting = (c.header.flags & kFlagContinuousWeighting) ? TimeWeighting::continuous
                                                            : TimeWeighting::discrete;
  sf.beta = transform_order(sf.normalized ? 0.0 : sf.p - 1.0);
  sf.extinction = c.header.extinction;
  sf.b = sf.time(sf.phi.size() - 1);
  return sf;
}

inline void write_field(const fs::path& path, const Field& f, double p = 0.0) {
  ContainerHeader h;
  h.magic = kFieldMagic;
  h.shape = f.shape();
  h.p = p;
  write_container(path, h, {f});
}

inline Field read_field(const fs::path& path) {
  Container c = read_container(path, kFieldMagic);
  if (c.frames.size() != 1) throw InputError("field container must hold exactly one frame");
  return std::move(c.frames.front());
}

// --- eigenpairs -----------------------------------------------------------

inline nlohmann::json eigen_metadata(const EigenPair& e) {
  nlohmann::json j;
  j["p"] = e.p;
  j["lambda"] = e.lambda;
  j["residual"] = std::isfinite(e.residual) ? nlohmann::json(e.residual) : nlohmann::json();
  j["provenance"] = to_string(e.provenance);
  j["converged"] = e.converged;
  j["iterations"] = e.iterations;
  return j;
}

/// Writes <stem>.pfld and <stem>.json.
inline void write_eigenpair(const fs::path& stem, const EigenPair& e) {
  write_field(fs::path(stem).replace_extension(".pfld"), e.phi, e.p);
  auto os = detail::open_out(fs::path(stem).replace_extension(".json"));
  os << eigen_metadata(e).dump(2) << "\n";
}

/// Accepts either the .pfld or the .json path (or the shared stem).
inline EigenPair read_eigenpair(const fs::path& any) {
  fs::path stem = any;
  if (stem.extension() == ".pfld" || stem.extension() == ".json") stem.replace_extension();
  EigenPair e;
  e.phi = read_field(fs::path(stem).replace_extension(".pfld"));
  auto is = detail::open_in(fs::path(stem).replace_extension(".json"), std::ios::in);
  nlohmann::json j;
  try {
    is >> j;
    e.p = j.at("p").get<double>();
    e.lambda = j.at("lambda").get<double>();
    e.residual = j.at("residual").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                            : j.at("residual").get<double>();
    e.provenance = j.at("provenance").get<std::string>() == "analytic" ? Provenance::analytic
                                                                       : Provenance::generated;
    e.converged = j.value("converged", true);
    e.iterations = j.value("iterations", std::size_t{0});
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("malformed eigenpair metadata: ") + ex.what());
  }
  return e;
}

// --- text formats -----------------------------------------------------------

/// Full-precision decimal rendering.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with header `t,S`.
inline void write_spectrum_csv(const fs::path& path, const Spectrum& s) {
  auto os = detail::open_out(path);
  os << "t,S\n";
  for (std::size_t k = 0; k < s.size(); ++k)
    os << format_double(s.t[k]) << ',' << format_double(s.S[k]) << '\n';
}

inline Spectrum read_spectrum_csv(const fs::path& path) {
  auto is = detail::open_in(path, std::ios::in);
  std::string line;
  if (!std::getline(is, line) || line != "t,S") throw InputError("spectrum CSV must start with 't,S'");
  Spectrum s;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InputError("malformed spectrum row '" + line + "'");
    s.t.push_back(std::stod(line.substr(0, comma)));
    s.S.push_back(std::stod(line.substr(comma + 1)));
  }
  return s;
}

/// Single-column CSV of a 1D signal. A non-numeric first line is a header;
/// blank lines and lines starting with '#' are skipped.
inline Field read_signal_csv(const fs::path& path) {
  auto is = detail::open_in(path, std::ios::in);
  std::vector<double> v;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r,");
    const std::string cell = line.substr(b, e - b + 1);
    char* end = nullptr;
    const double x = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0') {
      if (first) {
        first = false;
        continue;
      }
      throw InputError("non-numeric value '" + cell + "' in " + path.string());
    }
    first = false;
    v.push_back(x);
  }
  if (v.size() < 2) throw InputError("signal in " + path.string() + " has fewer than 2 samples");
  const std::size_t n = v.size();
  return Field(GridShape::line(n), std::move(v));
}

inline void write_signal_csv(const fs::path& path, const Field& f) {
  auto os = detail::open_out(path);
  os << "value\n";
  for (double v : f.values()) os << format_double(v) << '\n';
}

namespace detail {

inline std::string pgm_token(std::istream& is) {
  std::string tok;
  char c;
  while (is.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(is, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

inline std::size_t pgm_number(std::istream& is, const char* what) {
  const std::string t = pgm_token(is);
  if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    throw InputError(std::string("malformed PGM ") + what);
  return static_cast<std::size_t>(std::stoul(t));
}

}  // namespace detail

/// Reads a P2 or P5 grayscale image, normalized to [0, 1] by its maxval.
inline Field read_pgm(const fs::path& path) {
  auto is = detail::open_in(path);
  const std::string magic = detail::pgm_token(is);
  if (magic != "P2" && magic != "P5") throw InputError("'" + path.string() + "' is not a P2/P5 PGM");
  const std::size_t w = detail::pgm_number(is, "width");
  const std::size_t h = detail::pgm_number(is, "height");
  const std::size_t maxval = detail::pgm_number(is, "maxval");
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw InputError("invalid PGM header");
  Field f(GridShape::plane(h, w));
  const double scale = 1.0 / static_cast<double>(maxval);
  if (magic == "P2") {
    for (double& v : f.values()) v = static_cast<double>(detail::pgm_number(is, "sample")) * scale;
  } else {
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(w * h * bytes);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
      throw InputError("truncated PGM raster in " + path.string());
    for (std::size_t i = 0; i < w * h; ++i) {
      const unsigned v = bytes == 1 ? raw[i] : (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1];
      f[i] = static_cast<double>(v) * scale;
    }
  }
  return f;
}

/// Writes an 8-bit P5 image, linearly rescaled from [lo, hi] (default: the
/// field's own range) to [0, 255].
inline void write_pgm(const fs::path& path, const Field& f, std::optional<double> lo = {},
                      std::optional<double> hi = {}) {
  if (f.rank() != 2) throw ParameterError("PGM output needs a 2D field");
  double a = lo.value_or(*std::min_element(f.data().begin(), f.data().end()));
  double b = hi.value_or(*std::max_element(f.data().begin(), f.data().end()));
  if (!(b > a)) b = a + 1.0;
  auto os = detail::open_out(path);
  os << "P5\n" << f.extent(1) << ' ' << f.extent(0) << "\n255\n";
  for (double v : f.values()) {
    const double s = std::clamp((v - a) / (b - a), 0.0, 1.0);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(s * 255.0))));
  }
}

/// Dispatches on extension: .pgm -> image, .pfld -> field container, else CSV.
inline Field read_input(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("input '" + path.string() + "' does not exist");
  const auto ext = path.extension().string();
  if (ext == ".pgm") return read_pgm(path);
  if (ext == ".pfld") return read_field(path);
  return read_signal_csv(path);
}

}  // namespace pspec::io
