// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs of the pspec executable.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pspec/io.hpp"

namespace fs = std::filesystem;
using namespace pspec;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(PSPEC_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path workdir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "pspec_cli_tests" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path write_signal(const fs::path& dir) {
  const fs::path p = dir / "signal.csv";
  std::ofstream os(p);
  os << "value\n";
  const double pi = std::acos(-1.0);
  for (int i = 0; i < 128; ++i)
    os << std::sin(2.0 * pi * i / 128.0) + 0.3 * std::cos(6.0 * pi * i / 128.0) << "\n";
  return p;
}

}  // namespace

TEST(Cli, SignalPipeline) {
  const fs::path d = workdir("signal");
  const fs::path sig = write_signal(d);
  auto r = run("flow " + sig.string() + " --p 1.5 --dt 0.05 --out " + (d / "run").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("extinction_time="), std::string::npos);
  EXPECT_NE(r.out.find("mass_drift="), std::string::npos);
  ASSERT_TRUE(fs::exists(d / "run" / "trajectory.pflw"));
  const auto manifest = nlohmann::json::parse(slurp(d / "run" / "manifest.json"));
  EXPECT_EQ(manifest["p"], 1.5);
  EXPECT_EQ(manifest["format"], "csv");
  EXPECT_EQ(manifest["t_max"], "auto");

  const std::string traj = (d / "run" / "trajectory.pflw").string();
  r = run("spectrum " + traj + " --out " + (d / "spec").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string csv = slurp(d / "spec" / "spectrum.csv");
  EXPECT_EQ(csv.substr(0, 4), "t,S\n");

  r = run("decompose " + traj + " --out " + (d / "bands").string());
  ASSERT_EQ(r.code, 0) << r.out;
  for (int i = 0; i < 4; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "band_%02d.pfld", i);
    EXPECT_TRUE(fs::exists(d / "bands" / name)) << name;
  }
  EXPECT_NE(slurp(d / "bands" / "sum_check.txt").find("result PASS"), std::string::npos);

  r = run("filter " + traj + " --filter-kind liouville --t1 40 --out " + (d / "filt").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rep = nlohmann::json::parse(slurp(d / "filt" / "filter_report.json"));
  EXPECT_LE(rep["relative_error"].get<double>(), 2e-2);
  EXPECT_TRUE(fs::exists(d / "filt" / "filtered.csv"));
  EXPECT_TRUE(fs::exists(d / "filt" / "filtered.pfld"));
}

TEST(Cli, DeterministicModeIsByteIdentical) {
  const fs::path d = workdir("determinism");
  const fs::path sig = write_signal(d);
  for (const char* out : {"a", "b"}) {
    auto r = run("flow " + sig.string() + " --p 1.5 --dt 0.05 --deterministic --out " +
                 (d / out).string());
    ASSERT_EQ(r.code, 0) << r.out;
    r = run("transform " + (d / out / "trajectory.pflw").string() + " --deterministic --out " +
            (d / out).string());
    ASSERT_EQ(r.code, 0) << r.out;
  }
  EXPECT_EQ(slurp(d / "a" / "trajectory.pflw"), slurp(d / "b" / "trajectory.pflw"));
  EXPECT_EQ(slurp(d / "a" / "spectral.pspc"), slurp(d / "b" / "spectral.pspc"));
}

TEST(Cli, ZeroImageIsExtinctImmediately) {
  const fs::path d = workdir("zero");
  std::ofstream(d / "zero.pgm") << "P2\n4 4\n255\n0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0\n";
  const auto r = run("flow " + (d / "zero.pgm").string() + " --out " + (d / "run").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("extinction_time=0\n"), std::string::npos) << r.out;
}

TEST(Cli, ImageFilterWritesPgmAndSidecar) {
  const fs::path d = workdir("image");
  std::ofstream os(d / "img.pgm");
  os << "P2\n8 8\n255\n";
  for (int i = 0; i < 64; ++i) os << ((i % 8) < 4 ? 40 : 200) + (i / 8) * 3 << " ";
  os.close();
  auto r = run("flow " + (d / "img.pgm").string() + " --p 1.5 --out " + (d / "run").string());
  ASSERT_EQ(r.code, 0) << r.out;
  r = run("filter " + (d / "run" / "trajectory.pflw").string() +
          " --filter-kind bandpass --t1 0.5 --t2 3 --out " + (d / "f").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(io::read_pgm(d / "f" / "filtered.pgm").extent(0), 8u);
  EXPECT_EQ(io::read_field(d / "f" / "filtered.pfld").size(), 64u);
}

TEST(Cli, NaturalImageDecomposesIntoFourBands) {
  const fs::path d = workdir("natural");
  const std::string img = (fs::path(PSPEC_TEST_DATA) / "camera64.pgm").string();
  auto r = run("flow " + img + " --p 1.01 --out " + (d / "run").string());
  ASSERT_EQ(r.code, 0) << r.out;
  r = run("decompose " + (d / "run" / "trajectory.pflw").string() + " --out " + (d / "b").string());
  ASSERT_EQ(r.code, 0) << r.out;
  for (int i = 0; i < 4; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "band_%02d.pgm", i);
    EXPECT_TRUE(fs::exists(d / "b" / name)) << name;
  }
  EXPECT_FALSE(fs::exists(d / "b" / "band_04.pgm"));
  EXPECT_NE(slurp(d / "b" / "sum_check.txt").find("result PASS"), std::string::npos);
}

TEST(Cli, EigenIsDeterministicAndCertified) {
  const fs::path d = workdir("eigen");
  for (const char* out : {"a", "b"}) {
    const auto r = run("eigen --size 32x32 --p 1.5 --seed 7 --out " + (d / out).string());
    ASSERT_EQ(r.code, 0) << r.out;
  }
  EXPECT_EQ(slurp(d / "a" / "eigenpair.pfld"), slurp(d / "b" / "eigenpair.pfld"));
  const auto e = io::read_eigenpair(d / "a" / "eigenpair.json");
  EXPECT_LT(e.lambda, 0.0);
  EXPECT_LE(e.residual, 5e-2);
}

TEST(Cli, EigenLinearCase) {
  const fs::path d = workdir("eigen2");
  const auto r = run("eigen --size 64 --p 2 --seed 1 --out " + d.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto e = io::read_eigenpair(d / "eigenpair.json");
  const double exact = -(2.0 - 2.0 * std::cos(std::acos(-1.0) / 64.0));
  EXPECT_NEAR(e.lambda, exact, 1e-6 * std::abs(exact));
}

TEST(Cli, DemoNoiseEdgeCases) {
  const fs::path d = workdir("demo");
  auto r = run("eigen --size 12x12 --p 1.5 --seed 3 --out " + (d / "e").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string pair = (d / "e" / "eigenpair.json").string();

  // Without noise, a cut below the eigen peak keeps the whole eigenfunction.
  const EigenPair e = io::read_eigenpair(pair);
  const double t1 = 0.5 / (0.5 * -e.lambda);
  r = run("demo-noise " + pair + " --noise-amp 0 --t1 " + io::format_double(t1) + " --out " +
          (d / "clean").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const Field clean_rec = io::read_field(d / "clean" / "recovered.pfld");
  EXPECT_LE(norm(clean_rec - e.phi), 1e-2 * norm(e.phi));

  r = run("demo-noise " + pair + " --t1 0 --seed 5 --out " + (d / "t0").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(io::read_field(d / "t0" / "noise.pfld").max_abs(), 0.0);
  const Field input = io::read_field(d / "t0" / "input.pfld");
  const Field rec = io::read_field(d / "t0" / "recovered.pfld");
  const Field centred = project_kernel_orthogonal(input);
  EXPECT_LE(norm(rec - centred), 1e-8 * norm(centred));
}

TEST(Cli, ExitCodes) {
  const fs::path d = workdir("codes");
  EXPECT_EQ(run("flow " + (d / "missing.pgm").string()).code, 2);
  EXPECT_EQ(run("eigen --p 2.5 --out " + d.string()).code, 3);
  EXPECT_EQ(run("flow").code, 3);
  EXPECT_EQ(run("eigen --size 16x16 --p 1.3 --max-iter 1 --out " + d.string()).code, 5);
  const fs::path sig = write_signal(d);
  EXPECT_EQ(run("flow " + sig.string() + " --dt 5 --out " + (d / "x").string()).code, 4);
  EXPECT_EQ(run("decompose " + sig.string() + " --out " + (d / "y").string()).code, 2);
  EXPECT_EQ(run("eigen --size 1 --out " + d.string()).code, 3);
}
