#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "sbs_cli/sweep.hpp"

using namespace sbs;
using namespace sbs::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("sbs_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunConfig cfg(const std::string& text) { return parse_config(json::parse(text)); }

std::string error_of(const std::string& text) {
  try {
    cfg(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

double as_double(const Cell& c) { return std::get<double>(c); }

int run_binary(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + SBS_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Config, DefaultsParse) {
  const auto c = cfg("{}");
  EXPECT_EQ(c.geometry.L, 50.0);
  EXPECT_FALSE(c.seed.has_value());
  EXPECT_FALSE(c.sweep.has_value());
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_EQ(error_of(R"({"geometry": {"L": -1}})"), "geometry.L: must be > 0");
  EXPECT_EQ(error_of(R"({"geometry": {"L": "big"}})"), "geometry.L: expected a number");
  EXPECT_EQ(error_of(R"({"geometry": {"size": 3}})"), "geometry.size: unknown field");
  EXPECT_EQ(error_of(R"({"fractions": {"m": 0.3}})"), "fractions.m: 1/m must be an integer");
  EXPECT_EQ(error_of(R"({"time": {"values": [0, -1]}})"), "time.values[1]: must be >= 0");
  EXPECT_EQ(error_of(R"({"distribution": {"kind": "laser"}})"),
            "distribution.kind: expected one of point, isotropic, thermal, csv");
  EXPECT_EQ(error_of(R"({"seed": -3})"), "seed: expected a non-negative integer");
  EXPECT_EQ(error_of(R"({"alpha": {"source": "override"}})"), "alpha.value: required when alpha.source is 'override'");
  EXPECT_EQ(error_of(R"({"sweep": {"command": "bounds", "grid": {"geometry.dx": []}}})"),
            "sweep.grid.geometry.dx: expected a non-empty array");
  EXPECT_EQ(error_of("[1, 2]"), "<root>: expected an object");
}

TEST(Config, SeedRequiredForRandomizedRuns) {
  try {
    run_bounds(cfg(R"({"bounds": {"trials": 2}})"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "seed: required for bounds");
  }
}

TEST(Config, TimeRange) {
  const auto c = cfg(R"({"time": {"start": 0, "stop": 2, "steps": 4, "unit": "absolute"}})");
  ASSERT_EQ(c.time.values.size(), 5u);
  EXPECT_DOUBLE_EQ(c.time.values[3], 1.5);
}

TEST(Csv, RoundTripDigits) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(1.0 / 0.0), "inf");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
  Table t;
  t.header = {"a", "b"};
  t.add({0.5, std::string("x")});
  EXPECT_EQ(t.csv(), "a,b\n0.5,x\n");
  EXPECT_THROW(t.add({1.0}), ShapeError);
}

TEST(Decoherence, NoDisplacementIsConstantOne) {
  const auto r = run_decoherence(cfg(R"({"geometry": {"dx": 0}, "time": {"values": [0, 10, 1e4], "unit": "absolute"}})"));
  ASSERT_EQ(r.table.rows.size(), 3u);
  for (const auto& row : r.table.rows) {
    EXPECT_EQ(as_double(row[1]), 1.0);
    EXPECT_EQ(as_double(row[2]), 1.0);
  }
}

TEST(Decoherence, InfiniteTauRejectsRelativeTime) {
  EXPECT_THROW(run_decoherence(cfg(R"({"geometry": {"dx": 0}})")), ConfigError);
}

TEST(Decoherence, PointDistributionMatchesModule) {
  const auto c = cfg(R"({"distribution": {"kind": "point", "k0": 0.1, "cos_theta": 0}, "fractions": {"f": 0.25}})");
  const auto r = run_decoherence(c);
  const auto g = c.geometry.geometry();
  const auto d = scatter::make_distribution(scatter::PointSpec{0.1, 0.0, 0.0}, nullptr, g);
  const double tau = asymptotics::decoherence_time(d, g);
  ASSERT_EQ(r.table.rows.size(), c.time.values.size());
  for (std::size_t i = 0; i < r.table.rows.size(); ++i) {
    const double t = c.time.values[i] * tau;
    EXPECT_EQ(as_double(r.table.rows[i][0]), t);
    EXPECT_EQ(as_double(r.table.rows[i][1]),
              asymptotics::decoherence_factor(d, g, 0.25, asymptotics::photon_count(g, t)));
    EXPECT_EQ(as_double(r.table.rows[i][2]), asymptotics::decoherence_factor_thermodynamic(d, g, 0.25, t));
  }
}

TEST(Overlap, IsotropicNeverOrthogonalizes) {
  const auto r = run_overlap(cfg(R"({"seed": 1, "distribution": {"kind": "isotropic", "k0": 0.1}})"));
  for (const auto& row : r.table.rows) {
    EXPECT_EQ(as_double(row[1]), 1.0);
    EXPECT_EQ(as_double(row[2]), 1.0);
  }
  EXPECT_LT(r.summary->at("alpha").get<double>(), 1e-10);
}

TEST(Plateau, NoPhotonsNoInformation) {
  const auto r = run_plateau(cfg(R"({"oracle": {"photons": 0}})"));
  ASSERT_EQ(r.table.rows.size(), 5u);
  for (const auto& row : r.table.rows) EXPECT_NEAR(as_double(row[1]), 0.0, 1e-12);
}

TEST(Plateau, LongTimeRowsBroadcast) {
  const auto r = run_plateau(cfg(R"({"oracle": {"photons": 8, "theta": 0.7}, "fractions": {"m": 0.25}})"));
  ASSERT_EQ(r.table.rows.size(), 5u);
  EXPECT_EQ(std::get<std::string>(r.table.rows[0][6]), "product");
  for (std::size_t i = 1; i + 1 < r.table.rows.size(); ++i)
    EXPECT_EQ(std::get<std::string>(r.table.rows[i][6]), "broadcasting") << "row " << i;
}

TEST(Plateau, CapacityErrorCarriesGuidance) {
  try {
    run_plateau(cfg(R"({"oracle": {"photons": 16, "dim_cap": 256}, "fractions": {"f_values": [0, 0.5, 1]}})"));
    FAIL() << "expected CapacityError";
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find("cap 256"), std::string::npos);
    EXPECT_EQ(exit_code_of(e), kCapacity);
  }
}

TEST(Bounds, ZeroTrialsHeaderOnly) {
  const auto r = run_bounds(cfg(R"({"bounds": {"trials": 0}})"));
  EXPECT_EQ(r.table.csv(), "trial,N,f,H_S,I_exact,rhs,slack,epsilon_E,epsilon_fE,B_macro,out_of_regime\n");
  EXPECT_EQ(r.exit_code, kOk);
}

TEST(Bounds, DefaultTrialsHold) {
  const auto r = run_bounds(cfg(R"({"seed": 11})"));
  ASSERT_EQ(r.table.rows.size(), 100u);
  for (const auto& row : r.table.rows) EXPECT_GE(as_double(row[6]), -1e-9);
  EXPECT_EQ(r.exit_code, kOk);
  EXPECT_EQ(r.summary->at("violations").get<int>(), 0);
}

TEST(Bounds, FixedSeedIsDeterministic) {
  const auto c = cfg(R"({"seed": 5, "bounds": {"trials": 10}})");
  EXPECT_EQ(run_bounds(c).table.csv(), run_bounds(c).table.csv());
  EXPECT_NE(run_bounds(c).table.csv(), run_bounds(cfg(R"({"seed": 6, "bounds": {"trials": 10}})")).table.csv());
}

TEST(Pfcast, SpectrumSurvives) {
  const auto r = run_pfcast(cfg(R"({"seed": 3, "pfcast": {"bases": 5}})"));
  ASSERT_EQ(r.table.rows.size(), 5u);
  for (const auto& row : r.table.rows) EXPECT_LE(as_double(row[5]), 1e-10);
  EXPECT_EQ(r.exit_code, kOk);
}

TEST(Output, RerunIsByteIdentical) {
  const auto c = cfg(R"({"seed": 9, "distribution": {"kind": "thermal"}, "bounds": {"trials": 4}})");
  const auto a = fresh_dir("rerun_a"), b = fresh_dir("rerun_b");
  for (const char* name : {"decoherence", "overlap", "bounds"}) {
    write_result(a, name, run_command(name, c));
    write_result(b, name, run_command(name, c));
    EXPECT_EQ(slurp(a / (std::string(name) + ".csv")), slurp(b / (std::string(name) + ".csv"))) << name;
  }
  EXPECT_EQ(slurp(a / "bounds.json"), slurp(b / "bounds.json"));
  for (const auto& e : fs::directory_iterator(a))
    EXPECT_EQ(e.path().string().find(".tmp."), std::string::npos) << e.path();
}

TEST(Sweep, TwoByTwoGrid) {
  const auto c = cfg(R"({"sweep": {"command": "decoherence",
                                   "grid": {"geometry.dx": [0.5, 1.0], "fractions.f": [0.25, 0.5]}}})");
  const auto out = fresh_dir("grid");
  EXPECT_EQ(run_sweep(c, out), kOk);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(fs::exists(out / (cell_stem(static_cast<std::size_t>(i)) + ".csv")));
  const auto manifest = json::parse(slurp(out / "manifest.json"));
  ASSERT_EQ(manifest["cells"].size(), 4u);
  EXPECT_EQ(manifest["cells"][1]["overrides"]["fractions.f"], 0.25);
  EXPECT_EQ(manifest["cells"][1]["overrides"]["geometry.dx"], 1.0);
  EXPECT_EQ(manifest["cells"][2]["config"]["fractions"]["f"], 0.5);
  EXPECT_EQ(manifest["cells"][2]["config"]["geometry"]["dx"], 0.5);
  for (const auto& cell : manifest["cells"]) EXPECT_EQ(cell["status"], "ok");
}

TEST(Sweep, SinglePointEqualsSingleRun) {
  const auto c = cfg(R"({"seed": 2, "bounds": {"trials": 3}, "sweep": {"command": "bounds", "grid": {"seed": [2]}}})");
  const auto out = fresh_dir("single");
  run_sweep(c, out);
  EXPECT_EQ(slurp(out / "cell_0000.csv"), run_bounds(c).table.csv());
}

TEST(Sweep, OrderAndConcurrencyDoNotMatter) {
  const std::string text = R"({"seed": 4, "bounds": {"trials": 3},
      "sweep": {"command": "bounds", "grid": {"seed": [1, 2, 3], "bounds.d": [2, 3]}}})";
  const auto a = fresh_dir("order_a"), b = fresh_dir("order_b");
  run_sweep(cfg(text), a, {1, std::nullopt});
  run_sweep(cfg(text), b, {3, 12345});
  for (const auto& e : fs::directory_iterator(a))
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
}

TEST(Sweep, FailedCellsAreRecorded) {
  const auto c = cfg(R"({"sweep": {"command": "decoherence", "grid": {"geometry.L": [50, -1, 80]}}})");
  const auto out = fresh_dir("partial");
  EXPECT_EQ(run_sweep(c, out), kValidation);
  const auto manifest = json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest["cells"][0]["status"], "ok");
  EXPECT_EQ(manifest["cells"][1]["status"], "failed");
  EXPECT_EQ(manifest["cells"][1]["error"], "geometry.L: must be > 0");
  EXPECT_EQ(manifest["cells"][2]["status"], "ok");
  EXPECT_TRUE(fs::exists(out / "cell_0002.csv"));
  EXPECT_FALSE(fs::exists(out / "cell_0001.csv"));
}

TEST(Binary, ExitCodes) {
  const auto dir = fresh_dir("binary");
  const std::string out = " --out " + (dir / "out").string();
  auto config = [&](const std::string& text) { return " --config " + write_config(dir, text).string(); };
  EXPECT_EQ(run_binary("decoherence" + config("{}") + out), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "decoherence.csv"));
  EXPECT_EQ(run_binary("decoherence" + config(R"({"geometry": {"L": 0}})") + out), 1);
  EXPECT_EQ(run_binary("decoherence --config " + (dir / "missing.json").string() + out), 1);
  EXPECT_EQ(run_binary("decoherence" + out), 1);
  EXPECT_EQ(run_binary("plateau" + config(R"({"oracle": {"photons": 16, "dim_cap": 64}})") + out), 2);
  EXPECT_EQ(run_binary("pfcast" + config(R"({"pfcast": {"bases": 2}, "thresholds": {"pf_tolerance": 1e-300}})") +
                       out + " --seed 1"),
            1);
  EXPECT_EQ(run_binary("bounds" + config(R"({"bounds": {"trials": 2}})") + out), 1);
  EXPECT_EQ(run_binary("bounds" + config(R"({"bounds": {"trials": 2}})") + out + " --seed 4"), 0);
  EXPECT_EQ(run_binary("decoherence" + config("{}") + out, "SBS_LOG_LEVEL=loud"), 1);
  EXPECT_EQ(run_binary("decoherence" + config("{}") + out, "SBS_LOG_LEVEL=debug"), 0);
}

TEST(Binary, SeedFlagOverridesConfig) {
  const auto dir = fresh_dir("seedflag");
  const auto conf = write_config(dir, R"({"seed": 1, "bounds": {"trials": 3}})");
  ASSERT_EQ(run_binary("bounds --config " + conf.string() + " --out " + (dir / "a").string() + " --seed 8"), 0);
  ASSERT_EQ(run_binary("bounds --config " + conf.string() + " --out " + (dir / "b").string()), 0);
  EXPECT_EQ(slurp(dir / "a" / "bounds.csv"),
            run_bounds(cfg(R"({"seed": 8, "bounds": {"trials": 3}})")).table.csv());
  EXPECT_NE(slurp(dir / "a" / "bounds.csv"), slurp(dir / "b" / "bounds.csv"));
}

TEST(Binary, SweepWorkersByteIdentical) {
  const auto dir = fresh_dir("sweepbin");
  const auto conf = write_config(dir, R"({"seed": 3, "bounds": {"trials": 2},
      "sweep": {"command": "bounds", "grid": {"bounds.d": [2, 3], "seed": [5, 6]}}})");
  ASSERT_EQ(run_binary("sweep --config " + conf.string() + " --out " + (dir / "w1").string()), 0);
  ASSERT_EQ(run_binary("sweep --config " + conf.string() + " --out " + (dir / "w4").string() + " --workers 4"), 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir / "w1")) {
    EXPECT_EQ(slurp(e.path()), slurp(dir / "w4" / e.path().filename()));
    ++files;
  }
  EXPECT_EQ(files, 9);
}
