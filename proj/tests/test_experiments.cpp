#include <catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "thermolab/experiments.hpp"

using namespace thermolab;
using Catch::Approx;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("thermolab_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::map<std::string, std::string> checksum_map(const RunManifest& man) {
  std::map<std::string, std::string> out;
  for (const auto& f : man.outputs) out[f.name] = f.checksum;
  return out;
}

}  // namespace

TEST_CASE("config parsing: sections, lists, diagnostics", "[experiments]") {
  const auto cfg = Config::parse_string(
      "# comment\n"
      "experiment = g-contours\n"
      "[run]\n"
      "points = 1e3\n"
      "g_levels = 0.5, 1.0, 2.0\n"
      "ratio = 2.5\n"
      "; alt comment\n"
      "[integrator]\n"
      "dt = 1e-3\n",
      "demo.ini");
  CHECK(cfg.require("experiment") == "g-contours");
  CHECK(cfg.get_u64("run.points", 0) == 1000);
  CHECK(cfg.get_double("integrator.dt", 0.0) == Approx(1e-3).epsilon(1e-15));
  CHECK(cfg.get_double("run.ratio", 0.0) == 2.5);
  const auto levels = cfg.get_double_list("run.g_levels", {});
  REQUIRE(levels.size() == 3);
  CHECK(levels[1] == 1.0);
  CHECK(cfg.get_double("run.missing", -7.0) == -7.0);
  CHECK(cfg.has("run.points"));
  CHECK_FALSE(cfg.has("run.nope"));

  // Line-numbered diagnostics.
  CHECK_THROWS_WITH(Config::parse_string("a\n", "bad.ini"),
                    Catch::Matchers::ContainsSubstring("bad.ini:1"));
  CHECK_THROWS_WITH(Config::parse_string("[run\nx = 1\n", "bad.ini"),
                    Catch::Matchers::ContainsSubstring("unterminated"));
  CHECK_THROWS_WITH(Config::parse_string("x = 1\nx = 2\n", "dup.ini"),
                    Catch::Matchers::ContainsSubstring("dup.ini:2"));
  CHECK_THROWS_WITH(
      [] {
        const auto c = Config::parse_string("[run]\nsteps = abc\n", "bad.ini");
        return c.get_u64("run.steps", 0);
      }(),
      Catch::Matchers::ContainsSubstring("bad.ini:2"));
  CHECK_THROWS(Config::parse_string("x = 1\n").require("y"));
  CHECK_THROWS(Config::parse_file("/nonexistent/path.ini"));
}

TEST_CASE("17-significant-digit formatting round-trips", "[experiments]") {
  std::mt19937_64 rng(51u);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    double x = u(rng) * std::pow(10.0, (i % 17) - 8);
    const std::string s = format_g17(x);
    CHECK(std::stod(s) == x);
  }
  CHECK(format_g17(0.0) == "0");
  CHECK(format_g17(1.0) == "1");
}

TEST_CASE("FNV-1a checksums match the reference vectors", "[experiments]") {
  CHECK(detail::fnv1a(detail::fnv_offset, "", 0) == 14695981039346656037ull);
  CHECK(detail::fnv1a(detail::fnv_offset, "a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(detail::fnv1a(detail::fnv_offset, "foobar", 6) == 0x85944171f73967e8ull);
  CHECK(detail::hex64(0xaf63dc4c8601ec8cull) == "af63dc4c8601ec8c");
}

TEST_CASE("CSV writer reports checksums of the written bytes", "[experiments]") {
  const auto dir = fresh_dir("csv");
  CsvWriter csv(dir / "t.csv", "a[1],b[1]");
  csv.row({1.0, 0.5});
  csv.row({-2.0, 1.0 / 3.0});
  const FileRecord rec = csv.close();
  CHECK(rec.name == "t.csv");
  CHECK(rec.rows == 2);

  const std::string content = slurp(dir / "t.csv");
  CHECK(rec.bytes == content.size());
  CHECK(rec.checksum ==
        detail::hex64(detail::fnv1a(detail::fnv_offset, content.data(), content.size())));
  CHECK(content.substr(0, 10) == "a[1],b[1]\n");
  CHECK(content.find("0.33333333333333331") != std::string::npos);
}

TEST_CASE("thread budget honours THERMOLAB_THREADS", "[experiments]") {
  const char* saved = std::getenv("THERMOLAB_THREADS");
  const std::string saved_copy = saved ? saved : "";
  setenv("THERMOLAB_THREADS", "3", 1);
  CHECK(thread_budget() == 3);
  setenv("THERMOLAB_THREADS", "not-a-number", 1);
  CHECK(thread_budget() >= 1);
  if (saved)
    setenv("THERMOLAB_THREADS", saved_copy.c_str(), 1);
  else
    unsetenv("THERMOLAB_THREADS");
}

TEST_CASE("parallel_for_index covers every index once and propagates errors",
          "[experiments]") {
  const std::size_t n = 500;
  std::vector<std::atomic<int>> hits(n);
  parallel_for_index(n, [&](std::size_t i) { hits[i].fetch_add(1); });
  for (std::size_t i = 0; i < n; ++i) CHECK(hits[i].load() == 1);

  CHECK_THROWS_WITH(parallel_for_index(64,
                                       [](std::size_t i) {
                                         if (i == 17)
                                           throw std::runtime_error("worker failed");
                                       }),
                    Catch::Matchers::ContainsSubstring("worker failed"));
}

TEST_CASE("experiment catalog and dispatch", "[experiments]") {
  const auto& catalog = experiment_catalog();
  REQUIRE(catalog.size() == 9);
  const std::vector<std::string> expected{
      "g-contours",      "poincare-nh",         "ring-projection",
      "poincare-nhc-averaged", "nhc-section-trace", "nhc-projection",
      "nhc-distributions", "nhc-discrepancy",   "diagnostics"};
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(catalog[i].id == expected[i]);

  RunOptions opts;
  opts.out_dir = fresh_dir("unknown").string();
  CHECK_THROWS_WITH(
      run_experiment(Config::parse_string("experiment = bogus\n"), opts),
      Catch::Matchers::ContainsSubstring("g-contours"));
}

TEST_CASE("g-contours run is deterministic and checksummed", "[experiments]") {
  const auto cfg = Config::parse_string(
      "experiment = g-contours\n[run]\npoints = 50\ng_levels = 0.1, 1.0\n");
  RunOptions opts;
  opts.out_dir = fresh_dir("gc1").string();
  const auto man = run_experiment(cfg, opts);
  CHECK(man.experiment == "g-contours");
  CHECK(man.warnings.empty());
  REQUIRE(man.outputs.size() == 2);
  CHECK(fs::exists(fs::path(opts.out_dir) / "manifest.json"));

  // Manifest checksums match the bytes on disk.
  for (const auto& f : man.outputs) {
    const std::string content = slurp(fs::path(opts.out_dir) / f.name);
    CHECK(f.checksum == detail::hex64(detail::fnv1a(detail::fnv_offset, content.data(),
                                                    content.size())));
    CHECK(f.bytes == content.size());
    CHECK(content.find(',') != std::string::npos);
  }

  // Byte-identical on re-run.
  RunOptions opts2;
  opts2.out_dir = fresh_dir("gc2").string();
  const auto man2 = run_experiment(cfg, opts2);
  CHECK(checksum_map(man) == checksum_map(man2));

  // The polylines trace the level set: check G along the first file.
  std::ifstream in(fs::path(opts.out_dir) / man.outputs[0].name);
  std::string header;
  std::getline(in, header);
  CHECK(header == "G[1],tau[1],alpha[1]");
  std::string line;
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const double G = std::stod(line.substr(0, c1));
    const double tau = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    const double alpha = std::stod(line.substr(c2 + 1));
    CHECK(integral_G(tau, alpha) == Approx(G).margin(1e-9));
  }
}

TEST_CASE("ring-projection smoke run", "[experiments]") {
  const auto cfg = Config::parse_string(
      "experiment = ring-projection\n[run]\nsteps = 20000\nstride = 100\n");
  RunOptions opts;
  opts.out_dir = fresh_dir("ring").string();
  const auto man = run_experiment(cfg, opts);
  REQUIRE(man.outputs.size() == 2);
  CHECK(man.outputs[0].name == "ring_projection.csv");
  CHECK(man.outputs[0].rows == 201);  // 20000/100 samples plus the initial state

  const std::string summary = slurp(fs::path(opts.out_dir) / "ring_projection_summary.csv");
  std::istringstream s(summary);
  std::string header, row;
  std::getline(s, header);
  std::getline(s, row);
  const double qp_min = std::stod(row.substr(0, row.find(',')));
  CHECK(qp_min > 0.0);
}

TEST_CASE("diagnostics experiment writes a pass table", "[experiments]") {
  const auto cfg = Config::parse_string("experiment = diagnostics\n");
  RunOptions opts;
  opts.out_dir = fresh_dir("diag").string();
  const auto man = run_experiment(cfg, opts);
  CHECK(man.warnings.empty());  // all self-checks pass
  const std::string table = slurp(fs::path(opts.out_dir) / "diagnostics.csv");
  CHECK(table.find("reversibility_nh_max_err") != std::string::npos);
  std::istringstream lines(table);
  std::string row;
  std::getline(lines, row);  // header
  std::size_t data_rows = 0;
  while (std::getline(lines, row)) {
    if (row.empty()) continue;
    ++data_rows;
    CHECK(row.substr(row.size() - 2) == ",1");  // every self-check passes
  }
  CHECK(data_rows == 13);
}
