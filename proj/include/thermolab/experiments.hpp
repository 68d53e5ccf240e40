#pragma once

// Experiment catalog: declarative configs, deterministic CSV outputs, a JSON
// run manifest with content checksums, and the self-check diagnostics suite.
// Multi-trajectory experiments fan out one worker per initial condition;
// THERMOLAB_THREADS caps the worker count.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "analysis.hpp"
#include "dynamics.hpp"
#include "ergodicity.hpp"
#include "integrators.hpp"
#include "sections.hpp"
#include "states.hpp"

namespace thermolab {

inline constexpr const char* library_version = "1.0.0";

// All numeric output carries 17 significant digits.
inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline constexpr std::uint64_t fnv_offset = 14695981039346656037ull;

inline std::uint64_t fnv1a(std::uint64_t h, const char* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Worker budget and a minimal index-parallel loop.
// ---------------------------------------------------------------------------

inline unsigned thread_budget() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("THERMOLAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0)
      n = static_cast<unsigned>(std::min(v, 256l));
  }
  return n;
}

template <class F>
void parallel_for_index(std::size_t n, F&& f) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(thread_budget(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Declarative config: flat key-value text with one level of [section]
// grouping; keys are addressed as "section.key".
// ---------------------------------------------------------------------------

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  static Config parse_string(const std::string& text,
                             const std::string& origin = "<string>") {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(line_no) +
                            ": unterminated section header");
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty())
          throw ConfigError(origin + ":" + std::to_string(line_no) +
                            ": empty section name");
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": expected 'key = value'");
      std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
      if (!section.empty()) key = section + "." + key;
      if (cfg.kv_.count(key))
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": duplicate key '" + key + "'");
      cfg.kv_[key] = value;
      cfg.lines_[key] = line_no;
    }
    return cfg;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string require(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it == kv_.end())
      throw ConfigError(origin_ + ": missing required key '" + key + "'");
    return it->second;
  }

  std::string get(const std::string& key, const std::string& def) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
  }

  double get_double(const std::string& key, double def) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? def : parse_double(key, it->second);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? def : parse_u64(key, it->second);
  }

  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<double> out;
    for (const std::string& tok : split_list(it->second))
      out.push_back(parse_double(key, tok));
    if (out.empty()) fail(key, "empty list");
    return out;
  }

  std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                          std::vector<std::uint64_t> def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<std::uint64_t> out;
    for (const std::string& tok : split_list(it->second))
      out.push_back(parse_u64(key, tok));
    if (out.empty()) fail(key, "empty list");
    return out;
  }

  const std::map<std::string, std::string>& items() const { return kv_; }
  const std::string& origin() const { return origin_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : s) {
      if (c == ',' || c == ' ' || c == '\t') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const auto it = lines_.find(key);
    const std::string loc =
        it == lines_.end() ? origin_ : origin_ + ":" + std::to_string(it->second);
    throw ConfigError(loc + ": key '" + key + "': " + msg);
  }

  double parse_double(const std::string& key, const std::string& v) const {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) fail(key, "trailing characters in number '" + v + "'");
      return x;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      fail(key, "expected a number, got '" + v + "'");
    }
  }

  std::uint64_t parse_u64(const std::string& key, const std::string& v) const {
    // Accept scientific notation (1e7) for step counts.
    const double x = parse_double(key, v);
    if (!(x >= 0.0) || x != std::floor(x) || x > 1.8e18)
      fail(key, "expected a nonnegative integer, got '" + v + "'");
    return static_cast<std::uint64_t>(x);
  }

  std::map<std::string, std::string> kv_;
  std::map<std::string, int> lines_;
  std::string origin_;
};

// ---------------------------------------------------------------------------
// Output files, checksums and the run manifest.
// ---------------------------------------------------------------------------

struct FileRecord {
  std::string name;
  std::string checksum;  // FNV-1a 64 over file bytes, hex
  std::uint64_t rows;
  std::uint64_t bytes;
};

struct RunManifest {
  std::string experiment;
  std::string version = library_version;
  bool paper_scale = false;
  double wall_seconds = 0.0;
  std::map<std::string, std::string> config_echo;
  std::vector<std::string> warnings;
  std::vector<FileRecord> outputs;
};

inline std::string manifest_json(const RunManifest& m) {
  nlohmann::json j;
  j["experiment"] = m.experiment;
  j["library_version"] = m.version;
  j["paper_scale"] = m.paper_scale;
  j["wall_seconds"] = m.wall_seconds;
  j["config"] = m.config_echo;
  j["warnings"] = m.warnings;
  j["outputs"] = nlohmann::json::array();
  for (const auto& f : m.outputs)
    j["outputs"].push_back({{"name", f.name},
                            {"checksum", f.checksum},
                            {"rows", f.rows},
                            {"bytes", f.bytes}});
  return j.dump(2) + "\n";
}

// CSV writer with a single header line; maintains a running FNV-1a checksum
// of everything written so the manifest never re-reads outputs.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header)
      : name_(path.filename().string()), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open output file '" + path.string() + "'");
    write(header + "\n");
  }

  void row(const std::vector<double>& vals) {
    std::string line;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (i) line.push_back(',');
      line += format_g17(vals[i]);
    }
    line.push_back('\n');
    write(line);
    ++rows_;
  }

  void row(std::initializer_list<double> vals) { row(std::vector<double>(vals)); }

  void text_row(const std::string& line) {
    write(line + "\n");
    ++rows_;
  }

  FileRecord close() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failure on output file '" + name_ + "'");
    out_.close();
    return {name_, detail::hex64(hash_), rows_, bytes_};
  }

 private:
  void write(const std::string& s) {
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    hash_ = detail::fnv1a(hash_, s.data(), s.size());
    bytes_ += s.size();
  }

  std::string name_;
  std::ofstream out_;
  std::uint64_t hash_ = detail::fnv_offset;
  std::uint64_t rows_ = 0;
  std::uint64_t bytes_ = 0;
};

struct RunOptions {
  bool paper_scale = false;
  std::string out_dir = "out";
};

namespace detail {

// Budget defaults: desk scale unless --paper-scale; explicit config keys win.
inline std::uint64_t budget_u64(const Config& cfg, const std::string& key,
                                std::uint64_t desk, std::uint64_t paper,
                                bool paper_scale) {
  return cfg.get_u64(key, paper_scale ? paper : desk);
}

inline double chain_epsilon(const Config& cfg, double default_Q) {
  if (cfg.has("system.epsilon")) {
    const double e = cfg.get_double("system.epsilon", 1.0);
    return e;
  }
  const double Q = cfg.get_double("system.Q", default_Q);
  if (!(Q > 0.0)) throw ConfigError("key 'system.Q': must be positive");
  return 1.0 / std::sqrt(Q);
}

inline CrossingDirection direction_of(const Config& cfg, const std::string& key,
                                      CrossingDirection def) {
  const std::string v = cfg.get(key, "");
  if (v.empty()) return def;
  if (v == "positive") return CrossingDirection::positive;
  if (v == "negative") return CrossingDirection::negative;
  if (v == "both") return CrossingDirection::both;
  throw ConfigError("key '" + key + "': expected positive|negative|both, got '" + v + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Diagnostics suite (used by the diagnostics experiment and `check`).
// ---------------------------------------------------------------------------

struct DiagnosticRow {
  std::string name;
  double value;
  double threshold;
  bool larger_is_pass;  // negative controls must exceed their threshold
  bool pass;
};

namespace detail {

inline DiagnosticRow diag_row(std::string name, double value, double threshold,
                              bool larger_is_pass = false) {
  const bool pass = larger_is_pass ? value > threshold : value < threshold;
  return {std::move(name), value, threshold, larger_is_pass, pass};
}

}  // namespace detail

inline std::vector<DiagnosticRow> run_diagnostics_suite(std::uint64_t seed = 20260814ull) {
  std::vector<DiagnosticRow> rows;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u_qp(-2.0, 2.0);
  std::uniform_real_distribution<double> u_xi(-1.0, 1.0);

  // Reversibility of both splitting integrators: forward, reflect, forward,
  // reflect recovers the initial state.
  {
    const double dt = 2.5e-3;
    const int n_steps = 1000;
    double worst_nh = 0.0, worst_nhc = 0.0;
    for (const double eps_val : {0.1, 1.0}) {
      const EpsilonParam eps(eps_val);
      for (int trial = 0; trial < 50; ++trial) {
        {
          PhysState s0{u_qp(rng), u_qp(rng), u_xi(rng)};
          PhysState s = s0;
          for (int k = 0; k < n_steps; ++k) s = nh_splitting_step(s, eps, dt);
          s = reflect(s);
          for (int k = 0; k < n_steps; ++k) s = nh_splitting_step(s, eps, dt);
          s = reflect(s);
          const auto a = s.array(), b = s0.array();
          for (std::size_t i = 0; i < a.size(); ++i)
            worst_nh = std::max(worst_nh, std::abs(a[i] - b[i]));
        }
        {
          ChainState s0{u_qp(rng), u_qp(rng), u_xi(rng), u_xi(rng)};
          ChainState s = s0;
          for (int k = 0; k < n_steps; ++k) s = nhc_splitting_step(s, eps, dt);
          s = reflect(s);
          for (int k = 0; k < n_steps; ++k) s = nhc_splitting_step(s, eps, dt);
          s = reflect(s);
          const auto a = s.array(), b = s0.array();
          for (std::size_t i = 0; i < a.size(); ++i)
            worst_nhc = std::max(worst_nhc, std::abs(a[i] - b[i]));
        }
      }
    }
    rows.push_back(detail::diag_row("reversibility_nh_max_err", worst_nh, 1e-8));
    rows.push_back(detail::diag_row("reversibility_nhc_max_err", worst_nhc, 1e-8));
  }

  // Stationarity of the Gibbs densities: div(rho * f) vanishes for the
  // specialized fields and for general chains with 2 and 3 thermostats; a
  // wrong-temperature control must not vanish.
  {
    const double beta = 1.0;
    double worst = 0.0, control = 0.0;
    const double Q1 = 2.0;
    const EpsilonParam eps = EpsilonParam::from_mass(Q1);
    auto f_nh = nh_flat_field(eps);
    auto rho_nh = nh_flat_density(Q1, beta);
    auto rho_nh_wrong = nh_flat_density(Q1, 1.5 * beta);
    const auto sys2 = harmonic_general_system(1, {1.0}, beta, {2.0, 3.0});
    auto f2 = nhc_general_flat_field(sys2);
    auto rho2 = nhc_general_flat_density(sys2);
    const auto sys3 = harmonic_general_system(1, {1.0}, beta, {2.0, 3.0, 1.5});
    auto f3 = nhc_general_flat_field(sys3);
    auto rho3 = nhc_general_flat_density(sys3);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int trial = 0; trial < 100; ++trial) {
      const std::vector<double> x3{u(rng), u(rng), u(rng)};
      const std::vector<double> x4{u(rng), u(rng), u(rng), u(rng)};
      const std::vector<double> x5{u(rng), u(rng), u(rng), u(rng), u(rng)};
      worst = std::max(worst, std::abs(measure_divergence(f_nh, rho_nh, x3)));
      worst = std::max(worst, std::abs(measure_divergence(f2, rho2, x4)));
      worst = std::max(worst, std::abs(measure_divergence(f3, rho3, x5)));
      control = std::max(control,
                         std::abs(measure_divergence(f_nh, rho_nh_wrong, x3)));
    }
    rows.push_back(detail::diag_row("gibbs_divergence_max", worst, 1e-6));
    rows.push_back(detail::diag_row("gibbs_divergence_wrong_beta_min", control,
                                    1e-2, /*larger_is_pass=*/true));
  }

  // Conservation of G along the averaged flow.
  {
    double worst = 0.0;
    std::uniform_real_distribution<double> u_tau(0.2, 3.0);
    std::uniform_real_distribution<double> u_a(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      AveragedState s{u_tau(rng), u_a(rng)};
      const double G0 = integral_G(s.tau, s.alpha);
      auto step = rk4_stepper([](const AveragedState& x) { return nh_averaged_field(x); });
      for (int k = 0; k < 100000; ++k) {
        s = step(s, 1e-3);
        worst = std::max(worst, std::abs(integral_G(s.tau, s.alpha) - G0));
      }
    }
    rows.push_back(detail::diag_row("first_integral_drift_max", worst, 1e-9));
  }

  // Period function: harmonic limit, quadrature vs ODE oracle, twist margin,
  // and positivity of the convexity criterion.
  {
    rows.push_back(detail::diag_row("period_harmonic_limit_err",
                                    std::abs(period_quadrature(1e-8).T - two_pi), 1e-4));
    double worst_rel = 0.0;
    for (const double G : {0.01, 0.1, 1.0, 4.0}) {
      const double Tq = period_quadrature(G).T;
      const double To = period_ode_oracle(G).T;
      worst_rel = std::max(worst_rel, std::abs(Tq - To) / To);
    }
    rows.push_back(detail::diag_row("period_quadrature_vs_ode_rel", worst_rel, 1e-8));
    std::vector<double> grid(50);
    for (int i = 0; i < 50; ++i)
      grid[i] = std::pow(10.0, -3.0 + 4.0 * i / 49.0);
    const auto twist = twist_check(grid);
    rows.push_back(detail::diag_row("twist_margin_min", twist.margin, 0.0,
                                    /*larger_is_pass=*/true));
    double chicone_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 600; ++i) {
      const double sigma = -3.0 + 6.0 * i / 600.0;
      if (std::abs(sigma) < 1e-3) continue;
      chicone_min = std::min(chicone_min, chicone_criterion(sigma));
    }
    rows.push_back(detail::diag_row("chicone_min_off_origin", chicone_min, 0.0,
                                    /*larger_is_pass=*/true));
  }

  // Rotation number of a quasi-invariant curve vs the averaged prediction
  // 2*pi*eps/T(G), plus its Diophantine character, plus the Newton fixed
  // point of the return map.
  {
    const EpsilonParam eps(0.1);
    auto stepper = rk4_stepper([eps](const AAState& s) { return nh_aa_field(s, eps); });
    IntegratorSpec spec;
    spec.dt = 2.5e-3;
    spec.n_steps = 2000000;
    const AAState s0{0.0, 1.5, 0.0};
    const auto orbit = section_crossings(stepper, s0, SectionSpec::angle(0), spec, 400);
    const auto pts = plane_points(orbit, 1, 2);
    double cx = 0.0, cy = 0.0;
    for (const auto& p : pts) {
      cx += p[0];
      cy += p[1];
    }
    cx /= static_cast<double>(pts.size());
    cy /= static_cast<double>(pts.size());
    const auto rot = rotation_number(pts, {cx, cy});
    const double G0 = integral_G(1.5, 0.0);
    const double predicted = two_pi * eps.epsilon / period_quadrature(G0).T;
    rows.push_back(detail::diag_row(
        "rotation_vs_averaged_rel_err",
        std::abs(std::abs(rot.omega) - predicted) / predicted, 0.05));
    rows.push_back(detail::diag_row(
        "rotation_diophantine",
        diophantine_check(std::abs(rot.omega), 1e-3, 2.5, 50) ? 1.0 : 0.0, 0.5,
        /*larger_is_pass=*/true));

    const NhSectionMap map(eps, 2.5e-3);
    const auto fp = fixed_point(map, {1.0, 0.0});
    rows.push_back(detail::diag_row("fixed_point_residual", fp.residual, 1e-9));
    rows.push_back(detail::diag_row("fixed_point_distance_from_center",
                                    std::hypot(fp.location[0] - 1.0, fp.location[1]),
                                    0.5));
  }

  return rows;
}

// ---------------------------------------------------------------------------
// Experiment runners.
// ---------------------------------------------------------------------------

namespace experiments {

using std::filesystem::path;

inline void run_g_contours(const Config& cfg, const RunOptions& opts,
                           RunManifest& man, const path& dir) {
  (void)opts;
  const auto levels = cfg.get_double_list(
      "run.g_levels", {0.05, 0.1, 0.2, 0.5, 1.0, 1.5, 2.0, 3.0});
  const auto n = cfg.get_u64("run.points", 400);
  if (n < 2) throw ConfigError("key 'run.points': need at least 2 points");
  const double half_pi = std::acos(0.0);
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const double G = levels[li];
    if (!(G > 0.0)) throw ConfigError("key 'run.g_levels': levels must be positive");
    const auto [sm, sp] = turning_points(G);
    const double c = 0.5 * (sp + sm), m = 0.5 * (sp - sm);
    CsvWriter csv(dir / ("g_contour_" + std::to_string(li) + ".csv"),
                  "G[1],tau[1],alpha[1]");
    auto emit = [&](double u, double sign) {
      const double sigma = c + m * std::sin(u);
      const double a2 = std::max(0.0, 2.0 * (G - potential_V(sigma)));
      csv.row({G, std::exp(sigma), sign * std::sqrt(a2)});
    };
    for (std::uint64_t i = 0; i <= n; ++i)
      emit(-half_pi + two_pi / 2.0 * static_cast<double>(i) / static_cast<double>(n), 1.0);
    for (std::uint64_t i = 0; i <= n; ++i)
      emit(half_pi - two_pi / 2.0 * static_cast<double>(i) / static_cast<double>(n), -1.0);
    man.outputs.push_back(csv.close());
  }
}

inline void run_poincare_nh(const Config& cfg, const RunOptions& opts,
                            RunManifest& man, const path& dir) {
  const auto eps_list = cfg.get_double_list("system.epsilon_list", {0.1, 1.0});
  const auto tau_list = cfg.get_double_list(
      "run.tau_list", {0.2, 0.5, 1.0, 1.5, 2.0, 2.42, 3.0, 4.0});
  const double dt = cfg.get_double("integrator.dt", 2.5e-3);
  const std::uint64_t returns =
      detail::budget_u64(cfg, "run.returns", 1000, 5000, opts.paper_scale);
  const auto k_max = static_cast<int>(cfg.get_u64("run.island_k_max", 12));
  const double dio_c0 = cfg.get_double("run.dio_c0", 1e-3);
  const double dio_mu = cfg.get_double("run.dio_mu", 2.5);
  const std::uint64_t dio_lmax = cfg.get_u64("run.dio_l_max", 50);

  struct Task {
    double eps;
    double tau0;
    std::size_t ei, ti;
  };
  std::vector<Task> tasks;
  for (std::size_t ei = 0; ei < eps_list.size(); ++ei)
    for (std::size_t ti = 0; ti < tau_list.size(); ++ti)
      tasks.push_back({eps_list[ei], tau_list[ti], ei, ti});

  struct Result {
    PoincareOrbit<AAState> orbit;
    double G0 = 0.0, maxdG = 0.0, tau_min = 0.0, tau_max = 0.0;
    IslandResult islands{1, 0};
    double omega = std::numeric_limits<double>::quiet_NaN();
    double omega_se = std::numeric_limits<double>::quiet_NaN();
    double dio = std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<Result> results(tasks.size());

  parallel_for_index(tasks.size(), [&](std::size_t i) {
    const Task& task = tasks[i];
    const EpsilonParam eps(task.eps);
    auto stepper = rk4_stepper([eps](const AAState& s) { return nh_aa_field(s, eps); });
    IntegratorSpec spec;
    spec.dt = dt;
    spec.n_steps = returns * static_cast<std::uint64_t>(std::ceil(4.0 * two_pi / dt));
    Result r;
    r.orbit = section_crossings(stepper, AAState{0.0, task.tau0, 0.0},
                                SectionSpec::angle(0), spec, returns);
    r.G0 = integral_G(task.tau0, 0.0);
    r.tau_min = std::numeric_limits<double>::infinity();
    r.tau_max = -std::numeric_limits<double>::infinity();
    for (const auto& s : r.orbit.points) {
      r.maxdG = std::max(r.maxdG, std::abs(integral_G(s.tau, s.alpha) - r.G0));
      r.tau_min = std::min(r.tau_min, s.tau);
      r.tau_max = std::max(r.tau_max, s.tau);
    }
    const auto pts = plane_points(r.orbit, 1, 2);
    const int k_eff = std::min<int>(k_max, static_cast<int>(pts.size() / 10));
    if (k_eff >= 2) r.islands = island_clusters(pts, k_eff);
    try {
      double cx = 0.0, cy = 0.0;
      for (const auto& p : pts) {
        cx += p[0];
        cy += p[1];
      }
      cx /= static_cast<double>(pts.size());
      cy /= static_cast<double>(pts.size());
      const auto rot = rotation_number(pts, {cx, cy});
      r.omega = rot.omega;
      r.omega_se = rot.omega_std_error;
      r.dio = diophantine_check(std::abs(rot.omega), dio_c0, dio_mu, dio_lmax) ? 1.0 : 0.0;
    } catch (const std::exception&) {
      // Orbits that do not wind (or are too short) simply have no rotation
      // number; the summary records NaN.
    }
    results[i] = std::move(r);
  });

  CsvWriter summary(dir / "poincare_nh_summary.csv",
                    "epsilon[1],tau0[1],returns[1],complete[1],clusters[1],stride[1],"
                    "max_dG[1],tau_min[1],tau_max[1],omega[turns/return],omega_se[1],"
                    "diophantine[1],skipped_wrong_direction[1],skipped_nontransversal[1]");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& task = tasks[i];
    const Result& r = results[i];
    CsvWriter csv(dir / ("poincare_nh_e" + std::to_string(task.ei) + "_ic" +
                         std::to_string(task.ti) + ".csv"),
                  "n[1],t[time],tau[1],alpha[1]");
    for (std::size_t k = 0; k < r.orbit.points.size(); ++k)
      csv.row({static_cast<double>(k), r.orbit.times[k], r.orbit.points[k].tau,
               r.orbit.points[k].alpha});
    man.outputs.push_back(csv.close());
    if (!r.orbit.complete)
      man.warnings.push_back("poincare-nh: orbit eps=" + format_g17(task.eps) +
                             " tau0=" + format_g17(task.tau0) + " collected only " +
                             std::to_string(r.orbit.points.size()) + " returns");
    summary.row({task.eps, task.tau0, static_cast<double>(r.orbit.points.size()),
                 r.orbit.complete ? 1.0 : 0.0, static_cast<double>(r.islands.clusters),
                 static_cast<double>(r.islands.stride), r.maxdG, r.tau_min, r.tau_max,
                 r.omega, r.omega_se, r.dio,
                 static_cast<double>(r.orbit.skipped_wrong_direction),
                 static_cast<double>(r.orbit.skipped_nontransversal)});
  }
  man.outputs.push_back(summary.close());
}

inline void run_ring_projection(const Config& cfg, const RunOptions& opts,
                                RunManifest& man, const path& dir) {
  const EpsilonParam eps(cfg.get_double("system.epsilon", 1.0));
  const PhysState s0{cfg.get_double("run.q0", 2.2), cfg.get_double("run.p0", 0.0),
                     cfg.get_double("run.xi0", 0.0)};
  IntegratorSpec spec;
  spec.dt = cfg.get_double("integrator.dt", 1e-3);
  spec.n_steps = detail::budget_u64(cfg, "run.steps", 1000000, 50000000, opts.paper_scale);
  spec.sample_stride = detail::budget_u64(cfg, "run.stride", 20, 1000, opts.paper_scale);
  spec.scheme = Scheme::splitting;

  ConfinementTracker conf;
  auto stepper = nh_splitting_stepper(eps);
  const auto traj = integrate("nh_splitting", stepper, s0, spec, conf);

  CsvWriter csv(dir / "ring_projection.csv", "t[time],q[1],p[1],xi[1]");
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    csv.row({traj.times[k], traj.states[k].q, traj.states[k].p, traj.states[k].xi});
  man.outputs.push_back(csv.close());

  const auto rep = conf.report();
  CsvWriter summary(dir / "ring_projection_summary.csv",
                    "qp_min[1],qp_max[1],tau_min[1],tau_max[1],steps[1],dt[time]");
  summary.row({rep.qp_min, rep.qp_max, rep.tau_min, rep.tau_max,
               static_cast<double>(spec.n_steps), spec.dt});
  man.outputs.push_back(summary.close());
}

inline void run_poincare_nhc_averaged(const Config& cfg, const RunOptions& opts,
                                      RunManifest& man, const path& dir) {
  const auto q0_list = cfg.get_double_list(
      "run.q0_list",
      {0.5, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0, 1.1, 1.3, 1.5});
  const double dt = cfg.get_double("integrator.dt", 2.5e-3);
  const std::uint64_t returns =
      detail::budget_u64(cfg, "run.returns", 500, 2000, opts.paper_scale);
  const auto direction =
      detail::direction_of(cfg, "run.direction", CrossingDirection::both);

  std::vector<PoincareOrbit<AveragedChainState>> orbits(q0_list.size());
  parallel_for_index(q0_list.size(), [&](std::size_t i) {
    const double tau0 = 0.5 * q0_list[i] * q0_list[i];
    auto stepper =
        rk4_stepper([](const AveragedChainState& s) { return nhc_averaged_field(s); });
    IntegratorSpec spec;
    spec.dt = dt;
    spec.n_steps = returns * static_cast<std::uint64_t>(std::ceil(60.0 / dt));
    orbits[i] = section_crossings(stepper, AveragedChainState{tau0, 0.0, 0.0},
                                  SectionSpec::hyperplane(2, 0.0, direction), spec,
                                  returns);
  });

  CsvWriter summary(dir / "poincare_nhc_averaged_summary.csv",
                    "q0[1],tau0[1],crossings[1],complete[1],tau_min[1],tau_max[1]");
  for (std::size_t i = 0; i < q0_list.size(); ++i) {
    const auto& orbit = orbits[i];
    CsvWriter csv(dir / ("poincare_nhc_averaged_ic" + std::to_string(i) + ".csv"),
                  "n[1],t[time],tau[1],alpha1[1],direction[1]");
    double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin;
    for (std::size_t k = 0; k < orbit.points.size(); ++k) {
      const auto& s = orbit.points[k];
      csv.row({static_cast<double>(k), orbit.times[k], s.tau, s.alpha1,
               static_cast<double>(orbit.directions[k])});
      tmin = std::min(tmin, s.tau);
      tmax = std::max(tmax, s.tau);
    }
    man.outputs.push_back(csv.close());
    if (!orbit.complete)
      man.warnings.push_back("poincare-nhc-averaged: orbit q0=" + format_g17(q0_list[i]) +
                             " collected only " + std::to_string(orbit.points.size()) +
                             " crossings");
    summary.row({q0_list[i], 0.5 * q0_list[i] * q0_list[i],
                 static_cast<double>(orbit.points.size()), orbit.complete ? 1.0 : 0.0,
                 tmin, tmax});
  }
  man.outputs.push_back(summary.close());
}

inline void run_nhc_section_trace(const Config& cfg, const RunOptions& opts,
                                  RunManifest& man, const path& dir) {
  const double eps_val = detail::chain_epsilon(cfg, 10.0);
  const EpsilonParam eps(eps_val);
  const ChainState s0{cfg.get_double("run.q0", 1.1), cfg.get_double("run.p0", 0.0),
                      cfg.get_double("run.xi1_0", 0.0), cfg.get_double("run.xi2_0", 0.0)};
  IntegratorSpec spec;
  spec.dt = cfg.get_double("integrator.dt", 2.5e-3);
  spec.n_steps = detail::budget_u64(cfg, "run.steps", 1000000, 50000000, opts.paper_scale);
  spec.scheme = Scheme::splitting;
  const auto direction =
      detail::direction_of(cfg, "run.direction", CrossingDirection::both);

  auto stepper = nhc_splitting_stepper(eps);
  const auto orbit = section_crossings(stepper, s0, SectionSpec::hyperplane(3, 0.0, direction),
                                       spec, collect_all_crossings);

  CsvWriter csv(dir / "nhc_section_trace.csv",
                "n[1],t[time],tau[1],alpha1[1],q[1],p[1],direction[1]");
  double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin;
  for (std::size_t k = 0; k < orbit.points.size(); ++k) {
    const auto& s = orbit.points[k];
    const double tau = 0.5 * (s.q * s.q + s.p * s.p);
    csv.row({static_cast<double>(k), orbit.times[k], tau, eps.epsilon * s.xi1, s.q, s.p,
             static_cast<double>(orbit.directions[k])});
    tmin = std::min(tmin, tau);
    tmax = std::max(tmax, tau);
  }
  man.outputs.push_back(csv.close());

  CsvWriter summary(dir / "nhc_section_trace_summary.csv",
                    "epsilon[1],crossings[1],tau_min[1],tau_max[1],"
                    "skipped_nontransversal[1],steps[1],dt[time]");
  summary.row({eps.epsilon, static_cast<double>(orbit.points.size()), tmin, tmax,
               static_cast<double>(orbit.skipped_nontransversal),
               static_cast<double>(spec.n_steps), spec.dt});
  man.outputs.push_back(summary.close());
}

inline void run_nhc_projection(const Config& cfg, const RunOptions& opts,
                               RunManifest& man, const path& dir) {
  const double eps_val = detail::chain_epsilon(cfg, 10.0);
  const EpsilonParam eps(eps_val);
  const ChainState s0{cfg.get_double("run.q0", 1.1), cfg.get_double("run.p0", 0.0),
                      cfg.get_double("run.xi1_0", 0.0), cfg.get_double("run.xi2_0", 0.0)};
  IntegratorSpec spec;
  spec.dt = cfg.get_double("integrator.dt", 2.5e-3);
  spec.n_steps = detail::budget_u64(cfg, "run.steps", 1000000, 50000000, opts.paper_scale);
  spec.sample_stride = detail::budget_u64(cfg, "run.stride", 20, 1000, opts.paper_scale);
  spec.scheme = Scheme::splitting;

  ConfinementTracker conf;
  auto stepper = nhc_splitting_stepper(eps);
  const auto traj = integrate("nhc_splitting", stepper, s0, spec, conf);

  CsvWriter csv(dir / "nhc_projection.csv", "t[time],q[1],p[1]");
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    csv.row({traj.times[k], traj.states[k].q, traj.states[k].p});
  man.outputs.push_back(csv.close());

  const auto rep = conf.report();
  CsvWriter summary(dir / "nhc_projection_summary.csv",
                    "epsilon[1],tau_min[1],tau_max[1],qp_min[1],qp_max[1],steps[1],dt[time]");
  summary.row({eps.epsilon, rep.tau_min, rep.tau_max, rep.qp_min, rep.qp_max,
               static_cast<double>(spec.n_steps), spec.dt});
  man.outputs.push_back(summary.close());
}

inline void run_nhc_distributions(const Config& cfg, const RunOptions& opts,
                                  RunManifest& man, const path& dir) {
  const double eps_val = detail::chain_epsilon(cfg, 1.0);
  const EpsilonParam eps(eps_val);
  const ChainState s0{cfg.get_double("run.q0", 1.1), cfg.get_double("run.p0", 0.0),
                      cfg.get_double("run.xi1_0", 0.0), cfg.get_double("run.xi2_0", 0.0)};
  IntegratorSpec spec;
  spec.dt = cfg.get_double("integrator.dt", 2.5e-3);
  spec.n_steps = detail::budget_u64(cfg, "run.steps", 10000000, 1000000000, opts.paper_scale);
  spec.sample_stride = spec.n_steps;
  spec.scheme = Scheme::splitting;
  const auto bins = cfg.get_u64("run.bins", 100);
  const double r_c = cfg.get_double("run.r_c", 4.0);

  Histogram hist_ang(0.0, two_pi, bins);
  Histogram hist_amp(0.0, r_c, bins);
  KineticAverage kinetic;
  auto observer = [&](std::uint64_t, double, const ChainState& s) {
    const auto ar = to_angle_radius(s.q, s.p);
    hist_ang.add(ar.theta);
    hist_amp.add(ar.r);
    kinetic.add(s.p);
  };
  auto stepper = nhc_splitting_stepper(eps);
  integrate("nhc_splitting", stepper, s0, spec, observer);

  CsvWriter ang(dir / "dist_angular.csv",
                "theta_mid[rad],f_num[1/rad],f_num_renorm[1/rad],f_theo[1/rad],abs_err[1/rad]");
  for (std::size_t i = 0; i < hist_ang.n_bins(); ++i) {
    const double mid = hist_ang.bin_mid(i);
    const double theo = theo_angular_pdf(mid);
    ang.row({mid, hist_ang.density(i), hist_ang.density_in_range(i), theo,
             std::abs(hist_ang.density(i) - theo)});
  }
  man.outputs.push_back(ang.close());

  CsvWriter amp(dir / "dist_amplitude.csv",
                "r_mid[1],f_num[1],f_num_renorm[1],f_theo[1],abs_err[1]");
  for (std::size_t i = 0; i < hist_amp.n_bins(); ++i) {
    const double mid = hist_amp.bin_mid(i);
    const double theo = theo_amplitude_pdf(mid);
    amp.row({mid, hist_amp.density(i), hist_amp.density_in_range(i), theo,
             std::abs(hist_amp.density(i) - theo)});
  }
  man.outputs.push_back(amp.close());

  CsvWriter summary(dir / "dist_summary.csv",
                    "samples[1],kinetic_avg[1],ang_sup_err[1/rad],amp_sup_err[1],"
                    "above_rc[1],epsilon[1],steps[1],dt[time]");
  summary.row({static_cast<double>(hist_ang.total()), kinetic.value(),
               distribution_error(hist_ang, theo_angular_pdf),
               distribution_error(hist_amp, theo_amplitude_pdf),
               static_cast<double>(hist_amp.above()), eps.epsilon,
               static_cast<double>(spec.n_steps), spec.dt});
  man.outputs.push_back(summary.close());
}

inline void run_nhc_discrepancy(const Config& cfg, const RunOptions& opts,
                                RunManifest& man, const path& dir) {
  const double eps_val = detail::chain_epsilon(cfg, 1.0);
  const EpsilonParam eps(eps_val);
  const auto q0_list = cfg.get_double_list(
      "run.q0_list", {0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.8, 2.2});
  const double dt = cfg.get_double("integrator.dt", 2.5e-3);
  const std::vector<std::uint64_t> desk_cp{100000, 300000, 1000000, 3000000, 10000000};
  const std::vector<std::uint64_t> paper_cp{100000,   300000,    1000000,
                                            3000000,  10000000,  30000000,
                                            100000000, 300000000, 1000000000};
  std::vector<std::uint64_t> checkpoints =
      cfg.get_u64_list("run.checkpoints", opts.paper_scale ? paper_cp : desk_cp);
  const auto grid_n = cfg.get_u64("run.grid_n", 100);
  const double r_c = cfg.get_double("run.r_c", 4.0);
  // Checkpoints count retained samples; run slightly past the last one so the
  // r > r_c exclusions cannot leave it unreached.
  const std::uint64_t steps = cfg.get_u64(
      "run.steps",
      static_cast<std::uint64_t>(std::ceil(static_cast<double>(checkpoints.back()) * 1.005)) +
          1000);

  std::vector<DiscrepancyCurveBuilder> builders;
  builders.reserve(q0_list.size());
  for (std::size_t i = 0; i < q0_list.size(); ++i)
    builders.emplace_back(checkpoints, grid_n, r_c);

  parallel_for_index(q0_list.size(), [&](std::size_t i) {
    const ChainState s0{q0_list[i], 0.0, 0.0, 0.0};
    IntegratorSpec spec;
    spec.dt = dt;
    spec.n_steps = steps;
    spec.sample_stride = steps;
    spec.scheme = Scheme::splitting;
    auto& builder = builders[i];
    auto observer = [&builder](std::uint64_t, double, const ChainState& s) {
      const auto ar = to_angle_radius(s.q, s.p);
      builder.add(ar.theta, ar.r);
    };
    auto stepper = nhc_splitting_stepper(eps);
    integrate("nhc_splitting", stepper, s0, spec, observer);
  });

  CsvWriter summary(dir / "discrepancy_summary.csv",
                    "q0[1],retained[1],excluded[1],fit_C[1],fit_a[1]");
  std::vector<double> mean_D(checkpoints.size(), 0.0);
  std::size_t complete = 0;
  for (std::size_t i = 0; i < q0_list.size(); ++i) {
    const auto& curve = builders[i].curve();
    CsvWriter csv(dir / ("discrepancy_ic" + std::to_string(i) + ".csv"), "N[1],D[1]");
    for (const auto& e : curve.entries)
      csv.row({static_cast<double>(e.N), e.D});
    man.outputs.push_back(csv.close());
    double fit_C = std::numeric_limits<double>::quiet_NaN();
    double fit_a = std::numeric_limits<double>::quiet_NaN();
    if (curve.entries.size() >= 3) {
      const auto fit = lms_fit(curve);
      fit_C = fit.C;
      fit_a = fit.a;
    }
    if (!builders[i].done())
      man.warnings.push_back("nhc-discrepancy: trajectory q0=" + format_g17(q0_list[i]) +
                             " reached only " + std::to_string(curve.entries.size()) +
                             " of " + std::to_string(checkpoints.size()) + " checkpoints");
    if (curve.entries.size() == checkpoints.size()) {
      ++complete;
      for (std::size_t k = 0; k < checkpoints.size(); ++k)
        mean_D[k] += curve.entries[k].D;
    }
    summary.row({q0_list[i], static_cast<double>(builders[i].grid().retained()),
                 static_cast<double>(builders[i].grid().excluded()), fit_C, fit_a});
  }
  man.outputs.push_back(summary.close());

  if (complete == q0_list.size()) {
    std::vector<DiscrepancyCurve::Entry> mean_entries;
    CsvWriter mean_csv(dir / "discrepancy_mean.csv", "N[1],D_mean[1]");
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
      const double d = mean_D[k] / static_cast<double>(q0_list.size());
      mean_entries.push_back({checkpoints[k], d});
      mean_csv.row({static_cast<double>(checkpoints[k]), d});
    }
    man.outputs.push_back(mean_csv.close());
    const auto fit = lms_fit(mean_entries);
    CsvWriter fit_csv(dir / "discrepancy_fit.csv",
                      "C[1],a[1],C_std_error[1],a_std_error[1],trajectories[1]");
    fit_csv.row({fit.C, fit.a, fit.C_std_error, fit.a_std_error,
                 static_cast<double>(q0_list.size())});
    man.outputs.push_back(fit_csv.close());
  } else {
    man.warnings.push_back("nhc-discrepancy: mean curve skipped (incomplete trajectories)");
  }
}

inline void run_diagnostics(const Config& cfg, const RunOptions& opts,
                            RunManifest& man, const path& dir) {
  (void)opts;
  const auto rows = run_diagnostics_suite(cfg.get_u64("run.seed", 20260814ull));
  CsvWriter csv(dir / "diagnostics.csv", "name,value,threshold,direction,pass");
  std::size_t failures = 0;
  for (const auto& r : rows) {
    std::string line = r.name;
    line += ',';
    line += format_g17(r.value);
    line += ',';
    line += format_g17(r.threshold);
    line += ',';
    line += r.larger_is_pass ? '>' : '<';
    line += ',';
    line += r.pass ? '1' : '0';
    csv.text_row(line);
    if (!r.pass) ++failures;
  }
  man.outputs.push_back(csv.close());
  if (failures)
    man.warnings.push_back("diagnostics: " + std::to_string(failures) + " check(s) failed");
}

}  // namespace experiments

// ---------------------------------------------------------------------------
// Catalog and dispatch.
// ---------------------------------------------------------------------------

struct ExperimentInfo {
  std::string id;
  std::string summary;
};

inline const std::vector<ExperimentInfo>& experiment_catalog() {
  static const std::vector<ExperimentInfo> catalog{
      {"g-contours", "level curves of the first integral G in the (tau, alpha) plane"},
      {"poincare-nh",
       "Poincare maps of the single-thermostat flow in action-angle form "
       "(invariant curves, island chain)"},
      {"ring-projection",
       "(q,p) projection of the epsilon=1 trajectory from (2.2,0,0): the ring structure"},
      {"poincare-nhc-averaged",
       "Poincare return maps of the averaged two-thermostat flow on alpha2=0"},
      {"nhc-section-trace",
       "trace of the full two-thermostat trajectory on the xi2=0 plane (Q=10)"},
      {"nhc-projection",
       "(q,p) projection of the full two-thermostat trajectory (Q=10): the tau floor"},
      {"nhc-distributions",
       "angle and amplitude histograms against the Gibbs densities (Q=1)"},
      {"nhc-discrepancy",
       "star-discrepancy decay over 8 trajectories with a power-law fit (Q=1)"},
      {"diagnostics",
       "self-checks: reversibility, invariant measure, period/twist, rotation numbers"},
  };
  return catalog;
}

inline RunManifest run_experiment(const Config& cfg, const RunOptions& opts) {
  const std::string id = cfg.require("experiment");
  using Runner = void (*)(const Config&, const RunOptions&, RunManifest&,
                          const std::filesystem::path&);
  static const std::map<std::string, Runner> runners{
      {"g-contours", &experiments::run_g_contours},
      {"poincare-nh", &experiments::run_poincare_nh},
      {"ring-projection", &experiments::run_ring_projection},
      {"poincare-nhc-averaged", &experiments::run_poincare_nhc_averaged},
      {"nhc-section-trace", &experiments::run_nhc_section_trace},
      {"nhc-projection", &experiments::run_nhc_projection},
      {"nhc-distributions", &experiments::run_nhc_distributions},
      {"nhc-discrepancy", &experiments::run_nhc_discrepancy},
      {"diagnostics", &experiments::run_diagnostics},
  };
  const auto it = runners.find(id);
  if (it == runners.end()) {
    std::string known;
    for (const auto& e : experiment_catalog()) {
      if (!known.empty()) known += ", ";
      known += e.id;
    }
    throw ConfigError(cfg.origin() + ": key 'experiment': unknown experiment '" + id +
                      "' (known: " + known + ")");
  }

  RunManifest man;
  man.experiment = id;
  man.paper_scale = opts.paper_scale;
  man.config_echo = cfg.items();

  const std::filesystem::path dir(opts.out_dir);
  std::filesystem::create_directories(dir);

  const auto t0 = std::chrono::steady_clock::now();
  it->second(cfg, opts, man, dir);
  man.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ofstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw std::runtime_error("cannot write manifest.json");
  mf << manifest_json(man);
  return man;
}

}  // namespace thermolab
