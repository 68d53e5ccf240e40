#pragma once

// Poincare sections and return maps: crossing detection with bisection
// refinement, return-map evaluation, Newton fixed points, rotation numbers,
// Diophantine filtering and island-chain clustering.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "dynamics.hpp"
#include "integrators.hpp"
#include "states.hpp"

namespace thermolab {

enum class CrossingDirection { positive, negative, both };

// Section definition: either the angle coordinate passing a multiple of 2*pi
// (for unwrapped angle variables) or a hyperplane {x[coord] = level}.
struct SectionSpec {
  enum class Kind { angle_mod_2pi, hyperplane };

  Kind kind = Kind::hyperplane;
  std::size_t coord = 0;
  double level = 0.0;
  CrossingDirection direction = CrossingDirection::positive;

  static SectionSpec angle(std::size_t coord,
                           CrossingDirection dir = CrossingDirection::positive) {
    return {Kind::angle_mod_2pi, coord, 0.0, dir};
  }
  static SectionSpec hyperplane(std::size_t coord, double level,
                                CrossingDirection dir = CrossingDirection::both) {
    return {Kind::hyperplane, coord, level, dir};
  }
};

// Ordered section crossings of one trajectory.  directions holds the sign of
// the transversal velocity at each recorded crossing.  complete is false when
// the step budget ran out before the requested number of crossings.
template <class State>
struct PoincareOrbit {
  std::vector<State> points;
  std::vector<double> times;
  std::vector<int> directions;
  std::uint64_t skipped_wrong_direction = 0;
  std::uint64_t skipped_nontransversal = 0;
  std::uint64_t steps_used = 0;
  bool complete = true;
};

// Request "every crossing the step budget yields" instead of a fixed count.
inline constexpr std::uint64_t collect_all_crossings =
    std::numeric_limits<std::uint64_t>::max();

namespace detail {

inline int sgn_pos(double x) { return x >= 0.0 ? 1 : -1; }

// Bisection refinement of a crossing inside one step: re-integrates partial
// steps from the step start until |g| < tol or 60 halvings.
template <class Step, class State, class GFun>
struct RefineResult {
  double t;
  State state;
  double g;
};

template <class Step, class State, class GFun>
RefineResult<Step, State, GFun> refine_crossing(Step& step, const State& s_begin,
                                                double t_lo, double t_hi, double g_lo_sign,
                                                GFun&& g, double tol) {
  double lo = t_lo, hi = t_hi;
  double tm = 0.5 * (lo + hi);
  State sm = step(s_begin, tm);
  double gm = g(sm);
  for (int it = 0; it < 60 && std::abs(gm) >= tol; ++it) {
    if (sgn_pos(gm) == sgn_pos(g_lo_sign))
      lo = tm;
    else
      hi = tm;
    tm = 0.5 * (lo + hi);
    sm = step(s_begin, tm);
    gm = g(sm);
  }
  return {tm, sm, gm};
}

}  // namespace detail

// Integrates the stepper from s0 and records crossings of the section until
// n_crossings are found or spec.n_steps is exhausted.  Each crossing is
// refined by bisection to |section function| < 1e-10; crossings whose
// transversal velocity is below 1e-8 are skipped and counted, as are
// crossings in the non-requested direction (for angle sections these are the
// decreasing-angle passages).
template <class Step, class State>
PoincareOrbit<State> section_crossings(Step&& step, const State& s0,
                                       const SectionSpec& section,
                                       const IntegratorSpec& spec,
                                       std::uint64_t n_crossings) {
  spec.validate();
  if (section.coord >= State::dim)
    throw std::invalid_argument("section_crossings: coordinate index out of range");
  constexpr double g_tol = 1e-10;
  constexpr double transversal_tol = 1e-8;

  PoincareOrbit<State> orbit;
  const bool angle_kind = section.kind == SectionSpec::Kind::angle_mod_2pi;

  State s_prev = s0;
  if (!all_finite(s_prev))
    throw std::runtime_error("section_crossings: non-finite initial state");
  double g_prev = angle_kind ? 0.0 : s_prev.array()[section.coord] - section.level;
  double wind_prev =
      angle_kind ? std::floor(s_prev.array()[section.coord] / two_pi) : 0.0;

  const double dt = spec.dt;
  for (std::uint64_t k = 1; k <= spec.n_steps; ++k) {
    if (orbit.points.size() >= n_crossings) break;
    const State s_new = step(s_prev, dt);
    if (!all_finite(s_new))
      throw std::runtime_error("section_crossings: non-finite state at step " +
                               std::to_string(k));
    orbit.steps_used = k;
    const double t_base = static_cast<double>(k - 1) * dt;

    double level = section.level;  // refinement target for this event
    bool event = false;
    int raw_dir = 0;  // +1 increasing g, -1 decreasing g
    if (angle_kind) {
      const double wind_new = std::floor(s_new.array()[section.coord] / two_pi);
      if (wind_new > wind_prev) {
        event = true;
        raw_dir = 1;
        level = two_pi * (wind_prev + 1.0);
      } else if (wind_new < wind_prev) {
        event = true;
        raw_dir = -1;
        level = two_pi * wind_prev;
      }
      wind_prev = wind_new;
    } else {
      const double g_new = s_new.array()[section.coord] - section.level;
      if (k == 1 && std::abs(g_prev) <= g_tol) {
        // Starting on the section: look for the next genuine crossing, not
        // the departure itself.
        g_prev = g_new;
      } else if (detail::sgn_pos(g_new) != detail::sgn_pos(g_prev)) {
        event = true;
        raw_dir = g_new > g_prev ? 1 : -1;
      }
      if (!event) g_prev = g_new;
    }

    if (event) {
      auto gfun = [&](const State& s) { return s.array()[section.coord] - level; };
      const double g_at_start = s_prev.array()[section.coord] - level;
      const auto hit =
          detail::refine_crossing(step, s_prev, 0.0, dt, g_at_start, gfun, g_tol);

      // Transversal velocity estimate by a central difference around the hit.
      const double delta = dt * 1e-6;
      const double g_plus = gfun(step(s_prev, hit.t + delta));
      const double g_minus =
          hit.t > delta ? gfun(step(s_prev, hit.t - delta)) : g_at_start;
      const double denom = hit.t > delta ? 2.0 * delta : hit.t + delta;
      const double gdot = (g_plus - g_minus) / denom;

      const bool wanted =
          section.direction == CrossingDirection::both ||
          (section.direction == CrossingDirection::positive && raw_dir > 0) ||
          (section.direction == CrossingDirection::negative && raw_dir < 0);
      if (std::abs(gdot) < transversal_tol || std::abs(hit.g) >= g_tol) {
        ++orbit.skipped_nontransversal;
      } else if (!wanted) {
        ++orbit.skipped_wrong_direction;
      } else {
        orbit.points.push_back(hit.state);
        orbit.times.push_back(t_base + hit.t);
        orbit.directions.push_back(raw_dir);
      }
      if (!angle_kind) g_prev = s_new.array()[section.coord] - section.level;
    }
    s_prev = s_new;
  }
  if (orbit.points.size() < n_crossings && n_crossings != collect_all_crossings)
    orbit.complete = false;
  return orbit;
}

// Extracts two coordinates of every crossing as points in the section plane.
template <class State>
std::vector<std::array<double, 2>> plane_points(const PoincareOrbit<State>& orbit,
                                                std::size_t i, std::size_t j) {
  std::vector<std::array<double, 2>> pts;
  pts.reserve(orbit.points.size());
  for (const State& s : orbit.points) {
    const auto a = s.array();
    pts.push_back({a[i], a[j]});
  }
  return pts;
}

// Generic one-return evaluator for a stepper and section.
template <class Step, class State>
struct ReturnMap {
  Step step;
  SectionSpec section;
  IntegratorSpec spec;

  struct Result {
    State state;
    double return_time;
  };

  Result next(const State& x) const {
    auto orbit = section_crossings(step, x, section, spec, 1);
    if (orbit.points.empty())
      throw std::runtime_error("return map: no section crossing within step budget");
    return {orbit.points.front(), orbit.times.front()};
  }
};

template <class State, class Step>
ReturnMap<Step, State> make_return_map(Step step, const SectionSpec& section,
                                       const IntegratorSpec& spec) {
  return {std::move(step), section, spec};
}

// The paper-central return map: plane {theta = 0 mod 2pi} of the
// single-thermostat action-angle flow, acting on (tau, alpha).
class NhSectionMap {
 public:
  NhSectionMap(EpsilonParam eps, double dt = 2.5e-3,
               std::uint64_t step_budget_per_return = 40000)
      : eps_(eps), dt_(dt), budget_(step_budget_per_return) {}

  struct Result {
    std::array<double, 2> point;
    double return_time;
  };

  Result apply(const std::array<double, 2>& x) const {
    const AAState s0{0.0, x[0], x[1]};
    auto stepper = rk4_stepper(
        [e = eps_](const AAState& s) { return nh_aa_field(s, e); });
    IntegratorSpec spec;
    spec.dt = dt_;
    spec.n_steps = budget_;
    auto orbit = section_crossings(stepper, s0, SectionSpec::angle(0), spec, 1);
    if (orbit.points.empty())
      throw std::runtime_error("NhSectionMap: no section return within step budget");
    return {{orbit.points.front().tau, orbit.points.front().alpha},
            orbit.times.front()};
  }

  std::array<double, 2> operator()(const std::array<double, 2>& x) const {
    return apply(x).point;
  }

  double epsilon() const { return eps_.epsilon; }
  double dt() const { return dt_; }

 private:
  EpsilonParam eps_;
  double dt_;
  std::uint64_t budget_;
};

// Newton fixed point of a planar map with finite-difference Jacobian.
struct FixedPointResult {
  std::array<double, 2> location;
  double residual;
  std::array<std::array<double, 2>, 2> jacobian;  // of the map at the fixed point
  int iterations;
};

template <class Map>
FixedPointResult fixed_point(Map&& P, std::array<double, 2> guess, double tol = 1e-9) {
  auto residual_of = [&](const std::array<double, 2>& x) {
    const auto y = P(x);
    return std::array<double, 2>{y[0] - x[0], y[1] - x[1]};
  };
  auto jacobian_of_map = [&](const std::array<double, 2>& x) {
    std::array<std::array<double, 2>, 2> J{};
    for (int j = 0; j < 2; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
      auto xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const auto fp = P(xp), fm = P(xm);
      for (int i = 0; i < 2; ++i) J[i][j] = (fp[i] - fm[i]) / (2.0 * h);
    }
    return J;
  };

  std::array<double, 2> x = guess;
  for (int iter = 0; iter <= 50; ++iter) {
    const auto F = residual_of(x);
    const double res = std::hypot(F[0], F[1]);
    if (res < tol)
      return {x, res, jacobian_of_map(x), iter};
    const auto J = jacobian_of_map(x);
    // Newton on P(x) - x.
    const double a = J[0][0] - 1.0, b = J[0][1];
    const double c = J[1][0], d = J[1][1] - 1.0;
    const double det = a * d - b * c;
    const double scale = std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
    if (std::abs(det) <= 1e-14 * std::max(scale * scale, 1e-30))
      throw std::runtime_error("fixed_point: singular Jacobian");
    x[0] -= (d * F[0] - b * F[1]) / det;
    x[1] -= (-c * F[0] + a * F[1]) / det;
  }
  throw std::runtime_error("fixed_point: no convergence within 50 iterations");
}

// Rotation number of an orbit winding around center: least-squares slope of
// the unwrapped polar angle against the iterate index, divided by 2*pi.
struct RotationResult {
  double omega;
  double omega_std_error;
  std::size_t n_points;
};

inline RotationResult rotation_number(const std::vector<std::array<double, 2>>& pts,
                                      const std::array<double, 2>& center) {
  if (pts.size() < 50)
    throw std::invalid_argument("rotation_number: need at least 50 points");
  std::vector<double> phi(pts.size());
  double prev_raw = std::atan2(pts[0][1] - center[1], pts[0][0] - center[0]);
  phi[0] = prev_raw;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double raw = std::atan2(pts[i][1] - center[1], pts[i][0] - center[0]);
    double d = raw - prev_raw;
    d -= two_pi * std::floor(d / two_pi + 0.5);  // principal value in (-pi, pi]
    phi[i] = phi[i - 1] + d;
    prev_raw = raw;
  }
  if (std::abs(phi.back() - phi.front()) < two_pi)
    throw std::runtime_error("rotation_number: orbit does not wind around the center");

  const double n = static_cast<double>(pts.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double xi = static_cast<double>(i);
    sx += xi;
    sy += phi[i];
    sxx += xi * xi;
    sxy += xi * phi[i];
  }
  const double denom = n * sxx - sx * sx;
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double r = phi[i] - (intercept + slope * static_cast<double>(i));
    ss_res += r * r;
  }
  const double var_slope = pts.size() > 2 ? ss_res / (n - 2.0) * n / denom : 0.0;
  return {slope / two_pi, std::sqrt(std::max(var_slope, 0.0)) / two_pi, pts.size()};
}

// Diophantine condition |l*omega - k| >= c0 / l^mu for all integers l in
// [1, l_max] with k the nearest integer (the gamma normalization absorbed).
inline bool diophantine_check(double omega, double c0, double mu, std::uint64_t l_max) {
  if (!(c0 > 0.0)) throw std::invalid_argument("diophantine_check: c0 must be positive");
  if (!(mu >= 2.0)) throw std::invalid_argument("diophantine_check: mu must be >= 2");
  if (l_max < 1) throw std::invalid_argument("diophantine_check: l_max must be >= 1");
  for (std::uint64_t l = 1; l <= l_max; ++l) {
    const double lw = static_cast<double>(l) * omega;
    const double k = std::nearbyint(lw);
    if (std::abs(lw - k) < c0 / std::pow(static_cast<double>(l), mu)) return false;
  }
  return true;
}

// Island-chain detection: tests, for each k <= k_max, whether the orbit's
// points split into k angularly disjoint clusters about their centroid that
// are visited with a fixed stride; returns the smallest consistent k
// (clusters = 1 means a single curve; stride is then 0).
struct IslandResult {
  int clusters;
  int stride;
};

inline IslandResult island_clusters(const std::vector<std::array<double, 2>>& pts,
                                    int k_max, double separation_ratio = 4.0) {
  if (k_max < 1) throw std::invalid_argument("island_clusters: k_max must be >= 1");
  if (pts.size() < 10 * static_cast<std::size_t>(k_max))
    throw std::invalid_argument("island_clusters: need at least 10*k_max points");
  const std::size_t n = pts.size();

  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p[0];
    cy += p[1];
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);

  std::vector<double> ang(n);
  for (std::size_t i = 0; i < n; ++i) {
    double a = std::atan2(pts[i][1] - cy, pts[i][0] - cx);
    if (a < 0.0) a += two_pi;
    ang[i] = a;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ang[a] < ang[b]; });

  // Circular gaps between consecutive sorted angles; gap j follows sorted
  // position j.
  std::vector<double> gap(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double next = (j + 1 < n) ? ang[order[j + 1]] : ang[order[0]] + two_pi;
    gap[j] = next - ang[order[j]];
  }
  std::vector<std::size_t> by_gap(n);
  std::iota(by_gap.begin(), by_gap.end(), std::size_t{0});
  std::sort(by_gap.begin(), by_gap.end(),
            [&](std::size_t a, std::size_t b) { return gap[a] > gap[b]; });

  for (int k = 2; k <= k_max; ++k) {
    const std::size_t ku = static_cast<std::size_t>(k);
    const double min_boundary = gap[by_gap[ku - 1]];
    const double max_internal = gap[by_gap[ku]];
    if (min_boundary < separation_ratio * max_internal) continue;

    // Label clusters in angular order, starting just after one boundary gap.
    std::vector<char> is_boundary(n, 0);
    for (std::size_t j = 0; j < ku; ++j) is_boundary[by_gap[j]] = 1;
    std::vector<int> label(n, -1);
    std::size_t start = (by_gap[0] + 1) % n;
    int current = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t s = (start + i) % n;
      label[order[s]] = current;
      if (is_boundary[s]) ++current;  // next sorted point opens a new cluster
    }
    // The walk closes on the starting boundary, so current == k here.

    // Temporal visitation stride must be fixed and nonzero.
    int stride = -1;
    bool consistent = true;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const int d = ((label[i + 1] - label[i]) % k + k) % k;
      if (stride < 0)
        stride = d;
      else if (d != stride) {
        consistent = false;
        break;
      }
    }
    if (consistent && stride > 0) return {k, stride};
  }
  return {1, 0};
}

// Convenience overload on an orbit, using coordinates (i, j) of the states.
template <class State>
IslandResult island_clusters(const PoincareOrbit<State>& orbit, int k_max,
                             std::size_t i, std::size_t j,
                             double separation_ratio = 4.0) {
  return island_clusters(plane_points(orbit, i, j), k_max, separation_ratio);
}

}  // namespace thermolab
