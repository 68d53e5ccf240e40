#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "thermolab/analysis.hpp"
#include "thermolab/dynamics.hpp"
#include "thermolab/integrators.hpp"

using namespace thermolab;
using Catch::Approx;

namespace {

double max_abs_diff(const PhysState& a, const PhysState& b) {
  return std::max({std::abs(a.q - b.q), std::abs(a.p - b.p), std::abs(a.xi - b.xi)});
}

double max_abs_diff(const ChainState& a, const ChainState& b) {
  return std::max({std::abs(a.q - b.q), std::abs(a.p - b.p),
                   std::abs(a.xi1 - b.xi1), std::abs(a.xi2 - b.xi2)});
}

}  // namespace

TEST_CASE("rk4_step basics and order-4 behaviour", "[integrators]") {
  auto zero = [](const AveragedState&) { return AveragedState{0.0, 0.0}; };
  const AveragedState s0{1.3, -0.4};
  const AveragedState z = rk4_step(zero, s0, 0.1);
  CHECK(z.tau == s0.tau);
  CHECK(z.alpha == s0.alpha);

  // Harmonic oscillator over one period.
  auto harm = [](const AveragedState& s) { return AveragedState{s.alpha, -s.tau}; };
  AveragedState s{1.0, 0.0};
  const int n = 1000;
  for (int k = 0; k < n; ++k) s = rk4_step(harm, s, two_pi / n);
  CHECK(s.tau == Approx(1.0).margin(1e-10));
  CHECK(s.alpha == Approx(0.0).margin(1e-10));

  // G is conserved along the averaged flow to integrator accuracy.
  auto avg = [](const AveragedState& x) { return nh_averaged_field(x); };
  AveragedState a{2.42, 0.0};
  const double G0 = integral_G(a.tau, a.alpha);
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    a = rk4_step(avg, a, 1e-3);
    worst = std::max(worst, std::abs(integral_G(a.tau, a.alpha) - G0));
  }
  CHECK(worst < 1e-10);

  auto nan_field = [](const AveragedState&) {
    return AveragedState{std::numeric_limits<double>::quiet_NaN(), 0.0};
  };
  CHECK_THROWS(rk4_step(nan_field, s0, 0.1));
}

TEST_CASE("nh splitting step: decoupled limit, reversibility, order", "[integrators]") {
  // epsilon -> 0: (q, p) advance by the exact-ingredient leapfrog
  // B(dt/2) A(dt) B(dt/2), and xi accumulates the trapezoid of p^2 - 1.
  const EpsilonParam eps0(1e-30);
  const double dt = 0.05;
  const PhysState s0{1.2, -0.7, 0.3};
  const PhysState s1 = nh_splitting_step(s0, eps0, dt);
  double p_half = s0.p - 0.5 * dt * s0.q;
  const double q_new = s0.q + dt * p_half;
  const double p_new = p_half - 0.5 * dt * q_new;
  CHECK(s1.q == Approx(q_new).epsilon(1e-15));
  CHECK(s1.p == Approx(p_new).epsilon(1e-15));
  CHECK(s1.xi ==
        Approx(s0.xi + 0.5 * dt * ((s0.p * s0.p - 1.0) + (p_new * p_new - 1.0)))
            .epsilon(1e-12));

  // Exact reversibility of the palindromic composition.
  std::mt19937_64 rng(21u);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const EpsilonParam eps(i % 2 ? 1.0 : 0.1);
    const PhysState s{u(rng), u(rng), u(rng)};
    const PhysState fwd = nh_splitting_step(s, eps, 0.01);
    const PhysState back = reflect(nh_splitting_step(reflect(fwd), eps, 0.01));
    CHECK(max_abs_diff(back, s) < 1e-12);
  }

  // Global second order: error at T = 10 shrinks x4 under dt halving,
  // against an rk4 reference at a much finer step.
  const EpsilonParam eps(1.0);
  const PhysState ic{1.4, 0.3, -0.2};
  auto field = [&eps](const PhysState& x) { return nh_field(x, eps); };
  PhysState ref = ic;
  const int nref = 200000;  // dt = 5e-5, rk4: error ~ 1e-18 relative
  for (int k = 0; k < nref; ++k) ref = rk4_step(field, ref, 10.0 / nref);
  auto split_err = [&](double h) {
    PhysState x = ic;
    const int steps = static_cast<int>(std::llround(10.0 / h));
    for (int k = 0; k < steps; ++k) x = nh_splitting_step(x, eps, h);
    return max_abs_diff(x, ref);
  };
  const double e1 = split_err(0.01);
  const double e2 = split_err(0.005);
  CHECK(e1 / e2 == Approx(4.0).margin(0.4));
}

TEST_CASE("nhc splitting step: decoupled limit, reversibility, order", "[integrators]") {
  const EpsilonParam eps0(1e-30);
  const double dt = 0.05;
  const ChainState s0{0.9, 0.6, -0.4, 0.8};
  const ChainState s1 = nhc_splitting_step(s0, eps0, dt);
  double p_half = s0.p - 0.5 * dt * s0.q;
  const double q_new = s0.q + dt * p_half;
  const double p_new = p_half - 0.5 * dt * q_new;
  CHECK(s1.q == Approx(q_new).epsilon(1e-15));
  CHECK(s1.p == Approx(p_new).epsilon(1e-15));
  CHECK(s1.xi1 ==
        Approx(s0.xi1 + 0.5 * dt * ((s0.p * s0.p - 1.0) + (p_new * p_new - 1.0)))
            .epsilon(1e-12));

  std::mt19937_64 rng(22u);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const EpsilonParam eps(i % 2 ? 1.0 : 0.1);
    const ChainState s{u(rng), u(rng), u(rng), u(rng)};
    const ChainState fwd = nhc_splitting_step(s, eps, 0.01);
    const ChainState back = reflect(nhc_splitting_step(reflect(fwd), eps, 0.01));
    CHECK(max_abs_diff(back, s) < 1e-12);
  }

  const EpsilonParam eps(1.0);
  const ChainState ic{1.1, 0.0, 0.2, -0.1};
  auto field = [&eps](const ChainState& x) { return nhc_field(x, eps); };
  ChainState ref = ic;
  const int nref = 200000;
  for (int k = 0; k < nref; ++k) ref = rk4_step(field, ref, 10.0 / nref);
  auto split_err = [&](double h) {
    ChainState x = ic;
    const int steps = static_cast<int>(std::llround(10.0 / h));
    for (int k = 0; k < steps; ++k) x = nhc_splitting_step(x, eps, h);
    return max_abs_diff(x, ref);
  };
  const double e1 = split_err(0.01);
  const double e2 = split_err(0.005);
  CHECK(e1 / e2 == Approx(4.0).margin(0.4));
}

TEST_CASE("long-horizon reversibility of both splittings", "[integrators]") {
  std::mt19937_64 rng(23u);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (const double eps_val : {0.1, 1.0}) {
    const EpsilonParam eps(eps_val);
    PhysState s{u(rng), u(rng), u(rng)};
    PhysState x = s;
    for (int k = 0; k < 1000; ++k) x = nh_splitting_step(x, eps, 2.5e-3);
    x = reflect(x);
    for (int k = 0; k < 1000; ++k) x = nh_splitting_step(x, eps, 2.5e-3);
    x = reflect(x);
    CHECK(max_abs_diff(x, s) < 1e-8);

    ChainState c{u(rng), u(rng), u(rng), u(rng)};
    ChainState y = c;
    for (int k = 0; k < 1000; ++k) y = nhc_splitting_step(y, eps, 2.5e-3);
    y = reflect(y);
    for (int k = 0; k < 1000; ++k) y = nhc_splitting_step(y, eps, 2.5e-3);
    y = reflect(y);
    CHECK(max_abs_diff(y, c) < 1e-8);
  }
}

TEST_CASE("integrate: sampling, observers, abort and determinism", "[integrators]") {
  const EpsilonParam eps(1.0);
  auto stepper = nh_splitting_stepper(eps);

  IntegratorSpec none;
  none.dt = 0.1;
  none.n_steps = 0;
  const auto tr0 = integrate("nh", stepper, PhysState{1.0, 0.0, 0.0}, none);
  REQUIRE(tr0.states.size() == 1);
  CHECK(tr0.times[0] == 0.0);

  IntegratorSpec spec;
  spec.dt = 0.1;
  spec.n_steps = 10;
  spec.sample_stride = 5;
  std::uint64_t observed = 0;
  auto counter = [&observed](std::uint64_t, double, const PhysState&) { ++observed; };
  const auto tr = integrate("nh", stepper, PhysState{1.0, 0.0, 0.0}, spec, counter);
  REQUIRE(tr.states.size() == 3);
  CHECK(tr.times[0] == 0.0);
  CHECK(tr.times[1] == Approx(0.5).epsilon(1e-15));
  CHECK(tr.times[2] == Approx(1.0).epsilon(1e-15));
  CHECK(observed == 11);  // initial state plus every step

  // Million-step run stays finite and bounded away from the origin.
  IntegratorSpec long_spec;
  long_spec.dt = 1e-3;
  long_spec.n_steps = 1000000;
  long_spec.sample_stride = long_spec.n_steps;
  ConfinementTracker conf;
  const auto big =
      integrate("nh", stepper, PhysState{2.2, 0.0, 0.0}, long_spec, conf);
  const auto rep = conf.report();
  CHECK(rep.samples == long_spec.n_steps + 1);
  CHECK(rep.qp_min > 0.0);
  CHECK(std::isfinite(rep.qp_max));

  // Determinism: bitwise identical repeat.
  ConfinementTracker conf2;
  const auto big2 =
      integrate("nh", stepper, PhysState{2.2, 0.0, 0.0}, long_spec, conf2);
  CHECK(big.states.back().q == big2.states.back().q);
  CHECK(big.states.back().p == big2.states.back().p);
  CHECK(big.states.back().xi == big2.states.back().xi);
  CHECK(conf2.report().tau_min == rep.tau_min);

  // A NaN mid-run aborts with the offending step index in the message.
  auto poisoned = [](const AveragedState& s, double dt) {
    AveragedState out{s.tau + dt, s.alpha};
    if (out.tau > 0.25) out.tau = std::numeric_limits<double>::quiet_NaN();
    return out;
  };
  IntegratorSpec ps;
  ps.dt = 0.1;
  ps.n_steps = 10;
  CHECK_THROWS_WITH(integrate("poisoned", poisoned, AveragedState{0.0, 0.0}, ps),
                    Catch::Matchers::ContainsSubstring("step 3"));

  CHECK_THROWS(integrate("bad", stepper, PhysState{1.0, 0.0, 0.0},
                         [] {
                           IntegratorSpec b;
                           b.dt = -1.0;
                           return b;
                         }()));
}
