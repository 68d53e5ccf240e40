#pragma once

// Fixed-step time integration: a generic classical Runge-Kutta step for
// arbitrary fields and the symmetric, exactly time-reversible operator
// splitting for the thermostatted oscillator systems.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "states.hpp"

namespace thermolab {

// Scheme selector; informational metadata on trajectories.
enum class Scheme { rk4, splitting };

// Step size, step count and sampling stride of a fixed-step run.
struct IntegratorSpec {
  double dt = 1e-3;
  std::uint64_t n_steps = 0;
  std::uint64_t sample_stride = 1;
  Scheme scheme = Scheme::rk4;

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("IntegratorSpec: dt must be positive");
    if (sample_stride < 1)
      throw std::invalid_argument("IntegratorSpec: sample_stride must be >= 1");
  }
};

// Uniformly sampled trajectory: times and states at every sample_stride-th
// step (the initial state is always included).
template <class State>
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::string field_id;
  IntegratorSpec spec;
};

// One classical 4-stage Runge-Kutta step of the field (global order 4).
template <class Field, class State>
State rk4_step(Field&& field, const State& s, double dt) {
  const State k1 = field(s);
  const State k2 = field(detail::axpy(s, 0.5 * dt, k1));
  const State k3 = field(detail::axpy(s, 0.5 * dt, k2));
  const State k4 = field(detail::axpy(s, dt, k3));
  auto a = s.array();
  const auto a1 = k1.array(), a2 = k2.array(), a3 = k3.array(), a4 = k4.array();
  for (std::size_t i = 0; i < State::dim; ++i)
    a[i] += dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
  const State out = State::from(a);
  if (!all_finite(out)) throw std::runtime_error("rk4_step: non-finite state");
  return out;
}

// Symmetric second-order splitting step for the single-thermostat system.
// Exactly solvable ingredients
//   A:  dq = p                    (shift)
//   B:  dp = -q                   (shift)
//   C1: dxi = p^2 - 1             (linear, p frozen)
//   C2: dp = -eps^2 xi p          (exponential scaling, xi frozen)
// composed palindromically, C1 C2 B A B C2 C1, which makes the step exactly
// reversible under (q, p, xi) -> (q, -p, -xi).
inline PhysState nh_splitting_step(PhysState s, const EpsilonParam& eps, double dt) {
  const double h = 0.5 * dt;
  const double e2 = eps.eps2();
  s.xi += (s.p * s.p - 1.0) * h;
  s.p *= std::exp(-e2 * s.xi * h);
  s.p -= s.q * h;
  s.q += s.p * dt;
  s.p -= s.q * h;
  s.p *= std::exp(-e2 * s.xi * h);
  s.xi += (s.p * s.p - 1.0) * h;
  if (!all_finite(s)) throw std::runtime_error("nh_splitting_step: non-finite state");
  return s;
}

// Chain version: the thermostat ingredients become
//   D1: dxi1 = p^2 - 1            (linear, p frozen)
//   D2: dxi1 = -eps^2 xi1 xi2     (exponential scaling, xi2 frozen)
//   D3: dxi2 = eps^2 xi1^2 - 1    (linear, xi1 frozen)
// composed palindromically, D3 D2 D1 C2 B A B C2 D1 D2 D3; exactly reversible
// under (q, p, xi1, xi2) -> (q, -p, -xi1, -xi2).
inline ChainState nhc_splitting_step(ChainState s, const EpsilonParam& eps, double dt) {
  const double h = 0.5 * dt;
  const double e2 = eps.eps2();
  s.xi2 += (e2 * s.xi1 * s.xi1 - 1.0) * h;
  s.xi1 *= std::exp(-e2 * s.xi2 * h);
  s.xi1 += (s.p * s.p - 1.0) * h;
  s.p *= std::exp(-e2 * s.xi1 * h);
  s.p -= s.q * h;
  s.q += s.p * dt;
  s.p -= s.q * h;
  s.p *= std::exp(-e2 * s.xi1 * h);
  s.xi1 += (s.p * s.p - 1.0) * h;
  s.xi1 *= std::exp(-e2 * s.xi2 * h);
  s.xi2 += (e2 * s.xi1 * s.xi1 - 1.0) * h;
  if (!all_finite(s)) throw std::runtime_error("nhc_splitting_step: non-finite state");
  return s;
}

// Stepper adapters: a stepper is any callable (state, dt) -> state, valid for
// arbitrary dt > 0 (section refinement integrates partial steps).
template <class Field>
auto rk4_stepper(Field field) {
  return [field](const auto& s, double dt) { return rk4_step(field, s, dt); };
}
inline auto nh_splitting_stepper(EpsilonParam eps) {
  return [eps](const PhysState& s, double dt) { return nh_splitting_step(s, eps, dt); };
}
inline auto nhc_splitting_stepper(EpsilonParam eps) {
  return [eps](const ChainState& s, double dt) { return nhc_splitting_step(s, eps, dt); };
}

// Momentum reflections under which the splitting steps are reversible.
inline PhysState reflect(const PhysState& s) { return {s.q, -s.p, -s.xi}; }
inline ChainState reflect(const ChainState& s) { return {s.q, -s.p, -s.xi1, -s.xi2}; }

// Drives a stepper for spec.n_steps steps of spec.dt from s0.  Each observer
// is invoked as obs(step_index, time, state) for the initial state and after
// every step; the returned trajectory retains only every sample_stride-th
// state, so long runs stay O(1) in memory when a large stride is chosen.
// A non-finite state aborts with the offending step index.
template <class Step, class State, class... Observers>
Trajectory<State> integrate(std::string field_id, Step&& step, const State& s0,
                            const IntegratorSpec& spec, Observers&&... obs) {
  spec.validate();
  Trajectory<State> tr;
  tr.field_id = std::move(field_id);
  tr.spec = spec;
  State s = s0;
  if (!all_finite(s)) throw std::runtime_error("integrate: non-finite initial state");
  tr.times.push_back(0.0);
  tr.states.push_back(s);
  (obs(std::uint64_t{0}, 0.0, s), ...);
  for (std::uint64_t k = 1; k <= spec.n_steps; ++k) {
    s = step(s, spec.dt);
    if (!all_finite(s))
      throw std::runtime_error("integrate: non-finite state at step " + std::to_string(k));
    const double t = static_cast<double>(k) * spec.dt;
    (obs(k, t, s), ...);
    if (k % spec.sample_stride == 0) {
      tr.times.push_back(t);
      tr.states.push_back(s);
    }
  }
  return tr;
}

}  // namespace thermolab
