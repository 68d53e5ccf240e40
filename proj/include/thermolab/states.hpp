#pragma once

// Phase-space state types shared by the dynamics, integrator and section
// machinery.  Every state is a plain value type exposing a fixed-size
// array protocol (dim / array() / from()) so that generic integrators can
// treat all of them uniformly.

#include <array>
#include <cmath>
#include <cstddef>

namespace thermolab {

// Cartesian oscillator plus a single thermostat momentum.
struct PhysState {
  double q = 0.0;
  double p = 0.0;
  double xi = 0.0;

  static constexpr std::size_t dim = 3;
  std::array<double, dim> array() const { return {q, p, xi}; }
  static PhysState from(const std::array<double, dim>& a) {
    return {a[0], a[1], a[2]};
  }
};

// Cartesian oscillator plus a two-link thermostat chain.
struct ChainState {
  double q = 0.0;
  double p = 0.0;
  double xi1 = 0.0;
  double xi2 = 0.0;

  static constexpr std::size_t dim = 4;
  std::array<double, dim> array() const { return {q, p, xi1, xi2}; }
  static ChainState from(const std::array<double, dim>& a) {
    return {a[0], a[1], a[2], a[3]};
  }
};

// Action-angle coordinates (theta, tau, alpha).  theta is kept unwrapped
// (cumulative) along trajectories; it is reduced to [0, 2*pi) only at the
// coordinate-transform boundary.
struct AAState {
  double theta = 0.0;
  double tau = 0.0;
  double alpha = 0.0;

  static constexpr std::size_t dim = 3;
  std::array<double, dim> array() const { return {theta, tau, alpha}; }
  static AAState from(const std::array<double, dim>& a) {
    return {a[0], a[1], a[2]};
  }
};

// Action-angle coordinates for the chain system (theta, tau, alpha1, alpha2).
struct AAChainState {
  double theta = 0.0;
  double tau = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;

  static constexpr std::size_t dim = 4;
  std::array<double, dim> array() const { return {theta, tau, alpha1, alpha2}; }
  static AAChainState from(const std::array<double, dim>& a) {
    return {a[0], a[1], a[2], a[3]};
  }
};

// Slow variables of the averaged single-thermostat system (tau, alpha).
struct AveragedState {
  double tau = 0.0;
  double alpha = 0.0;

  static constexpr std::size_t dim = 2;
  std::array<double, dim> array() const { return {tau, alpha}; }
  static AveragedState from(const std::array<double, dim>& a) {
    return {a[0], a[1]};
  }
};

// Slow variables of the averaged chain system (tau, alpha1, alpha2).
struct AveragedChainState {
  double tau = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;

  static constexpr std::size_t dim = 3;
  std::array<double, dim> array() const { return {tau, alpha1, alpha2}; }
  static AveragedChainState from(const std::array<double, dim>& a) {
    return {a[0], a[1], a[2]};
  }
};

// Hamiltonian form of the averaged system, sigma = log(tau).
struct HamState {
  double sigma = 0.0;
  double alpha = 0.0;

  static constexpr std::size_t dim = 2;
  std::array<double, dim> array() const { return {sigma, alpha}; }
  static HamState from(const std::array<double, dim>& a) {
    return {a[0], a[1]};
  }
};

// Oscillator action tau = (q^2 + p^2)/2 of a state, for confinement tracking.
inline double tau_of(const PhysState& s) { return 0.5 * (s.q * s.q + s.p * s.p); }
inline double tau_of(const ChainState& s) { return 0.5 * (s.q * s.q + s.p * s.p); }
inline double tau_of(const AAState& s) { return s.tau; }
inline double tau_of(const AAChainState& s) { return s.tau; }
inline double tau_of(const AveragedState& s) { return s.tau; }
inline double tau_of(const AveragedChainState& s) { return s.tau; }

// Cheap finiteness test: NaN/Inf in any component poisons the sum.
template <class State>
bool all_finite(const State& s) {
  double acc = 0.0;
  for (double v : s.array()) acc += v;
  return std::isfinite(acc);
}

namespace detail {

// s + c * d, component-wise over the array protocol.
template <class State>
State axpy(const State& s, double c, const State& d) {
  auto a = s.array();
  const auto b = d.array();
  for (std::size_t i = 0; i < State::dim; ++i) a[i] += c * b[i];
  return State::from(a);
}

}  // namespace detail

}  // namespace thermolab
