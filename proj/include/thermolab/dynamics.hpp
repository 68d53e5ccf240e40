#pragma once

// Vector fields, coordinate transforms, invariant densities and the first
// integral G of the thermostatted-oscillator laboratory.
//
// Conventions: unit oscillator mass and stiffness, inverse temperature
// beta = 1 in the specialized fields, coupling epsilon = 1/sqrt(Q).

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "states.hpp"

namespace thermolab {

inline constexpr double two_pi = 6.283185307179586476925286766559;

// Thermostat coupling epsilon = 1/sqrt(Q).  Validated on construction.
struct EpsilonParam {
  explicit EpsilonParam(double e) : epsilon(e) {
    if (!(e > 0.0) || !std::isfinite(e))
      throw std::invalid_argument("EpsilonParam: epsilon must be positive and finite");
  }
  static EpsilonParam from_mass(double Q) {
    if (!(Q > 0.0) || !std::isfinite(Q))
      throw std::invalid_argument("EpsilonParam: thermostat mass must be positive and finite");
    return EpsilonParam(1.0 / std::sqrt(Q));
  }
  double eps2() const { return epsilon * epsilon; }
  double mass() const { return 1.0 / (epsilon * epsilon); }

  double epsilon;
};

// ---------------------------------------------------------------------------
// Specialized harmonic-oscillator fields (m = 1, beta = 1)
// ---------------------------------------------------------------------------

// Single-thermostat field: dq = p, dp = -q - eps^2 xi p, dxi = p^2 - 1.
inline PhysState nh_field(const PhysState& s, const EpsilonParam& eps) {
  const double e2 = eps.eps2();
  return {s.p, -s.q - e2 * s.xi * s.p, s.p * s.p - 1.0};
}

// Two-link chain field:
//   dq = p, dp = -q - eps^2 p xi1,
//   dxi1 = p^2 - 1 - eps^2 xi1 xi2, dxi2 = eps^2 xi1^2 - 1.
inline ChainState nhc_field(const ChainState& s, const EpsilonParam& eps) {
  const double e2 = eps.eps2();
  return {s.p, -s.q - e2 * s.p * s.xi1,
          s.p * s.p - 1.0 - e2 * s.xi1 * s.xi2,
          e2 * s.xi1 * s.xi1 - 1.0};
}

// ---------------------------------------------------------------------------
// General many-particle system
// ---------------------------------------------------------------------------

// Parameters of a general thermostatted system: nM degrees of freedom with
// masses m_i, inverse temperature beta, a chain of thermostat masses Q_j
// (length 1 for the single-thermostat dynamics), and a potential V with its
// gradient.
struct GeneralSystem {
  std::size_t nM = 0;
  std::vector<double> masses;
  double beta = 1.0;
  std::vector<double> thermostat_masses;
  std::function<double(const std::vector<double>&)> potential;
  std::function<std::vector<double>(const std::vector<double>&)> potential_gradient;

  // Checks positivity of the parameters and, at the given sample points,
  // consistency of the gradient with a central finite difference of the
  // potential (relative tolerance tol).
  void validate(const std::vector<std::vector<double>>& sample_points = {},
                double h = 1e-6, double tol = 1e-5) const {
    if (nM == 0) throw std::invalid_argument("GeneralSystem: nM must be positive");
    if (masses.size() != nM)
      throw std::invalid_argument("GeneralSystem: masses size must equal nM");
    for (double m : masses)
      if (!(m > 0.0)) throw std::invalid_argument("GeneralSystem: masses must be positive");
    if (!(beta > 0.0)) throw std::invalid_argument("GeneralSystem: beta must be positive");
    if (thermostat_masses.empty())
      throw std::invalid_argument("GeneralSystem: at least one thermostat mass required");
    for (double q : thermostat_masses)
      if (!(q > 0.0))
        throw std::invalid_argument("GeneralSystem: thermostat masses must be positive");
    if (!potential || !potential_gradient)
      throw std::invalid_argument("GeneralSystem: potential and gradient must be set");
    for (const auto& x : sample_points) {
      if (x.size() != nM)
        throw std::invalid_argument("GeneralSystem: sample point dimension mismatch");
      const std::vector<double> g = potential_gradient(x);
      if (g.size() != nM)
        throw std::invalid_argument("GeneralSystem: gradient dimension mismatch");
      std::vector<double> y = x;
      for (std::size_t i = 0; i < nM; ++i) {
        y[i] = x[i] + h;
        const double vp = potential(y);
        y[i] = x[i] - h;
        const double vm = potential(y);
        y[i] = x[i];
        const double fd = (vp - vm) / (2.0 * h);
        const double scale = std::max({1.0, std::abs(fd), std::abs(g[i])});
        if (std::abs(fd - g[i]) > tol * scale)
          throw std::invalid_argument("GeneralSystem: gradient inconsistent with potential");
      }
    }
  }
};

// Uncoupled harmonic potential V(q) = sum_i q_i^2 / 2 with the given masses
// and thermostat chain; the workhorse test system.
inline GeneralSystem harmonic_general_system(std::size_t n, std::vector<double> masses,
                                             double beta, std::vector<double> Qs) {
  GeneralSystem sys;
  sys.nM = n;
  sys.masses = std::move(masses);
  sys.beta = beta;
  sys.thermostat_masses = std::move(Qs);
  sys.potential = [](const std::vector<double>& q) {
    double v = 0.0;
    for (double qi : q) v += 0.5 * qi * qi;
    return v;
  };
  sys.potential_gradient = [](const std::vector<double>& q) { return q; };
  return sys;
}

// Derivative of a general single-thermostat state.
struct GeneralDeriv {
  std::vector<double> dq;
  std::vector<double> dp;
  double dxi = 0.0;
};

// Derivative of a general chain state.
struct GeneralChainDeriv {
  std::vector<double> dq;
  std::vector<double> dp;
  std::vector<double> dxi;
};

// General single-thermostat field:
//   dq_i = p_i / m_i, dp_i = -dV/dq_i - (xi/Q) p_i,
//   dxi  = sum_i p_i^2 / m_i - nM / beta.
inline GeneralDeriv nh_field_general(const std::vector<double>& q,
                                     const std::vector<double>& p, double xi,
                                     const GeneralSystem& sys) {
  if (q.size() != sys.nM || p.size() != sys.nM)
    throw std::invalid_argument("nh_field_general: dimension mismatch");
  const double Q = sys.thermostat_masses.at(0);
  const std::vector<double> grad = sys.potential_gradient(q);
  GeneralDeriv d;
  d.dq.resize(sys.nM);
  d.dp.resize(sys.nM);
  double kinetic = 0.0;
  for (std::size_t i = 0; i < sys.nM; ++i) {
    d.dq[i] = p[i] / sys.masses[i];
    d.dp[i] = -grad[i] - (xi / Q) * p[i];
    kinetic += p[i] * p[i] / sys.masses[i];
  }
  d.dxi = kinetic - static_cast<double>(sys.nM) / sys.beta;
  return d;
}

// General chain field with M_ext = xis.size() thermostats:
//   dp_i   = -dV/dq_i - (xi_1/Q_1) p_i,
//   dxi_1  = (sum_i p_i^2/m_i - nM/beta)        - (xi_2/Q_2) xi_1,
//   dxi_j  = (xi_{j-1}^2/Q_{j-1} - 1/beta)      - (xi_{j+1}/Q_{j+1}) xi_j,
//   dxi_M  = (xi_{M-1}^2/Q_{M-1} - 1/beta).
// M_ext = 1 degenerates to the single-thermostat field.
inline GeneralChainDeriv nhc_field_general(const std::vector<double>& q,
                                           const std::vector<double>& p,
                                           const std::vector<double>& xis,
                                           const GeneralSystem& sys) {
  if (q.size() != sys.nM || p.size() != sys.nM)
    throw std::invalid_argument("nhc_field_general: dimension mismatch");
  const std::size_t M = xis.size();
  if (M < 1) throw std::invalid_argument("nhc_field_general: chain length must be >= 1");
  if (sys.thermostat_masses.size() != M)
    throw std::invalid_argument("nhc_field_general: thermostat mass count mismatch");
  const auto& Q = sys.thermostat_masses;
  const std::vector<double> grad = sys.potential_gradient(q);
  GeneralChainDeriv d;
  d.dq.resize(sys.nM);
  d.dp.resize(sys.nM);
  d.dxi.resize(M);
  double kinetic = 0.0;
  for (std::size_t i = 0; i < sys.nM; ++i) {
    d.dq[i] = p[i] / sys.masses[i];
    d.dp[i] = -grad[i] - (xis[0] / Q[0]) * p[i];
    kinetic += p[i] * p[i] / sys.masses[i];
  }
  for (std::size_t j = 0; j < M; ++j) {
    const double drive = (j == 0)
                             ? kinetic - static_cast<double>(sys.nM) / sys.beta
                             : xis[j - 1] * xis[j - 1] / Q[j - 1] - 1.0 / sys.beta;
    const double friction = (j + 1 < M) ? (xis[j + 1] / Q[j + 1]) * xis[j] : 0.0;
    d.dxi[j] = drive - friction;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Action-angle transform
// ---------------------------------------------------------------------------

// (q, p) -> (theta, tau) with q = sqrt(2 tau) cos(theta),
// p = -sqrt(2 tau) sin(theta); theta normalized to [0, 2*pi).
// The angle is undefined at the origin, which is therefore an error.
inline std::pair<double, double> to_action_angle(double q, double p) {
  if (q == 0.0 && p == 0.0)
    throw std::domain_error("to_action_angle: angle undefined at the origin");
  const double tau = 0.5 * (q * q + p * p);
  double theta = std::atan2(-p, q);
  if (theta < 0.0) theta += two_pi;
  return {theta, tau};
}

// (theta, tau) -> (q, p), inverse of to_action_angle for tau > 0.
inline std::pair<double, double> from_action_angle(double theta, double tau) {
  if (tau < 0.0) throw std::invalid_argument("from_action_angle: tau must be >= 0");
  const double r = std::sqrt(2.0 * tau);
  return {r * std::cos(theta), -r * std::sin(theta)};
}

// ---------------------------------------------------------------------------
// Action-angle fields
// ---------------------------------------------------------------------------

// Single-thermostat flow in (theta, tau, alpha), alpha = eps * xi:
//   dtheta = 1 - eps alpha sin cos, dtau = -2 eps tau alpha sin^2,
//   dalpha = eps (2 tau sin^2 - 1).
inline AAState nh_aa_field(const AAState& s, const EpsilonParam& eps) {
  const double e = eps.epsilon;
  const double sn = std::sin(s.theta), cs = std::cos(s.theta);
  return {1.0 - e * s.alpha * sn * cs,
          -2.0 * e * s.tau * s.alpha * sn * sn,
          e * (2.0 * s.tau * sn * sn - 1.0)};
}

// Chain flow in (theta, tau, alpha1, alpha2), alpha_j = eps * xi_j:
//   dalpha1 = eps (2 tau sin^2 - 1 - alpha1 alpha2),
//   dalpha2 = eps (alpha1^2 - 1).
inline AAChainState nhc_aa_field(const AAChainState& s, const EpsilonParam& eps) {
  const double e = eps.epsilon;
  const double sn = std::sin(s.theta), cs = std::cos(s.theta);
  return {1.0 - e * s.alpha1 * sn * cs,
          -2.0 * e * s.tau * s.alpha1 * sn * sn,
          e * (2.0 * s.tau * sn * sn - 1.0 - s.alpha1 * s.alpha2),
          e * (s.alpha1 * s.alpha1 - 1.0)};
}

// First-order averaged field in the hatted variables, oscillatory angle term
// retained, O(eps^2) remainder dropped:
//   dtheta = 1 - eps alpha sin cos, dtau = -eps tau alpha, dalpha = eps (tau - 1).
inline AAState nh_avg_firstorder_field(const AAState& s, const EpsilonParam& eps) {
  const double e = eps.epsilon;
  return {1.0 - e * s.alpha * std::sin(s.theta) * std::cos(s.theta),
          -e * s.tau * s.alpha,
          e * (s.tau - 1.0)};
}

// Averaged slow system in rescaled time: tau' = -tau alpha, alpha' = tau - 1.
inline AveragedState nh_averaged_field(const AveragedState& s) {
  return {-s.tau * s.alpha, s.tau - 1.0};
}
inline AveragedState nh_averaged_field(double tau, double alpha) {
  return nh_averaged_field(AveragedState{tau, alpha});
}

// Averaged chain system:
//   dtau = -tau alpha1, dalpha1 = tau - 1 - alpha1 alpha2, dalpha2 = alpha1^2 - 1.
inline AveragedChainState nhc_averaged_field(const AveragedChainState& s) {
  return {-s.tau * s.alpha1,
          s.tau - 1.0 - s.alpha1 * s.alpha2,
          s.alpha1 * s.alpha1 - 1.0};
}
inline AveragedChainState nhc_averaged_field(double tau, double alpha1, double alpha2) {
  return nhc_averaged_field(AveragedChainState{tau, alpha1, alpha2});
}

// ---------------------------------------------------------------------------
// Hamiltonian form of the averaged system, sigma = log(tau)
// ---------------------------------------------------------------------------

// Potential V(sigma) = e^sigma - 1 - sigma and its derivatives.
// expm1 keeps the small-|sigma| evaluations accurate.
inline double potential_V(double sigma) { return std::expm1(sigma) - sigma; }
inline double potential_V_prime(double sigma) { return std::expm1(sigma); }
inline double potential_V_second(double sigma) { return std::exp(sigma); }
inline double potential_V_third(double sigma) { return std::exp(sigma); }

// sigma' = -alpha, alpha' = e^sigma - 1.
inline HamState hamiltonian_form_field(const HamState& s) {
  return {-s.alpha, potential_V_prime(s.sigma)};
}
inline HamState hamiltonian_form_field(double sigma, double alpha) {
  return hamiltonian_form_field(HamState{sigma, alpha});
}

// First integral G(tau, alpha) = tau - log(tau) + alpha^2/2 - 1 of the
// averaged system; requires tau > 0.
inline double integral_G(double tau, double alpha) {
  if (!(tau > 0.0)) throw std::domain_error("integral_G: requires tau > 0");
  return tau - std::log(tau) + 0.5 * alpha * alpha - 1.0;
}

// Same integral in Hamiltonian form: G = alpha^2/2 + V(sigma).
inline double integral_G_ham(double sigma, double alpha) {
  return 0.5 * alpha * alpha + potential_V(sigma);
}

// Analytic gradient of G, for the first-integral property checks.
inline std::pair<double, double> integral_G_gradient(double tau, double alpha) {
  if (!(tau > 0.0)) throw std::domain_error("integral_G_gradient: requires tau > 0");
  return {1.0 - 1.0 / tau, alpha};
}

// ---------------------------------------------------------------------------
// Invariant (Gibbs) densities, unnormalized
// ---------------------------------------------------------------------------

// exp(-beta [ (q^2+p^2)/2 + xi^2/(2Q) ]).
inline double gibbs_density_nh(const PhysState& s, double Q, double beta) {
  if (!(Q > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("gibbs_density_nh: Q and beta must be positive");
  const double H = 0.5 * (s.q * s.q + s.p * s.p);
  return std::exp(-beta * (H + s.xi * s.xi / (2.0 * Q)));
}

// exp(-beta [ H + xi1^2/(2Q1) + xi2^2/(2Q2) ]).
inline double gibbs_density_nhc(const ChainState& s, const std::vector<double>& Qs,
                                double beta) {
  if (Qs.size() != 2)
    throw std::invalid_argument("gibbs_density_nhc: expects two thermostat masses");
  if (!(Qs[0] > 0.0) || !(Qs[1] > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("gibbs_density_nhc: Qs and beta must be positive");
  const double H = 0.5 * (s.q * s.q + s.p * s.p);
  return std::exp(-beta * (H + s.xi1 * s.xi1 / (2.0 * Qs[0]) +
                           s.xi2 * s.xi2 / (2.0 * Qs[1])));
}

// General-system densities: exp(-beta [ sum p^2/2m + V(q) + sum xi_j^2/(2Q_j) ]).
inline double gibbs_density_nh_general(const std::vector<double>& q,
                                       const std::vector<double>& p, double xi,
                                       const GeneralSystem& sys) {
  double H = sys.potential(q);
  for (std::size_t i = 0; i < sys.nM; ++i) H += 0.5 * p[i] * p[i] / sys.masses[i];
  return std::exp(-sys.beta * (H + xi * xi / (2.0 * sys.thermostat_masses.at(0))));
}

inline double gibbs_density_nhc_general(const std::vector<double>& q,
                                        const std::vector<double>& p,
                                        const std::vector<double>& xis,
                                        const GeneralSystem& sys) {
  double H = sys.potential(q);
  for (std::size_t i = 0; i < sys.nM; ++i) H += 0.5 * p[i] * p[i] / sys.masses[i];
  double bath = 0.0;
  for (std::size_t j = 0; j < xis.size(); ++j)
    bath += xis[j] * xis[j] / (2.0 * sys.thermostat_masses.at(j));
  return std::exp(-sys.beta * (H + bath));
}

// ---------------------------------------------------------------------------
// Flat-coordinate adapters (for divergence checks and generic callers)
// ---------------------------------------------------------------------------

using FlatField = std::function<std::vector<double>(const std::vector<double>&)>;
using FlatDensity = std::function<double(const std::vector<double>&)>;

// Specialized NH system flattened to x = (q, p, xi).
inline FlatField nh_flat_field(EpsilonParam eps) {
  return [eps](const std::vector<double>& x) {
    const PhysState d = nh_field(PhysState{x.at(0), x.at(1), x.at(2)}, eps);
    return std::vector<double>{d.q, d.p, d.xi};
  };
}
inline FlatDensity nh_flat_density(double Q, double beta) {
  return [Q, beta](const std::vector<double>& x) {
    return gibbs_density_nh(PhysState{x.at(0), x.at(1), x.at(2)}, Q, beta);
  };
}

// Specialized NHC system flattened to x = (q, p, xi1, xi2).
inline FlatField nhc_flat_field(EpsilonParam eps) {
  return [eps](const std::vector<double>& x) {
    const ChainState d = nhc_field(ChainState{x.at(0), x.at(1), x.at(2), x.at(3)}, eps);
    return std::vector<double>{d.q, d.p, d.xi1, d.xi2};
  };
}
inline FlatDensity nhc_flat_density(std::vector<double> Qs, double beta) {
  return [Qs = std::move(Qs), beta](const std::vector<double>& x) {
    return gibbs_density_nhc(ChainState{x.at(0), x.at(1), x.at(2), x.at(3)}, Qs, beta);
  };
}

// General systems flattened to x = (q_0..q_{n-1}, p_0..p_{n-1}, xi_1..xi_M).
inline FlatField nh_general_flat_field(GeneralSystem sys) {
  return [sys = std::move(sys)](const std::vector<double>& x) {
    const std::size_t n = sys.nM;
    if (x.size() != 2 * n + 1)
      throw std::invalid_argument("nh_general_flat_field: dimension mismatch");
    const std::vector<double> q(x.begin(), x.begin() + n);
    const std::vector<double> p(x.begin() + n, x.begin() + 2 * n);
    const GeneralDeriv d = nh_field_general(q, p, x[2 * n], sys);
    std::vector<double> out(2 * n + 1);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = d.dq[i];
      out[n + i] = d.dp[i];
    }
    out[2 * n] = d.dxi;
    return out;
  };
}
inline FlatDensity nh_general_flat_density(GeneralSystem sys) {
  return [sys = std::move(sys)](const std::vector<double>& x) {
    const std::size_t n = sys.nM;
    const std::vector<double> q(x.begin(), x.begin() + n);
    const std::vector<double> p(x.begin() + n, x.begin() + 2 * n);
    return gibbs_density_nh_general(q, p, x[2 * n], sys);
  };
}
inline FlatField nhc_general_flat_field(GeneralSystem sys) {
  return [sys = std::move(sys)](const std::vector<double>& x) {
    const std::size_t n = sys.nM;
    const std::size_t M = sys.thermostat_masses.size();
    if (x.size() != 2 * n + M)
      throw std::invalid_argument("nhc_general_flat_field: dimension mismatch");
    const std::vector<double> q(x.begin(), x.begin() + n);
    const std::vector<double> p(x.begin() + n, x.begin() + 2 * n);
    const std::vector<double> xis(x.begin() + 2 * n, x.end());
    const GeneralChainDeriv d = nhc_field_general(q, p, xis, sys);
    std::vector<double> out(2 * n + M);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = d.dq[i];
      out[n + i] = d.dp[i];
    }
    for (std::size_t j = 0; j < M; ++j) out[2 * n + j] = d.dxi[j];
    return out;
  };
}
inline FlatDensity nhc_general_flat_density(GeneralSystem sys) {
  return [sys = std::move(sys)](const std::vector<double>& x) {
    const std::size_t n = sys.nM;
    const std::vector<double> q(x.begin(), x.begin() + n);
    const std::vector<double> p(x.begin() + n, x.begin() + 2 * n);
    const std::vector<double> xis(x.begin() + 2 * n, x.end());
    return gibbs_density_nhc_general(q, p, xis, sys);
  };
}

// ---------------------------------------------------------------------------
// Invariance check
// ---------------------------------------------------------------------------

// Central finite-difference estimate of div(rho * f) at a point; the residual
// for an invariant density is O(h^2).  Default step h = 1e-4 (calibrated by
// an h-refinement test).
template <class Field, class Density>
double measure_divergence(Field&& field, Density&& density, std::vector<double> point,
                          double h = 1e-4) {
  if (!(h > 0.0)) throw std::invalid_argument("measure_divergence: h must be positive");
  double div = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double xi_saved = point[i];
    point[i] = xi_saved + h;
    const double plus = density(point) * field(point)[i];
    point[i] = xi_saved - h;
    const double minus = density(point) * field(point)[i];
    point[i] = xi_saved;
    div += (plus - minus) / (2.0 * h);
  }
  return div;
}

// ---------------------------------------------------------------------------
// Near-identity averaging transform
// ---------------------------------------------------------------------------

// (theta, tau_hat, alpha_hat) -> (tau, alpha):
//   tau   = tau_hat + eps tau_hat alpha_hat sin cos,
//   alpha = alpha_hat - eps tau_hat sin cos.
inline std::pair<double, double> near_identity_transform(double theta, double tau_hat,
                                                         double alpha_hat,
                                                         const EpsilonParam& eps) {
  const double sc = std::sin(theta) * std::cos(theta);
  const double e = eps.epsilon;
  return {tau_hat + e * tau_hat * alpha_hat * sc, alpha_hat - e * tau_hat * sc};
}

// Transformed invariant density in the hatted variables, full three-factor
// product (no truncation):
//   exp(-tau_hat - alpha_hat^2/2) * exp(-eps^2 tau_hat^2 sin^2 cos^2 / 2)
//     * (1 + (eps/2) alpha_hat sin(2 theta) + (eps^2/4) tau_hat sin^2(2 theta)).
inline double transformed_density(double theta, double tau_hat, double alpha_hat,
                                  const EpsilonParam& eps) {
  const double e = eps.epsilon;
  const double sn = std::sin(theta), cs = std::cos(theta);
  const double s2 = std::sin(2.0 * theta);
  const double base = std::exp(-tau_hat - 0.5 * alpha_hat * alpha_hat);
  const double squeeze = std::exp(-0.5 * e * e * tau_hat * tau_hat * sn * sn * cs * cs);
  const double jac = 1.0 + 0.5 * e * alpha_hat * s2 + 0.25 * e * e * tau_hat * s2 * s2;
  return base * squeeze * jac;
}

}  // namespace thermolab
