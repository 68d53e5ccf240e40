#pragma once

// Statistical diagnostics against the canonical Gibbs measure: reference
// densities and their joint CDF, histograms with sup-norm distribution error,
// the 2-D star discrepancy on a polar grid (streamed in O(N + grid^2)), the
// power-law least-squares fit, and running kinetic-energy averages.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "states.hpp"

namespace thermolab {

// Reference densities of the angle and amplitude variables under the
// canonical measure of the unit oscillator: uniform angle, Rayleigh radius.
inline double theo_angular_pdf(double theta) {
  return (theta >= 0.0 && theta <= two_pi) ? 1.0 / two_pi : 0.0;
}

inline double theo_amplitude_pdf(double r) {
  return r >= 0.0 ? r * std::exp(-0.5 * r * r) : 0.0;
}

// Joint CDF of (theta, r): (theta/2pi) * (1 - e^{-r^2/2}), clamped outside
// the angular range.
inline double theo_cdf(double theta, double r) {
  if (r <= 0.0) return 0.0;
  const double ang = std::clamp(theta / two_pi, 0.0, 1.0);
  return ang * -std::expm1(-0.5 * r * r);
}

struct AngleRadiusSample {
  double theta;  // in [0, 2*pi)
  double r;      // >= 0
};

namespace detail {

inline double reduce_angle(double theta) {
  double t = theta - two_pi * std::floor(theta / two_pi);
  if (t >= two_pi) t = 0.0;  // guard against rounding up to exactly 2*pi
  return t;
}

}  // namespace detail

// Polar coordinates of a Cartesian oscillator state, with the angle measured
// the same way as the action-angle transform.
inline AngleRadiusSample to_angle_radius(double q, double p) {
  const double r = std::hypot(q, p);
  double theta = r > 0.0 ? std::atan2(-p, q) : 0.0;
  if (theta < 0.0) theta += two_pi;
  if (theta >= two_pi) theta = 0.0;
  return {theta, r};
}

// Fixed-range histogram; out-of-range samples are tallied separately so the
// per-bin density count/(total * bin_width) integrates exactly to the
// in-range fraction.  Merging two histograms with identical binning is exact.
class Histogram {
 public:
  Histogram(double lo, double hi, std::size_t n_bins)
      : lo_(lo), hi_(hi), counts_(n_bins, 0) {
    if (!(hi > lo)) throw std::invalid_argument("Histogram: hi must exceed lo");
    if (n_bins < 1) throw std::invalid_argument("Histogram: need at least one bin");
  }

  void add(double x) {
    ++total_;
    if (x < lo_) {
      ++below_;
    } else if (x > hi_) {
      ++above_;
    } else {
      auto b = static_cast<std::size_t>((x - lo_) / bin_width());
      if (b >= counts_.size()) b = counts_.size() - 1;  // x == hi lands in the last bin
      ++counts_[b];
    }
  }

  void merge(const Histogram& other) {
    if (other.lo_ != lo_ || other.hi_ != hi_ || other.counts_.size() != counts_.size())
      throw std::invalid_argument("Histogram::merge: incompatible binning");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    total_ += other.total_;
    below_ += other.below_;
    above_ += other.above_;
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  std::size_t n_bins() const { return counts_.size(); }
  double bin_width() const { return (hi_ - lo_) / static_cast<double>(counts_.size()); }
  double bin_mid(std::size_t i) const {
    return lo_ + (static_cast<double>(i) + 0.5) * bin_width();
  }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::uint64_t total() const { return total_; }
  std::uint64_t below() const { return below_; }
  std::uint64_t above() const { return above_; }
  std::uint64_t in_range() const { return total_ - below_ - above_; }

  // Density normalized by all collected samples (integrates to the in-range
  // fraction).
  double density(std::size_t i) const {
    return total_ == 0
               ? 0.0
               : static_cast<double>(counts_[i]) /
                     (static_cast<double>(total_) * bin_width());
  }

  // Density renormalized over the histogram range (integrates to one), the
  // convention used for plotted distributions.
  double density_in_range(std::size_t i) const {
    const std::uint64_t n = in_range();
    return n == 0 ? 0.0
                  : static_cast<double>(counts_[i]) /
                        (static_cast<double>(n) * bin_width());
  }

 private:
  double lo_, hi_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0, below_ = 0, above_ = 0;
};

// Sup over bins of |density - pdf(bin midpoint)|; an empty histogram reports
// the maximum pdf value over the midpoints.
template <class Pdf>
double distribution_error(const Histogram& h, Pdf&& pdf) {
  double err = 0.0;
  for (std::size_t i = 0; i < h.n_bins(); ++i)
    err = std::max(err, std::abs(h.density(i) - pdf(h.bin_mid(i))));
  return err;
}

namespace detail {

inline double disc_theta_edge(std::size_t k, std::size_t grid_n) {
  return two_pi * static_cast<double>(k) / static_cast<double>(grid_n);
}

inline double disc_r_edge(std::size_t l, std::size_t grid_n, double r_c) {
  return r_c * static_cast<double>(l) / static_cast<double>(grid_n);
}

// Smallest k in [1, grid_n] with x <= edge(k); the fixup loops make the
// assignment agree exactly with comparisons against the tabulated edges.
template <class Edge>
std::size_t disc_cell(double x, std::size_t grid_n, Edge&& edge) {
  const double step = edge(grid_n) / static_cast<double>(grid_n);
  auto k = static_cast<std::size_t>(
      std::max(1.0, std::min(std::ceil(x / step), static_cast<double>(grid_n))));
  while (k > 1 && x <= edge(k - 1)) --k;
  while (k < grid_n && x > edge(k)) ++k;
  return k;
}

}  // namespace detail

// Streaming star-discrepancy accumulator over the polar grid
// theta_k = 2*pi*k/grid_n, r_l = r_c*l/grid_n (k, l = 1..grid_n).  Samples
// are binned once (O(1) per sample); the supremum is evaluated from 2-D
// cumulative counts in O(grid_n^2).  Samples with r > r_c are excluded and
// counted; the theoretical CDF is not renormalized for the cutoff.
class DiscrepancyGrid {
 public:
  explicit DiscrepancyGrid(std::size_t grid_n = 100, double r_c = 4.0)
      : n_(grid_n), rc_(r_c), cells_(grid_n * grid_n, 0) {
    if (grid_n < 1) throw std::invalid_argument("DiscrepancyGrid: grid_n must be >= 1");
    if (!(r_c > 0.0)) throw std::invalid_argument("DiscrepancyGrid: r_c must be positive");
  }

  // Returns true when the sample was retained (r <= r_c).
  bool add(double theta, double r) {
    if (!(r >= 0.0)) throw std::invalid_argument("DiscrepancyGrid: negative radius");
    if (r > rc_) {
      ++excluded_;
      return false;
    }
    const double t = detail::reduce_angle(theta);
    const std::size_t k =
        detail::disc_cell(t, n_, [this](std::size_t i) { return detail::disc_theta_edge(i, n_); });
    const std::size_t l =
        detail::disc_cell(r, n_, [this](std::size_t i) { return detail::disc_r_edge(i, n_, rc_); });
    ++cells_[(k - 1) * n_ + (l - 1)];
    ++retained_;
    return true;
  }

  bool add(const AngleRadiusSample& s) { return add(s.theta, s.r); }

  void merge(const DiscrepancyGrid& other) {
    if (other.n_ != n_ || other.rc_ != rc_)
      throw std::invalid_argument("DiscrepancyGrid::merge: incompatible grids");
    for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] += other.cells_[i];
    retained_ += other.retained_;
    excluded_ += other.excluded_;
  }

  std::uint64_t retained() const { return retained_; }
  std::uint64_t excluded() const { return excluded_; }
  std::size_t grid_n() const { return n_; }
  double r_c() const { return rc_; }

  double value() const {
    if (retained_ == 0)
      throw std::runtime_error("DiscrepancyGrid: no retained samples");
    const double N = static_cast<double>(retained_);
    std::vector<std::uint64_t> cum(n_, 0);  // column-cumulative, updated per row
    double d = 0.0;
    std::uint64_t row_total = 0;
    for (std::size_t k = 1; k <= n_; ++k) {
      row_total = 0;
      for (std::size_t l = 1; l <= n_; ++l) {
        row_total += cells_[(k - 1) * n_ + (l - 1)];
        cum[l - 1] += row_total;
        const double empirical = static_cast<double>(cum[l - 1]) / N;
        const double theo = theo_cdf(detail::disc_theta_edge(k, n_),
                                     detail::disc_r_edge(l, n_, rc_));
        d = std::max(d, std::abs(empirical - theo));
      }
    }
    return d;
  }

 private:
  std::size_t n_;
  double rc_;
  std::vector<std::uint64_t> cells_;
  std::uint64_t retained_ = 0, excluded_ = 0;
};

// One-shot star discrepancy of a sample set.
inline double star_discrepancy(const std::vector<AngleRadiusSample>& samples,
                               std::size_t grid_n = 100, double r_c = 4.0) {
  if (samples.empty()) throw std::invalid_argument("star_discrepancy: empty sample");
  DiscrepancyGrid grid(grid_n, r_c);
  for (const auto& s : samples) grid.add(s);
  return grid.value();
}

// Reference O(N * grid_n^2) evaluation used to validate the streaming
// accumulator; shares the edge tabulation and angle reduction so tie
// decisions agree exactly.
inline double star_discrepancy_brute(const std::vector<AngleRadiusSample>& samples,
                                     std::size_t grid_n = 100, double r_c = 4.0) {
  if (samples.empty())
    throw std::invalid_argument("star_discrepancy_brute: empty sample");
  std::vector<AngleRadiusSample> kept;
  kept.reserve(samples.size());
  for (const auto& s : samples) {
    if (!(s.r >= 0.0))
      throw std::invalid_argument("star_discrepancy_brute: negative radius");
    if (s.r <= r_c) kept.push_back({detail::reduce_angle(s.theta), s.r});
  }
  if (kept.empty())
    throw std::runtime_error("star_discrepancy_brute: no retained samples");
  const double N = static_cast<double>(kept.size());
  double d = 0.0;
  for (std::size_t k = 1; k <= grid_n; ++k) {
    const double te = detail::disc_theta_edge(k, grid_n);
    for (std::size_t l = 1; l <= grid_n; ++l) {
      const double re = detail::disc_r_edge(l, grid_n, r_c);
      std::uint64_t count = 0;
      for (const auto& s : kept)
        if (s.theta <= te && s.r <= re) ++count;
      d = std::max(d, std::abs(static_cast<double>(count) / N - theo_cdf(te, re)));
    }
  }
  return d;
}

// Discrepancy as a function of sample size, with an optional power-law fit
// D ~ C / N^a obtained by least squares on log D vs log N.
struct DiscrepancyCurve {
  struct Entry {
    std::uint64_t N;
    double D;
  };
  std::vector<Entry> entries;
};

struct PowerLawFit {
  double C;
  double a;
  double C_std_error;
  double a_std_error;
};

inline PowerLawFit lms_fit(const std::vector<DiscrepancyCurve::Entry>& entries) {
  if (entries.size() < 3)
    throw std::invalid_argument("lms_fit: need at least 3 checkpoints");
  const double n = static_cast<double>(entries.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& e : entries) {
    if (e.N < 1 || !(e.D > 0.0))
      throw std::invalid_argument("lms_fit: entries need N >= 1 and D > 0");
    const double x = std::log(static_cast<double>(e.N));
    const double y = std::log(e.D);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (!(denom > 0.0)) throw std::invalid_argument("lms_fit: degenerate N values");
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  double ss_res = 0.0;
  for (const auto& e : entries) {
    const double x = std::log(static_cast<double>(e.N));
    const double r = std::log(e.D) - (intercept + slope * x);
    ss_res += r * r;
  }
  const double s2 = entries.size() > 2 ? ss_res / (n - 2.0) : 0.0;
  const double var_slope = s2 * n / denom;
  const double var_intercept = s2 * sxx / denom;
  const double C = std::exp(intercept);
  return {C, -slope, C * std::sqrt(std::max(var_intercept, 0.0)),
          std::sqrt(std::max(var_slope, 0.0))};
}

inline PowerLawFit lms_fit(const DiscrepancyCurve& curve) { return lms_fit(curve.entries); }

// Streams samples into a DiscrepancyGrid and snapshots D at prescribed
// retained-sample counts.
class DiscrepancyCurveBuilder {
 public:
  DiscrepancyCurveBuilder(std::vector<std::uint64_t> checkpoints,
                          std::size_t grid_n = 100, double r_c = 4.0)
      : checkpoints_(std::move(checkpoints)), grid_(grid_n, r_c) {
    if (checkpoints_.empty())
      throw std::invalid_argument("DiscrepancyCurveBuilder: no checkpoints");
    for (std::size_t i = 0; i < checkpoints_.size(); ++i)
      if (checkpoints_[i] < 1 ||
          (i > 0 && checkpoints_[i] <= checkpoints_[i - 1]))
        throw std::invalid_argument(
            "DiscrepancyCurveBuilder: checkpoints must be positive and strictly increasing");
  }

  void add(double theta, double r) {
    if (done()) return;
    if (grid_.add(theta, r) && grid_.retained() == checkpoints_[next_]) {
      curve_.entries.push_back({grid_.retained(), grid_.value()});
      ++next_;
    }
  }

  bool done() const { return next_ >= checkpoints_.size(); }
  const DiscrepancyCurve& curve() const { return curve_; }
  const DiscrepancyGrid& grid() const { return grid_; }
  PowerLawFit fit() const { return lms_fit(curve_); }

 private:
  std::vector<std::uint64_t> checkpoints_;
  DiscrepancyGrid grid_;
  DiscrepancyCurve curve_;
  std::size_t next_ = 0;
};

// Running time average of p^2 along a trajectory; usable directly as an
// integrate() observer for Cartesian states.
class KineticAverage {
 public:
  void add(double p) {
    sum_ += p * p;
    ++n_;
  }

  template <class State>
  void operator()(std::uint64_t /*step*/, double /*t*/, const State& s) {
    add(s.p);
  }

  void merge(const KineticAverage& other) {
    sum_ += other.sum_;
    n_ += other.n_;
  }

  std::uint64_t count() const { return n_; }
  double value() const {
    if (n_ == 0) throw std::runtime_error("KineticAverage: no samples");
    return sum_ / static_cast<double>(n_);
  }

 private:
  double sum_ = 0.0;
  std::uint64_t n_ = 0;
};

}  // namespace thermolab
