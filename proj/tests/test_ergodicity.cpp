#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "thermolab/ergodicity.hpp"

using namespace thermolab;
using Catch::Approx;

namespace {

// Inverse of the theoretical marginals: theta = 2 pi u, r = sqrt(-2 ln(1-v)).
AngleRadiusSample from_uniform(double u, double v) {
  return {two_pi * u, std::sqrt(-2.0 * std::log1p(-v))};
}

}  // namespace

TEST_CASE("reference densities and their CDF", "[ergodicity]") {
  CHECK(theo_angular_pdf(1.0) == Approx(0.159155).margin(1e-6));
  CHECK(theo_amplitude_pdf(0.0) == 0.0);
  CHECK(theo_amplitude_pdf(1.0) == Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(theo_amplitude_pdf(1.0) == Approx(0.6065).margin(1e-4));

  CHECK(theo_cdf(two_pi, 1e3) == Approx(1.0).epsilon(1e-15));
  for (const double r : {0.3, 1.0, 2.5}) {
    CHECK(theo_cdf(two_pi / 2.0, r) ==
          Approx(0.5 * -std::expm1(-0.5 * r * r)).epsilon(1e-14));
  }
  CHECK(theo_cdf(two_pi, 4.0) == Approx(1.0 - std::exp(-8.0)).epsilon(1e-14));
  CHECK(1.0 - std::exp(-8.0) == Approx(0.999665).margin(1e-6));

  CHECK(theo_cdf(0.0, 2.0) == 0.0);
  CHECK(theo_cdf(3.0, 0.0) == 0.0);
  double prev = -1.0;
  for (double r = 0.0; r <= 5.0; r += 0.25) {
    const double c = theo_cdf(2.0, r);
    CHECK(c >= prev);
    prev = c;
  }
  prev = -1.0;
  for (double th = 0.0; th <= two_pi; th += 0.2) {
    const double c = theo_cdf(th, 1.7);
    CHECK(c >= prev);
    prev = c;
  }
}

TEST_CASE("angle-radius reduction", "[ergodicity]") {
  const auto s = to_angle_radius(2.2, 0.0);
  CHECK(s.theta == 0.0);
  CHECK(s.r == Approx(2.2).epsilon(1e-15));

  const auto t = to_angle_radius(0.0, 1.0);  // p > 0 lies at theta = 3 pi / 2
  CHECK(t.theta == Approx(0.75 * two_pi).epsilon(1e-14));
  CHECK(t.r == 1.0);

  std::mt19937_64 rng(41u);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const auto ar = to_angle_radius(u(rng), u(rng));
    CHECK(ar.theta >= 0.0);
    CHECK(ar.theta < two_pi);
    CHECK(ar.r >= 0.0);
  }
}

TEST_CASE("histogram densities and the sup-norm error", "[ergodicity]") {
  CHECK_THROWS(Histogram(1.0, 1.0, 10));
  CHECK_THROWS(Histogram(0.0, 1.0, 0));

  // Empty histogram: the error degenerates to the sup of the pdf.
  Histogram empty(0.0, two_pi, 100);
  CHECK(distribution_error(empty, theo_angular_pdf) ==
        Approx(1.0 / two_pi).epsilon(1e-15));

  // Exact quantile sample of the amplitude law.
  const std::size_t N = 100000;
  Histogram amp(0.0, 4.0, 100);
  for (std::size_t i = 0; i < N; ++i) {
    const double v = (static_cast<double>(i) + 0.5) / static_cast<double>(N);
    amp.add(std::sqrt(-2.0 * std::log1p(-v)));
  }
  CHECK(distribution_error(amp, theo_amplitude_pdf) < 1e-3);

  // Uniform angular samples: binomial fluctuations stay below 5e-3.
  std::mt19937_64 rng(42u);
  std::uniform_real_distribution<double> u(0.0, two_pi);
  Histogram ang(0.0, two_pi, 100);
  for (int i = 0; i < 1000000; ++i) ang.add(u(rng));
  CHECK(ang.total() == 1000000);
  CHECK(ang.in_range() == 1000000);
  CHECK(distribution_error(ang, theo_angular_pdf) < 5e-3);

  // In-range density integrates exactly to the in-range fraction.
  Histogram part(0.0, 1.0, 7);
  std::uniform_real_distribution<double> w(-0.5, 1.5);
  for (int i = 0; i < 1000; ++i) part.add(w(rng));
  double integral = 0.0;
  for (std::size_t b = 0; b < part.n_bins(); ++b) integral += part.density(b);
  integral *= part.bin_width();
  const double fraction = static_cast<double>(part.in_range()) /
                          static_cast<double>(part.total());
  CHECK(integral == Approx(fraction).epsilon(1e-12));
  CHECK(part.below() + part.above() + part.in_range() == part.total());

  // x == hi lands in the last bin rather than above the range.
  Histogram edge(0.0, 1.0, 4);
  edge.add(1.0);
  CHECK(edge.in_range() == 1);

  // merge is equivalent to a single pass.
  Histogram h1(0.0, 1.0, 8), h2(0.0, 1.0, 8), whole(0.0, 1.0, 8);
  std::uniform_real_distribution<double> v(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double x = v(rng);
    (i % 2 ? h1 : h2).add(x);
    whole.add(x);
  }
  h1.merge(h2);
  for (std::size_t b = 0; b < 8; ++b) CHECK(h1.density(b) == whole.density(b));
}

TEST_CASE("star discrepancy: corner case, bounds, low-discrepancy input", "[ergodicity]") {
  CHECK_THROWS(star_discrepancy({}, 100, 4.0));

  const std::vector<AngleRadiusSample> corner{{0.0, 0.0}};
  CHECK(star_discrepancy(corner, 100, 4.0) ==
        Approx(1.0 - theo_cdf(two_pi / 100.0, 0.04)).epsilon(1e-12));

  std::mt19937_64 rng(43u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<AngleRadiusSample> pts;
    const int n = 1 + static_cast<int>(u(rng) * 200);
    for (int i = 0; i < n; ++i) pts.push_back(from_uniform(u(rng), u(rng)));
    const double d = star_discrepancy(pts, 100, 4.0);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }

  // Stratified grid mapped through the inverse CDF: D below 1e-2.
  std::vector<AngleRadiusSample> strat;
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 100; ++j)
      strat.push_back(from_uniform((i + 0.5) / 100.0, (j + 0.5) / 100.0));
  CHECK(star_discrepancy(strat, 100, 4.0) < 0.01);

  // Permutation invariance.
  std::vector<AngleRadiusSample> pts;
  for (int i = 0; i < 300; ++i) pts.push_back(from_uniform(u(rng), u(rng)));
  const double d0 = star_discrepancy(pts, 100, 4.0);
  std::shuffle(pts.begin(), pts.end(), rng);
  CHECK(star_discrepancy(pts, 100, 4.0) == d0);
}

TEST_CASE("star discrepancy: cumulative grid equals brute force", "[ergodicity]") {
  std::mt19937_64 rng(44u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 12; ++trial) {
    std::vector<AngleRadiusSample> pts;
    const int n = 1 + static_cast<int>(u(rng) * 400);
    for (int i = 0; i < n; ++i) {
      // Include exclusions beyond r_c and exact grid-line ties.
      double theta = two_pi * u(rng);
      double r = 4.5 * u(rng);
      if (i % 7 == 0) theta = two_pi * std::floor(u(rng) * 100.0) / 100.0;
      if (i % 5 == 0) r = 4.0 * std::floor(u(rng) * 100.0) / 100.0;
      pts.push_back({theta, r});
    }
    CHECK(star_discrepancy(pts, 100, 4.0) == star_discrepancy_brute(pts, 100, 4.0));
  }
}

TEST_CASE("adding one sample moves D by at most 1/(N+1)", "[ergodicity]") {
  std::mt19937_64 rng(45u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<AngleRadiusSample> pts;
  for (int i = 0; i < 40; ++i) pts.push_back(from_uniform(u(rng), u(rng)));
  double prev = star_discrepancy(pts, 50, 4.0);
  for (int i = 0; i < 40; ++i) {
    pts.push_back(from_uniform(u(rng), u(rng)));
    const double cur = star_discrepancy(pts, 50, 4.0);
    CHECK(std::abs(cur - prev) <=
          1.0 / static_cast<double>(pts.size()) + 1e-14);
    prev = cur;
  }
}

TEST_CASE("discrepancy grid merge matches a single pass", "[ergodicity]") {
  std::mt19937_64 rng(46u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DiscrepancyGrid a(60, 4.0), b(60, 4.0), whole(60, 4.0);
  for (int i = 0; i < 2000; ++i) {
    const auto s = from_uniform(u(rng), u(rng));
    (i % 2 ? a : b).add(s);
    whole.add(s);
  }
  a.merge(b);
  CHECK(a.retained() == whole.retained());
  CHECK(a.excluded() == whole.excluded());
  CHECK(a.value() == whole.value());
}

TEST_CASE("power-law fits of discrepancy curves", "[ergodicity]") {
  // Exact synthetic curve: parameters recovered to machine precision.
  std::vector<DiscrepancyCurve::Entry> exact;
  for (double N = 100.0; N <= 1.0e9; N *= 10.0)
    exact.push_back({static_cast<std::uint64_t>(N),
                     11.1 / std::pow(N, 0.483)});
  const auto fit = lms_fit(exact);
  CHECK(fit.C == Approx(11.1).margin(1e-6));
  CHECK(fit.a == Approx(0.483).margin(1e-6));
  CHECK(fit.a_std_error < 1e-10);

  std::vector<DiscrepancyCurve::Entry> flat{{10, 0.25}, {100, 0.25}, {1000, 0.25}};
  CHECK(lms_fit(flat).a == Approx(0.0).margin(1e-12));

  CHECK_THROWS(lms_fit(std::vector<DiscrepancyCurve::Entry>{{10, 0.3}, {100, 0.1}}));

  // i.i.d. sampling of the true law decays like ~N^(-1/2).
  std::mt19937_64 rng(47u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DiscrepancyCurveBuilder builder({1000, 3000, 10000, 30000, 100000, 300000, 1000000},
                                  100, 4.0);
  while (!builder.done()) {
    const auto s = from_uniform(u(rng), u(rng));
    builder.add(s.theta, s.r);
  }
  const auto mc = builder.fit();
  CHECK(mc.a > 0.4);
  CHECK(mc.a < 0.6);
  REQUIRE(builder.curve().entries.size() == 7);
  CHECK(builder.curve().entries.front().N == 1000);
  CHECK(builder.curve().entries.back().N == 1000000);
}

TEST_CASE("kinetic average", "[ergodicity]") {
  KineticAverage flat;
  for (int i = 0; i < 10; ++i) flat.add(1.0);
  CHECK(flat.value() == 1.0);

  // Exact harmonic oscillator samples over whole periods: discrete average of
  // p^2 = 2 tau sin^2 equals tau exactly at equispaced angles.
  KineticAverage harm;
  const int n = 64;
  for (int k = 0; k < n; ++k) {
    const double t = two_pi * k / n;
    harm.add(-std::sqrt(2.0) * std::sin(t));
  }
  CHECK(harm.value() == Approx(1.0).margin(1e-14));

  KineticAverage none;
  CHECK_THROWS(none.value());
}
