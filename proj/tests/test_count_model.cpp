#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "stormrisk/count_model.hpp"

#include "oracles.hpp"

using namespace stormrisk;

namespace {

EnsoCalendar constant_calendar(int phase, int first_year = 2000, int n_years = 1) {
  EnsoCalendar cal;
  for (int y = first_year; y < first_year + n_years; ++y) cal.set(y, phase);
  return cal;
}

CountParams table4_params() {
  CountParams p(2);
  p.intercepts << -0.57, 0.46, 0.23;
  p.sine_coeffs << -0.40, 0.40, -0.03, 0.35, -1.65, 0.27;
  p.cosine_coeffs << -2.60, -1.07, -1.29, -0.59, -1.12, 0.45;
  return p;
}

CountParams table3_params() {
  CountParams p(1);
  p.intercepts << 1.75, 2.0, 2.25;
  p.sine_coeffs << 0.0, 0.5, -0.5;
  p.cosine_coeffs << 0.0, 0.5, -0.5;
  return p;
}

double oracle_integrated(const CountParams& params, int phase, double tol = 1e-13) {
  return oracles::adaptive_simpson(
      [&](double tau) { return std::exp(seasonal_log_intensity(tau, phase, params)); },
      kSeasonStart, kSeasonEnd, tol);
}

}  // namespace

TEST_CASE("intensity is zero outside the season window") {
  CountParams p(1);
  p.intercepts.setConstant(std::log(2.0));
  auto cal = constant_calendar(1);
  CHECK(intensity(2000.2, p, cal) == 0.0);
  CHECK(intensity(2000.95, p, cal) == 0.0);
  // Exact boundaries, using year 0 so the fractions survive the float sum:
  // the window is open at 4/12 and closed at 11/12.
  auto cal0 = constant_calendar(1, 0, 1);
  CHECK(intensity(4.0 / 12.0, p, cal0) == 0.0);
  CHECK(intensity(11.0 / 12.0, p, cal0) > 0.0);
}

TEST_CASE("constant intensity inside the window") {
  CountParams p(1);
  p.intercepts.setConstant(std::log(2.0));
  auto cal = constant_calendar(0);
  CHECK(intensity(2000.0 + 7.0 / 12.0, p, cal) == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("intensity matches an independent formula evaluation") {
  auto p = table4_params();
  auto cal = constant_calendar(0);
  const double tau = 8.5 / 12.0;
  double expected = std::exp(
      -0.57 +
      -0.40 * std::sin(2 * std::numbers::pi * (tau - 4.0 / 12.0) / (7.0 / 12.0)) +
      -2.60 * std::cos(2 * std::numbers::pi * (tau - 4.0 / 12.0) / (7.0 / 12.0)) +
      0.40 * std::sin(4 * std::numbers::pi * (tau - 4.0 / 12.0) / (7.0 / 12.0)) +
      -1.07 * std::cos(4 * std::numbers::pi * (tau - 4.0 / 12.0) / (7.0 / 12.0)));
  CHECK(intensity(2000.0 + tau, p, cal) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("intensity is one-year periodic under a constant-phase calendar") {
  auto p = table4_params();
  auto cal = constant_calendar(2, 2000, 3);
  for (double tau : {0.4, 0.5, 0.61, 0.75, 0.9}) {
    CHECK(intensity(2000.0 + tau, p, cal) == Catch::Approx(intensity(2001.0 + tau, p, cal)));
    CHECK(intensity(2000.0 + tau, p, cal) == Catch::Approx(intensity(2002.0 + tau, p, cal)));
  }
}

TEST_CASE("integrated_intensity closed forms for flat seasonality") {
  CountParams p(1);
  p.intercepts.setConstant(std::log(24.0 / 7.0));
  auto cal = constant_calendar(1);
  CHECK(integrated_intensity(2000, p, cal) == Catch::Approx(2.0).epsilon(1e-12));
  CountParams q(1);
  auto cal0 = constant_calendar(0);
  CHECK(integrated_intensity(2000, q, cal0) == Catch::Approx(7.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("integrated_intensity matches adaptive quadrature") {
  CountParams p(1);
  p.intercepts << 1.75, 2.0, 2.25;
  p.cosine_coeffs << 0.0, 0.5, -0.5;
  for (int phase = 0; phase < 3; ++phase) {
    auto cal = constant_calendar(phase);
    double expected = oracle_integrated(p, phase);
    CHECK(integrated_intensity(2000, p, cal) ==
          Catch::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("integrated_intensity grid error below 1e-8 relative") {
  for (const auto& p : {table3_params(), table4_params()}) {
    for (int phase = 0; phase < 3; ++phase) {
      auto cal = constant_calendar(phase);
      double coarse = integrated_intensity(2000, p, cal);
      double fine = integrated_intensity(2000, p, cal, 2 * kSimpsonSubintervals);
      CHECK(std::abs(coarse - fine) / fine < 1e-8);
    }
  }
}

TEST_CASE("count_log_likelihood simple cases") {
  CountParams p(1);
  auto cal = constant_calendar(1, 2000, 1);
  CHECK(count_log_likelihood({}, {2000}, p, cal) ==
        Catch::Approx(-7.0 / 12.0).epsilon(1e-12));
  CHECK(count_log_likelihood({2000.0 + 7.0 / 12.0}, {2000}, p, cal) ==
        Catch::Approx(-7.0 / 12.0).epsilon(1e-12));
  // Outside the window the likelihood collapses.
  CHECK(count_log_likelihood({2000.2}, {2000}, p, cal) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("count_log_likelihood matches brute-force summation") {
  auto p = table3_params();
  EnsoCalendar cal;
  cal.set(2000, 0);
  cal.set(2001, 1);
  cal.set(2002, 2);
  Rng rng = make_rng(42);
  std::vector<double> times;
  for (int year : {2000, 2001, 2002})
    for (double t : simulate_storm_times(year, p, cal, rng)) times.push_back(t);
  REQUIRE(times.size() > 3);

  double expected = 0.0;
  for (double t : times) {
    double tau = t - std::floor(t);
    expected += seasonal_log_intensity(tau, cal.phase_at(t), p);
  }
  for (int year : {2000, 2001, 2002}) expected -= oracle_integrated(p, cal.phase(year));
  CHECK(count_log_likelihood(times, {2000, 2001, 2002}, p, cal) ==
        Catch::Approx(expected).epsilon(1e-8));
}

TEST_CASE("simulate_storm_times with negligible intensity") {
  CountParams p(1);
  p.intercepts.setConstant(-20.0);
  auto cal = constant_calendar(0);
  Rng rng = make_rng(1);
  int total = 0;
  for (int rep = 0; rep < 100; ++rep) total += simulate_storm_times(2000, p, cal, rng).size();
  CHECK(total == 0);
}

TEST_CASE("simulated counts match the Poisson mean for flat intensity") {
  CountParams p(1);
  p.intercepts.setConstant(std::log(24.0 / 7.0));
  auto cal = constant_calendar(1);
  Rng rng = make_rng(99);
  const int n_years = 10000;
  std::vector<double> counts;
  for (int rep = 0; rep < n_years; ++rep) {
    auto times = simulate_storm_times(2000, p, cal, rng);
    for (double t : times) {
      double tau = t - std::floor(t);
      REQUIRE((tau > kSeasonStart && tau <= kSeasonEnd));
    }
    REQUIRE(std::is_sorted(times.begin(), times.end()));
    counts.push_back(static_cast<double>(times.size()));
  }
  double mean = oracles::sample_mean(counts);
  double se = std::sqrt(2.0 / n_years);
  CHECK(std::abs(mean - 2.0) < 3.0 * se);
  // Poisson dispersion: variance/mean near 1.
  double dispersion = oracles::sample_variance(counts) / mean;
  CHECK(dispersion > 0.95);
  CHECK(dispersion < 1.05);
}

TEST_CASE("simulated phase means match quadrature and the published ordering") {
  // Empirical annual means must agree with the integrated intensity; the
  // phase ordering (La Nina > Neutral > El Nino) matches the reported
  // expected counts 2.06 / 2.44 / 3.31.
  auto p = table4_params();
  Rng rng = make_rng(7);
  const int n_years = 20000;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero(), lambda;
  for (int phase = 0; phase < 3; ++phase) {
    auto cal = constant_calendar(phase);
    lambda(phase) = integrated_intensity(2000, p, cal);
    for (int rep = 0; rep < n_years; ++rep)
      mean(phase) += static_cast<double>(simulate_storm_times(2000, p, cal, rng).size());
    mean(phase) /= n_years;
    double se = std::sqrt(lambda(phase) / n_years);
    CHECK(std::abs(mean(phase) - lambda(phase)) < 3.0 * se);
  }
  CHECK(mean(2) > mean(1));
  CHECK(mean(1) > mean(0));
}

TEST_CASE("calendar coverage is enforced") {
  CountParams p(1);
  auto cal = constant_calendar(0, 2000, 1);
  CHECK_THROWS_AS(intensity(1999.5, p, cal), ValidationError);
  CHECK_THROWS_AS(integrated_intensity(1999, p, cal), ValidationError);
}
