#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "stormrisk/common.hpp"
#include "stormrisk/rng.hpp"

namespace stormrisk {

// Seasonal log-intensity regression: one intercept and P sine/cosine
// amplitude pairs per ENSO phase.
struct CountParams {
  Eigen::Vector3d intercepts = Eigen::Vector3d::Zero();
  Eigen::Matrix3Xd sine_coeffs;    // 3 x P
  Eigen::Matrix3Xd cosine_coeffs;  // 3 x P

  explicit CountParams(int n_frequencies = 1)
      : sine_coeffs(Eigen::Matrix3Xd::Zero(3, n_frequencies)),
        cosine_coeffs(Eigen::Matrix3Xd::Zero(3, n_frequencies)) {}

  int n_frequencies() const { return static_cast<int>(sine_coeffs.cols()); }
};

// Year -> ENSO phase lookup.
class EnsoCalendar {
 public:
  EnsoCalendar() = default;
  explicit EnsoCalendar(std::map<int, int> phases) : phases_(std::move(phases)) {}

  void set(int year, int phase) {
    if (phase < 0 || phase >= kNumPhases) throw ValidationError("phase index out of range");
    phases_[year] = phase;
  }

  bool covers(int year) const { return phases_.count(year) > 0; }

  int phase(int year) const {
    auto it = phases_.find(year);
    if (it == phases_.end())
      throw ValidationError("year " + std::to_string(year) + " not covered by ENSO calendar");
    return it->second;
  }

  int phase_at(double t) const { return phase(static_cast<int>(std::floor(t))); }

  const std::map<int, int>& years() const { return phases_; }

  std::vector<int> year_list() const {
    std::vector<int> out;
    out.reserve(phases_.size());
    for (const auto& [year, _] : phases_) out.push_back(year);
    return out;
  }

 private:
  std::map<int, int> phases_;
};

// log lambda on the open-left season window, as a function of the within-year
// fraction tau. Callers must ensure tau lies in (start, end].
inline double seasonal_log_intensity(double tau, int phase, const CountParams& params) {
  const double angle_base = 2.0 * std::numbers::pi * (tau - kSeasonStart) / kSeasonLength;
  double log_lambda = params.intercepts(phase);
  for (int p = 0; p < params.n_frequencies(); ++p) {
    const double a = angle_base * (p + 1);
    log_lambda += params.sine_coeffs(phase, p) * std::sin(a) +
                  params.cosine_coeffs(phase, p) * std::cos(a);
  }
  return log_lambda;
}

// Storm-count intensity at decimal-year time t; zero outside the season.
inline double intensity(double t, const CountParams& params, const EnsoCalendar& calendar) {
  const double tau = t - std::floor(t);
  if (!(tau > kSeasonStart && tau <= kSeasonEnd)) return 0.0;
  return std::exp(seasonal_log_intensity(tau, calendar.phase_at(t), params));
}

inline constexpr int kSimpsonSubintervals = 512;

// Expected storm count for one year of the given phase: composite Simpson
// over the season window with the configured grid.
inline double integrated_intensity_phase(int phase, const CountParams& params,
                                         int n_subintervals = kSimpsonSubintervals) {
  const int n = (n_subintervals % 2 == 0) ? n_subintervals : n_subintervals + 1;
  const double h = kSeasonLength / n;
  auto f = [&](int i) {
    return std::exp(seasonal_log_intensity(kSeasonStart + i * h, phase, params));
  };
  double acc = f(0) + f(n);
  for (int i = 1; i < n; ++i) acc += f(i) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

inline double integrated_intensity(int year, const CountParams& params,
                                   const EnsoCalendar& calendar,
                                   int n_subintervals = kSimpsonSubintervals) {
  return integrated_intensity_phase(calendar.phase(year), params, n_subintervals);
}

// Exact non-homogeneous Poisson log-likelihood: sum of per-storm
// log-intensities minus the integrated intensity over every modeled year.
inline double count_log_likelihood(const std::vector<double>& storm_times,
                                   const std::vector<int>& years, const CountParams& params,
                                   const EnsoCalendar& calendar) {
  double ll = 0.0;
  for (double t : storm_times) {
    const double lambda = intensity(t, params, calendar);
    if (lambda <= 0.0) return -std::numeric_limits<double>::infinity();
    ll += std::log(lambda);
  }
  for (int year : years) ll -= integrated_intensity(year, params, calendar);
  return ll;
}

inline double count_envelope_rate(int phase, const CountParams& params) {
  double log_max = params.intercepts(phase);
  for (int p = 0; p < params.n_frequencies(); ++p)
    log_max += std::abs(params.sine_coeffs(phase, p)) + std::abs(params.cosine_coeffs(phase, p));
  return std::exp(log_max);
}

// Lewis-Shedler thinning with the analytic envelope above; returns sorted
// decimal-year times within the season window.
inline std::vector<double> simulate_storm_times_phase(int year, int phase,
                                                      const CountParams& params, Rng& rng) {
  const double lambda_max = count_envelope_rate(phase, params);
  std::vector<double> times;
  if (lambda_max <= 0.0) return times;
  double tau = kSeasonStart;
  for (;;) {
    tau += exponential(rng, lambda_max);
    if (tau > kSeasonEnd) break;
    const double log_accept = seasonal_log_intensity(tau, phase, params) - std::log(lambda_max);
    if (std::log(uniform01_pos(rng)) < log_accept) times.push_back(year + tau);
  }
  return times;
}

inline std::vector<double> simulate_storm_times(int year, const CountParams& params,
                                                const EnsoCalendar& calendar, Rng& rng) {
  return simulate_storm_times_phase(year, calendar.phase(year), params, rng);
}

}  // namespace stormrisk
