#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stormrisk/common.hpp"
#include "stormrisk/mcmc.hpp"

namespace stormrisk {

struct HpdInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
};

// Shortest order-statistics window containing ceil(level * n) samples;
// ties go to the smallest lower endpoint.
inline HpdInterval hpd_interval(std::vector<double> samples, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("HPD level must lie in (0,1)");
  const int n = static_cast<int>(samples.size());
  if (n < static_cast<int>(std::ceil(1.0 / (1.0 - level))))
    throw ValidationError("not enough samples for an HPD interval at this level");
  std::sort(samples.begin(), samples.end());
  const int m = static_cast<int>(std::ceil(level * n));
  int best_j = 0;
  double best_width = samples[m - 1] - samples[0];
  for (int j = 1; j + m <= n; ++j) {
    const double width = samples[j + m - 1] - samples[j];
    if (width < best_width) {
      best_width = width;
      best_j = j;
    }
  }
  return {samples[best_j], samples[best_j + m - 1], level};
}

// Potential scale reduction sqrt((W (n-1)/n + B/n) / W) over >= 2 chains.
inline double bgr_statistic(const std::vector<std::vector<double>>& chains) {
  const int m = static_cast<int>(chains.size());
  if (m < 2) throw ValidationError("BGR needs at least two chains");
  const int n = static_cast<int>(chains.front().size());
  if (n < 10) throw ValidationError("BGR needs chains of length >= 10");
  for (const auto& c : chains)
    if (static_cast<int>(c.size()) != n) throw ValidationError("BGR chains must have equal length");

  std::vector<double> means(m, 0.0), vars(m, 0.0);
  for (int j = 0; j < m; ++j) {
    for (double x : chains[j]) means[j] += x;
    means[j] /= n;
    for (double x : chains[j]) vars[j] += (x - means[j]) * (x - means[j]);
    vars[j] /= (n - 1);
  }
  double grand = 0.0, within = 0.0;
  for (int j = 0; j < m; ++j) {
    grand += means[j];
    within += vars[j];
  }
  grand /= m;
  within /= m;
  double between_over_n = 0.0;  // B/n = sample variance of the chain means
  for (int j = 0; j < m; ++j) between_over_n += (means[j] - grand) * (means[j] - grand);
  between_over_n /= (m - 1);

  if (within == 0.0) return between_over_n == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double pooled = (n - 1.0) / n * within + between_over_n;
  return std::sqrt(pooled / within);
}

// Spiegelhalter DIC: mean deviance plus the effective parameter count
// p_D = mean deviance - deviance at the posterior mean.
inline double dic(const Eigen::MatrixXd& draws,
                  const std::function<double(const Eigen::VectorXd&)>& log_likelihood) {
  if (draws.rows() == 0) throw ValidationError("DIC needs a nonempty chain");
  double mean_deviance = 0.0;
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    const double ll = log_likelihood(draws.row(i).transpose());
    if (!std::isfinite(ll)) throw NumericalError("non-finite deviance in DIC");
    mean_deviance += -2.0 * ll;
  }
  mean_deviance /= static_cast<double>(draws.rows());
  const Eigen::VectorXd at_mean = draws.colwise().mean().transpose();
  const double deviance_at_mean = -2.0 * log_likelihood(at_mean);
  if (!std::isfinite(deviance_at_mean))
    throw NumericalError("non-finite deviance at the posterior mean");
  const double p_d = mean_deviance - deviance_at_mean;
  return mean_deviance + p_d;
}

// ----------------------------- chain reports ------------------------------

struct ParameterDiagnostics {
  std::string name;
  double posterior_mean = 0.0;
  HpdInterval hpd;
  double bgr = 0.0;
  double acceptance_rate = -1.0;  // negative: conjugate update, no rate
};

// Per-parameter summary across >= 1 chains of the same submodel: pooled
// posterior mean and HPD from retained draws, BGR across chains from the
// post-burn-in unthinned segments when stored.
inline std::vector<ParameterDiagnostics> diagnose_chains(const std::vector<Chain>& chains,
                                                         double level = 0.95) {
  if (chains.empty()) throw ValidationError("no chains to diagnose");
  const auto& names = chains.front().names;
  for (const auto& c : chains)
    if (c.names != names) throw ValidationError("chains disagree on parameter layout");

  std::vector<ParameterDiagnostics> out;
  for (std::size_t j = 0; j < names.size(); ++j) {
    ParameterDiagnostics d;
    d.name = names[j];
    std::vector<double> pooled;
    for (const auto& c : chains)
      for (Eigen::Index i = 0; i < c.draws.rows(); ++i) pooled.push_back(c.draws(i, j));
    double sum = 0.0;
    for (double x : pooled) sum += x;
    d.posterior_mean = sum / pooled.size();
    d.hpd = hpd_interval(pooled, level);
    if (chains.size() >= 2) {
      std::vector<std::vector<double>> sequences;
      for (const auto& c : chains) {
        const Eigen::MatrixXd& src = c.unthinned.rows() > 0 ? c.unthinned : c.draws;
        std::vector<double> seq(src.rows());
        for (Eigen::Index i = 0; i < src.rows(); ++i) seq[i] = src(i, j);
        sequences.push_back(std::move(seq));
      }
      d.bgr = bgr_statistic(sequences);
    }
    auto it = chains.front().acceptance_rates.find(names[j]);
    if (it != chains.front().acceptance_rates.end()) d.acceptance_rate = it->second;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace stormrisk
