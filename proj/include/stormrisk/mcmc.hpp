#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "stormrisk/common.hpp"
#include "stormrisk/damage_model.hpp"
#include "stormrisk/dataset.hpp"
#include "stormrisk/rng.hpp"

namespace stormrisk {

enum class Submodel { Count, Path, Damage };

inline const char* submodel_label(Submodel kind) {
  switch (kind) {
    case Submodel::Count: return "count";
    case Submodel::Path: return "path";
    default: return "damage";
  }
}

inline Submodel submodel_from_label(const std::string& label) {
  if (label == "count") return Submodel::Count;
  if (label == "path") return Submodel::Path;
  if (label == "damage") return Submodel::Damage;
  throw ValidationError("unknown submodel: '" + label + "'");
}

struct SamplerConfig {
  int n_iterations = 20000;
  int burn_in = 5000;
  int thin = 10;
  int n_chains = 2;
  double target_acceptance = 0.44;
  int tuning_window = 50;
  double adaptation_gain = 1.0;  // gain at batch b is adaptation_gain / sqrt(b)
  std::uint64_t seed = 20240501;
  double initial_step = 0.5;
  // Priors: IG(0.01, 0.01) on variances and clustering, IW(4, I) on the
  // 3x3 spatial covariances.
  double ig_shape = 0.01;
  double ig_rate = 0.01;
  double iw_df = 4.0;
  // Appendix-printed inverse-Wishart degrees of freedom use 3 + rank for the
  // path covariance but 4 + rank for damage; the standard conjugate update
  // gives prior df + rank for both. Default follows the printed forms.
  bool printed_iw_df = true;
  int n_frequencies = 2;  // count-model P
  bool store_unthinned = true;
  std::pair<double, double> match_points{kMatchPoint1, kMatchPoint2};

  void validate() const {
    if (burn_in >= n_iterations) throw ValidationError("burn_in must be below n_iterations");
    if (burn_in < 0 || thin < 1) throw ValidationError("invalid burn-in or thinning stride");
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
      throw ValidationError("target acceptance must lie in (0,1)");
    if (n_frequencies < 1) throw ValidationError("count model needs at least one frequency");
  }

  int n_retained() const { return (n_iterations - burn_in) / thin; }
};

// Posterior draws for one submodel, with acceptance bookkeeping.
struct Chain {
  Submodel kind = Submodel::Count;
  int n_locations = 0;
  int n_frequencies = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> names;
  Eigen::MatrixXd draws;      // retained (post burn-in, thinned) x names
  Eigen::MatrixXd unthinned;  // post burn-in, unthinned; diagnostics only
  std::vector<std::string> latent_names;
  Eigen::MatrixXd latent_draws;  // damage chain: severity and damage splits
  std::map<std::string, double> acceptance_rates;  // post burn-in
  std::map<std::string, double> final_step_sizes;

  int n_retained() const { return static_cast<int>(draws.rows()); }

  int column(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return static_cast<int>(j);
    throw ValidationError("chain has no column named '" + name + "'");
  }
};

inline Eigen::VectorXd center_zero_sum(const Eigen::VectorXd& row) {
  return row.array() - row.mean();
}

// IG(shape, rate): density proportional to x^{-shape-1} exp(-rate/x).
inline double sample_inverse_gamma(double shape, double rate, Rng& rng) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw ValidationError("inverse-gamma parameters must be positive");
  return rate / gamma_draw(rng, shape);
}

inline double inverse_gamma_log_density(double x, double shape, double rate) {
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  return -(shape + 1.0) * std::log(x) - rate / x;
}

// IW(df, scale) via the Bartlett decomposition of the inverse Wishart's
// Wishart(df, scale^-1) dual.
inline Eigen::MatrixXd sample_inverse_wishart(double df, const Eigen::MatrixXd& scale, Rng& rng) {
  const auto p = scale.rows();
  if (df <= static_cast<double>(p) - 1.0)
    throw ValidationError("inverse-Wishart df must exceed dimension - 1");
  Eigen::LLT<Eigen::MatrixXd> llt(scale.inverse());
  if (llt.info() != Eigen::Success) throw ValidationError("inverse-Wishart scale is not SPD");
  Eigen::MatrixXd bartlett = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    bartlett(i, i) = std::sqrt(chi_squared(rng, df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) bartlett(i, j) = normal(rng);
  }
  Eigen::MatrixXd factor = llt.matrixL() * bartlett;  // Wishart(df, scale^-1) factor
  Eigen::MatrixXd wishart = factor * factor.transpose();
  Eigen::MatrixXd draw = wishart.llt().solve(Eigen::MatrixXd::Identity(p, p));
  return 0.5 * (draw + draw.transpose());  // symmetrize fp noise
}

struct IwParams {
  double df = 0.0;
  Eigen::MatrixXd scale;
};

struct IgParams {
  double shape = 0.0;
  double rate = 0.0;
};

// Full conditional of the path-model spatial covariance. The printed form
// uses 3 + rank(D - W); the standard conjugate update would use 4 + rank.
inline IwParams full_conditional_sigma_gamma(const Eigen::MatrixXd& gamma_rows,
                                             const SpatialGraph& graph,
                                             bool printed_df = true) {
  IwParams out;
  out.df = (printed_df ? 3.0 : 4.0) + graph.laplacian_rank();
  out.scale = gamma_rows * graph.laplacian() * gamma_rows.transpose() +
              Eigen::MatrixXd::Identity(gamma_rows.rows(), gamma_rows.rows());
  return out;
}

// Full conditional of the damage-model spatial covariance (4 + rank in both
// the printed and the standard form).
inline IwParams full_conditional_sigma_xi(const Eigen::MatrixXd& xi_rows,
                                          const SpatialGraph& graph) {
  IwParams out;
  out.df = 4.0 + graph.laplacian_rank();
  out.scale = xi_rows * graph.laplacian() * xi_rows.transpose() +
              Eigen::MatrixXd::Identity(xi_rows.rows(), xi_rows.rows());
  return out;
}

// Full conditional of the log-damage variance: IG(hits/2 + a, rss/2 + b).
template <typename StormRange>
IgParams full_conditional_sigma2(const StormRange& storms,
                                 const std::vector<StormLatents>& latents,
                                 const DamageParams& params, double prior_shape = 0.01,
                                 double prior_rate = 0.01) {
  int hits = 0;
  double rss = 0.0;
  std::size_t i = 0;
  for (const auto& storm : storms) {
    const auto& latent = latents.at(i++);
    for (std::size_t m = 0; m < storm.path.size(); ++m) {
      const double r = std::log(latent.regional_damages.at(m)) - params.intercepts(storm.phase) -
                       params.spatial_effects(storm.phase, storm.path[m]) - latent.severity;
      rss += r * r;
      ++hits;
    }
  }
  return {hits / 2.0 + prior_shape, rss / 2.0 + prior_rate};
}

inline IgParams full_conditional_sigma2_zeta(const std::vector<double>& severities,
                                             double prior_shape = 0.01,
                                             double prior_rate = 0.01) {
  if (severities.empty()) throw ValidationError("severity update needs at least one storm");
  double ss = 0.0;
  for (double z : severities) ss += z * z;
  return {severities.size() / 2.0 + prior_shape, ss / 2.0 + prior_rate};
}

struct NormalParams {
  double mean = 0.0;
  double variance = 1.0;
};

// Full conditional of a storm's severity random effect given its regional
// damages.
inline NormalParams full_conditional_zeta(const StormRecord& storm, const StormLatents& latent,
                                          const DamageParams& params) {
  const int m = storm.n_hits();
  if (m < 1) throw ValidationError("severity update needs a hit location");
  double resid_sum = 0.0;
  for (std::size_t j = 0; j < storm.path.size(); ++j)
    resid_sum += std::log(latent.regional_damages.at(j)) - params.intercepts(storm.phase) -
                 params.spatial_effects(storm.phase, storm.path[j]);
  const double denom = params.severity_var * m + params.log_damage_var;
  return {params.severity_var / denom * resid_sum,
          params.log_damage_var * params.severity_var / denom};
}

struct MetropolisResult {
  double value = 0.0;
  bool accepted = false;
};

// One Gaussian random-walk step on a scalar.
inline MetropolisResult metropolis_scalar_step(double current,
                                               const std::function<double(double)>& log_target,
                                               double step_size, Rng& rng) {
  const double current_lt = log_target(current);
  if (!std::isfinite(current_lt))
    throw NumericalError("metropolis step started from a non-finite log-target");
  const double proposal = current + step_size * normal(rng);
  const double delta = log_target(proposal) - current_lt;
  if (delta >= 0.0 || std::log(uniform01_pos(rng)) < delta) return {proposal, true};
  return {current, false};
}

// Robbins-Monro update on the log step size toward the target rate.
inline double adapt_step_size(double window_rate, double current_step, double gain,
                              double target = 0.44) {
  double log_step = std::log(current_step) + gain * (window_rate - target);
  log_step = std::clamp(log_step, -30.0, 10.0);
  return std::exp(log_step);
}

// Per-parameter step size with windowed adaptation (burn-in only) and
// post-burn-in acceptance bookkeeping.
class StepSizeAdapter {
 public:
  StepSizeAdapter() = default;
  StepSizeAdapter(double initial_step, int window, double gain0, double target)
      : step_(initial_step), window_(window), gain0_(gain0), target_(target) {}

  double step() const { return step_; }

  void record(bool accepted, bool adapting) {
    if (adapting) {
      window_accepts_ += accepted;
      if (++window_count_ == window_) {
        const double rate = static_cast<double>(window_accepts_) / window_;
        step_ = adapt_step_size(rate, step_, gain0_ / std::sqrt(static_cast<double>(batch_)),
                                target_);
        ++batch_;
        window_accepts_ = 0;
        window_count_ = 0;
      }
    } else {
      post_accepts_ += accepted;
      ++post_proposals_;
    }
  }

  double post_burn_in_rate() const {
    return post_proposals_ > 0 ? static_cast<double>(post_accepts_) / post_proposals_ : 0.0;
  }

 private:
  double step_ = 0.5;
  int window_ = 50;
  double gain0_ = 1.0;
  double target_ = 0.44;
  int window_accepts_ = 0;
  int window_count_ = 0;
  int batch_ = 1;
  long post_accepts_ = 0;
  long post_proposals_ = 0;
};

// One block Metropolis update of a multi-location storm's damage split.
// Proposals perturb the simplex coordinates Y_m / Y by independent uniform
// steps; out-of-simplex proposals are rejected outright. Both states are
// scored under the same per-sweep tail parameters.
inline MetropolisResult sample_latent_damages(const StormRecord& storm,
                                              const DamageParams& params, double severity,
                                              std::vector<double>& damages, double step_size,
                                              Rng& rng,
                                              std::pair<double, double> match_points = {
                                                  kMatchPoint1, kMatchPoint2},
                                              std::vector<LognormalMatchResult>* warm_cache =
                                                  nullptr) {
  const int m_hits = storm.n_hits();
  if (m_hits < 2) throw ValidationError("latent damage update needs >= 2 hit locations");
  const double total = storm.total_damage;

  std::vector<double> mus(m_hits);
  for (int m = 0; m < m_hits; ++m)
    mus[m] = params.intercepts(storm.phase) + params.spatial_effects(storm.phase, storm.path[m]) +
             severity;
  const auto tails =
      decomposition_tail_params(mus, params.log_damage_var, match_points, warm_cache);

  std::vector<double> current(m_hits - 1), proposal(m_hits - 1);
  for (int m = 0; m < m_hits - 1; ++m) current[m] = damages.at(m);
  bool in_simplex = true;
  for (int m = 0; m < m_hits - 1; ++m) {
    const double z = current[m] / total + step_size * (uniform01(rng) - 0.5);
    proposal[m] = z * total;
    if (z <= 0.0) in_simplex = false;
  }
  MetropolisResult result{0.0, false};
  if (in_simplex) {
    auto lp_new =
        latent_decomposition_log_density(proposal, total, mus, params.log_damage_var, tails);
    if (lp_new.has_value()) {
      auto lp_old =
          latent_decomposition_log_density(current, total, mus, params.log_damage_var, tails);
      if (!lp_old.has_value())
        throw NumericalError("latent damage state left the simplex for storm " + storm.id);
      const double delta = *lp_new - *lp_old;
      if (delta >= 0.0 || std::log(uniform01_pos(rng)) < delta) {
        double sum = 0.0;
        for (int m = 0; m < m_hits - 1; ++m) {
          damages[m] = proposal[m];
          sum += proposal[m];
        }
        damages[m_hits - 1] = total - sum;
        result.accepted = true;
      }
    }
  }
  return result;
}

}  // namespace stormrisk
