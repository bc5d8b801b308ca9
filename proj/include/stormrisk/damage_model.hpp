#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "stormrisk/common.hpp"
#include "stormrisk/spatial_graph.hpp"

namespace stormrisk {

// Lognormal damage-model parameters: per-phase intercepts and spatial
// effects, log-damage variance, storm-severity variance, MCAR
// hyper-covariance.
struct DamageParams {
  Eigen::Vector3d intercepts = Eigen::Vector3d::Zero();
  Eigen::Matrix3Xd spatial_effects;  // 3 x S
  double log_damage_var = 1.0;       // sigma^2
  double severity_var = 1.0;         // sigma^2_zeta
  Eigen::Matrix3d spatial_cov = Eigen::Matrix3d::Identity();

  explicit DamageParams(int n_locations = 0)
      : spatial_effects(Eigen::Matrix3Xd::Zero(3, n_locations)) {}

  int n_locations() const { return static_cast<int>(spatial_effects.cols()); }
};

// Per-storm latent state: severity random effect and the regional split of
// the observed total damage (one entry per hit location, path order).
struct StormLatents {
  double severity = 0.0;
  std::vector<double> regional_damages;
};

// Multivariate CAR prior evaluation, intrinsic (rho = 1, singular precision)
// or proper (rho strictly inside the propriety interval).
struct McarSpec {
  const SpatialGraph* graph = nullptr;
  Eigen::MatrixXd sigma;  // conditional covariance across measurements
  bool proper = false;
  double rho = 1.0;

  static McarSpec intrinsic(const SpatialGraph& g, const Eigen::MatrixXd& sigma) {
    return McarSpec{&g, sigma, false, 1.0};
  }
  static McarSpec make_proper(const SpatialGraph& g, const Eigen::MatrixXd& sigma, double rho) {
    return McarSpec{&g, sigma, true, rho};
  }
};

// Valid propriety interval (1/lambda_min, 1/lambda_max) from the eigenvalues
// of D^{-1/2} W D^{-1/2}.
inline std::pair<double, double> proper_rho_interval(const SpatialGraph& graph) {
  const int S = graph.size();
  if ((graph.degrees.array() <= 0.0).any())
    throw ValidationError("proper CAR requires every location to have a neighbour");
  Eigen::VectorXd dinv_sqrt = graph.degrees.array().rsqrt();
  Eigen::MatrixXd scaled =
      dinv_sqrt.asDiagonal() * graph.adjacency * dinv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled);
  const double lambda_min = es.eigenvalues()(0);
  const double lambda_max = es.eigenvalues()(S - 1);
  return {1.0 / lambda_min, 1.0 / lambda_max};
}

// Log-density of the (M)CAR prior up to an additive constant:
// -rank(D - rho W)/2 * log|Sigma| - 1/2 * sum_kl (Sigma^-1)_kl e_k' (D-rho W) e_l,
// evaluated without materializing the Kronecker product.
inline double mcar_log_density(const Eigen::MatrixXd& effects, const McarSpec& spec) {
  const SpatialGraph& g = *spec.graph;
  const int S = g.size();
  const auto p = effects.rows();
  if (effects.cols() != S) throw ValidationError("effects width does not match graph");
  if (spec.sigma.rows() != p || spec.sigma.cols() != p)
    throw ValidationError("covariance dimension does not match effects");

  double rho = 1.0;
  int rank = g.laplacian_rank();
  if (spec.proper) {
    auto [lo, hi] = proper_rho_interval(g);
    // The top eigenvalue of D^{-1/2} W D^{-1/2} is exactly 1 for a connected
    // graph but the solver returns 1 - eps; compare with a strict margin.
    const double margin = 1e-9;
    if (!(spec.rho > lo + margin && spec.rho < hi - margin))
      throw ValidationError("propriety parameter out of range (" + std::to_string(lo) + ", " +
                            std::to_string(hi) + ")");
    rho = spec.rho;
    rank = S;
  }

  Eigen::LLT<Eigen::MatrixXd> llt(spec.sigma);
  if (llt.info() != Eigen::Success)
    throw ValidationError("conditional covariance is not positive-definite");
  const Eigen::MatrixXd sigma_inv =
      llt.solve(Eigen::MatrixXd::Identity(p, p));
  double log_det_sigma = 0.0;
  for (Eigen::Index i = 0; i < p; ++i)
    log_det_sigma += 2.0 * std::log(llt.matrixL()(i, i));

  Eigen::MatrixXd precision = Eigen::MatrixXd(g.degrees.asDiagonal()) - rho * g.adjacency;
  const Eigen::MatrixXd cross = effects * precision * effects.transpose();  // p x p
  const double quad = (sigma_inv.array() * cross.array()).sum();
  return -0.5 * rank * log_det_sigma - 0.5 * quad;
}

inline double lognormal_log_density(double x, double mu, double sigma2) {
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  const double lx = std::log(x);
  const double r = lx - mu;
  return -lx - 0.5 * std::log(2.0 * std::numbers::pi * sigma2) - r * r / (2.0 * sigma2);
}

// Lognormal log-likelihood of regional damages, constants included. Latents
// supply the severity and the per-location split for every storm.
template <typename StormRange>
double damage_log_likelihood(const StormRange& storms, const std::vector<StormLatents>& latents,
                             const DamageParams& params) {
  if (static_cast<std::size_t>(std::size(storms)) != latents.size())
    throw ValidationError("latents missing for some storms");
  const double sigma2 = params.log_damage_var;
  double ll = 0.0;
  std::size_t i = 0;
  for (const auto& storm : storms) {
    const auto& latent = latents[i++];
    if (latent.regional_damages.size() != storm.path.size())
      throw ValidationError("latent damage split does not match path of storm " + storm.id);
    for (std::size_t m = 0; m < storm.path.size(); ++m) {
      const double y = latent.regional_damages[m];
      if (y <= 0.0) throw ValidationError("non-positive regional damage in storm " + storm.id);
      const double mu = params.intercepts(storm.phase) +
                        params.spatial_effects(storm.phase, storm.path[m]) + latent.severity;
      ll += lognormal_log_density(y, mu, sigma2);
    }
  }
  return ll;
}

namespace detail {

// Gauss-Hermite rule (weight e^{-x^2}) by Golub-Welsch; cached.
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd log_weights;
  Eigen::VectorXd log_weights_plus_x2;  // log(w_i) + x_i^2, for open integrals
};

inline const GaussHermite& gauss_hermite(int order) {
  static GaussHermite cache64 = [] {
    constexpr int n = 64;
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int j = 1; j < n; ++j) {
      const double b = std::sqrt(j / 2.0);
      jacobi(j - 1, j) = b;
      jacobi(j, j - 1) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    GaussHermite gh;
    gh.nodes = es.eigenvalues();
    gh.log_weights.resize(n);
    gh.log_weights_plus_x2.resize(n);
    const double log_mu0 = 0.5 * std::log(std::numbers::pi);
    for (int i = 0; i < n; ++i) {
      gh.log_weights(i) = log_mu0 + 2.0 * std::log(std::abs(es.eigenvectors()(0, i)));
      gh.log_weights_plus_x2(i) = gh.log_weights(i) + gh.nodes(i) * gh.nodes(i);
    }
    return gh;
  }();
  if (order != 64) throw ValidationError("only the 64-node Gauss-Hermite rule is built in");
  return cache64;
}

}  // namespace detail

inline constexpr int kMgfQuadratureOrder = 64;

// log E[exp(s X)] for X ~ Lognormal(mu, sigma2), s <= 0.
//
// Writes the expectation as (2 pi)^{-1/2} integral of exp(h(z)) with
// h(z) = s e^{mu + sd z} - z^2/2, locates the unique maximum of the strictly
// concave h, and applies the Gauss-Hermite rule centered and scaled at that
// peak. The plain rule loses the integrand once the transition point drifts
// past the node range (heavy-damage scale); the centered rule stays accurate
// there, and everything runs in log space because the mgf itself underflows.
inline double log_lognormal_mgf(double mu, double sigma2, double s,
                                int order = kMgfQuadratureOrder) {
  if (s > 0.0) throw ValidationError("lognormal mgf is finite only for s <= 0");
  if (sigma2 < 0.0) throw ValidationError("sigma2 must be nonnegative");
  if (s == 0.0) return 0.0;
  if (sigma2 == 0.0) return s * std::exp(mu);
  const auto& gh = detail::gauss_hermite(order);
  const double sd = std::sqrt(sigma2);

  auto exp_arg = [&](double z) {
    const double q = mu + sd * z;
    return (q > 700.0) ? std::numeric_limits<double>::infinity() : std::exp(q);
  };
  // h'(z) = s sd e^{mu + sd z} - z, strictly decreasing; bracket then bisect.
  auto hprime = [&](double z) { return s * sd * exp_arg(z) - z; };
  double lo = 0.0, hi = 0.0, step = 1.0;
  while (hprime(lo) <= 0.0) {
    hi = lo;
    lo -= step;
    step *= 2.0;
    if (lo < -1e9) throw NumericalError("mgf peak search failed to bracket");
  }
  step = 1.0;
  while (hprime(hi) > 0.0) {
    hi += step;
    step *= 2.0;
    if (hi > 1e9) throw NumericalError("mgf peak search failed to bracket");
  }
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (hprime(mid) > 0.0 ? lo : hi) = mid;
  }
  const double z_peak = 0.5 * (lo + hi);
  const double x_peak = s * exp_arg(z_peak);       // s e^{mu + sd z*} <= 0
  const double curvature = 1.0 - sigma2 * x_peak;  // -h''(z*) >= 1
  // z = z* + scale * y with curvature * scale^2 / 2 = 2, so the transformed
  // exponent h + y^2 still decays like e^{-y^2}; the Gauss-Hermite factors
  // w_i e^{x_i^2} grow toward the edge nodes and a slower-decaying
  // transform would let them dominate the sum.
  const double scale = 2.0 / std::sqrt(curvature);

  double max_term = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd terms(gh.nodes.size());
  for (Eigen::Index i = 0; i < gh.nodes.size(); ++i) {
    const double z = z_peak + scale * gh.nodes(i);
    terms(i) = gh.log_weights_plus_x2(i) + s * exp_arg(z) - 0.5 * z * z;
    max_term = std::max(max_term, terms(i));
  }
  if (max_term == -std::numeric_limits<double>::infinity()) return max_term;
  long double acc = 0.0L;
  for (Eigen::Index i = 0; i < terms.size(); ++i)
    acc += std::exp(static_cast<long double>(terms(i) - max_term));
  return max_term + static_cast<double>(std::log(acc)) + std::log(scale) -
         0.5 * std::log(2.0 * std::numbers::pi);
}

inline double lognormal_mgf(double mu, double sigma2, double s,
                            int order = kMgfQuadratureOrder) {
  return std::exp(log_lognormal_mgf(mu, sigma2, s, order));
}

struct LognormalMatchResult {
  double mu = 0.0;
  double sigma2 = 0.0;
  Eigen::Vector2d residuals = Eigen::Vector2d::Zero();  // log-mgf residuals
  int iterations = 0;
};

inline constexpr double kMatchPoint1 = -0.001;
inline constexpr double kMatchPoint2 = -0.005;

namespace detail {

// Solves log mgf(mu, sigma2, s) = target in mu (the log-mgf is strictly
// decreasing in mu with range (-inf, 0)) by bracketed secant.
inline double solve_mgf_mu(double sigma2, double s, double target, double mu_init) {
  auto f_of = [&](double m) { return log_lognormal_mgf(m, sigma2, s) - target; };
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  double f_lo = 0.0, f_hi = 0.0;
  double mu = mu_init;
  double f = f_of(mu);
  double step = 1.0;
  while (!std::isfinite(lo) || !std::isfinite(hi)) {
    if (f > 0.0) {
      lo = mu;
      f_lo = f;
    } else {
      hi = mu;
      f_hi = f;
    }
    if (std::isfinite(lo) && std::isfinite(hi)) break;
    mu += (f > 0.0 ? step : -step);
    step *= 2.0;
    if (std::abs(mu) > 1e8) throw NumericalError("mgf mu-solve failed to bracket the root");
    f = f_of(mu);
  }
  for (int it = 0; it < 200; ++it) {
    // False position with interleaved bisection so one-sided stalls cannot
    // happen on a convex residual.
    double next = lo - f_lo * (hi - lo) / (f_hi - f_lo);
    if (it % 2 == 1 || !std::isfinite(next) || next <= lo || next >= hi)
      next = 0.5 * (lo + hi);
    if (next == lo || next == hi) break;
    mu = next;
    f = f_of(mu);
    if (std::abs(f) < 1e-13) break;
    if (f > 0.0) {
      lo = mu;
      f_lo = f;
    } else {
      hi = mu;
      f_hi = f;
    }
  }
  return mu;
}

}  // namespace detail

// Approximates a sum of independent lognormals by a single lognormal whose
// mgf matches the product mgf at two nonpositive points. Fenton-Wilkinson
// moment matching seeds the iteration; the solve runs in (mu, log sigma2)
// so sigma2 stays positive. The first equation is profiled out by a Newton
// solve in mu; the second is bracketed in log sigma2, which is robust to the
// quadrature-induced plateau the mgf surface develops at heavy-damage scale.
inline LognormalMatchResult lognormal_sum_match(
    const std::vector<std::pair<double, double>>& components,
    std::pair<double, double> match_points = {kMatchPoint1, kMatchPoint2},
    double tolerance = 1e-10, int max_iterations = 100,
    const LognormalMatchResult* warm_start = nullptr) {
  if (components.size() < 2)
    throw ValidationError("lognormal_sum_match needs at least two components");
  const double s1 = match_points.first, s2 = match_points.second;
  if (s1 > 0.0 || s2 > 0.0) throw ValidationError("match points must be nonpositive");

  double g1 = 0.0, g2 = 0.0;
  for (const auto& [mu, sigma2] : components) {
    if (sigma2 < 0.0) throw ValidationError("component sigma2 must be nonnegative");
    g1 += log_lognormal_mgf(mu, sigma2, s1);
    g2 += log_lognormal_mgf(mu, sigma2, s2);
  }

  // Fenton-Wilkinson start: match the mean and variance of the sum.
  double m1 = 0.0, var = 0.0;
  for (const auto& [mu, sigma2] : components) {
    m1 += std::exp(mu + 0.5 * sigma2);
    var += std::expm1(sigma2) * std::exp(2.0 * mu + sigma2);
  }
  double t = std::log(std::max(std::log1p(var / (m1 * m1)), 1e-12));
  double mu_hint = std::log(m1) - 0.5 * std::exp(t);
  if (warm_start != nullptr) {
    t = std::log(std::max(warm_start->sigma2, 1e-300));
    mu_hint = warm_start->mu;
  }

  LognormalMatchResult result;
  int evaluations = 0;
  // h(t): residual of the second equation with the first profiled out.
  auto h_of = [&](double tt) {
    ++evaluations;
    const double sigma2 = std::exp(tt);
    const double mu = detail::solve_mgf_mu(sigma2, s1, g1, mu_hint);
    mu_hint = mu;
    result.mu = mu;
    result.sigma2 = sigma2;
    return log_lognormal_mgf(mu, sigma2, s2) - g2;
  };

  double h = h_of(t);
  double t_lo = t, h_lo = h, t_hi = t, h_hi = h;
  double stride = 1.0;
  // h is increasing in t; expand until the root is bracketed (or residuals
  // are already inside tolerance, e.g. near-degenerate components).
  while (h_lo * h_hi > 0.0 && std::abs(h) > tolerance && evaluations < max_iterations) {
    if (h > 0.0) {
      t_lo -= stride;
      h = h_lo = h_of(t_lo);
      t = t_lo;
    } else {
      t_hi += stride;
      h = h_hi = h_of(t_hi);
      t = t_hi;
    }
    stride *= 2.0;
    if (t_lo < -700.0 || t_hi > 700.0) break;
  }
  if (h_lo * h_hi <= 0.0) {
    int inner = 0;
    while (std::abs(h) > tolerance && evaluations < max_iterations &&
           t_hi - t_lo > 1e-15 * (1.0 + std::abs(t_lo))) {
      // False position with interleaved bisection.
      double next = t_lo - h_lo * (t_hi - t_lo) / (h_hi - h_lo);
      if (++inner % 2 == 0 || !std::isfinite(next) || next <= t_lo || next >= t_hi)
        next = 0.5 * (t_lo + t_hi);
      t = next;
      h = h_of(t);
      if (h > 0.0) {
        t_hi = t;
        h_hi = h;
      } else {
        t_lo = t;
        h_lo = h;
      }
    }
  }

  result.iterations = evaluations;
  result.residuals(0) = log_lognormal_mgf(result.mu, result.sigma2, s1) - g1;
  result.residuals(1) = log_lognormal_mgf(result.mu, result.sigma2, s2) - g2;
  if (result.residuals.cwiseAbs().maxCoeff() > 1e-8)
    throw NumericalError("lognormal moment match did not converge: residuals " +
                         std::to_string(result.residuals(0)) + ", " +
                         std::to_string(result.residuals(1)));
  return result;
}

// Lognormal parameters of the running remainder Y - (Y_1 + ... + Y_m) for
// m = 1..M-1, given per-component location parameters mus (length M) and the
// shared log-damage variance. The final remainder is a single component and
// is exact; earlier ones come from the two-point mgf match.
inline std::vector<std::pair<double, double>> decomposition_tail_params(
    const std::vector<double>& mus, double sigma2,
    std::pair<double, double> match_points = {kMatchPoint1, kMatchPoint2},
    std::vector<LognormalMatchResult>* warm_cache = nullptr) {
  const int M = static_cast<int>(mus.size());
  if (M < 2) throw ValidationError("decomposition needs at least two components");
  if (warm_cache != nullptr && static_cast<int>(warm_cache->size()) != std::max(M - 2, 0))
    warm_cache->assign(std::max(M - 2, 0), LognormalMatchResult{});
  std::vector<std::pair<double, double>> tails(M - 1);
  tails[M - 2] = {mus[M - 1], sigma2};
  for (int m = M - 3; m >= 0; --m) {
    std::vector<std::pair<double, double>> rest;
    for (int l = m + 1; l < M; ++l) rest.push_back({mus[l], sigma2});
    const LognormalMatchResult* warm = nullptr;
    if (warm_cache != nullptr && (*warm_cache)[m].sigma2 > 0.0) warm = &(*warm_cache)[m];
    auto match = lognormal_sum_match(rest, match_points, 1e-10, 100, warm);
    if (warm_cache != nullptr) (*warm_cache)[m] = match;
    tails[m] = {match.mu, match.sigma2};
  }
  return tails;
}

// Appendix-style chained conditional log-density of the first M-1 regional
// damages given the observed total: each term pairs the component's own
// lognormal density with the (matched) lognormal density of the remainder.
// Simplex violations are outside the support.
inline std::optional<double> latent_decomposition_log_density(
    const std::vector<double>& partial, double total, const std::vector<double>& mus,
    double sigma2, const std::vector<std::pair<double, double>>& tails) {
  const int M = static_cast<int>(mus.size());
  if (static_cast<int>(partial.size()) != M - 1)
    throw ValidationError("partial damages must have M - 1 entries");
  if (static_cast<int>(tails.size()) != M - 1)
    throw ValidationError("tail parameters must have M - 1 entries");
  double running = 0.0;
  for (double y : partial) {
    if (y <= 0.0) return std::nullopt;
    running += y;
  }
  if (running >= total) return std::nullopt;

  double ld = 0.0;
  running = 0.0;
  for (int m = 0; m < M - 1; ++m) {
    running += partial[m];
    ld += lognormal_log_density(partial[m], mus[m], sigma2);
    ld += lognormal_log_density(total - running, tails[m].first, tails[m].second);
  }
  return ld;
}

inline std::optional<double> latent_decomposition_log_density(
    const std::vector<double>& partial, double total, const std::vector<double>& mus,
    double sigma2, std::pair<double, double> match_points = {kMatchPoint1, kMatchPoint2}) {
  return latent_decomposition_log_density(partial, total, mus, sigma2,
                                          decomposition_tail_params(mus, sigma2, match_points));
}

}  // namespace stormrisk
