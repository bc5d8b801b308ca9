#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "stormrisk/common.hpp"
#include "stormrisk/rng.hpp"
#include "stormrisk/spatial_graph.hpp"

namespace stormrisk {

// Autologistic path-model parameters: per-phase intercepts and spatial
// effects, one shared clustering coefficient, and the MCAR hyper-covariance.
struct PathParams {
  Eigen::Vector3d intercepts = Eigen::Vector3d::Zero();
  Eigen::Matrix3Xd spatial_effects;  // 3 x S, rows sum to 0 once centered
  double clustering = 1.0;           // phi > 0
  Eigen::Matrix3d spatial_cov = Eigen::Matrix3d::Identity();

  explicit PathParams(int n_locations = 0)
      : spatial_effects(Eigen::Matrix3Xd::Zero(3, n_locations)) {}

  int n_locations() const { return static_cast<int>(spatial_effects.cols()); }
};

// Hit-indicator vector for one storm.
struct StormPath {
  std::vector<std::uint8_t> indicators;

  int size() const { return static_cast<int>(indicators.size()); }

  std::uint32_t mask() const {
    std::uint32_t m = 0;
    for (int s = 0; s < size(); ++s)
      if (indicators[s]) m |= (1u << s);
    return m;
  }

  int n_hits() const {
    int n = 0;
    for (auto v : indicators) n += (v != 0);
    return n;
  }

  static StormPath from_mask(std::uint32_t mask, int n_locations) {
    StormPath path;
    path.indicators.assign(n_locations, 0);
    for (int s = 0; s < n_locations; ++s)
      if (mask & (1u << s)) path.indicators[s] = 1;
    return path;
  }
};

// Conditional log-odds that location s is hit given the rest of the path:
// intercept + spatial effect + clustering times the number of hit LOS
// neighbours.
inline double conditional_hit_logit(int s, const std::vector<std::uint8_t>& others, int phase,
                                    const PathParams& params, const SpatialGraph& graph) {
  const int S = graph.size();
  if (s < 0 || s >= S) throw ValidationError("location index out of range");
  if (static_cast<int>(others.size()) != S)
    throw ValidationError("indicator vector length does not match graph");
  int hit_neighbors = 0;
  for (const auto& [i, j] : graph.edges) {
    if (i == s && others[j]) ++hit_neighbors;
    if (j == s && others[i]) ++hit_neighbors;
  }
  return params.intercepts(phase) + params.spatial_effects(phase, s) +
         params.clustering * hit_neighbors;
}

namespace detail {

// log(sum(exp(w))) with a long double accumulator; the pmf-normalization
// contract is 1e-12, tighter than naive double summation over 16k terms.
inline double logsumexp(const Eigen::VectorXd& w) {
  const double m = w.maxCoeff();
  long double acc = 0.0L;
  for (Eigen::Index i = 0; i < w.size(); ++i) acc += std::exp(static_cast<long double>(w(i) - m));
  return m + static_cast<double>(std::log(acc));
}

}  // namespace detail

// Unnormalized log-weight of a connected subset under phase k.
inline double path_log_weight(std::uint32_t mask, int edge_count, int phase,
                              const PathParams& params) {
  double w = params.intercepts(phase) * std::popcount(mask) +
             params.clustering * edge_count;
  std::uint32_t b = mask;
  while (b) {
    int s = std::countr_zero(b);
    b &= b - 1;
    w += params.spatial_effects(phase, s);
  }
  return w;
}

inline Eigen::VectorXd path_log_weights(const PathParams& params, int phase,
                                        const ConnectedSubsetTable& table) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(table.size()));
  for (std::size_t j = 0; j < table.size(); ++j)
    w(static_cast<Eigen::Index>(j)) =
        path_log_weight(table.subsets[j], table.internal_edge_counts[j], phase, params);
  return w;
}

// log of the normalizing sum over LOS-connected subsets (null path excluded
// by construction of the table).
inline double path_log_normalizer(const PathParams& params, int phase,
                                  const ConnectedSubsetTable& table) {
  if (table.size() == 0) throw ValidationError("empty connected-subset table");
  return detail::logsumexp(path_log_weights(params, phase, table));
}

// Log-pmf of a path; disconnected or empty paths are outside the support and
// yield nullopt rather than -inf arithmetic.
inline std::optional<double> path_log_pmf(const StormPath& path, int phase,
                                          const PathParams& params,
                                          const ConnectedSubsetTable& table) {
  const std::uint32_t mask = path.mask();
  if (mask == 0) return std::nullopt;
  auto it = std::lower_bound(table.subsets.begin(), table.subsets.end(), mask);
  if (it == table.subsets.end() || *it != mask) return std::nullopt;
  const auto j = static_cast<std::size_t>(it - table.subsets.begin());
  const double w = path_log_weight(mask, table.internal_edge_counts[j], phase, params);
  return w - path_log_normalizer(params, phase, table);
}

// Exact draw from the restricted autologistic pmf by inverse CDF over the
// enumerated support.
inline StormPath sample_path(int phase, const PathParams& params,
                             const ConnectedSubsetTable& table, Rng& rng) {
  const Eigen::VectorXd w = path_log_weights(params, phase, table);
  const double m = w.maxCoeff();
  Eigen::VectorXd p = (w.array() - m).exp();
  const double total = p.sum();
  double u = uniform01(rng) * total;
  std::size_t pick = table.size() - 1;
  double acc = 0.0;
  for (std::size_t j = 0; j < table.size(); ++j) {
    acc += p(static_cast<Eigen::Index>(j));
    if (u <= acc) {
      pick = j;
      break;
    }
  }
  return StormPath::from_mask(table.subsets[pick], table.n_locations);
}

// Incrementally maintained per-subset log-weights and log-normalizer for one
// phase. Metropolis sweeps evaluate candidate normalizers under scalar
// shifts; single-effect shifts touch only the subsets containing that
// location (rank-one update), via Z' = Z * (1 + (e^d - 1) * P(c contains s)).
class PathNormalizerCache {
 public:
  explicit PathNormalizerCache(const ConnectedSubsetTable& table) : table_(&table) {
    const auto n = static_cast<Eigen::Index>(table.size());
    sizes_.resize(n);
    edges_.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      sizes_(j) = static_cast<double>(std::popcount(table.subsets[j]));
      edges_(j) = static_cast<double>(table.internal_edge_counts[j]);
    }
    containing_.assign(table.n_locations, {});
    for (std::size_t j = 0; j < table.size(); ++j) {
      std::uint32_t b = table.subsets[j];
      while (b) {
        int s = std::countr_zero(b);
        b &= b - 1;
        containing_[s].push_back(static_cast<std::int32_t>(j));
      }
    }
    weights_.setZero(n);
  }

  void rebuild(const PathParams& params, int phase) {
    weights_ = path_log_weights(params, phase, *table_);
    logz_ = detail::logsumexp(weights_);
  }

  double log_normalizer() const { return logz_; }

  double logz_after_intercept_shift(double delta) const {
    return logz_of(weights_ + delta * sizes_);
  }

  double logz_after_clustering_shift(double delta) const {
    return logz_of(weights_ + delta * edges_);
  }

  double logz_after_effect_shift(int s, double delta) const {
    if (std::abs(delta) > 30.0) {  // fall back to a full pass for huge steps
      Eigen::VectorXd w = weights_;
      for (auto j : containing_[s]) w(j) += delta;
      return logz_of(w);
    }
    long double r = 0.0L;
    for (auto j : containing_[s]) r += std::exp(static_cast<long double>(weights_(j) - logz_));
    const double x = std::expm1(delta) * static_cast<double>(r);
    if (x <= -1.0) return -std::numeric_limits<double>::infinity();
    return logz_ + std::log1p(x);
  }

  void apply_intercept_shift(double delta, double new_logz) {
    weights_ += delta * sizes_;
    logz_ = new_logz;
  }

  void apply_clustering_shift(double delta, double new_logz) {
    weights_ += delta * edges_;
    logz_ = new_logz;
  }

  void apply_effect_shift(int s, double delta, double new_logz) {
    for (auto j : containing_[s]) weights_(j) += delta;
    logz_ = new_logz;
  }

 private:
  static double logz_of(const Eigen::VectorXd& w) { return detail::logsumexp(w); }

  const ConnectedSubsetTable* table_;
  Eigen::VectorXd weights_, sizes_, edges_;
  std::vector<std::vector<std::int32_t>> containing_;
  double logz_ = 0.0;
};

}  // namespace stormrisk
