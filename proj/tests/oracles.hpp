#pragma once

// Test-only oracles, kept independent of the library code paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stormrisk/rng.hpp"

namespace oracles {

// BFS connectivity over an explicit adjacency matrix (no bit tricks).
inline bool bfs_connected(std::uint32_t mask, const Eigen::MatrixXd& adjacency) {
  const int S = static_cast<int>(adjacency.rows());
  std::vector<int> members;
  for (int s = 0; s < S; ++s)
    if (mask & (1u << s)) members.push_back(s);
  if (members.empty()) return false;
  std::vector<bool> visited(S, false);
  std::deque<int> queue{members.front()};
  visited[members.front()] = true;
  int reached = 0;
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    ++reached;
    for (int w : members)
      if (!visited[w] && adjacency(v, w) != 0.0) {
        visited[w] = true;
        queue.push_back(w);
      }
  }
  return reached == static_cast<int>(members.size());
}

// Every nonempty connected subset by direct scan of all 2^S - 1 masks.
inline std::vector<std::uint32_t> brute_force_connected_subsets(const Eigen::MatrixXd& adjacency) {
  const int S = static_cast<int>(adjacency.rows());
  std::vector<std::uint32_t> out;
  for (std::uint32_t mask = 1; mask < (1u << S); ++mask)
    if (bfs_connected(mask, adjacency)) out.push_back(mask);
  return out;
}

inline int count_internal_edges(std::uint32_t mask, const Eigen::MatrixXd& adjacency) {
  const int S = static_cast<int>(adjacency.rows());
  int count = 0;
  for (int i = 0; i < S; ++i)
    for (int j = i + 1; j < S; ++j)
      if ((mask & (1u << i)) && (mask & (1u << j)) && adjacency(i, j) != 0.0) ++count;
  return count;
}

// Connected Erdos-Renyi-ish random graph on n vertices (spanning tree plus
// random extra edges).
inline std::vector<std::pair<int, int>> random_connected_edges(int n, double extra_prob,
                                                               stormrisk::Rng& rng) {
  std::vector<std::pair<int, int>> edges;
  for (int v = 1; v < n; ++v) edges.push_back({stormrisk::uniform_int(rng, v), v});
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (stormrisk::uniform01(rng) < extra_prob) edges.push_back({i, j});
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

// Adaptive Simpson quadrature, for checking fixed-grid integrals.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-12, int max_depth = 40) {
  std::function<double(double, double, double, double, double, double, int)> recurse =
      [&](double lo, double hi, double flo, double fmid, double fhi, double whole, int depth) {
        double mid = 0.5 * (lo + hi);
        double lmid = 0.5 * (lo + mid), rmid = 0.5 * (mid + hi);
        double flmid = f(lmid), frmid = f(rmid);
        double left = (mid - lo) / 6.0 * (flo + 4.0 * flmid + fmid);
        double right = (hi - mid) / 6.0 * (fmid + 4.0 * frmid + fhi);
        if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
          return left + right + (left + right - whole) / 15.0;
        return recurse(lo, mid, flo, flmid, fmid, left, depth - 1) +
               recurse(mid, hi, fmid, frmid, fhi, right, depth - 1);
      };
  double mid = 0.5 * (a + b);
  double fa = f(a), fm = f(mid), fb = f(b);
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return recurse(a, mid + (b - mid), fa, fm, fb, whole, max_depth);
}

// Two-sample / one-sample Kolmogorov-Smirnov distances.
inline double ks_distance_to_uniform(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double lo = static_cast<double>(i) / n, hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(std::abs(samples[i] - lo), std::abs(samples[i] - hi)));
  }
  return d;
}

inline double ks_distance_to_cdf(std::vector<double> samples,
                                 const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double c = cdf(samples[i]);
    double lo = static_cast<double>(i) / n, hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(std::abs(c - lo), std::abs(c - hi)));
  }
  return d;
}

// Autologistic log-normalizer by direct scan of all 2^S - 1 subsets with a
// BFS connectivity filter (no subset table, no incremental updates).
inline double brute_force_path_log_normalizer(double gamma0, const Eigen::VectorXd& gamma_row,
                                              double phi, const Eigen::MatrixXd& adjacency) {
  const int S = static_cast<int>(adjacency.rows());
  std::vector<long double> terms;
  for (std::uint32_t mask = 1; mask < (1u << S); ++mask) {
    if (!bfs_connected(mask, adjacency)) continue;
    long double w = 0.0L;
    for (int s = 0; s < S; ++s)
      if (mask & (1u << s)) w += gamma0 + gamma_row(s);
    w += phi * count_internal_edges(mask, adjacency);
    terms.push_back(w);
  }
  long double m = terms.front();
  for (long double w : terms) m = std::max(m, w);
  long double acc = 0.0L;
  for (long double w : terms) acc += std::exp(w - m);
  return static_cast<double>(m + std::log(acc));
}

// MCAR log-density through the fully materialized Kronecker precision,
// location-major stacking x[p*s + k] = effects(k, s).
inline double dense_mcar_log_density(const Eigen::MatrixXd& effects, const Eigen::MatrixXd& sigma,
                                     const Eigen::MatrixXd& adjacency, double rho) {
  const int S = static_cast<int>(adjacency.rows());
  const int p = static_cast<int>(effects.rows());
  Eigen::VectorXd degrees = adjacency.rowwise().sum();
  Eigen::MatrixXd precision_graph = Eigen::MatrixXd(degrees.asDiagonal()) - rho * adjacency;
  Eigen::MatrixXd sigma_inv = sigma.inverse();
  Eigen::MatrixXd big(p * S, p * S);
  for (int s = 0; s < S; ++s)
    for (int r = 0; r < S; ++r)
      big.block(p * s, p * r, p, p) = precision_graph(s, r) * sigma_inv;
  Eigen::VectorXd x(p * S);
  for (int s = 0; s < S; ++s)
    for (int k = 0; k < p; ++k) x(p * s + k) = effects(k, s);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(precision_graph);
  lu.setThreshold(1e-9);
  const int rank = static_cast<int>(lu.rank());
  return -0.5 * rank * std::log(sigma.determinant()) - 0.5 * x.dot(big * x);
}

// log E[exp(s X)], X lognormal, by adaptive quadrature on a peak-shifted
// integrand (stable even when the mgf underflows double).
inline double log_lognormal_mgf_oracle(double mu, double sigma2, double s) {
  const double sd = std::sqrt(sigma2);
  auto h = [&](double z) { return s * std::exp(mu + sd * z) - 0.5 * z * z; };
  double peak = -1e300, zpeak = 0.0;
  for (double z = -40.0; z <= 40.0; z += 1e-3) {
    double v = h(z);
    if (v > peak) {
      peak = v;
      zpeak = z;
    }
  }
  double integral = adaptive_simpson([&](double z) { return std::exp(h(z) - peak); },
                                     zpeak - 45.0, zpeak + 45.0, 1e-15);
  return peak + std::log(integral) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Grid-normalized CDF of an unnormalized log-density on (lo, hi).
struct GridCdf {
  std::vector<double> xs, cdf;

  GridCdf(const std::function<double(double)>& log_density, double lo, double hi,
          int n_points = 1 << 15) {
    xs.resize(n_points);
    std::vector<double> ld(n_points);
    double max_ld = -1e300;
    for (int i = 0; i < n_points; ++i) {
      xs[i] = lo + (hi - lo) * (i + 0.5) / n_points;
      ld[i] = log_density(xs[i]);
      max_ld = std::max(max_ld, ld[i]);
    }
    cdf.resize(n_points);
    double acc = 0.0;
    for (int i = 0; i < n_points; ++i) {
      acc += std::exp(ld[i] - max_ld);
      cdf[i] = acc;
    }
    for (auto& c : cdf) c /= acc;
  }

  double operator()(double x) const {
    auto it = std::lower_bound(xs.begin(), xs.end(), x);
    if (it == xs.begin()) return 0.0;
    if (it == xs.end()) return 1.0;
    return cdf[static_cast<std::size_t>(it - xs.begin()) - 1];
  }
};

inline double sample_mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_variance(const std::vector<double>& xs) {
  double m = sample_mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

}  // namespace oracles
