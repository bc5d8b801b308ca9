#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stormrisk/common.hpp"
#include "stormrisk/rng.hpp"

namespace stormrisk {

// Areal location set with line-of-sight adjacency. Immutable after
// construction; safe to share across chains.
struct SpatialGraph {
  std::vector<std::string> locations;
  std::vector<std::pair<int, int>> edges;   // first < second, sorted, unique
  Eigen::MatrixXd adjacency;                // S x S symmetric 0/1, zero diagonal
  Eigen::VectorXd degrees;                  // row sums of adjacency
  std::vector<std::uint32_t> neighbor_masks;

  int size() const { return static_cast<int>(locations.size()); }

  int index_of(const std::string& name) const {
    for (int s = 0; s < size(); ++s)
      if (locations[s] == name) return s;
    return -1;
  }

  Eigen::MatrixXd laplacian() const {
    return Eigen::MatrixXd(degrees.asDiagonal()) - adjacency;
  }

  int n_components() const {
    const int S = size();
    std::vector<int> comp(S, -1);
    int n = 0;
    for (int root = 0; root < S; ++root) {
      if (comp[root] >= 0) continue;
      std::vector<int> stack{root};
      comp[root] = n;
      while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w = 0; w < S; ++w)
          if (adjacency(v, w) != 0.0 && comp[w] < 0) {
            comp[w] = n;
            stack.push_back(w);
          }
      }
      ++n;
    }
    return n;
  }

  // rank(D - W) for a graph Laplacian.
  int laplacian_rank() const { return size() - n_components(); }
};

inline SpatialGraph build_graph(const std::vector<std::string>& locations,
                                const std::vector<std::pair<std::string, std::string>>& edges) {
  SpatialGraph g;
  g.locations = locations;
  const int S = g.size();
  if (S < 1) throw ValidationError("graph needs at least one location");
  if (S > 32) throw ValidationError("graph exceeds 32 locations");
  {
    std::set<std::string> seen;
    for (const auto& name : locations)
      if (!seen.insert(name).second)
        throw ValidationError("duplicate location identifier: '" + name + "'");
  }
  g.adjacency = Eigen::MatrixXd::Zero(S, S);
  std::set<std::pair<int, int>> edge_set;
  for (const auto& [a, b] : edges) {
    int i = g.index_of(a), j = g.index_of(b);
    if (i < 0) throw ValidationError("edge endpoint '" + a + "' is not a listed location");
    if (j < 0) throw ValidationError("edge endpoint '" + b + "' is not a listed location");
    if (i == j) throw ValidationError("self-loop on location '" + a + "'");
    edge_set.insert({std::min(i, j), std::max(i, j)});
  }
  g.edges.assign(edge_set.begin(), edge_set.end());
  for (const auto& [i, j] : g.edges) {
    g.adjacency(i, j) = 1.0;
    g.adjacency(j, i) = 1.0;
  }
  g.degrees = g.adjacency.rowwise().sum();
  g.neighbor_masks.assign(S, 0u);
  for (const auto& [i, j] : g.edges) {
    g.neighbor_masks[i] |= (1u << j);
    g.neighbor_masks[j] |= (1u << i);
  }
  return g;
}

// Convenience for synthetic graphs: locations named L1..LS.
inline SpatialGraph build_graph(int n_locations,
                                const std::vector<std::pair<int, int>>& index_edges) {
  std::vector<std::string> names;
  names.reserve(n_locations);
  for (int s = 0; s < n_locations; ++s) names.push_back("L" + std::to_string(s + 1));
  std::vector<std::pair<std::string, std::string>> edges;
  edges.reserve(index_edges.size());
  for (const auto& [i, j] : index_edges) edges.push_back({names.at(i), names.at(j)});
  return build_graph(names, edges);
}

inline bool subset_connected(std::uint32_t mask, const std::vector<std::uint32_t>& neighbor_masks) {
  if (mask == 0) return false;
  std::uint32_t reached = mask & (~mask + 1u);  // lowest set bit
  for (;;) {
    std::uint32_t next = reached;
    std::uint32_t b = reached;
    while (b) {
      int v = std::countr_zero(b);
      b &= b - 1;
      next |= neighbor_masks[v] & mask;
    }
    if (next == reached) break;
    reached = next;
  }
  return reached == mask;
}

inline int subset_internal_edges(std::uint32_t mask, const std::vector<std::uint32_t>& neighbor_masks) {
  int twice = 0;
  std::uint32_t b = mask;
  while (b) {
    int v = std::countr_zero(b);
    b &= b - 1;
    twice += std::popcount(neighbor_masks[v] & mask);
  }
  return twice / 2;
}

// All nonempty LOS-connected vertex subsets, in ascending bitmask order,
// with internal edge counts. Built once per graph and reused by every
// normalizer evaluation.
struct ConnectedSubsetTable {
  int n_locations = 0;
  std::vector<std::uint32_t> subsets;
  std::vector<std::int32_t> internal_edge_counts;

  std::size_t size() const { return subsets.size(); }
};

inline ConnectedSubsetTable enumerate_connected_subsets(const SpatialGraph& graph,
                                                        int enumeration_cap = 24) {
  const int S = graph.size();
  if (S > enumeration_cap)
    throw ValidationError("graph has " + std::to_string(S) +
                          " locations; exact path normalization is capped at " +
                          std::to_string(enumeration_cap));
  ConnectedSubsetTable table;
  table.n_locations = S;
  const std::uint32_t full = (S == 32) ? 0xffffffffu : ((1u << S) - 1u);
  for (std::uint32_t mask = 1; mask <= full; ++mask) {
    if (!subset_connected(mask, graph.neighbor_masks)) continue;
    table.subsets.push_back(mask);
    table.internal_edge_counts.push_back(
        static_cast<std::int32_t>(subset_internal_edges(mask, graph.neighbor_masks)));
  }
  return table;
}

struct MoransResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Moran's I with binary weights and a two-sided permutation test. The
// observed arrangement counts as one of the relabelings; deviations are
// measured from the permutation-null mean -1/(S-1).
inline MoransResult morans_i(const Eigen::VectorXd& values, const SpatialGraph& graph,
                             int n_permutations, std::uint64_t rng_seed) {
  const int S = graph.size();
  if (S < 2) throw ValidationError("Moran's I needs at least two locations");
  if (graph.edges.empty()) throw ValidationError("Moran's I undefined on a graph with no edges");
  if (values.size() != S) throw ValidationError("value vector length does not match graph");

  Eigen::VectorXd z = values.array() - values.mean();
  const double denom = z.squaredNorm();
  if (denom <= 0.0) throw ValidationError("Moran's I undefined for a constant input vector");
  const double s0 = 2.0 * static_cast<double>(graph.edges.size());

  auto statistic_of = [&](const Eigen::VectorXd& zz) {
    double cross = 0.0;
    for (const auto& [i, j] : graph.edges) cross += zz(i) * zz(j);
    return (static_cast<double>(S) / s0) * (2.0 * cross) / denom;
  };

  MoransResult result;
  result.statistic = statistic_of(z);

  const double null_mean = -1.0 / static_cast<double>(S - 1);
  const double observed_dev = std::abs(result.statistic - null_mean);
  Rng rng = make_rng(rng_seed);
  Eigen::VectorXd perm = z;
  int extreme = 0;
  for (int it = 0; it < n_permutations; ++it) {
    for (int i = S - 1; i > 0; --i)
      std::swap(perm(i), perm(uniform_int(rng, i + 1)));
    if (std::abs(statistic_of(perm) - null_mean) >= observed_dev - 1e-12) ++extreme;
  }
  result.p_value = (1.0 + extreme) / (1.0 + n_permutations);
  return result;
}

}  // namespace stormrisk
