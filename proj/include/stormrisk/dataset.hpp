#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "stormrisk/common.hpp"
#include "stormrisk/count_model.hpp"
#include "stormrisk/spatial_graph.hpp"

namespace stormrisk {

// One observed storm. The phase is resolved from the calendar during
// validation; regional_damages is empty when only the aggregate total is
// known (multi-location storms in the historical data).
struct StormRecord {
  std::string id;
  double time = 0.0;  // decimal years
  int phase = 0;
  std::vector<int> path;  // hit location indices, ascending
  double total_damage = 0.0;
  std::vector<double> regional_damages;

  int n_hits() const { return static_cast<int>(path.size()); }
};

struct Dataset {
  std::vector<StormRecord> storms;
  EnsoCalendar calendar;
  SpatialGraph graph;

  std::array<int, 3> phase_counts() const {
    std::array<int, 3> counts{0, 0, 0};
    for (const auto& s : storms) counts[s.phase]++;
    return counts;
  }

  std::vector<int> hit_tallies() const {
    std::vector<int> tallies(graph.size(), 0);
    for (const auto& s : storms)
      for (int loc : s.path) tallies[loc]++;
    return tallies;
  }
};

// Resolves phases and enforces every dataset invariant; error messages name
// the offending storm.
inline void validate_dataset(Dataset& data) {
  const int S = data.graph.size();
  for (auto& storm : data.storms) {
    const int year = static_cast<int>(std::floor(storm.time));
    if (!data.calendar.covers(year))
      throw ValidationError("storm " + storm.id + ": year " + std::to_string(year) +
                            " not covered by the ENSO calendar");
    storm.phase = data.calendar.phase(year);

    const double tau = storm.time - std::floor(storm.time);
    if (!(tau > kSeasonStart && tau <= kSeasonEnd))
      throw ValidationError("storm " + storm.id + ": time outside the season window");

    if (storm.path.empty()) throw ValidationError("storm " + storm.id + ": empty path");
    std::uint32_t mask = 0;
    for (int loc : storm.path) {
      if (loc < 0 || loc >= S)
        throw ValidationError("storm " + storm.id + ": location index out of range");
      if (mask & (1u << loc))
        throw ValidationError("storm " + storm.id + ": duplicate location in path");
      mask |= (1u << loc);
    }
    if (!subset_connected(mask, data.graph.neighbor_masks))
      throw ValidationError("storm " + storm.id +
                            ": path is not LOS-connected under the supplied graph");

    if (!(storm.total_damage > 0.0))
      throw ValidationError("storm " + storm.id + ": non-positive total damage");
    if (!storm.regional_damages.empty()) {
      if (storm.regional_damages.size() != storm.path.size())
        throw ValidationError("storm " + storm.id +
                              ": per-location damages do not match the path length");
      double sum = 0.0;
      for (double y : storm.regional_damages) {
        if (!(y > 0.0))
          throw ValidationError("storm " + storm.id + ": non-positive regional damage");
        sum += y;
      }
      if (std::abs(sum - storm.total_damage) > 1e-9 * storm.total_damage)
        throw ValidationError("storm " + storm.id +
                              ": regional damages do not sum to the total");
    }
  }
}

}  // namespace stormrisk
