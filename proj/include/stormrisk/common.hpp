#pragma once

#include <stdexcept>
#include <string>

namespace stormrisk {

inline constexpr const char* kVersion = "0.1.0";

// Hurricane season window within a year: intensity is positive only on
// (kSeasonStart, kSeasonEnd], zero elsewhere.
inline constexpr double kSeasonStart = 4.0 / 12.0;
inline constexpr double kSeasonEnd = 11.0 / 12.0;
inline constexpr double kSeasonLength = kSeasonEnd - kSeasonStart;

inline constexpr int kNumPhases = 3;

// Input/dataset inconsistencies. CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures (non-convergence, singular systems). CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline const char* phase_label(int k) {
  switch (k) {
    case 0: return "EN";
    case 1: return "NE";
    case 2: return "LN";
    default: throw ValidationError("phase index out of range: " + std::to_string(k));
  }
}

inline int phase_from_label(const std::string& label) {
  if (label == "EN") return 0;
  if (label == "NE") return 1;
  if (label == "LN") return 2;
  throw ValidationError("unknown ENSO phase label: '" + label + "' (expected EN, NE or LN)");
}

}  // namespace stormrisk
