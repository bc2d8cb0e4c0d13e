#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace probloc::cli {

inline constexpr double kLossGradTolerance = 1e-5;
inline constexpr double kPnpGradTolerance = 1e-3;

struct GradcheckConfig {
  std::uint64_t seed = 0;
  /// Random inputs per loss target.
  int loss_samples = 1000;
  /// Scenes for the PnP backward targets; every point column is checked.
  int pnp_scenes = 5;
  int pnp_points = 20;
};

struct GradcheckTarget {
  std::string name;
  /// Scalar derivatives compared.
  std::size_t samples = 0;
  double max_rel_err = 0.0;
  double tolerance = 0.0;

  bool pass() const { return samples > 0 && max_rel_err <= tolerance; }
};

/// Compares every analytic gradient against central finite differences.
/// Loss derivatives use |a - n| / max(1, |a|, |n|); PnP backward columns use
/// the max-norm error relative to the column's max-norm.
std::vector<GradcheckTarget> run_gradcheck(const GradcheckConfig& cfg);

void print_gradcheck(std::ostream& os, const std::vector<GradcheckTarget>& targets);

}  // namespace probloc::cli
