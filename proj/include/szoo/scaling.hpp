#pragma once

// Compound scaling of depth, width and input resolution.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "szoo/architectures.hpp"

namespace szoo {

struct ScalingCoefficients {
  double alpha = 1.0, beta = 1.0, gamma = 1.0;
  int phi = 0;

  /// alpha * beta^2 * gamma^2.
  double product() const { return alpha * beta * beta * gamma * gamma; }
  /// Accepts products up to 2 + tolerance; every coefficient must be >= 1.
  bool satisfies_constraint(double tolerance = 0.05) const;
};

struct ScalingMultipliers {
  double d = 1.0, w = 1.0, r = 1.0;
};

ScalingMultipliers compound_multipliers(const ScalingCoefficients& c);

/// round(base * gamma^phi) to the nearest multiple of 10, clamped to [60, 120].
int resolve_resolution(int base_px, double gamma, int phi);

/// Scaled copy of base. The name's "B0" tag becomes "B<phi>".
ModelConfig apply_scaling(const ModelConfig& base, const ScalingCoefficients& c);

struct GridResult {
  ScalingCoefficients coefficients;
  ModelConfig config;
  double score = 0.0;
  std::int64_t params = 0;
  /// Other candidates that built the same network and were dropped.
  std::vector<ScalingCoefficients> merged;
};

using ConfigScorer = std::function<double(const ModelConfig&)>;

/// Builds each candidate's scaled config, keeps the lowest-product member of
/// every group that yields the same network, scores survivors and ranks them
/// by score (descending), then product, then parameter count.
std::vector<GridResult> grid_search(const ModelConfig& base, const std::vector<ScalingCoefficients>& candidates,
                                    const ConfigScorer& evaluate);

/// Published coefficient sets per family.
ScalingCoefficients default_coefficients(Family f);

}  // namespace szoo
