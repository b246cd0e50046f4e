#include "szoo/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace szoo {

bool ScalingCoefficients::satisfies_constraint(double tolerance) const {
  return alpha >= 1.0 && beta >= 1.0 && gamma >= 1.0 && phi >= 0 && product() <= 2.0 + tolerance;
}

ScalingMultipliers compound_multipliers(const ScalingCoefficients& c) {
  if (c.phi < 0) throw std::invalid_argument("phi must be nonnegative");
  return {std::pow(c.alpha, c.phi), std::pow(c.beta, c.phi), std::pow(c.gamma, c.phi)};
}

int resolve_resolution(int base_px, double gamma, int phi) {
  const double px = base_px * std::pow(gamma, phi);
  const int r = static_cast<int>(std::lround(px / 10.0)) * 10;
  return std::clamp(r, 60, 120);
}

ModelConfig apply_scaling(const ModelConfig& base, const ScalingCoefficients& c) {
  if (c.phi == 0) return base;
  const auto m = compound_multipliers(c);
  ModelConfig out = base;
  out.depth_multiplier = base.depth_multiplier * m.d;
  out.width_multiplier = base.width_multiplier * m.w;
  out.resolution = resolve_resolution(base.resolution, c.gamma, c.phi);
  const auto pos = out.name.find("B0");
  if (pos != std::string::npos) out.name.replace(pos, 2, "B" + std::to_string(c.phi));
  return out;
}

std::vector<GridResult> grid_search(const ModelConfig& base, const std::vector<ScalingCoefficients>& candidates,
                                    const ConfigScorer& evaluate) {
  // Visit in ascending product so the first member of every collision group
  // is the one kept; stable_sort keeps input order among equal products.
  std::vector<ScalingCoefficients> order = candidates;
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.product() < b.product(); });
  std::vector<GridResult> kept;
  for (const auto& c : order) {
    ModelConfig cfg = apply_scaling(base, c);
    auto it = std::find_if(kept.begin(), kept.end(), [&](const GridResult& r) { return same_network(r.config, cfg); });
    if (it != kept.end()) {
      it->merged.push_back(c);
      continue;
    }
    GridResult r;
    r.coefficients = c;
    r.config = cfg;
    kept.push_back(std::move(r));
  }
  for (auto& r : kept) {
    r.params = build_model(r.config, 0).count_params();
    r.score = evaluate(r.config);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const GridResult& a, const GridResult& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.coefficients.product() != b.coefficients.product()) return a.coefficients.product() < b.coefficients.product();
    return a.params < b.params;
  });
  return kept;
}

ScalingCoefficients default_coefficients(Family f) {
  if (f == Family::efficientnet) return {1.2, 1.1, 1.1, 0};
  return {1.1, 1.2, 1.1, 0};
}

}  // namespace szoo
