#pragma once

// Grad-CAM heatmaps over the last convolutional feature maps, plus PGM output.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "szoo/architectures.hpp"
#include "szoo/data.hpp"

namespace szoo {

struct Heatmap {
  std::int64_t height = 0, width = 0;
  std::vector<double> values;  // row-major, in [0, 1]
  /// Set when the combined map is identically zero (it is then left at zero).
  bool degenerate = false;
  int class_index = -1;
  double probability = 0.0;

  double at(std::int64_t y, std::int64_t x) const { return values[static_cast<std::size_t>(y * width + x)]; }
};

class UnsupportedFamilyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// relu(sum_k alpha_k A_k) for A of shape K x h x w, bilinearly resized to
/// out_h x out_w, then min-max normalized.
Heatmap combine_feature_maps(const Tensor& maps, const std::vector<double>& alpha, std::int64_t out_h, std::int64_t out_w);

/// Heatmap for class_index on one C x H x W sample (inference-mode forward).
Heatmap gradcam(Model& model, const Tensor& sample, int class_index);

/// Fraction of the heat carried by the top 10% hottest pixels that lies
/// inside mask (H x W, nonzero = inside). Ties break towards lower index.
double top_decile_mass(const Heatmap& h, const std::vector<std::uint8_t>& mask);

void write_pgm(const Heatmap& h, const std::filesystem::path& path);

struct GrayImage {
  std::int64_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage read_pgm(const std::filesystem::path& path);
/// 8-bit quantization used by write_pgm.
std::uint8_t quantize(double v);

/// Sidecar describing one heatmap; tag is TP/FP/FN or empty when labels are unknown.
void write_heatmap_sidecar(const Heatmap& h, const std::string& class_name, const std::string& tag,
                           const std::filesystem::path& path);

/// TP / FP / FN / TN for one class given prediction and truth.
std::string outcome_tag(bool predicted, bool actual);

}  // namespace szoo
