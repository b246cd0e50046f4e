#pragma once

// Multispectral multi-label patches: synthetic generation, the S2PX on-disk
// format, band selection and resizing.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "szoo/metrics.hpp"
#include "szoo/tensor.hpp"

namespace szoo {

/// Sentinel-2 bands kept after excluding B01, B09 and B10.
const std::vector<std::string>& sentinel2_bands();
/// True for B01, B09, B10.
bool is_excluded_band(const std::string& band);
/// Ten optical bands plus two synthetic SAR channels (VV, VH).
std::vector<std::string> multimodal_bands();

struct DatasetDescriptor {
  std::vector<std::string> bands = sentinel2_bands();
  int resolution = 120;
  int num_classes = 19;
  std::string split = "train";

  /// Rejects excluded or unknown bands and duplicates.
  void validate() const;
  int channels() const { return static_cast<int>(bands.size()); }
};

struct PatchSample {
  Tensor pixels;  // C x H x W, f32
  LabelSet labels;
  std::string id;
  /// Per-class H x W binary region masks (empty for absent classes); synthetic only.
  std::vector<std::vector<std::uint8_t>> masks;
};

struct Dataset {
  DatasetDescriptor descriptor;
  std::vector<PatchSample> samples;

  std::size_t size() const { return samples.size(); }
};

struct Batch {
  Tensor x;  // N x C x H x W
  Tensor y;  // N x K, 0/1
};
Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices, Precision p = Precision::f32);
Batch make_batch(const Dataset& ds);

struct SynthConfig {
  std::size_t n = 100;
  int num_classes = 19;
  int channels = 10;
  int resolution = 120;
  std::uint64_t seed = 0;
  double noise = 0.05;
  int min_labels = 1;
  int max_labels = 4;
  /// Seed of the per-class spectral signatures; shared by train and test splits.
  std::uint64_t signature_seed = 1234;
  /// Blend of every signature towards an unrelated one, in [0, 1].
  double signature_shift = 0.0;
  std::string id_prefix = "synth";
  std::string split = "train";
};

/// Per-class channel profile used by the generator.
std::vector<std::vector<double>> class_signatures(const SynthConfig& cfg);
Dataset synth_generate(const SynthConfig& cfg);

// S2PX patch files ---------------------------------------------------------

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_patch(const std::filesystem::path& path, const PatchSample& s);
PatchSample read_patch(const std::filesystem::path& path, int expected_classes = -1);

/// Writes one S2PX file per sample plus manifest.json under root.
void save_dataset(const Dataset& ds, const std::filesystem::path& root);
/// Reads root/manifest.json and every listed patch; descriptor fields are validated against the files.
Dataset load_dataset(const std::filesystem::path& root, const DatasetDescriptor& descriptor);
Dataset load_dataset(const std::filesystem::path& root);

enum class ChannelMode { rgb, rgb_nir, all };
ChannelMode parse_channel_mode(const std::string& s);
Dataset channel_subset(const Dataset& ds, ChannelMode mode);

/// Bilinear per channel; region masks are resampled and re-thresholded at 0.5.
Dataset resize_dataset(const Dataset& ds, int target_px);

}  // namespace szoo
