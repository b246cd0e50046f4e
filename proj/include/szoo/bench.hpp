#pragma once

// Benchmark runner, scaling ladders and the model-zoo manifest.

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "szoo/distributed.hpp"
#include "szoo/scaling.hpp"

namespace szoo {

struct BenchEntryResult {
  std::string model;
  Family family = Family::wrn;
  bool ok = false;
  std::string error;
  MetricsReport report;
  double train_seconds = 0.0;
  double inference_rate = 0.0;
  std::int64_t params = 0;
};

struct BenchReport {
  std::vector<BenchEntryResult> entries;
  bool any_failed() const;
};

/// Raised for manifest problems detected before any entry runs.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BenchOptions {
  /// Default worker count for entries that do not set one.
  int workers = 1;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  /// Run entries on concurrent threads; timings then include contention.
  bool parallel_entries = false;
};

/// Manifest: {"dataset": {...}, "entries": [{"model": ..., "train": {...},
/// "workers": W, "per_worker_batch": b, "dataset": {...}}]}. A dataset is
/// {"train": src, "test": src} with src either {"synthetic": {...}} or {"path": dir}.
BenchReport run_benchmark(const nlohmann::json& manifest, const BenchOptions& opt = {});

/// Hours and minutes as "h.mm", e.g. 3725 s -> "1.02".
std::string format_hours_minutes(double seconds);
/// Thousands separators: 306803 -> "306,803".
std::string format_count(std::int64_t n);

std::string report_csv(const BenchReport& r);
std::string report_markdown(const BenchReport& r);
/// Replaces every timing-dependent field with "-" so reports can be compared byte for byte.
std::string mask_timing_csv(const std::string& csv);
std::string mask_timing_markdown(const std::string& md);
void write_reports(const BenchReport& r, const std::filesystem::path& dir);

struct LadderRow {
  int phi = 0;
  std::string name;
  double depth = 1, width = 1;
  int resolution = 0;
  std::int64_t params = 0;
};

std::vector<LadderRow> scale_plan(const std::string& base_name, ScalingCoefficients coefficients, int phi_min, int phi_max);
std::string ladder_markdown(const std::vector<LadderRow>& rows);
std::string ladder_csv(const std::vector<LadderRow>& rows);

struct ZooItem {
  std::string name;
  Model model;
};

/// Writes one checkpoint per model plus zoo.json listing names, configs and files.
void zoo_export(const std::vector<ZooItem>& items, const std::filesystem::path& dir);
std::vector<ZooItem> zoo_import(const std::filesystem::path& dir);

}  // namespace szoo
