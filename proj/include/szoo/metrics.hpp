#pragma once

// Multi-label confusion accounting with micro/macro scores and example-based
// accuracy.

#include <cstdint>
#include <string>
#include <vector>

#include "szoo/tensor.hpp"

namespace szoo {

class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(int num_classes) : n_(num_classes), bits_(static_cast<std::size_t>((num_classes + 63) / 64), 0) {}
  static LabelSet of(int num_classes, std::initializer_list<int> classes);

  int num_classes() const { return n_; }
  bool test(int k) const { return (bits_[static_cast<std::size_t>(k / 64)] >> (k % 64)) & 1u; }
  void set(int k, bool v = true);
  int count() const;
  bool empty() const { return count() == 0; }
  bool operator==(const LabelSet&) const = default;

 private:
  int n_ = 0;
  std::vector<std::uint64_t> bits_;
};

/// Class k is predicted when p_k > tau.
LabelSet threshold(const std::vector<double>& probs, double tau = 0.5);
/// Rows of an N x K probability tensor.
std::vector<std::vector<double>> rows(const Tensor& probs);

struct ClassCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  ClassCounts& operator+=(const ClassCounts& o);
  bool operator==(const ClassCounts&) const = default;
};

struct ConfusionCounts {
  std::vector<ClassCounts> per_class;
  ClassCounts pooled;
  std::int64_t samples = 0;
};

ConfusionCounts confusion_counts(const std::vector<std::vector<double>>& probs, const std::vector<LabelSet>& labels,
                                 double tau = 0.5);
ConfusionCounts confusion_counts(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& labels);

/// Exact num/den; a zero denominator is degenerate and scores 0.
struct Ratio {
  std::int64_t num = 0, den = 0;
  bool degenerate() const { return den == 0; }
  double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
};

struct MicroScores {
  Ratio precision, recall, f;
};
MicroScores micro_scores(const ClassCounts& pooled);

struct MacroF {
  std::vector<Ratio> per_class;
  double mean = 0.0;
};
MacroF macro_f(const ConfusionCounts& counts);

/// Mean over samples of |P & L| / |P | L|; an empty/empty sample scores 1.
/// Returned as an exact ratio (reduced).
Ratio example_accuracy(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& labels);
Ratio exact_match_ratio(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& labels);

struct MetricsReport {
  ConfusionCounts counts;
  MicroScores micro;
  MacroF macro;
  Ratio accuracy;
  Ratio exact_match;
  std::int64_t samples = 0;
};

MetricsReport make_report(const std::vector<std::vector<double>>& probs, const std::vector<LabelSet>& labels,
                          double tau = 0.5);

/// One row per class plus an aggregate row.
std::string report_csv(const MetricsReport& r, const std::vector<std::string>& class_names = {});

}  // namespace szoo
