#include "szoo/metrics.hpp"

#include <bit>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace szoo {

LabelSet LabelSet::of(int num_classes, std::initializer_list<int> classes) {
  LabelSet s(num_classes);
  for (int k : classes) s.set(k);
  return s;
}

void LabelSet::set(int k, bool v) {
  if (k < 0 || k >= n_) throw std::out_of_range("label " + std::to_string(k) + " outside [0, " + std::to_string(n_) + ")");
  auto& w = bits_[static_cast<std::size_t>(k / 64)];
  const std::uint64_t m = std::uint64_t{1} << (k % 64);
  w = v ? (w | m) : (w & ~m);
}

int LabelSet::count() const {
  int c = 0;
  for (auto w : bits_) c += std::popcount(w);
  return c;
}

LabelSet threshold(const std::vector<double>& probs, double tau) {
  LabelSet s(static_cast<int>(probs.size()));
  for (std::size_t k = 0; k < probs.size(); ++k)
    if (probs[k] > tau) s.set(static_cast<int>(k));
  return s;
}

std::vector<std::vector<double>> rows(const Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("expected an N x K probability tensor, got " + shape_str(probs.shape()));
  const auto n = probs.dim(0), k = probs.dim(1);
  auto flat = probs.to_vector();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)].assign(flat.begin() + i * k, flat.begin() + (i + 1) * k);
  return out;
}

ClassCounts& ClassCounts::operator+=(const ClassCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionCounts confusion_counts(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& labels) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("confusion_counts: " + std::to_string(preds.size()) + " predictions vs " +
                                std::to_string(labels.size()) + " label sets");
  if (preds.empty()) throw std::invalid_argument("confusion_counts: empty input");
  const int k = labels[0].num_classes();
  ConfusionCounts c;
  c.per_class.resize(static_cast<std::size_t>(k));
  c.samples = static_cast<std::int64_t>(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].num_classes() != k || labels[i].num_classes() != k)
      throw std::invalid_argument("confusion_counts: label width mismatch at sample " + std::to_string(i));
    for (int j = 0; j < k; ++j) {
      const bool p = preds[i].test(j), l = labels[i].test(j);
      auto& cc = c.per_class[static_cast<std::size_t>(j)];
      (p ? (l ? cc.tp : cc.fp) : (l ? cc.fn : cc.tn))++;
    }
  }
  for (const auto& cc : c.per_class) c.pooled += cc;
  return c;
}

ConfusionCounts confusion_counts(const std::vector<std::vector<double>>& probs, const std::vector<LabelSet>& labels,
                                 double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("threshold must lie in (0, 1)");
  std::vector<LabelSet> preds;
  preds.reserve(probs.size());
  for (const auto& p : probs) preds.push_back(threshold(p, tau));
  return confusion_counts(preds, labels);
}

namespace {

Ratio reduced(std::int64_t num, std::int64_t den) {
  if (den == 0) return {0, 0};
  const auto g = std::gcd(num, den);
  return {num / g, den / g};
}

}  // namespace

MicroScores micro_scores(const ClassCounts& c) {
  return {reduced(c.tp, c.tp + c.fp), reduced(c.tp, c.tp + c.fn), reduced(2 * c.tp, 2 * c.tp + c.fp + c.fn)};
}

MacroF macro_f(const ConfusionCounts& counts) {
  MacroF m;
  double total = 0;
  for (const auto& c : counts.per_class) {
    m.per_class.push_back(micro_scores(c).f);
    total += m.per_class.back().value();
  }
  m.mean = m.per_class.empty() ? 0.0 : total / static_cast<double>(m.per_class.size());
  return m;
}

Ratio example_accuracy(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw std::invalid_argument("example_accuracy: need equal, nonempty prediction and label lists");
  // Every per-sample denominator is a union size in [1, K]; accumulate over
  // their least common multiple so the mean stays exact.
  std::int64_t l = 1;
  std::vector<std::pair<std::int64_t, std::int64_t>> parts;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    int inter = 0, uni = 0;
    for (int k = 0; k < labels[i].num_classes(); ++k) {
      const bool p = preds[i].test(k), t = labels[i].test(k);
      inter += p && t;
      uni += p || t;
    }
    if (uni == 0) inter = uni = 1;
    parts.emplace_back(inter, uni);
    l = std::lcm(l, static_cast<std::int64_t>(uni));
  }
  __int128 num = 0;
  for (auto [a, b] : parts) num += static_cast<__int128>(a) * (l / b);
  __int128 den = static_cast<__int128>(l) * static_cast<__int128>(parts.size());
  // Reduce in 128 bits before narrowing.
  __int128 x = num, y = den;
  while (y != 0) {
    __int128 t = x % y;
    x = y;
    y = t;
  }
  if (x != 0) {
    num /= x;
    den /= x;
  }
  return {static_cast<std::int64_t>(num), static_cast<std::int64_t>(den)};
}

Ratio exact_match_ratio(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw std::invalid_argument("exact_match_ratio: need equal, nonempty prediction and label lists");
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return reduced(hits, static_cast<std::int64_t>(preds.size()));
}

MetricsReport make_report(const std::vector<std::vector<double>>& probs, const std::vector<LabelSet>& labels,
                          double tau) {
  std::vector<LabelSet> preds;
  for (const auto& p : probs) preds.push_back(threshold(p, tau));
  MetricsReport r;
  r.counts = confusion_counts(probs, labels, tau);
  r.micro = micro_scores(r.counts.pooled);
  r.macro = macro_f(r.counts);
  r.accuracy = example_accuracy(preds, labels);
  r.exact_match = exact_match_ratio(preds, labels);
  r.samples = r.counts.samples;
  return r;
}

std::string report_csv(const MetricsReport& r, const std::vector<std::string>& names) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "class,tp,fp,fn,tn,precision,recall,f_score\n";
  for (std::size_t k = 0; k < r.counts.per_class.size(); ++k) {
    const auto& c = r.counts.per_class[k];
    const auto s = micro_scores(c);
    os << (k < names.size() ? names[k] : std::to_string(k)) << ',' << c.tp << ',' << c.fp << ',' << c.fn << ','
       << c.tn << ',' << s.precision.value() << ',' << s.recall.value() << ',' << s.f.value() << '\n';
  }
  const auto& p = r.counts.pooled;
  os << "micro," << p.tp << ',' << p.fp << ',' << p.fn << ',' << p.tn << ',' << r.micro.precision.value() << ','
     << r.micro.recall.value() << ',' << r.micro.f.value() << '\n';
  os << "macro,,,,,,," << r.macro.mean << '\n';
  return os.str();
}

}  // namespace szoo
