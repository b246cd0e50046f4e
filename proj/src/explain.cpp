#include "szoo/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "szoo/tape.hpp"

namespace szoo {

Heatmap combine_feature_maps(const Tensor& maps, const std::vector<double>& alpha, std::int64_t out_h, std::int64_t out_w) {
  if (maps.rank() != 3) throw ShapeError("gradcam: feature maps must be K x h x w, got " + shape_str(maps.shape()));
  const std::int64_t K = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
  if (static_cast<std::int64_t>(alpha.size()) != K) throw ShapeError("gradcam: one weight per feature map required");
  auto a = maps.to_vector();
  Tensor cam({1, 1, h, w}, Precision::f64);
  auto cd = cam.data<double>();
  for (std::int64_t k = 0; k < K; ++k)
    for (std::int64_t i = 0; i < h * w; ++i) cd[static_cast<std::size_t>(i)] += alpha[static_cast<std::size_t>(k)] * a[static_cast<std::size_t>(k * h * w + i)];
  for (auto& v : cd) v = std::max(v, 0.0);

  Heatmap out;
  out.height = out_h;
  out.width = out_w;
  out.values = resize_bilinear(cam, out_h, out_w).to_vector();
  const auto [lo, hi] = std::minmax_element(out.values.begin(), out.values.end());
  const double mn = *lo, mx = *hi;
  if (!(mx > 0.0)) {
    out.degenerate = true;
    std::fill(out.values.begin(), out.values.end(), 0.0);
  } else if (mx > mn) {
    for (auto& v : out.values) v = (v - mn) / (mx - mn);
  } else {
    std::fill(out.values.begin(), out.values.end(), 1.0);
  }
  return out;
}

Heatmap gradcam(Model& model, const Tensor& sample, int class_index) {
  const auto& cfg = model.config();
  if (!model.network().convolutional())
    throw UnsupportedFamilyError("gradcam needs a convolutional feature stage; family " + to_string(cfg.family) +
                                 " has none");
  if (class_index < 0 || class_index >= cfg.num_classes)
    throw std::invalid_argument("gradcam: class index " + std::to_string(class_index) + " outside [0, " +
                                std::to_string(cfg.num_classes) + ")");
  if (sample.rank() != 3) throw ShapeError("gradcam: sample must be C x H x W");
  const auto prec = model.params().entry(0).value.precision();
  Tensor x = sample.precision() == prec ? sample : sample.to(prec);
  x = x.view({1, sample.dim(0), sample.dim(1), sample.dim(2)});

  Context fctx(model.params(), nullptr, false);
  Tensor feats = model.network().features(fctx, x);

  // Leaf-only gradients: the maps become the leaf of a second, head-only tape.
  Tape tape;
  Context hctx(model.params(), &tape, false);
  Tensor f = tape.watch(feats);
  Tensor logits = model.network().head(hctx, f);
  Tensor logit = slice(logits, 1, class_index, 1);
  tape.backward(sum(logit));
  const std::int64_t K = feats.dim(1), h = feats.dim(2), w = feats.dim(3);
  std::vector<double> alpha(static_cast<std::size_t>(K), 0.0);
  if (auto g = tape.grad(f)) {
    auto gd = g->to_vector();
    for (std::int64_t k = 0; k < K; ++k) {
      double s = 0;
      for (std::int64_t i = 0; i < h * w; ++i) s += gd[static_cast<std::size_t>(k * h * w + i)];
      alpha[static_cast<std::size_t>(k)] = s / static_cast<double>(h * w);
    }
  }
  Heatmap hm = combine_feature_maps(feats.view({K, h, w}), alpha, sample.dim(1), sample.dim(2));
  hm.class_index = class_index;
  hm.probability = 1.0 / (1.0 + std::exp(-logit.item()));
  return hm;
}

double top_decile_mass(const Heatmap& h, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != h.values.size()) throw ShapeError("top_decile_mass: mask size differs from heatmap");
  std::vector<std::size_t> idx(h.values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t top = (h.values.size() + 9) / 10;
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(top), idx.end(), [&](std::size_t a, std::size_t b) {
    return h.values[a] != h.values[b] ? h.values[a] > h.values[b] : a < b;
  });
  double inside = 0, total = 0;
  for (std::size_t i = 0; i < top; ++i) {
    total += h.values[idx[i]];
    if (mask[idx[i]]) inside += h.values[idx[i]];
  }
  return total > 0 ? inside / total : 0.0;
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void write_pgm(const Heatmap& h, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "P5\n" << h.width << ' ' << h.height << "\n255\n";
  std::vector<char> bytes(h.values.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(quantize(h.values[i]));
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  GrayImage img;
  f >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || img.width <= 0 || img.height <= 0)
    throw FormatError(path.string() + ": not an 8-bit binary PGM");
  f.get();
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height));
  f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw FormatError(path.string() + ": truncated pixel data");
  return img;
}

std::string outcome_tag(bool predicted, bool actual) {
  if (predicted && actual) return "TP";
  if (predicted) return "FP";
  if (actual) return "FN";
  return "TN";
}

void write_heatmap_sidecar(const Heatmap& h, const std::string& class_name, const std::string& tag,
                           const std::filesystem::path& path) {
  nlohmann::json j;
  j["class_index"] = h.class_index;
  j["class_name"] = class_name;
  j["probability"] = h.probability;
  j["degenerate"] = h.degenerate;
  j["height"] = h.height;
  j["width"] = h.width;
  if (!tag.empty()) j["tag"] = tag;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace szoo
