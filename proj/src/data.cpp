#include "szoo/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "szoo/ops.hpp"

namespace szoo {

using nlohmann::json;

const std::vector<std::string>& sentinel2_bands() {
  static const std::vector<std::string> b{"B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B11", "B12"};
  return b;
}

bool is_excluded_band(const std::string& band) { return band == "B01" || band == "B09" || band == "B10"; }

std::vector<std::string> multimodal_bands() {
  auto b = sentinel2_bands();
  b.push_back("VV");
  b.push_back("VH");
  return b;
}

void DatasetDescriptor::validate() const {
  std::set<std::string> seen;
  for (const auto& b : bands) {
    if (is_excluded_band(b)) throw std::invalid_argument("band " + b + " is excluded from every pipeline");
    if (b != "VV" && b != "VH" && std::find(sentinel2_bands().begin(), sentinel2_bands().end(), b) == sentinel2_bands().end())
      throw std::invalid_argument("unknown band '" + b + "'");
    if (!seen.insert(b).second) throw std::invalid_argument("duplicate band " + b);
  }
  if (num_classes < 1 || resolution < 1) throw std::invalid_argument("descriptor needs positive classes and resolution");
}

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& idx, Precision p) {
  if (idx.empty()) throw std::invalid_argument("make_batch: empty index list");
  const auto& first = ds.samples.at(idx[0]).pixels;
  const auto c = first.dim(0), h = first.dim(1), w = first.dim(2);
  const int k = ds.descriptor.num_classes;
  const auto n = static_cast<std::int64_t>(idx.size());
  Tensor x({n, c, h, w}), y({n, k});
  auto xd = x.data<float>();
  auto yd = y.data<float>();
  const auto per = c * h * w;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& s = ds.samples.at(idx[static_cast<std::size_t>(i)]);
    auto src = s.pixels.data<float>();
    if (static_cast<std::int64_t>(src.size()) != per) throw ShapeError("make_batch: samples differ in shape");
    std::copy(src.begin(), src.end(), xd.begin() + i * per);
    for (int j = 0; j < k; ++j) yd[static_cast<std::size_t>(i * k + j)] = s.labels.test(j) ? 1.0f : 0.0f;
  }
  if (p == Precision::f64) return {x.to(p), y.to(p)};
  return {x, y};
}

Batch make_batch(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return make_batch(ds, idx);
}

// --- synthetic generator ------------------------------------------------------

std::vector<std::vector<double>> class_signatures(const SynthConfig& cfg) {
  std::mt19937_64 rng(cfg.signature_seed);
  std::mt19937_64 alt(cfg.signature_seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<std::vector<double>> sig(static_cast<std::size_t>(cfg.num_classes),
                                       std::vector<double>(static_cast<std::size_t>(cfg.channels)));
  for (auto& s : sig)
    for (auto& v : s) v = u(rng);
  if (cfg.signature_shift > 0)
    for (auto& s : sig)
      for (auto& v : s) v = (1 - cfg.signature_shift) * v + cfg.signature_shift * u(alt);
  return sig;
}

namespace {

enum class Motif { disk, stripe, blob };

/// Rasterizes one motif in [0, 1] at resolution r.
std::vector<float> draw_motif(Motif m, int r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<float> out(static_cast<std::size_t>(r * r), 0.0f);
  const double cy = (0.2 + 0.6 * u(rng)) * r, cx = (0.2 + 0.6 * u(rng)) * r;
  switch (m) {
    case Motif::disk: {
      const double rad = (0.12 + 0.13 * u(rng)) * r;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          if (std::hypot(i + 0.5 - cy, j + 0.5 - cx) <= rad) out[static_cast<std::size_t>(i * r + j)] = 1.0f;
      break;
    }
    case Motif::stripe: {
      const double theta = u(rng) * 3.141592653589793, half = (0.05 + 0.05 * u(rng)) * r;
      const double ny = std::cos(theta), nx = std::sin(theta);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          if (std::abs((i + 0.5 - cy) * ny + (j + 0.5 - cx) * nx) <= half) out[static_cast<std::size_t>(i * r + j)] = 1.0f;
      break;
    }
    case Motif::blob: {
      const double s = (0.08 + 0.07 * u(rng)) * r;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          const double d2 = (i + 0.5 - cy) * (i + 0.5 - cy) + (j + 0.5 - cx) * (j + 0.5 - cx);
          out[static_cast<std::size_t>(i * r + j)] = static_cast<float>(std::exp(-d2 / (2 * s * s)));
        }
      break;
    }
  }
  return out;
}

}  // namespace

Dataset synth_generate(const SynthConfig& cfg) {
  if (cfg.min_labels < 1 || cfg.max_labels < cfg.min_labels || cfg.max_labels > cfg.num_classes)
    throw std::invalid_argument("synth: label count range must satisfy 1 <= min <= max <= num_classes");
  Dataset ds;
  if (cfg.channels == 10) ds.descriptor.bands = sentinel2_bands();
  else if (cfg.channels == 12) ds.descriptor.bands = multimodal_bands();
  else if (cfg.channels == 3) ds.descriptor.bands = {"B04", "B03", "B02"};
  else if (cfg.channels == 4) ds.descriptor.bands = {"B04", "B03", "B02", "B08"};
  else throw std::invalid_argument("synth: channel count must be 3, 4, 10 or 12");
  ds.descriptor.resolution = cfg.resolution;
  ds.descriptor.num_classes = cfg.num_classes;
  ds.descriptor.split = cfg.split;

  const auto sig = class_signatures(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, cfg.noise);
  const int r = cfg.resolution, c = cfg.channels;
  std::vector<int> classes(static_cast<std::size_t>(cfg.num_classes));
  std::iota(classes.begin(), classes.end(), 0);
  for (std::size_t s = 0; s < cfg.n; ++s) {
    PatchSample p;
    p.id = cfg.id_prefix + "-" + std::to_string(s);
    p.labels = LabelSet(cfg.num_classes);
    p.masks.resize(static_cast<std::size_t>(cfg.num_classes));
    const int count = cfg.min_labels + static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.max_labels - cfg.min_labels + 1));
    std::shuffle(classes.begin(), classes.end(), rng);
    std::vector<double> px(static_cast<std::size_t>(c * r * r), 0.0);
    for (int i = 0; i < count; ++i) {
      const int k = classes[static_cast<std::size_t>(i)];
      p.labels.set(k);
      const auto motif = draw_motif(static_cast<Motif>(k % 3), r, rng);
      auto& mask = p.masks[static_cast<std::size_t>(k)];
      mask.resize(motif.size());
      for (std::size_t q = 0; q < motif.size(); ++q) mask[q] = motif[q] >= 0.5f;
      for (int ch = 0; ch < c; ++ch) {
        const double a = sig[static_cast<std::size_t>(k)][static_cast<std::size_t>(ch)];
        for (std::size_t q = 0; q < motif.size(); ++q) px[static_cast<std::size_t>(ch) * motif.size() + q] += a * motif[q];
      }
    }
    p.pixels = Tensor({c, r, r});
    auto d = p.pixels.data<float>();
    for (std::size_t q = 0; q < px.size(); ++q) d[q] = static_cast<float>(px[q] + noise(rng));
    ds.samples.push_back(std::move(p));
  }
  return ds;
}

// --- S2PX ---------------------------------------------------------------------

namespace {

constexpr std::array<char, 4> kPatchMagic{'S', '2', 'P', 'X'};
constexpr std::uint16_t kPatchVersion = 1;

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get(const std::vector<unsigned char>& in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(T) > in.size()) throw FormatError("truncated patch file while reading " + what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += sizeof(T);
  return static_cast<T>(v);
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_patch(const std::filesystem::path& path, const PatchSample& s) {
  if (s.pixels.rank() != 3) throw ShapeError("patch pixels must be C x H x W");
  std::vector<unsigned char> out(kPatchMagic.begin(), kPatchMagic.end());
  put<std::uint16_t>(out, kPatchVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(s.pixels.dim(0)));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(s.pixels.dim(1)));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(s.pixels.dim(2)));
  const int k = s.labels.num_classes();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(k));
  for (int b = 0; b < (k + 7) / 8; ++b) {
    unsigned char byte = 0;
    for (int j = 0; j < 8 && b * 8 + j < k; ++j) byte |= static_cast<unsigned char>(s.labels.test(b * 8 + j) << j);
    out.push_back(byte);
  }
  Tensor px = s.pixels.precision() == Precision::f32 ? s.pixels : s.pixels.to(Precision::f32);
  for (float v : px.data<float>()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put<std::uint32_t>(out, bits);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

PatchSample read_patch(const std::filesystem::path& path, int expected_classes) {
  const auto in = slurp(path);
  std::size_t pos = 0;
  if (in.size() < 4 || !std::equal(kPatchMagic.begin(), kPatchMagic.end(), in.begin()))
    throw FormatError(path.string() + ": bad magic (expected S2PX)");
  pos = 4;
  const auto version = get<std::uint16_t>(in, pos, "version");
  if (version != kPatchVersion) throw FormatError(path.string() + ": unsupported patch version " + std::to_string(version));
  const auto c = get<std::uint16_t>(in, pos, "channels");
  const auto h = get<std::uint16_t>(in, pos, "height");
  const auto w = get<std::uint16_t>(in, pos, "width");
  const auto k = static_cast<int>(get<std::uint32_t>(in, pos, "class count"));
  if (expected_classes >= 0 && k != expected_classes)
    throw FormatError(path.string() + ": label width " + std::to_string(k) + " != " + std::to_string(expected_classes) + " classes");
  PatchSample s;
  s.labels = LabelSet(k);
  for (int b = 0; b < (k + 7) / 8; ++b) {
    const auto byte = get<std::uint8_t>(in, pos, "label mask");
    for (int j = 0; j < 8 && b * 8 + j < k; ++j) s.labels.set(b * 8 + j, (byte >> j) & 1);
  }
  const std::size_t n = static_cast<std::size_t>(c) * h * w;
  if (in.size() - pos != n * 4)
    throw FormatError(path.string() + ": truncated or oversized pixel payload (" + std::to_string(in.size() - pos) +
                      " bytes, expected " + std::to_string(n * 4) + ")");
  s.pixels = Tensor({c, h, w});
  auto d = s.pixels.data<float>();
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = get<std::uint32_t>(in, pos, "pixels");
    std::memcpy(&d[i], &bits, 4);
  }
  return s;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  json m;
  m["descriptor"] = {{"bands", ds.descriptor.bands},
                     {"resolution", ds.descriptor.resolution},
                     {"num_classes", ds.descriptor.num_classes}};
  m["samples"] = json::array();
  for (const auto& s : ds.samples) {
    const std::string rel = s.id + ".s2px";
    write_patch(root / rel, s);
    m["samples"].push_back({{"path", rel}, {"split", ds.descriptor.split}, {"id", s.id}});
  }
  std::ofstream(root / "manifest.json") << m.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& root, const DatasetDescriptor& descriptor) {
  descriptor.validate();
  std::ifstream f(root / "manifest.json");
  if (!f) throw FormatError("missing manifest.json under " + root.string());
  const json m = json::parse(f);
  Dataset ds;
  ds.descriptor = descriptor;
  const int c = descriptor.channels();
  for (const auto& e : m.at("samples")) {
    if (e.contains("split") && e["split"].get<std::string>() != descriptor.split) continue;
    auto s = read_patch(root / e.at("path").get<std::string>(), descriptor.num_classes);
    const auto got = static_cast<int>(s.pixels.dim(0));
    if (got != c) {
      const std::string what = got < c ? "missing band " + descriptor.bands[static_cast<std::size_t>(got)]
                                       : "unexpected channel beyond band " + descriptor.bands.back();
      throw FormatError(e.at("path").get<std::string>() + ": " + std::to_string(got) + " channels but descriptor lists " +
                        std::to_string(c) + " (" + what + ")");
    }
    s.id = e.value("id", e.at("path").get<std::string>());
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& root) {
  std::ifstream f(root / "manifest.json");
  if (!f) throw FormatError("missing manifest.json under " + root.string());
  const json m = json::parse(f);
  DatasetDescriptor d;
  d.bands = m.at("descriptor").at("bands").get<std::vector<std::string>>();
  d.resolution = m.at("descriptor").at("resolution").get<int>();
  d.num_classes = m.at("descriptor").at("num_classes").get<int>();
  if (!m.at("samples").empty()) d.split = m["samples"][0].value("split", "train");
  return load_dataset(root, d);
}

// --- band selection and resizing ---------------------------------------------------

ChannelMode parse_channel_mode(const std::string& s) {
  if (s == "rgb") return ChannelMode::rgb;
  if (s == "rgb_nir") return ChannelMode::rgb_nir;
  if (s == "all") return ChannelMode::all;
  throw std::invalid_argument("unknown channel mode '" + s + "' (expected rgb, rgb_nir, all)");
}

Dataset channel_subset(const Dataset& ds, ChannelMode mode) {
  if (mode == ChannelMode::all) return ds;
  std::vector<std::string> want{"B04", "B03", "B02"};
  if (mode == ChannelMode::rgb_nir) want.push_back("B08");
  std::vector<std::size_t> idx;
  for (const auto& b : want) {
    auto it = std::find(ds.descriptor.bands.begin(), ds.descriptor.bands.end(), b);
    if (it == ds.descriptor.bands.end()) throw std::invalid_argument("channel_subset: dataset lacks band " + b);
    idx.push_back(static_cast<std::size_t>(it - ds.descriptor.bands.begin()));
  }
  Dataset out;
  out.descriptor = ds.descriptor;
  out.descriptor.bands = want;
  for (const auto& s : ds.samples) {
    PatchSample p = s;
    const auto h = s.pixels.dim(1), w = s.pixels.dim(2);
    p.pixels = Tensor({static_cast<std::int64_t>(idx.size()), h, w});
    auto src = s.pixels.data<float>();
    auto dst = p.pixels.data<float>();
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[i] * h * w), h * w, dst.begin() + static_cast<std::ptrdiff_t>(i * h * w));
    out.samples.push_back(std::move(p));
  }
  return out;
}

Dataset resize_dataset(const Dataset& ds, int target) {
  Dataset out;
  out.descriptor = ds.descriptor;
  out.descriptor.resolution = target;
  for (const auto& s : ds.samples) {
    PatchSample p;
    p.id = s.id;
    p.labels = s.labels;
    const auto c = s.pixels.dim(0), h = s.pixels.dim(1), w = s.pixels.dim(2);
    p.pixels = resize_bilinear(s.pixels.view({1, c, h, w}), target, target).view({c, target, target});
    p.masks.resize(s.masks.size());
    for (std::size_t k = 0; k < s.masks.size(); ++k) {
      if (s.masks[k].empty()) continue;
      Tensor m({1, 1, h, w});
      auto md = m.data<float>();
      for (std::size_t q = 0; q < s.masks[k].size(); ++q) md[q] = s.masks[k][q];
      Tensor r = resize_bilinear(m, target, target);
      p.masks[k].resize(static_cast<std::size_t>(target * target));
      auto rd = r.data<float>();
      for (std::size_t q = 0; q < p.masks[k].size(); ++q) p.masks[k][q] = rd[q] >= 0.5f;
    }
    out.samples.push_back(std::move(p));
  }
  return out;
}

}  // namespace szoo
