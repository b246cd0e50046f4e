#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <algorithm>

#include "szoo/data.hpp"

using namespace szoo;
namespace fs = std::filesystem;

namespace {

SynthConfig small(std::size_t n = 12, int res = 16) {
  SynthConfig c;
  c.n = n;
  c.resolution = res;
  c.num_classes = 8;
  c.seed = 5;
  return c;
}

bool same_pixels(const Tensor& a, const Tensor& b) {
  auto x = a.data<float>(), y = b.data<float>();
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * 4) == 0;
}

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("szoo_data_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("band roster excludes B01, B09 and B10") {
  const auto& b = sentinel2_bands();
  CHECK(b.size() == 10);
  for (const char* x : {"B01", "B09", "B10"}) {
    CHECK(is_excluded_band(x));
    CHECK(std::find(b.begin(), b.end(), x) == b.end());
  }
  CHECK(multimodal_bands().size() == 12);
  DatasetDescriptor d;
  CHECK_NOTHROW(d.validate());
  d.bands.push_back("B09");
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d.bands = {"B02", "B02"};
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d.bands = {"B99"};
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}

TEST_CASE("synthetic generation is deterministic and well formed") {
  auto a = synth_generate(small()), b = synth_generate(small());
  REQUIRE(a.size() == 12);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(same_pixels(a.samples[i].pixels, b.samples[i].pixels));
    CHECK(a.samples[i].labels == b.samples[i].labels);
    CHECK(a.samples[i].labels.count() >= 1);
    CHECK(a.samples[i].labels.count() <= 4);
    CHECK(a.samples[i].pixels.shape() == Shape{10, 16, 16});
    for (float v : a.samples[i].pixels.data<float>()) CHECK(std::isfinite(v));
    ids.insert(a.samples[i].id);
    for (int k = 0; k < 8; ++k) {
      const auto& m = a.samples[i].masks[static_cast<std::size_t>(k)];
      CHECK(m.empty() != a.samples[i].labels.test(k));
      if (!m.empty()) CHECK(std::count(m.begin(), m.end(), 1) > 0);
    }
  }
  CHECK(ids.size() == a.size());
  auto other = small();
  other.seed = 6;
  CHECK_FALSE(same_pixels(synth_generate(other).samples[0].pixels, a.samples[0].pixels));
  auto bad = small();
  bad.channels = 7;
  CHECK_THROWS_AS(synth_generate(bad), std::invalid_argument);
}

TEST_CASE("train and test splits are disjoint by id") {
  auto tr = small(20);
  auto te = small(20);
  te.seed = 99;
  te.split = "test";
  te.id_prefix = "test";
  auto a = synth_generate(tr), b = synth_generate(te);
  std::set<std::string> ids;
  for (const auto& s : a.samples) ids.insert(s.id);
  for (const auto& s : b.samples) CHECK(ids.count(s.id) == 0);
}

TEST_CASE("channel means linearly separate single-label classes") {
  auto c = small(400, 16);
  c.min_labels = c.max_labels = 1;
  auto ds = synth_generate(c);
  // Nearest class centroid of the channel-mean vector is a linear rule for any pair of classes.
  auto feature = [](const PatchSample& s) {
    std::vector<double> f(10, 0.0);
    auto p = s.pixels.data<float>();
    for (std::size_t ch = 0; ch < 10; ++ch)
      for (std::size_t i = 0; i < 256; ++i) f[ch] += p[ch * 256 + i] / 256.0;
    return f;
  };
  auto label_of = [](const PatchSample& s) {
    for (int k = 0; k < 8; ++k)
      if (s.labels.test(k)) return k;
    return -1;
  };
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  for (const auto& smp : ds.samples) {
    feats.push_back(feature(smp));
    labels.push_back(label_of(smp));
  }
  // Pairwise logistic regression on the first half, scored on the second half.
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b) {
      std::vector<double> w(11, 0.0);
      for (int it = 0; it < 3000; ++it) {
        std::vector<double> g(11, 0.0);
        int m = 0;
        for (std::size_t i = 0; i < 200; ++i) {
          if (labels[i] != a && labels[i] != b) continue;
          double z = w[10];
          for (std::size_t j = 0; j < 10; ++j) z += w[j] * feats[i][j];
          const double err = 1.0 / (1.0 + std::exp(-z)) - (labels[i] == a ? 1.0 : 0.0);
          for (std::size_t j = 0; j < 10; ++j) g[j] += err * feats[i][j];
          g[10] += err;
          ++m;
        }
        REQUIRE(m > 0);
        for (std::size_t j = 0; j < 11; ++j) w[j] -= 2.0 * g[j] / m;
      }
      int right = 0, total = 0;
      for (std::size_t i = 200; i < ds.size(); ++i) {
        if (labels[i] != a && labels[i] != b) continue;
        double z = w[10];
        for (std::size_t j = 0; j < 10; ++j) z += w[j] * feats[i][j];
        right += ((z > 0) == (labels[i] == a));
        ++total;
      }
      REQUIRE(total > 0);
      CHECK_MESSAGE(static_cast<double>(right) / total > 0.95, "classes " << a << "/" << b);
    }
}

TEST_CASE("patch files and dataset manifests round trip") {
  auto ds = synth_generate(small(6));
  auto dir = scratch_dir("rt");
  save_dataset(ds, dir);
  auto back = load_dataset(dir);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.samples[i].id == ds.samples[i].id);
    CHECK(back.samples[i].labels == ds.samples[i].labels);
    CHECK(same_pixels(back.samples[i].pixels, ds.samples[i].pixels));
  }
  CHECK(back.descriptor.num_classes == 8);

  auto file = dir / "single.s2px";
  write_patch(file, ds.samples[0]);
  auto one = read_patch(file, 8);
  CHECK(same_pixels(one.pixels, ds.samples[0].pixels));
  CHECK_THROWS_AS(read_patch(file, 19), FormatError);

  auto size = fs::file_size(file);
  fs::resize_file(file, size - 7);
  CHECK_THROWS_WITH_AS(read_patch(file), doctest::Contains("truncated"), FormatError);
  {
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(read_patch(file), FormatError);

  DatasetDescriptor rgb;
  rgb.bands = {"B04", "B03", "B02"};
  rgb.num_classes = 8;
  CHECK_THROWS_WITH_AS(load_dataset(dir, rgb), doctest::Contains("band B02"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("channel subsets") {
  auto ds = synth_generate(small(3));
  auto rgb = channel_subset(ds, ChannelMode::rgb);
  auto nir = channel_subset(ds, ChannelMode::rgb_nir);
  auto all = channel_subset(ds, ChannelMode::all);
  CHECK(rgb.samples[0].pixels.dim(0) == 3);
  CHECK(nir.samples[0].pixels.dim(0) == 4);
  CHECK(rgb.descriptor.bands == std::vector<std::string>{"B04", "B03", "B02"});
  CHECK(nir.descriptor.bands.back() == "B08");
  CHECK(same_pixels(all.samples[0].pixels, ds.samples[0].pixels));
  const auto& bands = sentinel2_bands();
  auto src = ds.samples[1].pixels.data<float>();
  auto sub = nir.samples[1].pixels.data<float>();
  for (std::size_t c = 0; c < 4; ++c) {
    auto pos = static_cast<std::size_t>(std::find(bands.begin(), bands.end(), nir.descriptor.bands[c]) - bands.begin());
    CHECK(std::memcmp(sub.data() + c * 256, src.data() + pos * 256, 256 * 4) == 0);
  }
  CHECK(parse_channel_mode("rgb_nir") == ChannelMode::rgb_nir);
  CHECK_THROWS_AS(parse_channel_mode("sar"), std::invalid_argument);
}

TEST_CASE("bilinear resizing") {
  auto ds = synth_generate(small(2, 32));
  auto same = resize_dataset(ds, 32);
  CHECK(same_pixels(same.samples[0].pixels, ds.samples[0].pixels));
  auto down = resize_dataset(ds, 16);
  CHECK(down.samples[0].pixels.shape() == Shape{10, 16, 16});
  CHECK(down.samples[0].labels == ds.samples[0].labels);
  CHECK(down.samples[0].masks[0].size() == (down.samples[0].masks[0].empty() ? 0u : 256u));
  auto up = resize_dataset(down, 32);
  CHECK_FALSE(same_pixels(up.samples[0].pixels, ds.samples[0].pixels));

  Dataset flat = ds;
  flat.samples[0].pixels.fill(0.25);
  for (int r : {8, 20, 45}) {
    auto f = resize_dataset(flat, r);
    for (float v : f.samples[0].pixels.data<float>()) CHECK(v == doctest::Approx(0.25).epsilon(1e-6));
  }
}
