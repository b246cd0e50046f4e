#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "support.hpp"
#include "szoo/explain.hpp"

using namespace szoo;
namespace fs = std::filesystem;

namespace {

ModelConfig small_wrn(const std::string& name = "WRNB0-ECA") {
  auto c = zoo_config(name);
  c.resolution = 16;
  c.num_classes = 3;
  return c;
}

Tensor sample16(std::uint64_t seed) { return test::random_tensor({10, 16, 16}, seed, Precision::f32, 0.0, 1.0); }

std::vector<double> minmax_relu(std::vector<double> v) {
  for (auto& x : v) x = std::max(x, 0.0);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double mn = *lo, mx = *hi;
  for (auto& x : v) x = (x - mn) / (mx - mn);
  return v;
}

}  // namespace

TEST_CASE("single feature map with positive weight reduces to its normalized ReLU") {
  auto a = test::random_tensor({1, 6, 6}, 3);
  auto h = combine_feature_maps(a, {0.37}, 6, 6);
  auto want = minmax_relu(a.to_vector());
  REQUIRE(h.values.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(h.values[i] == doctest::Approx(want[i]).epsilon(1e-12));
  CHECK_FALSE(h.degenerate);
}

TEST_CASE("normalization removes positive rescaling of the weights") {
  auto a = test::random_tensor({5, 4, 4}, 11);
  std::vector<double> alpha{0.3, -0.2, 0.5, 0.1, -0.4};
  auto base = combine_feature_maps(a, alpha, 16, 16);
  for (double s : {2.0, 0.5, 1024.0}) {
    auto scaled = alpha;
    for (auto& x : scaled) x *= s;
    CHECK(combine_feature_maps(a, scaled, 16, 16).values == base.values);
  }
  for (double s : {3.0, 0.1, 7.7}) {
    auto scaled = alpha;
    for (auto& x : scaled) x *= s;
    auto v = combine_feature_maps(a, scaled, 16, 16).values;
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(v[i] - base.values[i]) < 1e-12);
  }
}

TEST_CASE("all-negative and constant combinations") {
  Tensor a({2, 3, 3}, Precision::f64);
  a.fill(1.0);
  auto neg = combine_feature_maps(a, {-1.0, -0.5}, 9, 9);
  CHECK(neg.degenerate);
  CHECK(std::all_of(neg.values.begin(), neg.values.end(), [](double v) { return v == 0.0; }));
  auto flat = combine_feature_maps(a, {1.0, 0.5}, 9, 9);
  CHECK_FALSE(flat.degenerate);
  CHECK(std::all_of(flat.values.begin(), flat.values.end(), [](double v) { return v == 1.0; }));
  CHECK_THROWS_AS(combine_feature_maps(a, {1.0}, 9, 9), ShapeError);
}

TEST_CASE("gradcam on convolutional models") {
  for (const char* name : {"WRNB0-ECA", "WRNB0-CBAM", "EfficientNetB0-SE"}) {
    auto m = build_model(small_wrn(name), 4);
    auto h = gradcam(m, sample16(9), 1);
    CHECK(h.height == 16);
    CHECK(h.width == 16);
    CHECK(h.values.size() == 256);
    CHECK(h.class_index == 1);
    CHECK(h.probability > 0.0);
    CHECK(h.probability < 1.0);
    for (double v : h.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (!h.degenerate) CHECK(*std::max_element(h.values.begin(), h.values.end()) == 1.0);
  }
}

TEST_CASE("gradcam with zero head weights for the class is degenerate") {
  auto m = build_model(small_wrn(), 4);
  auto id = m.params().find("head.weight");
  REQUIRE(id);
  auto& w = m.params().entry(*id).value;
  const auto out = w.dim(1);
  for (std::int64_t r = 0; r < w.dim(0); ++r) w.set(r * out + 2, 0.0);
  auto h = gradcam(m, sample16(5), 2);
  CHECK(h.degenerate);
  CHECK(std::all_of(h.values.begin(), h.values.end(), [](double v) { return v == 0.0; }));
  CHECK_FALSE(gradcam(m, sample16(5), 0).degenerate);
}

TEST_CASE("gradcam preconditions") {
  auto m = build_model(small_wrn(), 4);
  CHECK_THROWS_AS(gradcam(m, sample16(1), 3), std::invalid_argument);
  CHECK_THROWS_AS(gradcam(m, sample16(1), -1), std::invalid_argument);
  for (const char* name : {"MLPMixerTiny", "ViT/6"}) {
    auto c = zoo_config(name);
    c.resolution = 12;
    c.num_classes = 3;
    auto t = build_model(c, 1);
    CHECK_THROWS_AS(gradcam(t, test::random_tensor({10, 12, 12}, 2, Precision::f32), 0), UnsupportedFamilyError);
  }
}

TEST_CASE("gradcam is unchanged by float64 weights up to rounding") {
  auto m = build_model(small_wrn(), 8);
  auto m64 = m.clone();
  m64.params().convert(Precision::f64);
  auto a = gradcam(m, sample16(3), 0), b = gradcam(m64, sample16(3), 0);
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(std::abs(a.values[i] - b.values[i]) < 1e-3);
}

TEST_CASE("top decile mass") {
  Heatmap h;
  h.height = h.width = 10;
  h.values.assign(100, 0.0);
  std::vector<std::uint8_t> mask(100, 0);
  for (int i = 0; i < 10; ++i) {
    h.values[static_cast<std::size_t>(i * 10)] = 1.0;
    mask[static_cast<std::size_t>(i * 10)] = 1;
  }
  CHECK(top_decile_mass(h, mask) == 1.0);
  std::vector<std::uint8_t> other(100, 0);
  other[1] = 1;
  CHECK(top_decile_mass(h, other) == 0.0);
  // Half the heat of the top ten pixels lies inside.
  h.values[0] = h.values[10] = 3.0;
  std::vector<std::uint8_t> two(100, 0);
  two[0] = two[10] = 1;
  CHECK(top_decile_mass(h, two) == doctest::Approx(6.0 / 14.0));
  std::fill(h.values.begin(), h.values.end(), 0.5);
  std::vector<std::uint8_t> first(100, 0);
  std::fill(first.begin(), first.begin() + 10, 1);
  CHECK(top_decile_mass(h, first) == 1.0);
  std::fill(h.values.begin(), h.values.end(), 0.0);
  CHECK(top_decile_mass(h, first) == 0.0);
  CHECK_THROWS_AS(top_decile_mass(h, std::vector<std::uint8_t>(99)), ShapeError);
}

TEST_CASE("PGM output") {
  auto dir = fs::temp_directory_path() / "szoo_explain";
  fs::create_directories(dir);
  Heatmap zero;
  zero.height = 3;
  zero.width = 5;
  zero.values.assign(15, 0.0);
  write_pgm(zero, dir / "zero.pgm");
  {
    std::ifstream f(dir / "zero.pgm", std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(all.substr(0, 11) == "P5\n5 3\n255\n");
    CHECK(all.size() == 11 + 15);
    CHECK(std::all_of(all.begin() + 11, all.end(), [](char c) { return c == 0; }));
  }
  auto m = build_model(small_wrn(), 4);
  auto h = gradcam(m, sample16(2), 0);
  write_pgm(h, dir / "cam.pgm");
  auto img = read_pgm(dir / "cam.pgm");
  CHECK(img.height == 16);
  CHECK(img.width == 16);
  for (std::size_t i = 0; i < h.values.size(); ++i) CHECK(img.pixels[i] == quantize(h.values[i]));
  CHECK(quantize(1.0) == 255);
  CHECK(quantize(0.5) == 128);
  CHECK(quantize(-3.0) == 0);

  {
    std::ofstream f(dir / "bad.pgm", std::ios::binary);
    f << "P5\n4 4\n255\n" << "abc";
  }
  CHECK_THROWS_AS(read_pgm(dir / "bad.pgm"), FormatError);
  {
    std::ofstream f(dir / "p2.pgm", std::ios::binary);
    f << "P2\n1 1\n255\n0\n";
  }
  CHECK_THROWS_AS(read_pgm(dir / "p2.pgm"), FormatError);

  write_heatmap_sidecar(h, "forest", outcome_tag(true, false), dir / "cam.json");
  std::ifstream f(dir / "cam.json");
  auto j = nlohmann::json::parse(f);
  CHECK(j["class_index"] == 0);
  CHECK(j["class_name"] == "forest");
  CHECK(j["tag"] == "FP");
  CHECK(j["height"] == 16);
  CHECK(j["degenerate"] == h.degenerate);
  CHECK(outcome_tag(true, true) == "TP");
  CHECK(outcome_tag(false, true) == "FN");
  CHECK(outcome_tag(false, false) == "TN");
  fs::remove_all(dir);
}
