#include "szoo/architectures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace szoo {

std::string to_string(Family f) {
  switch (f) {
    case Family::wrn: return "wrn";
    case Family::efficientnet: return "efficientnet";
    case Family::mlpmixer: return "mlpmixer";
    case Family::vit: return "vit";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  if (s == "wrn") return Family::wrn;
  if (s == "efficientnet") return Family::efficientnet;
  if (s == "mlpmixer") return Family::mlpmixer;
  if (s == "vit") return Family::vit;
  throw std::invalid_argument("unknown model family '" + s + "'");
}

void ModelConfig::validate() const {
  if (depth_multiplier < 1.0 || width_multiplier < 1.0)
    throw std::invalid_argument("depth/width multipliers must be >= 1");
  if (resolution < 1 || in_channels < 1 || num_classes < 1)
    throw std::invalid_argument("resolution, in_channels and num_classes must be positive");
  attention.validate();
  switch (family) {
    case Family::wrn:
      if ((base_depth - 4) % 6 != 0 || base_depth < 10)
        throw std::invalid_argument("WRN base depth must be 6n+4 with n >= 1, got " + std::to_string(base_depth));
      break;
    case Family::efficientnet: break;
    case Family::mlpmixer:
    case Family::vit:
      if (patch < 1 || resolution % patch != 0)
        throw std::invalid_argument(std::string(family == Family::vit ? "ViT" : "MLPMixer") + "/" +
                                    std::to_string(patch) + ": resolution " + std::to_string(resolution) +
                                    " is not divisible by the patch size");
      if (family == Family::vit && hidden % heads != 0)
        throw std::invalid_argument("ViT hidden width " + std::to_string(hidden) + " not divisible by " +
                                    std::to_string(heads) + " heads");
      break;
  }
}

WrnLayout wrn_layout(const ModelConfig& c) {
  WrnLayout l;
  const int n = (c.base_depth - 4) / 6;
  l.blocks_per_group = std::max(1, static_cast<int>(std::lround(n * c.depth_multiplier)));
  const std::int64_t base = static_cast<std::int64_t>(c.stem_channels) * c.widen_factor;
  for (int g = 0; g < 3; ++g)
    l.widths[static_cast<std::size_t>(g)] = std::llround(static_cast<double>(base << g) * c.width_multiplier);
  return l;
}

std::int64_t round_filters(std::int64_t filters, double w) {
  constexpr std::int64_t divisor = 8;
  const double f = static_cast<double>(filters) * w;
  std::int64_t r = std::max<std::int64_t>(divisor, static_cast<std::int64_t>(f + divisor / 2.0) / divisor * divisor);
  if (static_cast<double>(r) < 0.9 * f) r += divisor;
  return r;
}

int round_repeats(int repeats, double d) { return static_cast<int>(std::ceil(repeats * d - 1e-9)); }

EfficientNetLayout efficientnet_layout(const ModelConfig& c) {
  static const MBStage b0[] = {{1, 3, 1, 1, 32, 16},  {2, 3, 2, 6, 16, 24},  {2, 5, 2, 6, 24, 40},
                               {3, 3, 2, 6, 40, 80},  {3, 5, 1, 6, 80, 112}, {4, 5, 2, 6, 112, 192},
                               {1, 3, 1, 6, 192, 320}};
  EfficientNetLayout l;
  const double w = c.width_multiplier, d = c.depth_multiplier;
  l.stem = round_filters(32, w);
  l.head = round_filters(1280, w);
  for (const auto& s : b0)
    l.stages.push_back({round_repeats(s.repeats, d), s.kernel, s.stride, s.expand, round_filters(s.in, w),
                        round_filters(s.out, w)});
  return l;
}

bool same_network(const ModelConfig& a, const ModelConfig& b) {
  auto strip = [](ModelConfig c) {
    c.name.clear();
    c.depth_multiplier = c.width_multiplier = 1.0;
    return c;
  };
  if (!(strip(a) == strip(b))) return false;
  if (a.family == Family::wrn) return wrn_layout(a) == wrn_layout(b);
  if (a.family == Family::efficientnet) return efficientnet_layout(a) == efficientnet_layout(b);
  return a.depth_multiplier == b.depth_multiplier && a.width_multiplier == b.width_multiplier;
}

Tensor Model::predict(const Tensor& x) {
  Context ctx(params_, nullptr, false);
  return forward(ctx, x);
}

std::int64_t count_params(const Model& m) { return m.count_params(); }

namespace {

Tensor gap_flat(const Tensor& f) { return reshape(pool(f, PoolKind::gap), {f.dim(0), f.dim(1)}); }

class WrnNet : public Network {
 public:
  explicit WrnNet(const ModelConfig& c, Builder b) {
    const auto l = wrn_layout(c);
    stem_ = Conv2dLayer::make(b.sub("stem"), c.in_channels, c.stem_channels, 3, 1, false);
    std::int64_t in = c.stem_channels;
    for (int g = 0; g < 3; ++g) {
      for (int i = 0; i < l.blocks_per_group; ++i) {
        BlockSpec s;
        s.kind = BlockKind::wrn;
        s.in_channels = in;
        s.out_channels = l.widths[static_cast<std::size_t>(g)];
        s.stride = (i == 0 && g > 0) ? 2 : 1;
        s.attention = c.attention;
        s.ghost = c.ghost;
        blocks_.push_back(make_block(b.sub("group" + std::to_string(g) + ".block" + std::to_string(i)), s));
        in = s.out_channels;
      }
    }
    bn_ = BatchNormLayer::make(b.sub("final_bn"), in);
    head_ = DenseLayer::make(b.sub("head"), in, c.num_classes);
  }
  Tensor features(Context& ctx, const Tensor& x) const override {
    Tensor y = stem_.forward(ctx, x);
    for (const auto& blk : blocks_) y = blk->forward(ctx, y);
    return relu(bn_.forward(ctx, y));
  }
  Tensor head(Context& ctx, const Tensor& f) const override { return head_.forward(ctx, gap_flat(f)); }
  bool convolutional() const override { return true; }

 private:
  Conv2dLayer stem_;
  std::vector<std::unique_ptr<Module>> blocks_;
  BatchNormLayer bn_;
  DenseLayer head_;
};

class EfficientNet : public Network {
 public:
  explicit EfficientNet(const ModelConfig& c, Builder b) {
    const auto l = efficientnet_layout(c);
    stem_ = Conv2dLayer::make(b.sub("stem"), c.in_channels, l.stem, 3, 2, false);
    stem_bn_ = BatchNormLayer::make(b.sub("stem_bn"), l.stem);
    std::int64_t in = l.stem;
    for (std::size_t si = 0; si < l.stages.size(); ++si) {
      const auto& st = l.stages[si];
      for (int i = 0; i < st.repeats; ++i) {
        BlockSpec s;
        s.kind = st.expand == 1 ? BlockKind::mbconv1 : BlockKind::mbconv6;
        s.in_channels = in;
        s.out_channels = st.out;
        s.stride = i == 0 ? st.stride : 1;
        s.kernel = st.kernel;
        s.attention = c.attention;
        s.ghost = c.ghost;
        blocks_.push_back(make_block(b.sub("stage" + std::to_string(si) + ".block" + std::to_string(i)), s));
        in = st.out;
      }
    }
    top_ = Conv2dLayer::make(b.sub("top"), in, l.head, 1, 1, false);
    top_bn_ = BatchNormLayer::make(b.sub("top_bn"), l.head);
    head_ = DenseLayer::make(b.sub("head"), l.head, c.num_classes);
  }
  Tensor features(Context& ctx, const Tensor& x) const override {
    Tensor y = swish(stem_bn_.forward(ctx, stem_.forward(ctx, x)));
    for (const auto& blk : blocks_) y = blk->forward(ctx, y);
    return swish(top_bn_.forward(ctx, top_.forward(ctx, y)));
  }
  Tensor head(Context& ctx, const Tensor& f) const override { return head_.forward(ctx, gap_flat(f)); }
  bool convolutional() const override { return true; }

 private:
  Conv2dLayer stem_, top_;
  BatchNormLayer stem_bn_, top_bn_;
  std::vector<std::unique_ptr<Module>> blocks_;
  DenseLayer head_;
};

class MixerNet : public Network {
 public:
  explicit MixerNet(const ModelConfig& c, Builder b) : patch_(c.patch) {
    const std::int64_t g = c.resolution / c.patch, tokens = g * g;
    embed_ = DenseLayer::make(b.sub("embed"), static_cast<std::int64_t>(c.patch) * c.patch * c.in_channels, c.hidden);
    for (int i = 0; i < c.layers; ++i)
      layers_.emplace_back(b.sub("layer" + std::to_string(i)), tokens, c.hidden, c.token_dim, c.channel_dim);
    ln_ = LayerNormLayer::make(b.sub("final_ln"), c.hidden);
    head_ = DenseLayer::make(b.sub("head"), c.hidden, c.num_classes);
  }
  Tensor features(Context& ctx, const Tensor& x) const override {
    Tensor y = embed_.forward(ctx, extract_patches(x, patch_));
    for (const auto& l : layers_) y = l.forward(ctx, y);
    return ln_.forward(ctx, y);
  }
  Tensor head(Context& ctx, const Tensor& f) const override {
    Tensor p = reshape(reduce_mean(f, 1), {f.dim(0), f.dim(2)});
    return head_.forward(ctx, p);
  }
  bool convolutional() const override { return false; }

 private:
  int patch_;
  DenseLayer embed_, head_;
  std::vector<MixerLayer> layers_;
  LayerNormLayer ln_;
};

class VitNet : public Network {
 public:
  explicit VitNet(const ModelConfig& c, Builder b) : patch_(c.patch), hidden_(c.hidden), cls_(c.use_class_token) {
    const std::int64_t g = c.resolution / c.patch, tokens = g * g + (cls_ ? 1 : 0);
    embed_ = DenseLayer::make(b.sub("embed"), static_cast<std::int64_t>(c.patch) * c.patch * c.in_channels, c.hidden);
    if (cls_) class_token_ = b.param("class_token", b.uniform({1, 1, c.hidden}, 0.02));
    pos_ = b.param("pos_embedding", b.uniform({1, tokens, c.hidden}, 0.02));
    for (int i = 0; i < c.layers; ++i) layers_.emplace_back(b.sub("layer" + std::to_string(i)), c.hidden, c.heads, c.mlp_dim);
    ln_ = LayerNormLayer::make(b.sub("final_ln"), c.hidden);
    head_ = DenseLayer::make(b.sub("head"), c.hidden, c.num_classes);
  }
  Tensor features(Context& ctx, const Tensor& x) const override {
    Tensor y = embed_.forward(ctx, extract_patches(x, patch_));
    if (cls_) {
      Tensor zero({y.dim(0), 1, hidden_}, y.precision());
      y = concat({add(zero, ctx.param(*class_token_)), y}, 1);
    }
    y = add(y, ctx.param(pos_));
    for (const auto& l : layers_) y = l.forward(ctx, y);
    return ln_.forward(ctx, y);
  }
  Tensor head(Context& ctx, const Tensor& f) const override {
    Tensor p = cls_ ? slice(f, 1, 0, 1) : reduce_mean(f, 1);
    return head_.forward(ctx, reshape(p, {f.dim(0), f.dim(2)}));
  }
  bool convolutional() const override { return false; }

 private:
  int patch_;
  std::int64_t hidden_;
  bool cls_;
  DenseLayer embed_, head_;
  std::optional<ParamId> class_token_;
  ParamId pos_{};
  std::vector<TransformerLayer> layers_;
  LayerNormLayer ln_;
};

template <typename Net>
Model build_as(const ModelConfig& c, std::uint64_t seed, Family expect) {
  if (c.family != expect) throw std::invalid_argument("config family " + to_string(c.family) + " passed to " + to_string(expect) + " builder");
  c.validate();
  ParameterStore store;
  Builder b(store, seed);
  auto net = std::make_shared<const Net>(c, b);
  return Model(c, std::move(net), std::move(store));
}

}  // namespace

Model build_wrn(const ModelConfig& c, std::uint64_t seed) { return build_as<WrnNet>(c, seed, Family::wrn); }
Model build_efficientnet(const ModelConfig& c, std::uint64_t seed) {
  return build_as<EfficientNet>(c, seed, Family::efficientnet);
}
Model build_mlp_mixer(const ModelConfig& c, std::uint64_t seed) { return build_as<MixerNet>(c, seed, Family::mlpmixer); }
Model build_vit(const ModelConfig& c, std::uint64_t seed) { return build_as<VitNet>(c, seed, Family::vit); }

Model build_model(const ModelConfig& c, std::uint64_t seed) {
  switch (c.family) {
    case Family::wrn: return build_wrn(c, seed);
    case Family::efficientnet: return build_efficientnet(c, seed);
    case Family::mlpmixer: return build_mlp_mixer(c, seed);
    case Family::vit: return build_vit(c, seed);
  }
  throw std::invalid_argument("unknown family");
}

Tensor extract_patches(const Tensor& x, int p) {
  if (x.rank() != 4) throw ShapeError("extract_patches: input must be NCHW, got " + shape_str(x.shape()));
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % p != 0 || w % p != 0)
    throw ShapeError("extract_patches: " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch " +
                     std::to_string(p));
  Tensor y = reshape(x, {n, c, h / p, p, w / p, p});
  y = permute(y, {0, 2, 4, 3, 5, 1});
  return reshape(y, {n, (h / p) * (w / p), static_cast<std::int64_t>(p) * p * c});
}

MixerLayer::MixerLayer(Builder b, std::int64_t tokens, std::int64_t hidden, std::int64_t token_dim,
                       std::int64_t channel_dim) {
  ln1_ = LayerNormLayer::make(b.sub("ln1"), hidden);
  tok1_ = DenseLayer::make(b.sub("token_fc1"), tokens, token_dim);
  tok2_ = DenseLayer::make(b.sub("token_fc2"), token_dim, tokens);
  ln2_ = LayerNormLayer::make(b.sub("ln2"), hidden);
  ch1_ = DenseLayer::make(b.sub("channel_fc1"), hidden, channel_dim);
  ch2_ = DenseLayer::make(b.sub("channel_fc2"), channel_dim, hidden);
}

Tensor MixerLayer::forward(Context& ctx, const Tensor& x) const {
  Tensor t = permute(ln1_.forward(ctx, x), {0, 2, 1});
  t = tok2_.forward(ctx, gelu(tok1_.forward(ctx, t)));
  Tensor y = add(x, permute(t, {0, 2, 1}));
  Tensor c = ch2_.forward(ctx, gelu(ch1_.forward(ctx, ln2_.forward(ctx, y))));
  return add(y, c);
}

TransformerLayer::TransformerLayer(Builder b, std::int64_t hidden, int heads, std::int64_t mlp_dim) : heads_(heads) {
  ln1_ = LayerNormLayer::make(b.sub("ln1"), hidden);
  qkv_ = DenseLayer::make(b.sub("qkv"), hidden, 3 * hidden);
  proj_ = DenseLayer::make(b.sub("proj"), hidden, hidden);
  ln2_ = LayerNormLayer::make(b.sub("ln2"), hidden);
  fc1_ = DenseLayer::make(b.sub("fc1"), hidden, mlp_dim);
  fc2_ = DenseLayer::make(b.sub("fc2"), mlp_dim, hidden);
}

Tensor TransformerLayer::forward(Context& ctx, const Tensor& x) const {
  const auto n = x.dim(0), t = x.dim(1), d = x.dim(2), dh = d / heads_;
  Tensor qkv = reshape(qkv_.forward(ctx, ln1_.forward(ctx, x)), {n, t, 3, heads_, dh});
  qkv = permute(qkv, {2, 0, 3, 1, 4});
  auto part = [&](int i) { return reshape(slice(qkv, 0, i, 1), {n, heads_, t, dh}); };
  Tensor a = scaled_dot_product_attention(part(0), part(1), part(2));
  a = reshape(permute(a, {0, 2, 1, 3}), {n, t, d});
  Tensor y = add(x, proj_.forward(ctx, a));
  return add(y, fc2_.forward(ctx, gelu(fc1_.forward(ctx, ln2_.forward(ctx, y)))));
}

// --- zoo -----------------------------------------------------------------------

namespace {

const char* kSuffixes[] = {"", "-SE", "-ECA", "-CBAM", "-COORD"};

ModelConfig wrn_base() {
  ModelConfig c;
  c.family = Family::wrn;
  c.resolution = 60;
  return c;
}

ModelConfig effnet_base() {
  ModelConfig c;
  c.family = Family::efficientnet;
  c.resolution = 60;
  return c;
}

ModelConfig mixer(int patch) {
  ModelConfig c;
  c.family = Family::mlpmixer;
  c.resolution = 120;
  c.patch = patch;
  c.hidden = 128;
  c.layers = 4;
  c.token_dim = 64;
  c.channel_dim = 200;
  return c;
}

ModelConfig vit(int patch, bool medium) {
  ModelConfig c;
  c.family = Family::vit;
  c.resolution = 120;
  c.patch = patch;
  c.layers = medium ? 12 : 8;
  c.heads = medium ? 10 : 4;
  c.hidden = medium ? 200 : 192;
  c.mlp_dim = 4 * c.hidden;
  c.use_class_token = true;
  return c;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (std::tolower(a[i - 1]) == std::tolower(b[j - 1]) ? 0u : 1u)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::vector<std::string> zoo_names() {
  std::vector<std::string> out;
  for (const char* base : {"WRNB0", "EfficientNetB0"})
    for (const char* s : kSuffixes)
      for (const char* g : {"", "-GHOST"}) out.push_back(std::string(base) + s + g);
  out.push_back("MLPMixer");
  for (int p : {6, 20, 30, 40}) out.push_back("MLPMixer/" + std::to_string(p));
  out.push_back("MLPMixerTiny");
  for (int p : {6, 12, 20, 30, 40}) out.push_back("ViT/" + std::to_string(p));
  out.push_back("ViTM/20");
  return out;
}

ModelConfig zoo_config(const std::string& name) {
  auto names = zoo_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw std::invalid_argument("unknown model '" + name + "'; did you mean '" + nearest_zoo_name(name) + "'?");
  ModelConfig c;
  auto starts = [&](const std::string& p) { return name.rfind(p, 0) == 0; };
  if (starts("WRNB0") || starts("EfficientNetB0")) {
    c = starts("WRNB0") ? wrn_base() : effnet_base();
    std::string rest = name.substr(starts("WRNB0") ? 5 : 14);
    if (rest.size() >= 6 && rest.compare(rest.size() - 6, 6, "-GHOST") == 0) {
      c.ghost = true;
      rest.resize(rest.size() - 6);
    }
    if (!rest.empty()) c.attention.kind = parse_attention(rest.substr(1));
  } else if (name == "MLPMixerTiny") {
    c = mixer(6);
    c.hidden = 30;
    c.layers = 2;
    c.token_dim = 12;
    c.channel_dim = 50;
  } else if (starts("MLPMixer")) {
    c = mixer(name == "MLPMixer" ? 12 : std::stoi(name.substr(9)));
  } else if (starts("ViTM/")) {
    c = vit(std::stoi(name.substr(5)), true);
  } else {
    c = vit(std::stoi(name.substr(4)), false);
  }
  c.name = name;
  return c;
}

std::string nearest_zoo_name(const std::string& name) {
  std::string best;
  std::size_t bd = SIZE_MAX;
  for (const auto& n : zoo_names()) {
    const auto d = edit_distance(name, n);
    if (d < bd) {
      bd = d;
      best = n;
    }
  }
  return best;
}

}  // namespace szoo
