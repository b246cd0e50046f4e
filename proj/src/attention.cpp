#include "szoo/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace szoo {

std::string to_string(AttentionKind k) {
  switch (k) {
    case AttentionKind::none: return "none";
    case AttentionKind::se: return "se";
    case AttentionKind::eca: return "eca";
    case AttentionKind::cbam: return "cbam";
    case AttentionKind::coord: return "coord";
  }
  return "?";
}

AttentionKind parse_attention(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "none" || l.empty()) return AttentionKind::none;
  if (l == "se") return AttentionKind::se;
  if (l == "eca") return AttentionKind::eca;
  if (l == "cbam") return AttentionKind::cbam;
  if (l == "coord" || l == "ca") return AttentionKind::coord;
  throw std::invalid_argument("unknown attention kind '" + s + "' (expected none, se, eca, cbam, coord)");
}

void AttentionSpec::validate() const {
  if (se_reduction < 1 || cbam_reduction < 1 || coord_reduction < 1)
    throw std::invalid_argument("attention reduction ratios must be >= 1");
  if (cbam_spatial_kernel < 1 || cbam_spatial_kernel % 2 == 0)
    throw std::invalid_argument("cbam_spatial_kernel must be odd, got " + std::to_string(cbam_spatial_kernel));
  if (eca_gamma < 1) throw std::invalid_argument("eca_gamma must be >= 1");
  if (coord_min_channels < 1) throw std::invalid_argument("coord_min_channels must be >= 1");
}

std::int64_t reduced_channels(std::int64_t channels, int reduction) {
  return std::max<std::int64_t>(1, channels / reduction);
}

int eca_kernel_size(std::int64_t channels, int gamma, int b) {
  const double t = std::log2(static_cast<double>(channels)) / gamma + static_cast<double>(b) / gamma;
  int k = static_cast<int>(std::floor(t));
  if (k % 2 == 0) ++k;
  return std::max(k, 3);
}

std::int64_t coord_channels(std::int64_t channels, const AttentionSpec& spec) {
  return std::max<std::int64_t>(spec.coord_min_channels, channels / spec.coord_reduction);
}

std::int64_t attention_param_count(const AttentionSpec& spec, std::int64_t c) {
  switch (spec.kind) {
    case AttentionKind::none: return 0;
    case AttentionKind::se: {
      const auto m = reduced_channels(c, spec.se_reduction);
      return 2 * c * m + m + c;
    }
    case AttentionKind::eca: return eca_kernel_size(c, spec.eca_gamma, spec.eca_b) + 1;
    case AttentionKind::cbam: {
      const auto m = reduced_channels(c, spec.cbam_reduction);
      const std::int64_t k = spec.cbam_spatial_kernel;
      return 2 * c * m + m + c + 2 * k * k + (spec.cbam_spatial_bn ? 4 : 0);
    }
    case AttentionKind::coord: {
      const auto m = coord_channels(c, spec);
      return c * m + m + 4 * m + 2 * (m * c + c);
    }
  }
  return 0;
}

std::unique_ptr<Module> make_attention(Builder b, std::int64_t channels, const AttentionSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case AttentionKind::none: return nullptr;
    case AttentionKind::se: return std::make_unique<SEBlock>(b.sub("se"), channels, spec.se_reduction);
    case AttentionKind::eca: return std::make_unique<ECABlock>(b.sub("eca"), channels, spec.eca_gamma, spec.eca_b);
    case AttentionKind::cbam: return std::make_unique<CBAMBlock>(b.sub("cbam"), channels, spec);
    case AttentionKind::coord: return std::make_unique<CoordAttention>(b.sub("coord"), channels, spec);
  }
  return nullptr;
}

namespace {

/// N x C x 1 x 1 pooled descriptor -> N x C.
Tensor flat(const Tensor& pooled) { return reshape(pooled, {pooled.dim(0), pooled.dim(1)}); }
Tensor as_gate(const Tensor& nc) { return reshape(nc, {nc.dim(0), nc.dim(1), 1, 1}); }

}  // namespace

SEBlock::SEBlock(Builder b, std::int64_t channels, int reduction) : channels_(channels) {
  const auto m = reduced_channels(channels, reduction);
  fc1_ = DenseLayer::make(b.sub("fc1"), channels, m);
  fc2_ = DenseLayer::make(b.sub("fc2"), m, channels);
}

Tensor SEBlock::forward(Context& ctx, const Tensor& x) const {
  Tensor s = flat(pool(x, PoolKind::gap));
  s = relu(fc1_.forward(ctx, s));
  s = sigmoid(fc2_.forward(ctx, s));
  return mul(x, as_gate(s));
}

ECABlock::ECABlock(Builder b, std::int64_t channels, int gamma, int bias_term)
    : channels_(channels), k_(eca_kernel_size(channels, gamma, bias_term)) {
  weight_ = b.param("weight", b.he_uniform({1, 1, k_}, k_));
  bias_ = b.param("bias", Tensor({1}));
}

Tensor ECABlock::forward(Context& ctx, const Tensor& x) const {
  const auto n = x.dim(0);
  Tensor s = reshape(pool(x, PoolKind::gap), {n, 1, x.dim(1)});
  s = sigmoid(conv1d(s, ctx.param(weight_), ctx.param(bias_)));
  return mul(x, reshape(s, {n, x.dim(1), 1, 1}));
}

CBAMBlock::CBAMBlock(Builder b, std::int64_t channels, const AttentionSpec& spec) : channels_(channels) {
  const auto m = reduced_channels(channels, spec.cbam_reduction);
  fc1_ = DenseLayer::make(b.sub("fc1"), channels, m);
  fc2_ = DenseLayer::make(b.sub("fc2"), m, channels);
  spatial_ = Conv2dLayer::make(b.sub("spatial"), 2, 1, spec.cbam_spatial_kernel, 1, false);
  if (spec.cbam_spatial_bn) spatial_bn_ = BatchNormLayer::make(b.sub("spatial_bn"), 1);
}

Tensor CBAMBlock::forward(Context& ctx, const Tensor& x) const {
  auto mlp = [&](const Tensor& v) { return fc2_.forward(ctx, relu(fc1_.forward(ctx, v))); };
  Tensor cg = sigmoid(add(mlp(flat(pool(x, PoolKind::gap))), mlp(flat(pool(x, PoolKind::gmp)))));
  Tensor y = mul(x, as_gate(cg));

  Tensor stack = concat({reduce_max(y, 1), reduce_mean(y, 1)}, 1);
  Tensor s = spatial_.forward(ctx, stack);
  if (spatial_bn_) s = spatial_bn_->forward(ctx, s);
  return mul(y, sigmoid(s));
}

CoordAttention::CoordAttention(Builder b, std::int64_t channels, const AttentionSpec& spec) {
  const auto m = coord_channels(channels, spec);
  shared_ = Conv2dLayer::make(b.sub("shared"), channels, m, 1, 1, true);
  bn_ = BatchNormLayer::make(b.sub("bn"), m);
  conv_h_ = Conv2dLayer::make(b.sub("conv_h"), m, channels, 1, 1, true);
  conv_w_ = Conv2dLayer::make(b.sub("conv_w"), m, channels, 1, 1, true);
}

Tensor CoordAttention::forward(Context& ctx, const Tensor& x) const {
  const auto h = x.dim(2), w = x.dim(3);
  Tensor xh = reduce_mean(x, 3);                          // N C H 1
  Tensor xw = permute(reduce_mean(x, 2), {0, 1, 3, 2});   // N C W 1
  Tensor y = swish(bn_.forward(ctx, shared_.forward(ctx, concat({xh, xw}, 2))));
  Tensor gh = sigmoid(conv_h_.forward(ctx, slice(y, 2, 0, h)));
  Tensor gw = sigmoid(conv_w_.forward(ctx, permute(slice(y, 2, h, w), {0, 1, 3, 2})));
  return mul(mul(x, gh), gw);
}

}  // namespace szoo
