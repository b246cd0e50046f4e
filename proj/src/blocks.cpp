#include "szoo/blocks.hpp"

#include <stdexcept>

namespace szoo {

void BlockSpec::validate() const {
  if (stride != 1 && stride != 2) throw std::invalid_argument("block stride must be 1 or 2, got " + std::to_string(stride));
  if (in_channels < 1 || out_channels < 1) throw std::invalid_argument("block channel counts must be >= 1");
  if (ghost_ratio < 1) throw std::invalid_argument("ghost_ratio must be >= 1");
  attention.validate();
}

GhostConv::GhostConv(Builder b, std::int64_t in, std::int64_t out, int kernel, int stride, int ratio, int dw_kernel)
    : ratio_(ratio) {
  if (ratio < 1 || out % ratio != 0)
    throw std::invalid_argument("ghost conv: out_channels " + std::to_string(out) + " not divisible by ratio " +
                                std::to_string(ratio));
  const auto intrinsic = out / ratio;
  primary_ = Conv2dLayer::make(b.sub("primary"), in, intrinsic, kernel, stride, false);
  if (ratio > 1) cheap_ = DepthwiseConv2dLayer::make(b.sub("cheap"), intrinsic * (ratio - 1), dw_kernel, 1, false);
}

Tensor GhostConv::forward(Context& ctx, const Tensor& x) const {
  Tensor p = primary_.forward(ctx, x);
  if (!cheap_) return p;
  // Ghost map j of intrinsic channel i sits at channel j*intrinsic + i.
  std::vector<Tensor> copies(static_cast<std::size_t>(ratio_ - 1), p);
  Tensor g = cheap_->forward(ctx, copies.size() == 1 ? p : concat(copies, 1));
  return concat({p, g}, 1);
}

std::int64_t GhostConv::param_count(std::int64_t in, std::int64_t out, int kernel, int ratio, int dw_kernel) {
  const auto m = out / ratio;
  return m * in * kernel * kernel + (ratio - 1) * m * dw_kernel * dw_kernel;
}

ConvUnit::ConvUnit(Builder b, std::int64_t in, std::int64_t out, int kernel, int stride, bool ghost, int ratio,
                   int dw_kernel) {
  if (ghost)
    ghost_ = GhostConv(b.sub("ghost"), in, out, kernel, stride, ratio, dw_kernel);
  else
    plain_ = Conv2dLayer::make(b.sub("conv"), in, out, kernel, stride, false);
}

Tensor ConvUnit::forward(Context& ctx, const Tensor& x) const {
  return plain_ ? plain_->forward(ctx, x) : ghost_->forward(ctx, x);
}

WrnBlock::WrnBlock(Builder b, const BlockSpec& s) {
  s.validate();
  bn1_ = BatchNormLayer::make(b.sub("bn1"), s.in_channels);
  conv1_ = ConvUnit(b.sub("conv1"), s.in_channels, s.out_channels, 3, s.stride, s.ghost, s.ghost_ratio, s.ghost_dw_kernel);
  bn2_ = BatchNormLayer::make(b.sub("bn2"), s.out_channels);
  conv2_ = ConvUnit(b.sub("conv2"), s.out_channels, s.out_channels, 3, 1, s.ghost, s.ghost_ratio, s.ghost_dw_kernel);
  attention_ = make_attention(b, s.out_channels, s.attention);
  if (s.in_channels != s.out_channels || s.stride != 1)
    shortcut_ = Conv2dLayer::make(b.sub("shortcut"), s.in_channels, s.out_channels, 1, s.stride, false);
}

Tensor WrnBlock::forward(Context& ctx, const Tensor& x) const {
  Tensor a = relu(bn1_.forward(ctx, x));
  Tensor y = conv1_.forward(ctx, a);
  y = conv2_.forward(ctx, relu(bn2_.forward(ctx, y)));
  if (attention_) y = attention_->forward(ctx, y);
  return add(y, shortcut_ ? shortcut_->forward(ctx, a) : x);
}

MBConvBlock::MBConvBlock(Builder b, const BlockSpec& s) {
  s.validate();
  if (s.kind == BlockKind::wrn) throw std::invalid_argument("MBConvBlock needs an mbconv1 or mbconv6 spec");
  const int expand = s.kind == BlockKind::mbconv6 ? 6 : 1;
  mid_ = s.in_channels * expand;
  residual_ = s.stride == 1 && s.in_channels == s.out_channels;
  if (expand != 1) {
    expand_ = ConvUnit(b.sub("expand"), s.in_channels, mid_, 1, 1, s.ghost, s.ghost_ratio, s.ghost_dw_kernel);
    expand_bn_ = BatchNormLayer::make(b.sub("expand_bn"), mid_);
  }
  depthwise_ = DepthwiseConv2dLayer::make(b.sub("depthwise"), mid_, s.kernel, s.stride, false);
  dw_bn_ = BatchNormLayer::make(b.sub("dw_bn"), mid_);
  attention_ = make_attention(b, mid_, s.attention);
  project_ = ConvUnit(b.sub("project"), mid_, s.out_channels, 1, 1, s.ghost, s.ghost_ratio, s.ghost_dw_kernel);
  project_bn_ = BatchNormLayer::make(b.sub("project_bn"), s.out_channels);
}

Tensor MBConvBlock::forward(Context& ctx, const Tensor& x) const {
  Tensor y = x;
  if (expand_) y = swish(expand_bn_->forward(ctx, expand_->forward(ctx, y)));
  y = swish(dw_bn_.forward(ctx, depthwise_.forward(ctx, y)));
  if (attention_) y = attention_->forward(ctx, y);
  y = project_bn_.forward(ctx, project_.forward(ctx, y));
  return residual_ ? add(y, x) : y;
}

std::unique_ptr<Module> make_block(Builder b, const BlockSpec& spec) {
  if (spec.kind == BlockKind::wrn) return std::make_unique<WrnBlock>(b, spec);
  return std::make_unique<MBConvBlock>(b, spec);
}

}  // namespace szoo
