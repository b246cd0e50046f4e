#pragma once

// Residual building blocks: the pre-activation WRN block, MBConv1/MBConv6,
// and the ghost convolution that can stand in for a regular conv.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "szoo/attention.hpp"
#include "szoo/module.hpp"

namespace szoo {

enum class BlockKind { wrn, mbconv1, mbconv6 };

struct BlockSpec {
  BlockKind kind = BlockKind::wrn;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  int stride = 1;
  /// Depthwise kernel for MBConv; WRN blocks always use 3x3.
  int kernel = 3;
  AttentionSpec attention;
  bool ghost = false;
  int ghost_ratio = 2;
  int ghost_dw_kernel = 3;

  void validate() const;
};

/// Primary conv to out/s intrinsic maps, then depthwise dw_kernel filters
/// producing the remaining (s-1)*out/s maps. No bias.
class GhostConv {
 public:
  GhostConv() = default;
  GhostConv(Builder b, std::int64_t in, std::int64_t out, int kernel, int stride, int ratio, int dw_kernel);
  Tensor forward(Context& ctx, const Tensor& x) const;

  static std::int64_t param_count(std::int64_t in, std::int64_t out, int kernel, int ratio, int dw_kernel);

  const Conv2dLayer& primary() const { return primary_; }

 private:
  Conv2dLayer primary_;
  std::optional<DepthwiseConv2dLayer> cheap_;
  int ratio_ = 1;
};

/// A bias-free conv that is either a regular conv2d or a ghost substitute.
class ConvUnit {
 public:
  ConvUnit() = default;
  ConvUnit(Builder b, std::int64_t in, std::int64_t out, int kernel, int stride, bool ghost, int ratio,
           int dw_kernel);
  Tensor forward(Context& ctx, const Tensor& x) const;

 private:
  std::optional<Conv2dLayer> plain_;
  std::optional<GhostConv> ghost_;
};

class WrnBlock : public Module {
 public:
  WrnBlock(Builder b, const BlockSpec& spec);
  Tensor forward(Context& ctx, const Tensor& x) const override;

 private:
  BatchNormLayer bn1_, bn2_;
  ConvUnit conv1_, conv2_;
  std::unique_ptr<Module> attention_;
  std::optional<Conv2dLayer> shortcut_;
};

class MBConvBlock : public Module {
 public:
  MBConvBlock(Builder b, const BlockSpec& spec);
  Tensor forward(Context& ctx, const Tensor& x) const override;

  std::int64_t mid_channels() const { return mid_; }
  bool has_residual() const { return residual_; }

 private:
  std::int64_t mid_;
  bool residual_;
  std::optional<ConvUnit> expand_;
  std::optional<BatchNormLayer> expand_bn_;
  DepthwiseConv2dLayer depthwise_;
  BatchNormLayer dw_bn_;
  std::unique_ptr<Module> attention_;
  ConvUnit project_;
  BatchNormLayer project_bn_;
};

std::unique_ptr<Module> make_block(Builder b, const BlockSpec& spec);

}  // namespace szoo
