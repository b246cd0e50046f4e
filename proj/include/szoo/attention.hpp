#pragma once

// Channel and spatial attention gates. Each gate maps NCHW -> NCHW and
// multiplies its input by sigmoid weights in (0, 1).

#include <cstdint>
#include <memory>
#include <string>

#include "szoo/module.hpp"

namespace szoo {

enum class AttentionKind { none, se, eca, cbam, coord };

std::string to_string(AttentionKind k);
/// Accepts the model-name suffixes as well: "SE", "ECA", "CBAM", "COORD"/"CA".
AttentionKind parse_attention(const std::string& s);

struct AttentionSpec {
  AttentionKind kind = AttentionKind::none;
  int se_reduction = 16;
  int cbam_spatial_kernel = 7;
  int cbam_reduction = 16;
  /// BN after the spatial-attention conv. Turning it off gives the smallest
  /// CBAM parameterization (two 7x7 filters per site, no bias).
  bool cbam_spatial_bn = true;
  int coord_reduction = 32;
  /// Floor on the shared coordinate-attention width.
  int coord_min_channels = 8;
  int eca_gamma = 2;
  int eca_b = 1;

  void validate() const;
  bool operator==(const AttentionSpec&) const = default;
};

/// Bottleneck width of the SE / CBAM channel MLP.
std::int64_t reduced_channels(std::int64_t channels, int reduction);
int eca_kernel_size(std::int64_t channels, int gamma = 2, int b = 1);
std::int64_t coord_channels(std::int64_t channels, const AttentionSpec& spec);

/// Parameters added by one gate at a site with the given channel count.
std::int64_t attention_param_count(const AttentionSpec& spec, std::int64_t channels);

/// nullptr for AttentionKind::none.
std::unique_ptr<Module> make_attention(Builder b, std::int64_t channels, const AttentionSpec& spec);

class SEBlock : public Module {
 public:
  SEBlock(Builder b, std::int64_t channels, int reduction);
  Tensor forward(Context& ctx, const Tensor& x) const override;

 private:
  std::int64_t channels_;
  DenseLayer fc1_, fc2_;
};

class ECABlock : public Module {
 public:
  ECABlock(Builder b, std::int64_t channels, int gamma, int bias_term);
  Tensor forward(Context& ctx, const Tensor& x) const override;
  int kernel_size() const { return k_; }

 private:
  std::int64_t channels_;
  int k_;
  ParamId weight_{}, bias_{};
};

class CBAMBlock : public Module {
 public:
  CBAMBlock(Builder b, std::int64_t channels, const AttentionSpec& spec);
  Tensor forward(Context& ctx, const Tensor& x) const override;

 private:
  std::int64_t channels_;
  DenseLayer fc1_, fc2_;
  Conv2dLayer spatial_;
  std::optional<BatchNormLayer> spatial_bn_;
};

class CoordAttention : public Module {
 public:
  CoordAttention(Builder b, std::int64_t channels, const AttentionSpec& spec);
  Tensor forward(Context& ctx, const Tensor& x) const override;

 private:
  Conv2dLayer shared_, conv_h_, conv_w_;
  BatchNormLayer bn_;
};

}  // namespace szoo
