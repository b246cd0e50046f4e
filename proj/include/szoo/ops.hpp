#pragma once

// Differentiable tensor operations. Every op records itself on the tape of
// its taped inputs (if any) and otherwise runs as a plain computation.
// Feature maps are NCHW row-major. An undefined Tensor passed as a bias means
// "no bias".

#include <cstdint>
#include <string>
#include <vector>

#include "szoo/tape.hpp"
#include "szoo/tensor.hpp"

namespace szoo {

enum class Padding { same, valid };
enum class PoolKind { gap, gmp, avg2d, max2d };
enum class Activation { relu, sigmoid, swish, gelu, softmax };

Padding parse_padding(const std::string& s);

/// Output extent and leading pad along one spatial axis.
struct ConvGeometry {
  std::int64_t out = 0;
  std::int64_t pad_begin = 0;
};
ConvGeometry conv_geometry(std::int64_t in, std::int64_t kernel, std::int64_t stride, Padding padding);

// --- elementwise & structural ------------------------------------------------

/// Numpy-style broadcasting over equal-rank shapes (ranks are left-padded with 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean / max along one axis, keeping it with extent 1.
Tensor reduce_mean(const Tensor& a, int axis);
Tensor reduce_max(const Tensor& a, int axis);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& dims);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t length);

// --- layers ---------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, Padding padding);
/// weight is C x 1 x kh x kw; one filter per input channel.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, Padding padding);
/// x is N x 1 x L, weight 1 x 1 x k with k odd; zero "same" padding.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// x is (..., F), weight F x G, bias G.
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Cross-worker reduction used by synchronized batch norm. allreduce_sum must
/// be called by every participating worker in the same order; on return each
/// worker holds the elementwise sum over all workers.
class BatchNormCollective {
 public:
  virtual ~BatchNormCollective() = default;
  virtual void allreduce_sum(std::vector<double>& values) = 0;
};

struct BatchNormOptions {
  bool training = false;
  double eps = 1e-3;
  double momentum = 0.99;
  /// When set in training mode, batch statistics span every worker's shard.
  BatchNormCollective* collective = nullptr;
};
/// Running statistics are updated in place when options.training is set.
Tensor batchnorm2d(const Tensor& x, const Tensor& scale, const Tensor& shift, Tensor& running_mean,
                   Tensor& running_var, const BatchNormOptions& options);

Tensor layernorm(const Tensor& x, const Tensor& scale, const Tensor& shift, double eps = 1e-6);

/// gap/gmp reduce H x W to 1 x 1; avg2d/max2d use valid windows.
Tensor pool(const Tensor& x, PoolKind kind, int window = 0, int stride = 0);

Tensor activation(const Tensor& x, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }
inline Tensor swish(const Tensor& x) { return activation(x, Activation::swish); }
inline Tensor gelu(const Tensor& x) { return activation(x, Activation::gelu); }
/// Softmax over the last axis.
inline Tensor softmax(const Tensor& x) { return activation(x, Activation::softmax); }

/// q: N x h x T x d, k/v: N x h x S x d. softmax(q k^T / sqrt(d)) v.
Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Half-pixel (align_corners = false) bilinear resampling of NCHW maps.
Tensor resize_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w);

/// Mean binary cross-entropy over every logit, from logits (stable form).
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

}  // namespace szoo
