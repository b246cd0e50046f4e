#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "ops_internal.hpp"

namespace szoo {

using detail::finish;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

Padding parse_padding(const std::string& s) {
  if (s == "same") return Padding::same;
  if (s == "valid") return Padding::valid;
  throw std::invalid_argument("unknown padding '" + s + "' (expected same or valid)");
}

ConvGeometry conv_geometry(std::int64_t in, std::int64_t kernel, std::int64_t stride, Padding padding) {
  ConvGeometry g;
  if (padding == Padding::valid) {
    g.out = in >= kernel ? (in - kernel) / stride + 1 : 0;
    return g;
  }
  g.out = (in + stride - 1) / stride;
  const std::int64_t total = std::max<std::int64_t>((g.out - 1) * stride + kernel - in, 0);
  g.pad_begin = total / 2;
  return g;
}

namespace {

struct Conv2dDims {
  std::int64_t n, c, h, w, o, kh, kw, oh, ow, pad_h, pad_w, stride;
};

void check_nchw(const Tensor& x, const char* op) {
  if (x.rank() != 4) throw ShapeError(std::string(op) + ": input must be NCHW, got " + shape_str(x.shape()));
}

Conv2dDims conv_dims(const Tensor& x, std::int64_t out_c, std::int64_t kh, std::int64_t kw, int stride, Padding padding,
                     const char* op) {
  if (stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (kh < 1 || kw < 1) throw ShapeError(std::string(op) + ": kernel extents must be >= 1");
  Conv2dDims d{};
  d.n = x.dim(0);
  d.c = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.o = out_c;
  d.kh = kh;
  d.kw = kw;
  d.stride = stride;
  const auto gh = conv_geometry(d.h, kh, stride, padding);
  const auto gw = conv_geometry(d.w, kw, stride, padding);
  if (gh.out <= 0 || gw.out <= 0)
    throw ShapeError(std::string(op) + ": kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than valid input " + std::to_string(d.h) + "x" + std::to_string(d.w));
  d.oh = gh.out;
  d.ow = gw.out;
  d.pad_h = gh.pad_begin;
  d.pad_w = gw.pad_begin;
  return d;
}

// Valid output columns [lo, hi) for kernel offset j: ix = ox*stride + j - pad in [0, w).
std::pair<std::int64_t, std::int64_t> valid_cols(const Conv2dDims& d, std::int64_t j) {
  const std::int64_t off = j - d.pad_w;
  std::int64_t lo = off >= 0 ? 0 : (-off + d.stride - 1) / d.stride;
  std::int64_t hi = d.w - off <= 0 ? 0 : (d.w - off + d.stride - 1) / d.stride;
  lo = std::min(lo, d.ow);
  hi = std::clamp(hi, lo, d.ow);
  return {lo, hi};
}

/// Writes the patch matrix of one sample into rows of length ld (ld >= oh*ow).
template <typename T>
void im2col(const T* x, const Conv2dDims& d, T* col, std::int64_t ld) {
  for (std::int64_t c = 0; c < d.c; ++c)
    for (std::int64_t i = 0; i < d.kh; ++i)
      for (std::int64_t j = 0; j < d.kw; ++j) {
        T* row = col + ((c * d.kh + i) * d.kw + j) * ld;
        const auto [lo, hi] = valid_cols(d, j);
        for (std::int64_t oy = 0; oy < d.oh; ++oy) {
          const std::int64_t iy = oy * d.stride + i - d.pad_h;
          T* dst = row + oy * d.ow;
          if (iy < 0 || iy >= d.h) {
            std::fill_n(dst, d.ow, T(0));
            continue;
          }
          const T* src = x + (c * d.h + iy) * d.w + j - d.pad_w;
          std::fill_n(dst, lo, T(0));
          if (d.stride == 1) std::copy(src + lo, src + hi, dst + lo);
          else
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * d.stride];
          std::fill(dst + hi, dst + d.ow, T(0));
        }
      }
}

template <typename T>
void col2im(const T* col, const Conv2dDims& d, T* x, std::int64_t ld) {
  for (std::int64_t c = 0; c < d.c; ++c)
    for (std::int64_t i = 0; i < d.kh; ++i)
      for (std::int64_t j = 0; j < d.kw; ++j) {
        const T* row = col + ((c * d.kh + i) * d.kw + j) * ld;
        const auto [lo, hi] = valid_cols(d, j);
        for (std::int64_t oy = 0; oy < d.oh; ++oy) {
          const std::int64_t iy = oy * d.stride + i - d.pad_h;
          if (iy < 0 || iy >= d.h) continue;
          T* dst = x + (c * d.h + iy) * d.w + j - d.pad_w;
          const T* src = row + oy * d.ow;
          for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox * d.stride] += src[ox];
        }
      }
}

/// Samples per GEMM so the patch matrix stays near 4M elements.
std::int64_t conv_chunk(const Conv2dDims& d, std::int64_t K, std::int64_t P) {
  return std::clamp<std::int64_t>((std::int64_t{1} << 17) / std::max<std::int64_t>(K * P, 1), 1, d.n);
}

void check_bias(const Tensor& bias, std::int64_t expected, const char* op) {
  if (!bias.defined()) return;
  if (bias.numel() != expected)
    throw ShapeError(std::string(op) + ": bias has " + std::to_string(bias.numel()) + " elements, expected " +
                     std::to_string(expected) + " (output channels)");
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, Padding padding) {
  check_nchw(x, "conv2d");
  if (weight.rank() != 4) throw ShapeError("conv2d: weight must be O x I x kh x kw, got " + shape_str(weight.shape()));
  if (weight.dim(1) != x.dim(1))
    throw ShapeError("conv2d: input channel axis mismatch: x has " + std::to_string(x.dim(1)) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  detail::require_same_precision(x, weight, "conv2d");
  check_bias(bias, weight.dim(0), "conv2d");
  const auto d = conv_dims(x, weight.dim(0), weight.dim(2), weight.dim(3), stride, padding, "conv2d");
  const std::int64_t K = d.c * d.kh * d.kw, P = d.oh * d.ow;
  Tensor out({d.n, d.o, d.oh, d.ow}, x.precision());
  dispatch(x.precision(), [&]<typename T>() {
    auto xd = x.data<T>();
    auto od = out.data<T>();
    ConstMapMat<T> W(weight.data<T>().data(), d.o, K);
    const std::int64_t chunk = conv_chunk(d, K, P);
    AlignedVector<T> col(static_cast<std::size_t>(K * P * chunk)), res(static_cast<std::size_t>(d.o * P * chunk));
    for (std::int64_t n0 = 0; n0 < d.n; n0 += chunk) {
      const std::int64_t nb = std::min(chunk, d.n - n0), ld = nb * P;
      for (std::int64_t s = 0; s < nb; ++s) im2col(xd.data() + (n0 + s) * d.c * d.h * d.w, d, col.data() + s * P, ld);
      MapMat<T> R(res.data(), d.o, ld);
      R.noalias() = W * ConstMapMat<T>(col.data(), K, ld);
      if (bias.defined()) {
        auto b = bias.data<T>();
        for (std::int64_t o = 0; o < d.o; ++o) R.row(o).array() += b[static_cast<std::size_t>(o)];
      }
      for (std::int64_t s = 0; s < nb; ++s)
        for (std::int64_t o = 0; o < d.o; ++o)
          std::copy_n(res.data() + o * ld + s * P, P, od.data() + ((n0 + s) * d.o + o) * P);
    }
  });
  return finish(out, {&x, &weight, &bias}, [&] {
    return [x = x.detach(), weight = weight.detach(), has_bias = bias.defined(), d, K, P](
               const Tensor& g, std::span<Tensor> gi, std::span<const bool> needs) {
      dispatch(x.precision(), [&]<typename T>() {
        auto xd = x.data<T>();
        auto gd = g.data<T>();
        ConstMapMat<T> W(weight.data<T>().data(), d.o, K);
        Tensor dx, dw, db;
        if (needs[0]) dx = Tensor(x.shape(), x.precision());
        if (needs[1]) dw = Tensor(weight.shape(), x.precision());
        if (has_bias && needs[2]) db = Tensor({d.o}, x.precision());
        const std::int64_t chunk = conv_chunk(d, K, P);
        AlignedVector<T> col(static_cast<std::size_t>(K * P * chunk)), gb(static_cast<std::size_t>(d.o * P * chunk));
        for (std::int64_t n0 = 0; n0 < d.n; n0 += chunk) {
          const std::int64_t nb = std::min(chunk, d.n - n0), ld = nb * P;
          for (std::int64_t s = 0; s < nb; ++s)
            for (std::int64_t o = 0; o < d.o; ++o)
              std::copy_n(gd.data() + ((n0 + s) * d.o + o) * P, P, gb.data() + o * ld + s * P);
          ConstMapMat<T> G(gb.data(), d.o, ld);
          if (dw.defined()) {
            for (std::int64_t s = 0; s < nb; ++s) im2col(xd.data() + (n0 + s) * d.c * d.h * d.w, d, col.data() + s * P, ld);
            MapMat<T> DW(dw.data<T>().data(), d.o, K);
            DW.noalias() += G * ConstMapMat<T>(col.data(), K, ld).transpose();
          }
          if (db.defined()) {
            auto b = db.data<T>();
            for (std::int64_t o = 0; o < d.o; ++o) b[static_cast<std::size_t>(o)] += G.row(o).sum();
          }
          if (dx.defined()) {
            MapMat<T>(col.data(), K, ld).noalias() = W.transpose() * G;
            for (std::int64_t s = 0; s < nb; ++s)
              col2im(col.data() + s * P, d, dx.data<T>().data() + (n0 + s) * d.c * d.h * d.w, ld);
          }
        }
        gi[0] = dx;
        gi[1] = dw;
        if (has_bias) gi[2] = db.defined() ? db.view(Shape{d.o}) : Tensor();
      });
    };
  });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, Padding padding) {
  check_nchw(x, "depthwise_conv2d");
  if (weight.rank() != 4 || weight.dim(1) != 1)
    throw ShapeError("depthwise_conv2d: weight must be C x 1 x kh x kw, got " + shape_str(weight.shape()));
  if (weight.dim(0) != x.dim(1))
    throw ShapeError("depthwise_conv2d: channel axis mismatch: x has " + std::to_string(x.dim(1)) +
                     " channels, weight has " + std::to_string(weight.dim(0)) + " filters");
  detail::require_same_precision(x, weight, "depthwise_conv2d");
  check_bias(bias, x.dim(1), "depthwise_conv2d");
  const auto d = conv_dims(x, x.dim(1), weight.dim(2), weight.dim(3), stride, padding, "depthwise_conv2d");
  Tensor out({d.n, d.c, d.oh, d.ow}, x.precision());
  dispatch(x.precision(), [&]<typename T>() {
    auto xd = x.data<T>();
    auto wd = weight.data<T>();
    auto od = out.data<T>();
    for (std::int64_t n = 0; n < d.n; ++n)
      for (std::int64_t c = 0; c < d.c; ++c) {
        const T* xp = xd.data() + (n * d.c + c) * d.h * d.w;
        const T* wp = wd.data() + c * d.kh * d.kw;
        T* op = od.data() + (n * d.c + c) * d.oh * d.ow;
        const T b = bias.defined() ? bias.data<T>()[static_cast<std::size_t>(c)] : T(0);
        for (std::int64_t oy = 0; oy < d.oh; ++oy)
          for (std::int64_t ox = 0; ox < d.ow; ++ox) {
            T acc = b;
            for (std::int64_t i = 0; i < d.kh; ++i) {
              const std::int64_t iy = oy * d.stride + i - d.pad_h;
              if (iy < 0 || iy >= d.h) continue;
              for (std::int64_t j = 0; j < d.kw; ++j) {
                const std::int64_t ix = ox * d.stride + j - d.pad_w;
                if (ix < 0 || ix >= d.w) continue;
                acc += xp[iy * d.w + ix] * wp[i * d.kw + j];
              }
            }
            op[oy * d.ow + ox] = acc;
          }
      }
  });
  return finish(out, {&x, &weight, &bias}, [&] {
    return [x = x.detach(), weight = weight.detach(), has_bias = bias.defined(), d](
               const Tensor& g, std::span<Tensor> gi, std::span<const bool> needs) {
      dispatch(x.precision(), [&]<typename T>() {
        auto xd = x.data<T>();
        auto wd = weight.data<T>();
        auto gd = g.data<T>();
        Tensor dx, dw, db;
        if (needs[0]) dx = Tensor(x.shape(), x.precision());
        if (needs[1]) dw = Tensor(weight.shape(), x.precision());
        if (has_bias && needs[2]) db = Tensor(Shape{d.c}, x.precision());
        for (std::int64_t n = 0; n < d.n; ++n)
          for (std::int64_t c = 0; c < d.c; ++c) {
            const T* xp = xd.data() + (n * d.c + c) * d.h * d.w;
            const T* wp = wd.data() + c * d.kh * d.kw;
            const T* gp = gd.data() + (n * d.c + c) * d.oh * d.ow;
            T* dxp = dx.defined() ? dx.data<T>().data() + (n * d.c + c) * d.h * d.w : nullptr;
            T* dwp = dw.defined() ? dw.data<T>().data() + c * d.kh * d.kw : nullptr;
            T bsum = 0;
            for (std::int64_t oy = 0; oy < d.oh; ++oy)
              for (std::int64_t ox = 0; ox < d.ow; ++ox) {
                const T gv = gp[oy * d.ow + ox];
                bsum += gv;
                for (std::int64_t i = 0; i < d.kh; ++i) {
                  const std::int64_t iy = oy * d.stride + i - d.pad_h;
                  if (iy < 0 || iy >= d.h) continue;
                  for (std::int64_t j = 0; j < d.kw; ++j) {
                    const std::int64_t ix = ox * d.stride + j - d.pad_w;
                    if (ix < 0 || ix >= d.w) continue;
                    if (dxp) dxp[iy * d.w + ix] += gv * wp[i * d.kw + j];
                    if (dwp) dwp[i * d.kw + j] += gv * xp[iy * d.w + ix];
                  }
                }
              }
            if (db.defined()) db.data<T>()[static_cast<std::size_t>(c)] += bsum;
          }
        gi[0] = dx;
        gi[1] = dw;
        if (has_bias) gi[2] = db;
      });
    };
  });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 3 || x.dim(1) != 1) throw ShapeError("conv1d: input must be N x 1 x L, got " + shape_str(x.shape()));
  if (weight.rank() != 3 || weight.dim(0) != 1 || weight.dim(1) != 1)
    throw ShapeError("conv1d: weight must be 1 x 1 x k, got " + shape_str(weight.shape()));
  const auto k = weight.dim(2);
  if (k % 2 == 0) throw ShapeError("conv1d: kernel size must be odd, got " + std::to_string(k));
  const Tensor b = bias.defined() ? reshape(bias, {1}) : Tensor();
  Tensor y = conv2d(reshape(x, {x.dim(0), 1, 1, x.dim(2)}), reshape(weight, {1, 1, 1, k}), b, 1, Padding::same);
  return reshape(y, {x.dim(0), 1, x.dim(2)});
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() < 1) throw ShapeError("dense: input must have a feature axis");
  if (weight.rank() != 2) throw ShapeError("dense: weight must be F x G, got " + shape_str(weight.shape()));
  const std::int64_t F = x.dim(-1), G = weight.dim(1);
  if (weight.dim(0) != F)
    throw ShapeError("dense: feature axis mismatch: x has " + std::to_string(F) + " features, weight expects " +
                     std::to_string(weight.dim(0)));
  detail::require_same_precision(x, weight, "dense");
  check_bias(bias, G, "dense");
  const std::int64_t M = x.numel() / std::max<std::int64_t>(F, 1);
  Shape os = x.shape();
  os.back() = G;
  Tensor out(os, x.precision());
  dispatch(x.precision(), [&]<typename T>() {
    MapMat<T> O(out.data<T>().data(), M, G);
    O.noalias() = ConstMapMat<T>(x.data<T>().data(), M, F) * ConstMapMat<T>(weight.data<T>().data(), F, G);
    if (bias.defined()) O.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data<T>().data(), G);
  });
  return finish(out, {&x, &weight, &bias}, [&] {
    return [x = x.detach(), weight = weight.detach(), has_bias = bias.defined(), bshape = bias.defined() ? bias.shape() : Shape{},
            M, F, G](const Tensor& g, std::span<Tensor> gi, std::span<const bool> needs) {
      dispatch(x.precision(), [&]<typename T>() {
        ConstMapMat<T> Gm(g.data<T>().data(), M, G);
        if (needs[0]) {
          Tensor dx(x.shape(), x.precision());
          MapMat<T>(dx.data<T>().data(), M, F).noalias() = Gm * ConstMapMat<T>(weight.data<T>().data(), F, G).transpose();
          gi[0] = dx;
        }
        if (needs[1]) {
          Tensor dw(weight.shape(), x.precision());
          MapMat<T>(dw.data<T>().data(), F, G).noalias() = ConstMapMat<T>(x.data<T>().data(), M, F).transpose() * Gm;
          gi[1] = dw;
        }
        if (has_bias && needs[2]) {
          Tensor db(bshape, x.precision());
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(db.data<T>().data(), G) = Gm.colwise().sum();
          gi[2] = db;
        }
      });
    };
  });
}

Tensor pool(const Tensor& x, PoolKind kind, int window, int stride) {
  check_nchw(x, "pool");
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H * W == 0) throw ShapeError("pool: empty spatial extent");
  if (kind == PoolKind::gap || kind == PoolKind::gmp) {
    Tensor out({N, C, 1, 1}, x.precision());
    std::vector<std::int64_t> arg;
    if (kind == PoolKind::gmp) arg.resize(static_cast<std::size_t>(N * C));
    dispatch(x.precision(), [&]<typename T>() {
      auto xd = x.data<T>();
      auto od = out.data<T>();
      for (std::int64_t p = 0; p < N * C; ++p) {
        const T* src = xd.data() + p * H * W;
        if (kind == PoolKind::gap) {
          T acc = 0;
          for (std::int64_t i = 0; i < H * W; ++i) acc += src[i];
          od[static_cast<std::size_t>(p)] = acc / static_cast<T>(H * W);
        } else {
          std::int64_t best = 0;
          for (std::int64_t i = 1; i < H * W; ++i)
            if (src[i] > src[best]) best = i;
          arg[static_cast<std::size_t>(p)] = best;
          od[static_cast<std::size_t>(p)] = src[best];
        }
      }
    });
    return finish(out, {&x}, [&] {
      return [shape = x.shape(), kind, arg = std::move(arg), HW = H * W](const Tensor& g, std::span<Tensor> gi,
                                                                         std::span<const bool>) {
        Tensor r(shape, g.precision());
        dispatch(g.precision(), [&]<typename T>() {
          auto gd = g.data<T>();
          auto rd = r.data<T>();
          for (std::size_t p = 0; p < gd.size(); ++p) {
            if (kind == PoolKind::gap) {
              const T v = gd[p] / static_cast<T>(HW);
              std::fill_n(rd.data() + static_cast<std::int64_t>(p) * HW, HW, v);
            } else {
              rd[p * static_cast<std::size_t>(HW) + static_cast<std::size_t>(arg[p])] = gd[p];
            }
          }
        });
        gi[0] = r;
      };
    });
  }
  if (window < 1) throw ShapeError("pool: window must be >= 1 for windowed pooling");
  if (stride < 1) stride = window;
  if (window > H || window > W) throw ShapeError("pool: window larger than input");
  const std::int64_t OH = (H - window) / stride + 1, OW = (W - window) / stride + 1;
  Tensor out({N, C, OH, OW}, x.precision());
  std::vector<std::int64_t> arg;
  if (kind == PoolKind::max2d) arg.resize(static_cast<std::size_t>(out.numel()));
  dispatch(x.precision(), [&]<typename T>() {
    auto xd = x.data<T>();
    auto od = out.data<T>();
    for (std::int64_t p = 0; p < N * C; ++p)
      for (std::int64_t oy = 0; oy < OH; ++oy)
        for (std::int64_t ox = 0; ox < OW; ++ox) {
          const std::int64_t o = (p * OH + oy) * OW + ox;
          T acc = 0;
          std::int64_t best = -1;
          for (std::int64_t i = 0; i < window; ++i)
            for (std::int64_t j = 0; j < window; ++j) {
              const std::int64_t idx = (p * H + oy * stride + i) * W + ox * stride + j;
              if (kind == PoolKind::avg2d)
                acc += xd[static_cast<std::size_t>(idx)];
              else if (best < 0 || xd[static_cast<std::size_t>(idx)] > xd[static_cast<std::size_t>(best)])
                best = idx;
            }
          if (kind == PoolKind::avg2d) {
            od[static_cast<std::size_t>(o)] = acc / static_cast<T>(window * window);
          } else {
            arg[static_cast<std::size_t>(o)] = best;
            od[static_cast<std::size_t>(o)] = xd[static_cast<std::size_t>(best)];
          }
        }
  });
  return finish(out, {&x}, [&] {
    return [shape = x.shape(), kind, arg = std::move(arg), window, stride, OH, OW, H, W](
               const Tensor& g, std::span<Tensor> gi, std::span<const bool>) {
      Tensor r(shape, g.precision());
      dispatch(g.precision(), [&]<typename T>() {
        auto gd = g.data<T>();
        auto rd = r.data<T>();
        if (kind == PoolKind::max2d) {
          for (std::size_t o = 0; o < gd.size(); ++o) rd[static_cast<std::size_t>(arg[o])] += gd[o];
          return;
        }
        const T inv = T(1) / static_cast<T>(window * window);
        const std::int64_t planes = static_cast<std::int64_t>(gd.size()) / (OH * OW);
        for (std::int64_t p = 0; p < planes; ++p)
          for (std::int64_t oy = 0; oy < OH; ++oy)
            for (std::int64_t ox = 0; ox < OW; ++ox) {
              const T v = gd[static_cast<std::size_t>((p * OH + oy) * OW + ox)] * inv;
              for (std::int64_t i = 0; i < window; ++i)
                for (std::int64_t j = 0; j < window; ++j)
                  rd[static_cast<std::size_t>((p * H + oy * stride + i) * W + ox * stride + j)] += v;
            }
      });
      gi[0] = r;
    };
  });
}

namespace {

struct LerpTap {
  std::int64_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<LerpTap> lerp_taps(std::int64_t in, std::int64_t out) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  check_nchw(x, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: output extents must be >= 1");
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H == out_h && W == out_w) {
    Tensor out = x.clone();
    return finish(out, {&x}, [&] {
      return [](const Tensor& g, std::span<Tensor> gi, std::span<const bool>) { gi[0] = g; };
    });
  }
  const auto ty = lerp_taps(H, out_h), tx = lerp_taps(W, out_w);
  Tensor out({N, C, out_h, out_w}, x.precision());
  dispatch(x.precision(), [&]<typename T>() {
    auto xd = x.data<T>();
    auto od = out.data<T>();
    for (std::int64_t p = 0; p < N * C; ++p) {
      const T* src = xd.data() + p * H * W;
      T* dst = od.data() + p * out_h * out_w;
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[static_cast<std::size_t>(oy)];
        const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const auto& b = tx[static_cast<std::size_t>(ox)];
          const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
          dst[oy * out_w + ox] = wy0 * (wx0 * src[a.i0 * W + b.i0] + wx1 * src[a.i0 * W + b.i1]) +
                                 wy1 * (wx0 * src[a.i1 * W + b.i0] + wx1 * src[a.i1 * W + b.i1]);
        }
      }
    }
  });
  return finish(out, {&x}, [&] {
    return [shape = x.shape(), ty, tx, H, W, out_h, out_w](const Tensor& g, std::span<Tensor> gi, std::span<const bool>) {
      Tensor r(shape, g.precision());
      dispatch(g.precision(), [&]<typename T>() {
        auto gd = g.data<T>();
        auto rd = r.data<T>();
        const std::int64_t planes = static_cast<std::int64_t>(rd.size()) / (H * W);
        for (std::int64_t p = 0; p < planes; ++p) {
          T* dst = rd.data() + p * H * W;
          const T* src = gd.data() + p * out_h * out_w;
          for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const auto& a = ty[static_cast<std::size_t>(oy)];
            const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
              const auto& b = tx[static_cast<std::size_t>(ox)];
              const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
              const T v = src[oy * out_w + ox];
              dst[a.i0 * W + b.i0] += v * wy0 * wx0;
              dst[a.i0 * W + b.i1] += v * wy0 * wx1;
              dst[a.i1 * W + b.i0] += v * wy1 * wx0;
              dst[a.i1 * W + b.i1] += v * wy1 * wx1;
            }
          }
        }
      });
      gi[0] = r;
    };
  });
}

}  // namespace szoo
