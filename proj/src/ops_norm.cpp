#include <Eigen/Core>
#include <cmath>

#include "ops_internal.hpp"

namespace szoo {

using detail::finish;

Tensor batchnorm2d(const Tensor& x, const Tensor& scale_t, const Tensor& shift, Tensor& running_mean, Tensor& running_var,
                   const BatchNormOptions& opt) {
  if (x.rank() != 4) throw ShapeError("batchnorm2d: input must be NCHW, got " + shape_str(x.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  for (const Tensor* t : {&scale_t, &shift, static_cast<const Tensor*>(&running_mean), static_cast<const Tensor*>(&running_var)})
    if (t->numel() != C)
      throw ShapeError("batchnorm2d: per-channel parameter has " + std::to_string(t->numel()) + " elements, channel axis is " +
                       std::to_string(C));
  if (N * HW == 0) throw ShapeError("batchnorm2d: empty batch");
  BatchNormCollective* coll = opt.training ? opt.collective : nullptr;
  double M = static_cast<double>(N * HW);
  Tensor out(x.shape(), x.precision());
  Tensor xhat(x.shape(), x.precision());
  Tensor inv_std(Shape{C}, x.precision());
  dispatch(x.precision(), [&]<typename T>() {
    auto xd = x.data<T>();
    auto gd = scale_t.data<T>();
    auto bd = shift.data<T>();
    auto hd = xhat.data<T>();
    auto od = out.data<T>();
    auto is = inv_std.data<T>();
    std::vector<double> mean(static_cast<std::size_t>(C)), var(static_cast<std::size_t>(C));
    if (opt.training) {
      // Two passes (mean, then centred squares); each pass is one collective round.
      std::vector<double> acc(static_cast<std::size_t>(C) + 1, 0.0);
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t n = 0; n < N; ++n) {
          const T* p = xd.data() + (n * C + c) * HW;
          for (std::int64_t i = 0; i < HW; ++i) acc[static_cast<std::size_t>(c)] += p[i];
        }
      acc[static_cast<std::size_t>(C)] = M;
      if (coll) coll->allreduce_sum(acc);
      M = acc[static_cast<std::size_t>(C)];
      for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] = acc[static_cast<std::size_t>(c)] / M;
      std::vector<double> sq(static_cast<std::size_t>(C), 0.0);
      for (std::int64_t c = 0; c < C; ++c) {
        const double m = mean[static_cast<std::size_t>(c)];
        for (std::int64_t n = 0; n < N; ++n) {
          const T* p = xd.data() + (n * C + c) * HW;
          for (std::int64_t i = 0; i < HW; ++i) sq[static_cast<std::size_t>(c)] += (p[i] - m) * (p[i] - m);
        }
      }
      if (coll) coll->allreduce_sum(sq);
      for (std::int64_t c = 0; c < C; ++c) {
        const auto k = static_cast<std::size_t>(c);
        var[k] = sq[k] / M;
        const double unbiased = M > 1 ? sq[k] / (M - 1) : sq[k];
        running_mean.set(c, opt.momentum * running_mean.at(c) + (1.0 - opt.momentum) * mean[k]);
        running_var.set(c, opt.momentum * running_var.at(c) + (1.0 - opt.momentum) * unbiased);
      }
    } else {
      for (std::int64_t c = 0; c < C; ++c) {
        mean[static_cast<std::size_t>(c)] = running_mean.at(c);
        var[static_cast<std::size_t>(c)] = running_var.at(c);
      }
    }
    for (std::int64_t c = 0; c < C; ++c) {
      const auto k = static_cast<std::size_t>(c);
      const T mu = static_cast<T>(mean[k]);
      const T inv = T(1) / std::sqrt(static_cast<T>(var[k]) + static_cast<T>(opt.eps));
      is[k] = inv;
      const T g = gd[k], b = bd[k];
      for (std::int64_t n = 0; n < N; ++n) {
        const std::int64_t base = (n * C + c) * HW;
        for (std::int64_t i = 0; i < HW; ++i) {
          const T h = (xd[static_cast<std::size_t>(base + i)] - mu) * inv;
          hd[static_cast<std::size_t>(base + i)] = h;
          od[static_cast<std::size_t>(base + i)] = g * h + b;
        }
      }
    }
  });
  return finish(out, {&x, &scale_t, &shift}, [&] {
    return [xhat, inv_std, gamma = scale_t.detach(), training = opt.training, coll, N, C, HW, M](
               const Tensor& g, std::span<Tensor> gi, std::span<const bool> needs) {
      dispatch(xhat.precision(), [&]<typename T>() {
        auto gd = g.data<T>();
        auto hd = xhat.data<T>();
        auto is = inv_std.data<T>();
        auto gm = gamma.data<T>();
        Tensor dx(xhat.shape(), xhat.precision()), dg(gamma.shape(), xhat.precision()), db(gamma.shape(), xhat.precision());
        auto dxd = dx.data<T>();
        // Local sums of g and g*xhat per channel: [sum_g..., sum_gh...].
        std::vector<double> sums(static_cast<std::size_t>(2 * C), 0.0);
        for (std::int64_t c = 0; c < C; ++c) {
          double sg = 0, sgh = 0;
          for (std::int64_t n = 0; n < N; ++n) {
            const std::int64_t base = (n * C + c) * HW;
            for (std::int64_t i = 0; i < HW; ++i) {
              sg += gd[static_cast<std::size_t>(base + i)];
              sgh += static_cast<double>(gd[static_cast<std::size_t>(base + i)]) * hd[static_cast<std::size_t>(base + i)];
            }
          }
          sums[static_cast<std::size_t>(c)] = sg;
          sums[static_cast<std::size_t>(C + c)] = sgh;
          dg.data<T>()[static_cast<std::size_t>(c)] = static_cast<T>(sgh);
          db.data<T>()[static_cast<std::size_t>(c)] = static_cast<T>(sg);
        }
        if (training && coll) coll->allreduce_sum(sums);
        if (needs[0]) {
          for (std::int64_t c = 0; c < C; ++c) {
            const T k = gm[static_cast<std::size_t>(c)] * is[static_cast<std::size_t>(c)];
            const T mg = static_cast<T>(sums[static_cast<std::size_t>(c)] / M);
            const T mgh = static_cast<T>(sums[static_cast<std::size_t>(C + c)] / M);
            for (std::int64_t n = 0; n < N; ++n) {
              const std::int64_t base = (n * C + c) * HW;
              for (std::int64_t i = 0; i < HW; ++i) {
                const auto j = static_cast<std::size_t>(base + i);
                dxd[j] = training ? k * (gd[j] - mg - hd[j] * mgh) : k * gd[j];
              }
            }
          }
          gi[0] = dx;
        }
        if (needs[1]) gi[1] = dg;
        if (needs[2]) gi[2] = db;
      });
    };
  });
}

Tensor layernorm(const Tensor& x, const Tensor& scale_t, const Tensor& shift, double eps) {
  if (x.rank() < 1) throw ShapeError("layernorm: input needs a feature axis");
  const std::int64_t D = x.dim(-1);
  if (scale_t.numel() != D || shift.numel() != D)
    throw ShapeError("layernorm: scale/shift length must equal last axis " + std::to_string(D));
  const std::int64_t R = x.numel() / std::max<std::int64_t>(D, 1);
  Tensor out(x.shape(), x.precision());
  Tensor xhat(x.shape(), x.precision());
  Tensor inv_std(Shape{R}, x.precision());
  dispatch(x.precision(), [&]<typename T>() {
    auto xd = x.data<T>();
    auto gd = scale_t.data<T>();
    auto bd = shift.data<T>();
    auto hd = xhat.data<T>();
    auto od = out.data<T>();
    for (std::int64_t r = 0; r < R; ++r) {
      const T* p = xd.data() + r * D;
      T m = 0;
      for (std::int64_t i = 0; i < D; ++i) m += p[i];
      m /= static_cast<T>(D);
      T v = 0;
      for (std::int64_t i = 0; i < D; ++i) v += (p[i] - m) * (p[i] - m);
      v /= static_cast<T>(D);
      const T inv = T(1) / std::sqrt(v + static_cast<T>(eps));
      inv_std.data<T>()[static_cast<std::size_t>(r)] = inv;
      for (std::int64_t i = 0; i < D; ++i) {
        const T h = (p[i] - m) * inv;
        hd[static_cast<std::size_t>(r * D + i)] = h;
        od[static_cast<std::size_t>(r * D + i)] = gd[static_cast<std::size_t>(i)] * h + bd[static_cast<std::size_t>(i)];
      }
    }
  });
  return finish(out, {&x, &scale_t, &shift}, [&] {
    return [xhat, inv_std, gamma = scale_t.detach(), bshape = shift.shape(), R, D](const Tensor& g, std::span<Tensor> gi,
                                                                                  std::span<const bool> needs) {
      dispatch(xhat.precision(), [&]<typename T>() {
        auto gd = g.data<T>();
        auto hd = xhat.data<T>();
        auto gm = gamma.data<T>();
        Tensor dx(xhat.shape(), xhat.precision()), dg(gamma.shape(), xhat.precision()), db(bshape, xhat.precision());
        auto dxd = dx.data<T>();
        auto dgd = dg.data<T>();
        auto dbd = db.data<T>();
        const T invD = T(1) / static_cast<T>(D);
        for (std::int64_t r = 0; r < R; ++r) {
          T s1 = 0, s2 = 0;
          for (std::int64_t i = 0; i < D; ++i) {
            const auto j = static_cast<std::size_t>(r * D + i);
            const T dh = gd[j] * gm[static_cast<std::size_t>(i)];
            s1 += dh;
            s2 += dh * hd[j];
            dgd[static_cast<std::size_t>(i)] += gd[j] * hd[j];
            dbd[static_cast<std::size_t>(i)] += gd[j];
          }
          const T inv = inv_std.data<T>()[static_cast<std::size_t>(r)];
          for (std::int64_t i = 0; i < D; ++i) {
            const auto j = static_cast<std::size_t>(r * D + i);
            const T dh = gd[j] * gm[static_cast<std::size_t>(i)];
            dxd[j] = inv * (dh - invD * s1 - hd[j] * invD * s2);
          }
        }
        if (needs[0]) gi[0] = dx;
        if (needs[1]) gi[1] = dg;
        if (needs[2]) gi[2] = db;
      });
    };
  });
}

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  for (const Tensor* t : {&q, &k, &v})
    if (t->rank() != 4) throw ShapeError("attention: q, k, v must be N x h x T x d, got " + shape_str(t->shape()));
  const std::int64_t N = q.dim(0), Hh = q.dim(1), T_ = q.dim(2), D = q.dim(3), S = k.dim(2);
  if (k.dim(0) != N || v.dim(0) != N) throw ShapeError("attention: batch axis mismatch");
  if (k.dim(1) != Hh || v.dim(1) != Hh) throw ShapeError("attention: head axis mismatch");
  if (k.dim(3) != D) throw ShapeError("attention: key depth axis mismatch");
  if (v.dim(2) != S) throw ShapeError("attention: value sequence axis mismatch");
  detail::require_same_precision(q, k, "attention");
  detail::require_same_precision(q, v, "attention");
  const std::int64_t Dv = v.dim(3);
  Tensor out({N, Hh, T_, Dv}, q.precision());
  Tensor attn({N, Hh, T_, S}, q.precision());
  dispatch(q.precision(), [&]<typename T>() {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat>;
    using Map = Eigen::Map<Mat>;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(D));
    for (std::int64_t b = 0; b < N * Hh; ++b) {
      CMap Q(q.data<T>().data() + b * T_ * D, T_, D);
      CMap K(k.data<T>().data() + b * S * D, S, D);
      CMap V(v.data<T>().data() + b * S * Dv, S, Dv);
      Map A(attn.data<T>().data() + b * T_ * S, T_, S);
      A.noalias() = (Q * K.transpose()) * inv_sqrt;
      for (std::int64_t r = 0; r < T_; ++r) {
        const T m = A.row(r).maxCoeff();
        A.row(r) = (A.row(r).array() - m).exp();
        A.row(r) /= A.row(r).sum();
      }
      Map(out.data<T>().data() + b * T_ * Dv, T_, Dv).noalias() = A * V;
    }
  });
  return finish(out, {&q, &k, &v}, [&] {
    return [q = q.detach(), k = k.detach(), v = v.detach(), attn, N, Hh, T_, D, S, Dv](
               const Tensor& g, std::span<Tensor> gi, std::span<const bool> needs) {
      dispatch(q.precision(), [&]<typename T>() {
        using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        using CMap = Eigen::Map<const Mat>;
        using Map = Eigen::Map<Mat>;
        const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(D));
        Tensor dq(q.shape(), q.precision()), dk(k.shape(), q.precision()), dv(v.shape(), q.precision());
        Mat dA, dS;
        for (std::int64_t b = 0; b < N * Hh; ++b) {
          CMap Q(q.data<T>().data() + b * T_ * D, T_, D);
          CMap K(k.data<T>().data() + b * S * D, S, D);
          CMap V(v.data<T>().data() + b * S * Dv, S, Dv);
          CMap A(attn.data<T>().data() + b * T_ * S, T_, S);
          CMap G(g.data<T>().data() + b * T_ * Dv, T_, Dv);
          if (needs[2]) Map(dv.data<T>().data() + b * S * Dv, S, Dv).noalias() = A.transpose() * G;
          dA.noalias() = G * V.transpose();
          dS = A.array() * (dA.array().colwise() - (dA.array() * A.array()).rowwise().sum());
          if (needs[0]) Map(dq.data<T>().data() + b * T_ * D, T_, D).noalias() = (dS * K) * inv_sqrt;
          if (needs[1]) Map(dk.data<T>().data() + b * S * D, S, D).noalias() = (dS.transpose() * Q) * inv_sqrt;
        }
        if (needs[0]) gi[0] = dq;
        if (needs[1]) gi[1] = dk;
        if (needs[2]) gi[2] = dv;
      });
    };
  });
}

}  // namespace szoo
