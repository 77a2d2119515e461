#include "ucp/ops.hpp"

#include <cmath>
#include <string>

namespace ucp::ops {

namespace {

int out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

void require(bool ok, const std::string& msg) {
  if (!ok) throw StructuralError(msg);
}

// Unfolds one sample into a (Cin*Kh*Kw) x (Ho*Wo) matrix.
template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, ConvGeometry g, int ho, int wo,
            T* col) {
  const int plane = ho * wo;
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = col + (static_cast<std::size_t>(ci * kh + ki) * kw + kj) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.padding + ki;
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < wo; ++ox) dst[ox] = T{0};
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.padding + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int c, int h, int w, int kh, int kw, ConvGeometry g, int ho, int wo,
            T* dx) {
  const int plane = ho * wo;
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = col + (static_cast<std::size_t>(ci * kh + ki) * kw + kj) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.padding + ki;
          if (iy < 0 || iy >= h) continue;
          T* dst = dx + (static_cast<std::size_t>(ci) * h + iy) * w;
          const T* src = row + oy * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.padding + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Shape4& ws, ConvGeometry g) {
  return ws.h == 1 && ws.w == 1 && g.stride == 1 && g.padding == 0;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, ConvGeometry g) {
  const Shape4& ws = w.shape();
  require(x.c() == ws.c, "conv: input has " + std::to_string(x.c()) + " channels, kernel expects " +
                             std::to_string(ws.c));
  require(x.h() + 2 * g.padding >= ws.h && x.w() + 2 * g.padding >= ws.w,
          "conv: kernel larger than padded input");
  const int ho = out_dim(x.h(), ws.h, g.stride, g.padding);
  const int wo = out_dim(x.w(), ws.w, g.stride, g.padding);
  const int k = ws.c * ws.h * ws.w;
  const int plane = ho * wo;
  Tensor<T> y(x.n(), ws.n, ho, wo);
  const bool pointwise = is_pointwise(ws, g);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(k) * plane);

  for (int n = 0; n < x.n(); ++n) {
    const T* xs = &x.data()[x.index(n, 0, 0, 0)];
    const T* cm = xs;
    if (!pointwise) {
      im2col(xs, x.c(), x.h(), x.w(), ws.h, ws.w, g, ho, wo, col.data());
      cm = col.data();
    }
    for (int co = 0; co < ws.n; ++co) {
      T* yr = &y.data()[y.index(n, co, 0, 0)];
      const T* wr = &w.data()[static_cast<std::size_t>(co) * k];
      const T b = bias ? (*bias)[static_cast<std::size_t>(co)] : T{0};
      for (int p = 0; p < plane; ++p) yr[p] = b;
      for (int kk = 0; kk < k; ++kk) {
        const T a = wr[kk];
        const T* cr = cm + static_cast<std::size_t>(kk) * plane;
        for (int p = 0; p < plane; ++p) yr[p] += a * cr[p];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                          ConvGeometry g, Tensor<T>& dw, Tensor<T>* db) {
  const Shape4& ws = w.shape();
  const int ho = out_dim(x.h(), ws.h, g.stride, g.padding);
  const int wo = out_dim(x.w(), ws.w, g.stride, g.padding);
  require(dy.shape() == Shape4{x.n(), ws.n, ho, wo},
          "conv backward: upstream gradient " + dy.shape().str() + " does not match output " +
              Shape4{x.n(), ws.n, ho, wo}.str());
  require(dw.shape() == ws, "conv backward: weight gradient shape mismatch");
  const int k = ws.c * ws.h * ws.w;
  const int plane = ho * wo;
  const bool pointwise = is_pointwise(ws, g);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(k) * plane);
  std::vector<T> dcol(static_cast<std::size_t>(k) * plane);
  Tensor<T> dx(x.shape());

  for (int n = 0; n < x.n(); ++n) {
    const T* xs = &x.data()[x.index(n, 0, 0, 0)];
    const T* cm = xs;
    if (!pointwise) {
      im2col(xs, x.c(), x.h(), x.w(), ws.h, ws.w, g, ho, wo, col.data());
      cm = col.data();
    }
    std::fill(dcol.begin(), dcol.end(), T{0});
    for (int co = 0; co < ws.n; ++co) {
      const T* dyr = &dy.data()[dy.index(n, co, 0, 0)];
      const T* wr = &w.data()[static_cast<std::size_t>(co) * k];
      T* dwr = &dw.data()[static_cast<std::size_t>(co) * k];
      if (db) {
        T acc{0};
        for (int p = 0; p < plane; ++p) acc += dyr[p];
        (*db)[static_cast<std::size_t>(co)] += acc;
      }
      for (int kk = 0; kk < k; ++kk) {
        const T* cr = cm + static_cast<std::size_t>(kk) * plane;
        T acc{0};
        for (int p = 0; p < plane; ++p) acc += dyr[p] * cr[p];
        dwr[kk] += acc;
        const T a = wr[kk];
        T* dcr = dcol.data() + static_cast<std::size_t>(kk) * plane;
        for (int p = 0; p < plane; ++p) dcr[p] += a * dyr[p];
      }
    }
    T* dxs = &dx.data()[dx.index(n, 0, 0, 0)];
    if (pointwise) {
      for (std::size_t i = 0; i < dcol.size(); ++i) dxs[i] += dcol[i];
    } else {
      col2im(dcol.data(), x.c(), x.h(), x.w(), ws.h, ws.w, g, ho, wo, dxs);
    }
  }
  return dx;
}

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool train, double eps,
                    double momentum, BatchNormCache<T>& cache) {
  const int C = x.c();
  require(static_cast<int>(gamma.size()) == C && static_cast<int>(beta.size()) == C,
          "batchnorm: parameter width does not match input channels " + std::to_string(C));
  const std::size_t plane = x.shape().plane();
  const std::size_t m = plane * static_cast<std::size_t>(x.n());
  Tensor<T> y(x.shape());
  cache.xhat = Tensor<T>(x.shape());
  cache.inv_std.assign(static_cast<std::size_t>(C), T{0});

  for (int c = 0; c < C; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    T mean, var;
    if (train) {
      double s = 0;
      for (int n = 0; n < x.n(); ++n)
        for (T v : x.channel(n, c)) s += static_cast<double>(v);
      mean = static_cast<T>(s / static_cast<double>(m));
      double sq = 0;
      for (int n = 0; n < x.n(); ++n)
        for (T v : x.channel(n, c)) {
          const double d = static_cast<double>(v) - static_cast<double>(mean);
          sq += d * d;
        }
      var = static_cast<T>(sq / static_cast<double>(m));
      const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : sq;
      running_mean[ci] = static_cast<T>((1.0 - momentum) * running_mean[ci] + momentum * mean);
      running_var[ci] = static_cast<T>((1.0 - momentum) * running_var[ci] + momentum * unbiased);
    } else {
      mean = running_mean[ci];
      var = running_var[ci];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + eps));
    cache.inv_std[ci] = inv;
    for (int n = 0; n < x.n(); ++n) {
      auto xs = x.channel(n, c);
      auto hs = cache.xhat.channel(n, c);
      auto ys = y.channel(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        hs[i] = (xs[i] - mean) * inv;
        ys[i] = gamma[ci] * hs[i] + beta[ci];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, const Tensor<T>& gamma,
                             const BatchNormCache<T>& cache, bool train, Tensor<T>& dgamma,
                             Tensor<T>& dbeta) {
  require(dy.shape() == cache.xhat.shape(), "batchnorm backward: gradient shape mismatch");
  const int C = dy.c();
  const std::size_t plane = dy.shape().plane();
  const T m = static_cast<T>(plane * static_cast<std::size_t>(dy.n()));
  Tensor<T> dx(dy.shape());
  for (int c = 0; c < C; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    T sum_dy{0}, sum_dy_xhat{0};
    for (int n = 0; n < dy.n(); ++n) {
      auto d = dy.channel(n, c);
      auto h = cache.xhat.channel(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += d[i];
        sum_dy_xhat += d[i] * h[i];
      }
    }
    dgamma[ci] += sum_dy_xhat;
    dbeta[ci] += sum_dy;
    const T g = gamma[ci] * cache.inv_std[ci];
    for (int n = 0; n < dy.n(); ++n) {
      auto d = dy.channel(n, c);
      auto h = cache.xhat.channel(n, c);
      auto o = dx.channel(n, c);
      if (train) {
        for (std::size_t i = 0; i < plane; ++i)
          o[i] = g / m * (m * d[i] - sum_dy - h[i] * sum_dy_xhat);
      } else {
        for (std::size_t i = 0; i < plane; ++i) o[i] = g * d[i];
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  require(x.shape() == dy.shape(), "relu backward: gradient shape mismatch");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

template <typename T>
Tensor<T> maxpool(const Tensor<T>& x, int size, int stride, std::vector<std::size_t>& argmax) {
  require(x.h() >= size && x.w() >= size, "maxpool: window larger than input");
  const int ho = (x.h() - size) / stride + 1;
  const int wo = (x.w() - size) / stride + 1;
  Tensor<T> y(x.n(), x.c(), ho, wo);
  argmax.assign(y.size(), 0);
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++o) {
          std::size_t best = x.index(n, c, oy * stride, ox * stride);
          for (int ky = 0; ky < size; ++ky)
            for (int kx = 0; kx < size; ++kx) {
              const std::size_t i = x.index(n, c, oy * stride + ky, ox * stride + kx);
              if (x[i] > x[best]) best = i;
            }
          argmax[o] = best;
          y[o] = x[best];
        }
  return y;
}

template <typename T>
Tensor<T> maxpool_backward(const Shape4& in_shape, const Tensor<T>& dy,
                           const std::vector<std::size_t>& argmax) {
  require(argmax.size() == dy.size(), "maxpool backward: gradient shape mismatch");
  Tensor<T> dx(in_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c(), 1, 1);
  const auto plane = static_cast<T>(x.shape().plane());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      T s{0};
      for (T v : x.channel(n, c)) s += v;
      y.at(n, c, 0, 0) = s / plane;
    }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape4& in_shape, const Tensor<T>& dy) {
  require(dy.shape() == Shape4{in_shape.n, in_shape.c, 1, 1},
          "global-average-pool backward: gradient shape mismatch");
  Tensor<T> dx(in_shape);
  const auto plane = static_cast<T>(in_shape.plane());
  for (int n = 0; n < in_shape.n; ++n)
    for (int c = 0; c < in_shape.c; ++c) {
      const T g = dy.at(n, c, 0, 0) / plane;
      for (T& v : dx.channel(n, c)) v = g;
    }
  return dx;
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const int in = w.c();
  const int out = w.n();
  require(static_cast<int>(x.shape().numel() / static_cast<std::size_t>(x.n())) == in,
          "fullyconnected: expected " + std::to_string(in) + " features, got " + x.shape().str());
  Tensor<T> y(x.n(), out, 1, 1);
  for (int n = 0; n < x.n(); ++n) {
    const T* xs = &x.data()[static_cast<std::size_t>(n) * in];
    for (int o = 0; o < out; ++o) {
      const T* wr = &w.data()[static_cast<std::size_t>(o) * in];
      T acc = b[static_cast<std::size_t>(o)];
      for (int i = 0; i < in; ++i) acc += wr[i] * xs[i];
      y.at(n, o, 0, 0) = acc;
    }
  }
  return y;
}

template <typename T>
Tensor<T> fully_connected_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                                   Tensor<T>& dw, Tensor<T>& db) {
  const int in = w.c();
  const int out = w.n();
  require(dy.shape() == Shape4{x.n(), out, 1, 1}, "fullyconnected backward: gradient shape mismatch");
  Tensor<T> dx(x.shape());
  for (int n = 0; n < x.n(); ++n) {
    const T* xs = &x.data()[static_cast<std::size_t>(n) * in];
    T* dxs = &dx.data()[static_cast<std::size_t>(n) * in];
    for (int o = 0; o < out; ++o) {
      const T g = dy.at(n, o, 0, 0);
      const T* wr = &w.data()[static_cast<std::size_t>(o) * in];
      T* dwr = &dw.data()[static_cast<std::size_t>(o) * in];
      db[static_cast<std::size_t>(o)] += g;
      for (int i = 0; i < in; ++i) {
        dwr[i] += g * xs[i];
        dxs[i] += g * wr[i];
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t per = x.size() / static_cast<std::size_t>(x.n());
  Tensor<T> y(x.shape());
  for (int n = 0; n < x.n(); ++n) {
    const T* xs = &x.data()[static_cast<std::size_t>(n) * per];
    T* ys = &y.data()[static_cast<std::size_t>(n) * per];
    T mx = xs[0];
    for (std::size_t i = 1; i < per; ++i) mx = std::max(mx, xs[i]);
    T s{0};
    for (std::size_t i = 0; i < per; ++i) {
      ys[i] = std::exp(xs[i] - mx);
      s += ys[i];
    }
    for (std::size_t i = 0; i < per; ++i) ys[i] /= s;
  }
  return y;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& p, const Tensor<T>& dp) {
  require(p.shape() == dp.shape(), "softmax backward: gradient shape mismatch");
  const std::size_t per = p.size() / static_cast<std::size_t>(p.n());
  Tensor<T> dx(p.shape());
  for (int n = 0; n < p.n(); ++n) {
    const std::size_t off = static_cast<std::size_t>(n) * per;
    T dot{0};
    for (std::size_t i = 0; i < per; ++i) dot += dp[off + i] * p[off + i];
    for (std::size_t i = 0; i < per; ++i) dx[off + i] = p[off + i] * (dp[off + i] - dot);
  }
  return dx;
}

template <typename T>
T squeeze(std::span<const T> plane) {
  T s{0};
  for (T v : plane) s += std::abs(v);
  return s / static_cast<T>(plane.size());
}

template <typename T>
Tensor<T> excite(const Tensor<T>& z, const Tensor<T>& w1, const Tensor<T>& w2,
                 Tensor<T>* hidden_pre) {
  const int C = z.c();
  const int H = w1.n();
  require(w1.c() == C && w2.n() == C && w2.c() == H,
          "excite: weight shapes do not match " + std::to_string(C) + " channels");
  Tensor<T> s(z.n(), C, 1, 1);
  if (hidden_pre) *hidden_pre = Tensor<T>(z.n(), H, 1, 1);
  std::vector<T> h(static_cast<std::size_t>(H));
  for (int n = 0; n < z.n(); ++n) {
    for (int j = 0; j < H; ++j) {
      T acc{0};
      for (int c = 0; c < C; ++c) acc += w1.at(j, c, 0, 0) * z.at(n, c, 0, 0);
      if (hidden_pre) hidden_pre->at(n, j, 0, 0) = acc;
      h[static_cast<std::size_t>(j)] = acc > T{0} ? acc : T{0};
    }
    for (int c = 0; c < C; ++c) {
      T acc{0};
      for (int j = 0; j < H; ++j) acc += w2.at(c, j, 0, 0) * h[static_cast<std::size_t>(j)];
      s.at(n, c, 0, 0) = T{1} / (T{1} + std::exp(-acc));
    }
  }
  return s;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& u, const Tensor<T>& s) {
  require(s.n() == u.n() && s.c() == u.c() && s.h() == 1 && s.w() == 1,
          "scale: gate vector " + s.shape().str() + " does not match feature map " + u.shape().str());
  Tensor<T> y(u.shape());
  for (int n = 0; n < u.n(); ++n)
    for (int c = 0; c < u.c(); ++c) {
      const T g = s.at(n, c, 0, 0);
      auto src = u.channel(n, c);
      auto dst = y.channel(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = g * src[i];
    }
  return y;
}

template <typename T>
Tensor<T> mseb(const Tensor<T>& u, const Tensor<T>& w1, const Tensor<T>& w2,
               bool identity_scale, MsebCache<T>& cache) {
  cache.z = Tensor<T>(u.n(), u.c(), 1, 1);
  for (int n = 0; n < u.n(); ++n)
    for (int c = 0; c < u.c(); ++c) cache.z.at(n, c, 0, 0) = squeeze<T>(u.channel(n, c));
  cache.s = excite(cache.z, w1, w2, &cache.hidden);
  return identity_scale ? u : scale(u, cache.s);
}

template <typename T>
Tensor<T> mseb_backward(const Tensor<T>& u, const Tensor<T>& w1, const Tensor<T>& w2,
                        const Tensor<T>& dy, bool identity_scale, const MsebCache<T>& cache,
                        Tensor<T>& dw1, Tensor<T>& dw2) {
  require(dy.shape() == u.shape(), "mseb backward: gradient shape mismatch");
  Tensor<T> du = identity_scale ? dy : scale(dy, cache.s);
  if (identity_scale) return du;  // gates do not influence the output

  const int C = u.c();
  const int H = w1.n();
  const auto plane = static_cast<T>(u.shape().plane());
  std::vector<T> dpre2(static_cast<std::size_t>(C));
  std::vector<T> dh(static_cast<std::size_t>(H));
  for (int n = 0; n < u.n(); ++n) {
    for (int c = 0; c < C; ++c) {
      T ds{0};
      auto us = u.channel(n, c);
      auto ds_ = dy.channel(n, c);
      for (std::size_t i = 0; i < us.size(); ++i) ds += ds_[i] * us[i];
      const T s = cache.s.at(n, c, 0, 0);
      dpre2[static_cast<std::size_t>(c)] = ds * s * (T{1} - s);
    }
    std::fill(dh.begin(), dh.end(), T{0});
    for (int c = 0; c < C; ++c) {
      const T g = dpre2[static_cast<std::size_t>(c)];
      for (int j = 0; j < H; ++j) {
        const T pre = cache.hidden.at(n, j, 0, 0);
        const T h = pre > T{0} ? pre : T{0};
        dw2.at(c, j, 0, 0) += g * h;
        dh[static_cast<std::size_t>(j)] += g * w2.at(c, j, 0, 0);
      }
    }
    for (int j = 0; j < H; ++j) {
      const T pre = cache.hidden.at(n, j, 0, 0);
      const T g = pre > T{0} ? dh[static_cast<std::size_t>(j)] : T{0};
      if (g == T{0}) continue;
      for (int c = 0; c < C; ++c) {
        dw1.at(j, c, 0, 0) += g * cache.z.at(n, c, 0, 0);
        // d z_c / d u = sign(u) / (H*W)
        const T dz = g * w1.at(j, c, 0, 0) / plane;
        auto us = u.channel(n, c);
        auto dus = du.channel(n, c);
        for (std::size_t i = 0; i < us.size(); ++i)
          dus[i] += us[i] > T{0} ? dz : (us[i] < T{0} ? -dz : T{0});
      }
    }
  }
  return du;
}

#define UCP_INSTANTIATE(T)                                                                        \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, ConvGeometry);  \
  template Tensor<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                     ConvGeometry, Tensor<T>&, Tensor<T>*);                       \
  template Tensor<T> batchnorm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,  \
                               Tensor<T>&, bool, double, double, BatchNormCache<T>&);             \
  template Tensor<T> batchnorm_backward(const Tensor<T>&, const Tensor<T>&,                       \
                                        const BatchNormCache<T>&, bool, Tensor<T>&, Tensor<T>&);  \
  template Tensor<T> relu(const Tensor<T>&);                                                      \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> maxpool(const Tensor<T>&, int, int, std::vector<std::size_t>&);              \
  template Tensor<T> maxpool_backward(const Shape4&, const Tensor<T>&,                            \
                                      const std::vector<std::size_t>&);                           \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                           \
  template Tensor<T> global_avg_pool_backward(const Shape4&, const Tensor<T>&);                   \
  template Tensor<T> fully_connected(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> fully_connected_backward(const Tensor<T>&, const Tensor<T>&,                 \
                                              const Tensor<T>&, Tensor<T>&, Tensor<T>&);          \
  template Tensor<T> softmax(const Tensor<T>&);                                                   \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&);                        \
  template T squeeze(std::span<const T>);                                                         \
  template Tensor<T> excite(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*);    \
  template Tensor<T> scale(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mseb(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool,             \
                          MsebCache<T>&);                                                         \
  template Tensor<T> mseb_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                   const Tensor<T>&, bool, const MsebCache<T>&, Tensor<T>&,       \
                                   Tensor<T>&);

UCP_INSTANTIATE(float)
UCP_INSTANTIATE(double)

#undef UCP_INSTANTIATE

}  // namespace ucp::ops
