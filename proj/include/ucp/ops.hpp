#pragma once

#include <vector>

#include "ucp/tensor.hpp"

// Forward/backward kernels for the layer set. All kernels are instantiated
// for float (training) and double (gradient verification).
namespace ucp::ops {

struct ConvGeometry {
  int stride = 1;
  int padding = 0;
};

/// y = conv(x, w) + b. `w` is (Cout, Cin, Kh, Kw); `bias` may be null.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, ConvGeometry g);

/// Accumulates dw (and db when non-null); returns dx.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                          ConvGeometry g, Tensor<T>& dw, Tensor<T>* db);

template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;  // per channel
};

/// Batch statistics when `train`, running statistics otherwise. In train mode
/// running_mean/var are updated with `momentum` (unbiased variance).
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool train, double eps,
                    double momentum, BatchNormCache<T>& cache);

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, const Tensor<T>& gamma,
                             const BatchNormCache<T>& cache, bool train, Tensor<T>& dgamma,
                             Tensor<T>& dbeta);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

/// Max-pool; ties resolve to the first (lowest linear index) maximum.
template <typename T>
Tensor<T> maxpool(const Tensor<T>& x, int size, int stride, std::vector<std::size_t>& argmax);
template <typename T>
Tensor<T> maxpool_backward(const Shape4& in_shape, const Tensor<T>& dy,
                           const std::vector<std::size_t>& argmax);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);
template <typename T>
Tensor<T> global_avg_pool_backward(const Shape4& in_shape, const Tensor<T>& dy);

/// x is (N, in, 1, 1), w is (out, in, 1, 1), b is (out, 1, 1, 1).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T>
Tensor<T> fully_connected_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                                   Tensor<T>& dw, Tensor<T>& db);

/// Softmax over channels of an (N, C, 1, 1) tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& p, const Tensor<T>& dp);

// Modified squeeze-and-excitation.

/// Mean absolute value of one H*W plane.
template <typename T>
T squeeze(std::span<const T> plane);

template <typename T>
struct MsebCache {
  Tensor<T> z;       // (N, C, 1, 1) squeezed descriptors
  Tensor<T> hidden;  // (N, hidden, 1, 1) pre-ReLU
  Tensor<T> s;       // (N, C, 1, 1) gates
};

/// s = sigmoid(W2 relu(W1 z)) for every sample; w1 is (hidden, C), w2 is (C, hidden).
template <typename T>
Tensor<T> excite(const Tensor<T>& z, const Tensor<T>& w1, const Tensor<T>& w2,
                 Tensor<T>* hidden_pre = nullptr);

/// Channel-wise product: out[n, c] = s[n, c] * u[n, c].
template <typename T>
Tensor<T> scale(const Tensor<T>& u, const Tensor<T>& s);

/// Full block forward. When `identity_scale` the gates are still computed
/// but the input passes through unscaled.
template <typename T>
Tensor<T> mseb(const Tensor<T>& u, const Tensor<T>& w1, const Tensor<T>& w2,
               bool identity_scale, MsebCache<T>& cache);

template <typename T>
Tensor<T> mseb_backward(const Tensor<T>& u, const Tensor<T>& w1, const Tensor<T>& w2,
                        const Tensor<T>& dy, bool identity_scale, const MsebCache<T>& cache,
                        Tensor<T>& dw1, Tensor<T>& dw2);

}  // namespace ucp::ops
