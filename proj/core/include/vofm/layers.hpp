#pragma once

#include <utility>

#include "vofm/tensor.hpp"

namespace vofm::net {

template <class T>
struct ConvGrads {
  Tensor<T> dx;
  Tensor<T> dw;
  std::vector<T> db;
};

// Cross-correlation plus bias. Weights [out_ch, in_ch, k, k]; zero padding;
// stride 1 or 2. Gradients are exact; accumulation order over the batch is
// fixed so results are bitwise deterministic.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weights,
                         const std::vector<T>& bias, int stride, int pad);

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weights,
                             const Tensor<T>& dy, int stride, int pad);

// 2x2 stride-2 transposed convolution; weights [in_ch, out_ch, 2, 2].
// Spatial dimensions exactly double; forward is the adjoint of the matching
// stride-2 convolution.
template <class T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& weights,
                                   const std::vector<T>& bias);

template <class T>
ConvGrads<T> conv_transpose2d_backward(const Tensor<T>& x,
                                       const Tensor<T>& weights,
                                       const Tensor<T>& dy);

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x);

// Subgradient 0 at exactly 0; mask taken from the forward output.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy);

// Channel concatenation; `a` (the skip features) precede `b`.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
std::pair<Tensor<T>, Tensor<T>> concat_backward(const Tensor<T>& dy, int c_a,
                                                int c_b);

}  // namespace vofm::net
