#pragma once

#include <cmath>
#include <vector>

#include "vofm/errors.hpp"

namespace vofm::net {

// NCHW tensor, row-major. float for training, double for gradient and
// adjoint verification.
template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

  size_t size() const { return v.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  size_t sample_stride() const { return static_cast<size_t>(c) * h * w; }

  T& at(int i, int ch, int y, int x) {
    return v[((static_cast<size_t>(i) * c + ch) * h + y) * w + x];
  }
  T at(int i, int ch, int y, int x) const {
    return v[((static_cast<size_t>(i) * c + ch) * h + y) * w + x];
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

template <class T>
void check_finite(const Tensor<T>& t, const char* context) {
  for (const T& x : t.v)
    if (!std::isfinite(x))
      throw Error(ErrorKind::numeric,
                  std::string("non-finite value in ") + context);
}

}  // namespace vofm::net
