#include "vofm/layers.hpp"

#include <cblas.h>
#include <algorithm>
#include <cstring>

namespace vofm::net {

namespace {

// row-major C[m x n] = alpha * op(A) op(B) + beta * C
inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// GEMM panel width (columns); sized so a k*k*C_in panel fits in cache
constexpr size_t kGemmChunk = 16384;

// col layout: [in_ch * k * k, ld] with this sample's block starting at the
// given pointer; ld is the full column count so several samples can share
// one matrix and feed a single GEMM.
template <class T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad,
            T* col, size_t ld) {
  const int oh = conv_out_dim(h, k, stride, pad);
  const int ow = conv_out_dim(w, k, stride, pad);
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + ((static_cast<size_t>(ci) * k + ky) * k + kx) * ld;
        // valid output-column span for this kernel tap (stride 1 only)
        const int ox0 = stride == 1 ? std::max(0, pad - kx) : 0;
        const int ox1 = stride == 1 ? std::min(ow, w + pad - kx) : 0;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::memset(dst + static_cast<size_t>(oy) * ow, 0,
                        sizeof(T) * ow);
            continue;
          }
          const T* src = x + (static_cast<size_t>(ci) * h + iy) * w;
          T* row = dst + static_cast<size_t>(oy) * ow;
          if (stride == 1) {
            for (int ox = 0; ox < ox0; ++ox) row[ox] = T(0);
            if (ox1 > ox0)
              std::memcpy(row + ox0, src + ox0 + kx - pad,
                          sizeof(T) * (ox1 - ox0));
            for (int ox = ox1; ox < ow; ++ox) row[ox] = T(0);
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride + kx - pad;
              row[ox] = (ix < 0 || ix >= w) ? T(0) : src[ix];
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int pad,
            T* x, size_t ld) {
  const int oh = conv_out_dim(h, k, stride, pad);
  const int ow = conv_out_dim(w, k, stride, pad);
  std::memset(x, 0, sizeof(T) * static_cast<size_t>(c) * h * w);
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + ((static_cast<size_t>(ci) * k + ky) * k + kx) * ld;
        const int ox0 = stride == 1 ? std::max(0, pad - kx) : 0;
        const int ox1 = stride == 1 ? std::min(ow, w + pad - kx) : 0;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = x + (static_cast<size_t>(ci) * h + iy) * w;
          const T* s = src + static_cast<size_t>(oy) * ow;
          if (stride == 1) {
            T* d = dst + kx - pad;
            for (int ox = ox0; ox < ox1; ++ox) d[ox] += s[ox];
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= w) continue;
              dst[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

template <class T>
void require(bool cond, const char* msg) {
  if (!cond) throw Error(ErrorKind::invalid_input, msg);
}

}  // namespace

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weights,
                         const std::vector<T>& bias, int stride, int pad) {
  require<T>(weights.h == weights.w, "conv kernel must be square");
  require<T>(x.c == weights.c, "conv input channel mismatch");
  require<T>(bias.size() == static_cast<size_t>(weights.n),
             "conv bias size mismatch");
  require<T>(stride == 1 || stride == 2, "conv stride must be 1 or 2");
  const int k = weights.h;
  const int oh = conv_out_dim(x.h, k, stride, pad);
  const int ow = conv_out_dim(x.w, k, stride, pad);
  require<T>(oh > 0 && ow > 0, "conv output would be empty");
  const int cout = weights.n;
  const int ck2 = x.c * k * k;

  Tensor<T> y(x.n, cout, oh, ow);
  const size_t ohw = static_cast<size_t>(oh) * ow;
  const size_t cols = static_cast<size_t>(x.n) * ohw;
  // one column block per sample, one GEMM for the whole batch; the scratch
  // buffers persist across calls to avoid large-page churn in the hot loop
  static thread_local std::vector<T> col, yfull;
  col.resize(static_cast<size_t>(ck2) * cols);
  for (int i = 0; i < x.n; ++i)
    im2col(x.data() + i * x.sample_stride(), x.c, x.h, x.w, k, stride, pad,
           col.data() + i * ohw, cols);
  yfull.resize(static_cast<size_t>(cout) * cols);
  // column-chunked so each panel stays cache-resident; chunk size is fixed,
  // so the arithmetic is bitwise independent of batch composition
  for (size_t o = 0; o < cols; o += kGemmChunk) {
    const int nn = static_cast<int>(std::min(kGemmChunk, cols - o));
    gemm(false, false, cout, nn, ck2, T(1), weights.data(), ck2,
         col.data() + o, static_cast<int>(cols), T(0), yfull.data() + o,
         static_cast<int>(cols));
  }
  for (int i = 0; i < x.n; ++i)
    for (int co = 0; co < cout; ++co) {
      const T* src = yfull.data() + co * cols + i * ohw;
      T* py = y.data() + i * y.sample_stride() + co * ohw;
      for (size_t p = 0; p < ohw; ++p) py[p] = src[p] + bias[co];
    }
  return y;
}

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weights,
                             const Tensor<T>& dy, int stride, int pad) {
  const int k = weights.h;
  const int oh = conv_out_dim(x.h, k, stride, pad);
  const int ow = conv_out_dim(x.w, k, stride, pad);
  require<T>(dy.n == x.n && dy.c == weights.n && dy.h == oh && dy.w == ow,
             "conv backward shape mismatch");
  const int cout = weights.n;
  const int ck2 = x.c * k * k;

  ConvGrads<T> g;
  g.dx = Tensor<T>(x.n, x.c, x.h, x.w);
  g.dw = Tensor<T>(weights.n, weights.c, k, k);
  g.db.assign(cout, T(0));

  const size_t ohw = static_cast<size_t>(oh) * ow;
  const size_t cols = static_cast<size_t>(x.n) * ohw;
  static thread_local std::vector<T> col, dyfull;
  col.resize(static_cast<size_t>(ck2) * cols);
  dyfull.resize(static_cast<size_t>(cout) * cols);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.data() + i * x.sample_stride(), x.c, x.h, x.w, k, stride, pad,
           col.data() + i * ohw, cols);
    const T* pdy = dy.data() + i * dy.sample_stride();
    for (int co = 0; co < cout; ++co)
      std::memcpy(dyfull.data() + co * cols + i * ohw, pdy + co * ohw,
                  sizeof(T) * ohw);
  }
  // dW = dy * col^T over the whole batch, accumulated chunk by chunk in a
  // fixed order so the reduction is deterministic
  for (size_t o = 0; o < cols; o += kGemmChunk) {
    const int nn = static_cast<int>(std::min(kGemmChunk, cols - o));
    gemm(false, true, cout, ck2, nn, T(1), dyfull.data() + o,
         static_cast<int>(cols), col.data() + o, static_cast<int>(cols),
         o == 0 ? T(0) : T(1), g.dw.data(), ck2);
  }
  // dcol = W^T * dy, reusing the col buffer
  for (size_t o = 0; o < cols; o += kGemmChunk) {
    const int nn = static_cast<int>(std::min(kGemmChunk, cols - o));
    gemm(true, false, ck2, nn, cout, T(1), weights.data(), ck2,
         dyfull.data() + o, static_cast<int>(cols), T(0), col.data() + o,
         static_cast<int>(cols));
  }
  for (int i = 0; i < x.n; ++i)
    col2im(col.data() + i * ohw, x.c, x.h, x.w, k, stride, pad,
           g.dx.data() + i * g.dx.sample_stride(), cols);
  for (int co = 0; co < cout; ++co) {
    const T* p = dyfull.data() + co * cols;
    T s(0);
    for (size_t q = 0; q < cols; ++q) s += p[q];
    g.db[co] = s;
  }
  return g;
}

template <class T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& weights,
                                   const std::vector<T>& bias) {
  require<T>(weights.h == 2 && weights.w == 2,
             "transposed conv kernel must be 2x2");
  require<T>(x.c == weights.n, "transposed conv input channel mismatch");
  const int cout = weights.c;
  require<T>(bias.size() == static_cast<size_t>(cout),
             "transposed conv bias size mismatch");
  const int oh = 2 * x.h, ow = 2 * x.w;
  Tensor<T> y(x.n, cout, oh, ow);
  // ycol[cout*4, h*w] = W^T[cout*4, cin] * x[cin, h*w]; stride 2 with a 2x2
  // kernel has no overlap, so scattering is a pure reindex.
  static thread_local std::vector<T> ycol;
  ycol.resize(static_cast<size_t>(cout) * 4 * x.h * x.w);
  for (int i = 0; i < x.n; ++i) {
    gemm(true, false, cout * 4, x.h * x.w, x.c, T(1), weights.data(), cout * 4,
         x.data() + i * x.sample_stride(), x.h * x.w, T(0), ycol.data(),
         x.h * x.w);
    for (int co = 0; co < cout; ++co) {
      for (int dyy = 0; dyy < 2; ++dyy) {
        for (int dxx = 0; dxx < 2; ++dxx) {
          const T* src = ycol.data() +
                         ((static_cast<size_t>(co) * 2 + dyy) * 2 + dxx) *
                             (static_cast<size_t>(x.h) * x.w);
          for (int iy = 0; iy < x.h; ++iy) {
            T* dst = y.data() + i * y.sample_stride() +
                     (static_cast<size_t>(co) * oh + 2 * iy + dyy) * ow + dxx;
            const T* s = src + static_cast<size_t>(iy) * x.w;
            for (int ix = 0; ix < x.w; ++ix) dst[2 * ix] = s[ix] + bias[co];
          }
        }
      }
    }
  }
  return y;
}

template <class T>
ConvGrads<T> conv_transpose2d_backward(const Tensor<T>& x,
                                       const Tensor<T>& weights,
                                       const Tensor<T>& dy) {
  const int cout = weights.c;
  require<T>(dy.n == x.n && dy.c == cout && dy.h == 2 * x.h && dy.w == 2 * x.w,
             "transposed conv backward shape mismatch");
  ConvGrads<T> g;
  g.dx = Tensor<T>(x.n, x.c, x.h, x.w);
  g.dw = Tensor<T>(weights.n, weights.c, 2, 2);
  g.db.assign(cout, T(0));

  static thread_local std::vector<T> dycol;
  dycol.resize(static_cast<size_t>(cout) * 4 * x.h * x.w);
  for (int i = 0; i < x.n; ++i) {
    // gather dy into column layout
    const int oh = dy.h, ow = dy.w;
    for (int co = 0; co < cout; ++co) {
      for (int dyy = 0; dyy < 2; ++dyy) {
        for (int dxx = 0; dxx < 2; ++dxx) {
          T* dst = dycol.data() +
                   ((static_cast<size_t>(co) * 2 + dyy) * 2 + dxx) *
                       (static_cast<size_t>(x.h) * x.w);
          for (int iy = 0; iy < x.h; ++iy) {
            const T* src = dy.data() + i * dy.sample_stride() +
                           (static_cast<size_t>(co) * oh + 2 * iy + dyy) * ow +
                           dxx;
            T* d = dst + static_cast<size_t>(iy) * x.w;
            for (int ix = 0; ix < x.w; ++ix) d[ix] = src[2 * ix];
          }
        }
      }
    }
    // dx = W * dycol
    gemm(false, false, x.c, x.h * x.w, cout * 4, T(1), weights.data(),
         cout * 4, dycol.data(), x.h * x.w, T(0),
         g.dx.data() + i * g.dx.sample_stride(), x.h * x.w);
    // dW += x * dycol^T
    gemm(false, true, x.c, cout * 4, x.h * x.w, T(1),
         x.data() + i * x.sample_stride(), x.h * x.w, dycol.data(), x.h * x.w,
         T(1), g.dw.data(), cout * 4);
    for (int co = 0; co < cout; ++co) {
      const T* p = dy.data() + i * dy.sample_stride() +
                   static_cast<size_t>(co) * dy.h * dy.w;
      T s(0);
      for (int q = 0; q < dy.h * dy.w; ++q) s += p[q];
      g.db[co] += s;
    }
  }
  return g;
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.v)
    if (v < T(0)) v = T(0);
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  if (!y.same_shape(dy))
    throw Error(ErrorKind::invalid_input, "relu backward shape mismatch");
  Tensor<T> dx = dy;
  for (size_t i = 0; i < dx.v.size(); ++i)
    if (!(y.v[i] > T(0))) dx.v[i] = T(0);
  return dx;
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw Error(ErrorKind::invalid_input, "concat spatial mismatch");
  Tensor<T> y(a.n, a.c + b.c, a.h, a.w);
  const size_t plane = static_cast<size_t>(a.h) * a.w;
  for (int i = 0; i < a.n; ++i) {
    std::memcpy(y.data() + i * y.sample_stride(),
                a.data() + i * a.sample_stride(), sizeof(T) * a.c * plane);
    std::memcpy(y.data() + i * y.sample_stride() + a.c * plane,
                b.data() + i * b.sample_stride(), sizeof(T) * b.c * plane);
  }
  return y;
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> concat_backward(const Tensor<T>& dy, int c_a,
                                                int c_b) {
  if (dy.c != c_a + c_b)
    throw Error(ErrorKind::invalid_input, "concat backward channel mismatch");
  Tensor<T> da(dy.n, c_a, dy.h, dy.w);
  Tensor<T> db(dy.n, c_b, dy.h, dy.w);
  const size_t plane = static_cast<size_t>(dy.h) * dy.w;
  for (int i = 0; i < dy.n; ++i) {
    std::memcpy(da.data() + i * da.sample_stride(),
                dy.data() + i * dy.sample_stride(), sizeof(T) * c_a * plane);
    std::memcpy(db.data() + i * db.sample_stride(),
                dy.data() + i * dy.sample_stride() + c_a * plane,
                sizeof(T) * c_b * plane);
  }
  return {std::move(da), std::move(db)};
}

#define VOFM_INSTANTIATE(T)                                                    \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&,     \
                                       const std::vector<T>&, int, int);       \
  template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, \
                                           const Tensor<T>&, int, int);        \
  template Tensor<T> conv_transpose2d_forward<T>(                              \
      const Tensor<T>&, const Tensor<T>&, const std::vector<T>&);              \
  template ConvGrads<T> conv_transpose2d_backward<T>(                          \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                        \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);   \
  template std::pair<Tensor<T>, Tensor<T>> concat_backward<T>(const Tensor<T>&,\
                                                              int, int);

VOFM_INSTANTIATE(float)
VOFM_INSTANTIATE(double)

}  // namespace vofm::net
