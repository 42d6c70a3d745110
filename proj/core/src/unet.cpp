#include "vofm/unet.hpp"

#include <cmath>

#include "vofm/rng.hpp"

namespace vofm::net {

namespace {

struct BlockSpec {
  std::string name;
  int wn, wc, wh, ww;  // weight tensor dims
  int bias_n;
  bool transposed;
  int stride;
  int pad;
  bool relu;
};

std::vector<BlockSpec> layout(const UNetConfig& cfg) {
  cfg.validate();
  const int d = cfg.depth;
  const int c0 = cfg.base_width;
  std::vector<BlockSpec> specs;
  for (int s = 0; s < d; ++s) {
    int cs = c0 << s;
    int cin = (s == 0) ? cfg.in_channels : cs;
    std::string p = "enc" + std::to_string(s) + "_";
    specs.push_back({p + "conv_a", cs, cin, 3, 3, cs, false, 1, 1, true});
    specs.push_back({p + "conv_b", cs, cs, 3, 3, cs, false, 1, 1, true});
    specs.push_back({p + "down", 2 * cs, cs, 3, 3, 2 * cs, false, 2, 1, false});
  }
  int cd = c0 << d;
  specs.push_back({"bottleneck_a", cd, cd, 3, 3, cd, false, 1, 1, true});
  specs.push_back({"bottleneck_b", cd, cd, 3, 3, cd, false, 1, 1, true});
  for (int t = 0; t < d; ++t) {
    int s = d - 1 - t;
    int cs = c0 << s;
    std::string p = "dec" + std::to_string(s) + "_";
    // transposed weights are [in, out, 2, 2]
    specs.push_back({p + "up", 2 * cs, cs, 2, 2, cs, true, 2, 0, false});
    specs.push_back({p + "conv_a", cs, 2 * cs, 3, 3, cs, false, 1, 1, true});
    specs.push_back({p + "conv_b", cs, cs, 3, 3, cs, false, 1, 1, true});
  }
  specs.push_back({"head", 1, c0, 1, 1, 1, false, 1, 0, false});
  return specs;
}

template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

}  // namespace

void UNetConfig::validate() const {
  if (depth < 1) throw Error(ErrorKind::invalid_input, "depth must be >= 1");
  if (base_width < 1)
    throw Error(ErrorKind::invalid_input, "base width must be >= 1");
  if (in_channels < 1)
    throw Error(ErrorKind::invalid_input, "in_channels must be >= 1");
}

size_t unet_param_count(const UNetConfig& cfg) {
  size_t total = 0;
  for (const auto& s : layout(cfg))
    total += static_cast<size_t>(s.wn) * s.wc * s.wh * s.ww + s.bias_n;
  return total;
}

template <class T>
size_t UNet<T>::param_count() const {
  size_t total = 0;
  for (const auto& b : blocks) total += b.weights.size() + b.bias.size();
  return total;
}

template <class T>
UNet<T> UNet<T>::build(const UNetConfig& cfg, uint64_t seed) {
  UNet<T> net;
  net.config = cfg;
  Rng rng(derive_stream(seed, 0x0e7));
  for (const auto& s : layout(cfg)) {
    ParamBlock<T> b;
    b.name = s.name;
    b.weights = Tensor<T>(s.wn, s.wc, s.wh, s.ww);
    b.bias.assign(s.bias_n, T(0));
    b.transposed = s.transposed;
    b.stride = s.stride;
    b.pad = s.pad;
    b.relu = s.relu;
    // He-normal; transposed convs see one kernel tap per output pixel
    int fan_in = s.transposed ? s.wn : s.wc * s.wh * s.ww;
    double sd = std::sqrt(2.0 / fan_in);
    for (T& w : b.weights.v) w = static_cast<T>(sd * rng.normal());
    net.blocks.push_back(std::move(b));
  }
  return net;
}

template <class T>
Tensor<T> UNet<T>::forward(const Tensor<T>& input, UNetCache<T>& cache) const {
  config.validate();
  const int d = config.depth;
  const int div = 1 << d;
  if (input.c != config.in_channels)
    throw Error(ErrorKind::invalid_input, "input channel count mismatch");
  if (input.h % div != 0 || input.w % div != 0)
    throw Error(ErrorKind::invalid_input,
                "input spatial size not divisible by 2^depth");
  check_finite(input, "network input");

  cache.block_inputs.assign(blocks.size(), Tensor<T>());
  auto run_conv = [&](size_t idx, Tensor<T> x) {
    const ParamBlock<T>& b = blocks[idx];
    cache.block_inputs[idx] = std::move(x);
    Tensor<T> y = b.transposed
                      ? conv_transpose2d_forward(cache.block_inputs[idx],
                                                 b.weights, b.bias)
                      : conv2d_forward(cache.block_inputs[idx], b.weights,
                                       b.bias, b.stride, b.pad);
    if (b.relu)
      for (T& v : y.v)
        if (v < T(0)) v = T(0);
    return y;
  };

  std::vector<Tensor<T>> skips(d);
  Tensor<T> x = input;
  for (int s = 0; s < d; ++s) {
    x = run_conv(3 * s, std::move(x));
    x = run_conv(3 * s + 1, std::move(x));
    skips[s] = x;  // conv_b output feeds both down and the decoder concat
    x = run_conv(3 * s + 2, std::move(x));
  }
  x = run_conv(3 * d, std::move(x));
  x = run_conv(3 * d + 1, std::move(x));
  for (int t = 0; t < d; ++t) {
    int s = d - 1 - t;
    size_t base = 3 * d + 2 + 3 * t;
    cache.block_inputs[base] = std::move(x);
    Tensor<T> up = conv_transpose2d_forward(cache.block_inputs[base],
                                            blocks[base].weights,
                                            blocks[base].bias);
    x = concat_channels(skips[s], up);
    x = run_conv(base + 1, std::move(x));
    x = run_conv(base + 2, std::move(x));
  }
  x = run_conv(6 * d + 2, std::move(x));
  check_finite(x, "network output");
  cache.output = x;
  return x;
}

template <class T>
Tensor<T> UNet<T>::forward(const Tensor<T>& input) const {
  UNetCache<T> cache;
  return forward(input, cache);
}

template <class T>
std::vector<GradBlock<T>> UNet<T>::backward(const UNetCache<T>& cache,
                                            const Tensor<T>& d_output) const {
  const int d = config.depth;
  const auto& ci = cache.block_inputs;
  std::vector<GradBlock<T>> grads(blocks.size());

  auto conv_bwd = [&](size_t idx, const Tensor<T>& dy) {
    const ParamBlock<T>& b = blocks[idx];
    ConvGrads<T> g = b.transposed
                         ? conv_transpose2d_backward(ci[idx], b.weights, dy)
                         : conv2d_backward(ci[idx], b.weights, dy, b.stride,
                                           b.pad);
    grads[idx].dw = std::move(g.dw);
    grads[idx].db = std::move(g.db);
    return std::move(g.dx);
  };

  const size_t head = 6 * d + 2;
  Tensor<T> dy = conv_bwd(head, d_output);

  std::vector<Tensor<T>> skip_grads(d);
  for (int t = d - 1; t >= 0; --t) {
    int s = d - 1 - t;
    size_t base = 3 * d + 2 + 3 * t;
    const Tensor<T>& conv_b_out =
        (t == d - 1) ? ci[head] : ci[base + 3];
    dy = relu_backward(conv_b_out, dy);
    dy = conv_bwd(base + 2, dy);
    dy = relu_backward(ci[base + 2], dy);
    dy = conv_bwd(base + 1, dy);
    int cs = stage_width(s);
    auto [d_skip, d_up] = concat_backward(dy, cs, cs);
    skip_grads[s] = std::move(d_skip);
    dy = conv_bwd(base, d_up);
  }

  dy = relu_backward(ci[3 * d + 2], dy);
  dy = conv_bwd(3 * d + 1, dy);
  dy = relu_backward(ci[3 * d + 1], dy);
  dy = conv_bwd(3 * d, dy);

  for (int s = d - 1; s >= 0; --s) {
    dy = conv_bwd(3 * s + 2, dy);
    add_inplace(dy, skip_grads[s]);
    dy = relu_backward(ci[3 * s + 2], dy);
    dy = conv_bwd(3 * s + 1, dy);
    dy = relu_backward(ci[3 * s + 1], dy);
    dy = conv_bwd(3 * s, dy);
  }
  return grads;
}

template <class T>
template <class U>
UNet<U> UNet<T>::cast() const {
  UNet<U> out;
  out.config = config;
  for (const auto& b : blocks) {
    ParamBlock<U> nb;
    nb.name = b.name;
    nb.weights = Tensor<U>(b.weights.n, b.weights.c, b.weights.h, b.weights.w);
    for (size_t i = 0; i < b.weights.v.size(); ++i)
      nb.weights.v[i] = static_cast<U>(b.weights.v[i]);
    nb.bias.resize(b.bias.size());
    for (size_t i = 0; i < b.bias.size(); ++i)
      nb.bias[i] = static_cast<U>(b.bias[i]);
    nb.transposed = b.transposed;
    nb.stride = b.stride;
    nb.pad = b.pad;
    nb.relu = b.relu;
    out.blocks.push_back(std::move(nb));
  }
  return out;
}

template struct UNet<float>;
template struct UNet<double>;
template UNet<double> UNet<float>::cast<double>() const;
template UNet<float> UNet<double>::cast<float>() const;

}  // namespace vofm::net
