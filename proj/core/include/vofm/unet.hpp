#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vofm/layers.hpp"

namespace vofm::net {

struct UNetConfig {
  int depth = 3;       // down/up stages
  int base_width = 16; // channels after the first encoder stage
  int in_channels = 1;

  void validate() const;
};

// One weighted layer. Roles, in manifest order:
//   enc{s}_conv_a, enc{s}_conv_b (3x3, stride 1, relu)
//   enc{s}_down               (3x3, stride 2, doubles channels, linear)
//   bottleneck_a, bottleneck_b (3x3, relu)
//   dec{s}_up  (2x2 stride-2 transposed, halves channels, linear)
//   dec{s}_conv_a, dec{s}_conv_b (3x3, relu; conv_a consumes the skip concat)
//   head (1x1, linear, 1 output channel)
template <class T>
struct ParamBlock {
  std::string name;
  Tensor<T> weights;   // conv: [out,in,k,k]; transposed: [in,out,2,2]
  std::vector<T> bias;
  bool transposed = false;
  int stride = 1;
  int pad = 0;
  bool relu = false;
};

template <class T>
struct GradBlock {
  Tensor<T> dw;
  std::vector<T> db;
};

template <class T>
struct UNetCache {
  std::vector<Tensor<T>> block_inputs;  // input of every block, manifest order
  Tensor<T> output;
};

template <class T>
struct UNet {
  UNetConfig config;
  std::vector<ParamBlock<T>> blocks;

  size_t param_count() const;

  // He-normal weights, zero biases; bitwise reproducible for a fixed seed.
  static UNet build(const UNetConfig& cfg, uint64_t seed);

  // Throws invalid_input when the spatial size is not divisible by 2^depth;
  // throws numeric when the output goes non-finite (a NaN anywhere in the
  // network propagates to the output through the convolutions).
  Tensor<T> forward(const Tensor<T>& input) const;
  Tensor<T> forward(const Tensor<T>& input, UNetCache<T>& cache) const;

  // Exact gradient of every parameter plus the input gradient, given
  // d(loss)/d(output).
  std::vector<GradBlock<T>> backward(const UNetCache<T>& cache,
                                     const Tensor<T>& d_output) const;

  // widths per encoder stage: stage s convs run at base_width * 2^s
  int stage_width(int stage) const { return config.base_width << stage; }

  template <class U>
  UNet<U> cast() const;
};

// Closed-form parameter count for a config; used to cross-check builds.
size_t unet_param_count(const UNetConfig& cfg);

}  // namespace vofm::net
