#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vofm/optics.hpp"

namespace vofm::data {

// Sample generation parameters; echoed into dataset metadata.
struct SamplingParams {
  int j_min = 2;   // piston excluded
  int j_max = 36;
  double scale_min_nm = 50.0;   // log-uniform overall in-disc RMS
  double scale_max_nm = 700.0;
};

struct DatasetMeta {
  std::string design;
  uint64_t seed = 0;
  int sample_count = 0;
  int grid_size = 0;
  int channel_count = 0;
  SamplingParams sampling;
  std::string config_digest;
  std::string config_json;   // full forward-config echo
  std::string content_digest;  // over inputs.bin then targets.bin bytes
};

// In-memory dataset: inputs [n][k][row][col], targets [n][row][col], binary32.
struct Dataset {
  DatasetMeta meta;
  std::vector<float> inputs;
  std::vector<float> targets;

  size_t input_sample_stride() const {
    return static_cast<size_t>(meta.channel_count) * meta.grid_size * meta.grid_size;
  }
  size_t target_sample_stride() const {
    return static_cast<size_t>(meta.grid_size) * meta.grid_size;
  }
  const float* input(int i) const { return inputs.data() + i * input_sample_stride(); }
  const float* target(int i) const { return targets.data() + i * target_sample_stride(); }

  optics::ForwardConfig forward_config() const;
  std::string content_digest() const;
};

// Per-channel normalization statistics computed on the training set only.
struct NormStats {
  std::vector<double> input_mean, input_std;  // per channel, in-mask pixels
  double target_mean = 0.0, target_std = 1.0;  // in-disc pixels
};

// Draws a random difference topography for sample `index` of the stream
// `seed`: coefficients for Noll j_min..j_max ~ U(-1,1), rescaled so the
// in-disc RMS equals a log-uniform draw from [scale_min, scale_max].
SurfaceGrid sample_delta_topography(uint64_t seed, uint64_t index, int grid_size,
                                    const SamplingParams& sp);

// Dataset fully determined by (design, n, seed, cfg). `workers` only affects
// wall time, never content.
Dataset generate_dataset(const std::string& design, int n, uint64_t seed,
                         const optics::ForwardConfig& cfg,
                         const SamplingParams& sp = {}, int workers = 1);

// Seeded disjoint exhaustive partition; test size = round(n * test_frac).
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double test_frac,
                                          uint64_t seed);

// Subset by explicit sample indices (used by learning-curve experiments).
Dataset subset_dataset(const Dataset& ds, const std::vector<int>& indices);

NormStats compute_norm_stats(const Dataset& train);

// Directory layout: <path>/meta (JSON, versioned, digests), inputs.bin,
// targets.bin (binary32 little-endian, row-major).
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace vofm::data
