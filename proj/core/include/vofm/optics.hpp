#pragma once

#include <string>
#include <vector>

#include "vofm/grid.hpp"
#include "vofm/rng.hpp"
#include "vofm/zernike.hpp"

namespace vofm::optics {

// One illumination channel of the surrogate interferometer: a lateral shear
// of the sampled topography, an obliquity tilt, and a circular detector mask.
struct ChannelConfig {
  double shear_x = 0.0;  // unit-disc coordinates
  double shear_y = 0.0;
  double theta = 0.0;  // obliquity angle, rad, |theta| < pi/2
  double mask_cx = 0.0;
  double mask_cy = 0.0;
  double mask_radius = 2.0;  // > 1 covers the whole disc

  // double-pass path gain, >= 2
  double gain() const;
};

struct ForwardConfig {
  int grid_size = 64;
  double beta = 5e-6;  // quadratic nonlinearity, 1/nm
  std::string design;  // "asphere" | "freeform"
  std::vector<ChannelConfig> channels;

  int channel_count() const { return static_cast<int>(channels.size()); }
  void validate() const;

  std::string to_json() const;          // versioned, all fields explicit
  static ForwardConfig from_json(const std::string& text);
  std::string digest() const;           // hex digest of the canonical form
};

// Per-channel multiplicative gain plus additive low-order Zernike offsets,
// modelling a non-perfect instrument.
struct ChannelDisturbance {
  double gain = 0.0;                    // |gain| < 0.5
  zernike::ZernikeCoeffs offsets;       // Noll j >= 2, nm
};

struct Disturbance {
  std::vector<ChannelDisturbance> channels;

  std::string to_json() const;
  static Disturbance from_json(const std::string& text);
};

// Shipped configurations. Asphere: K=4 tilted/sheared channels with patchy
// masks. Freeform: a single full-disc channel.
ForwardConfig default_config(const std::string& design, int grid_size = 64);

// Design sag in nm on the unit-disc grid; deterministic.
SurfaceGrid design_topography(const std::string& design, int grid_size);

// Surrogate forward model: per channel L = gain * T' + beta * T'^2 at
// in-mask in-disc pixels, where T' is the bilinearly sheared topography
// sample (zero once the sample point leaves the disc). Zero elsewhere.
OPLField forward_opd(const SurfaceGrid& topo, const ForwardConfig& cfg);

// (1 + g_k) * L_k + per-channel Zernike offsets, restricted to mask and disc.
OPLField apply_disturbance(const OPLField& field, const Disturbance& dist,
                           const ForwardConfig& cfg);

// forward_opd(T_d + dT) - forward_opd(T_d) with T_d taken from cfg.design.
OPLField delta_opd_perfect(const SurfaceGrid& delta_topo, const ForwardConfig& cfg);

// Seeded random disturbance: gains ~ U(-0.02, 0.02), offsets ~ U(-100, 100) nm
// for Noll j = 2..10.
Disturbance sample_disturbance(const ForwardConfig& cfg, uint64_t seed);

// Pixel mask of a channel: inside the disc and inside the channel's circle.
std::vector<uint8_t> channel_mask(const ChannelConfig& ch, int grid_size);

}  // namespace vofm::optics
