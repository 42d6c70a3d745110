#pragma once

#include <vector>

#include "vofm/optics.hpp"

namespace vofm::calib {

// A known defocus-cap specimen A * (x^2 + y^2) together with the field the
// disturbed instrument reports for it.
struct CalibrationSpecimen {
  double amplitude_nm = 0.0;
  SurfaceGrid topo;
  OPLField measured;
};

struct DisturbanceEstimate {
  optics::Disturbance estimate;
  std::vector<double> residual_rms_nm;  // per channel

  std::string to_json() const;
  static DisturbanceEstimate from_json(const std::string& text);
};

// Known cap topography A * (x^2 + y^2) on the disc, zero outside.
SurfaceGrid cap_topography(double amplitude_nm, int grid_size);

// Simulates measuring the calibration caps with the disturbed instrument.
// Requires at least two amplitudes of distinct magnitude; with beta = 0 the
// sign flips are what keep the gain and the defocus offset separable.
std::vector<CalibrationSpecimen> generate_calibration_set(
    const optics::ForwardConfig& cfg, const optics::Disturbance& dist,
    const std::vector<double>& amplitudes_nm);

// Per-channel linear least squares for measured ~ (1+g) L_model + sum_j theta_j Z_j
// over in-mask in-disc pixels of all specimens.
DisturbanceEstimate estimate_disturbance(
    const std::vector<CalibrationSpecimen>& specimens,
    const optics::ForwardConfig& cfg, int j_dist);

// Network input for a disturbed measurement of specimen T_s = T_d + dT:
// subtract the calibrated design response and divide out the estimated gain.
// With exact estimates this reproduces delta_opd_perfect(dT, cfg).
OPLField hybrid_delta_opd(const SurfaceGrid& specimen_topo,
                                  const optics::ForwardConfig& cfg,
                                  const optics::Disturbance& true_dist,
                                  const DisturbanceEstimate& est);

// Uncalibrated network input: disturbed measurement minus the perfect-model
// design response. This is what the network sees without the hybrid step.
OPLField uncalibrated_delta_opd(const SurfaceGrid& specimen_topo,
                                        const optics::ForwardConfig& cfg,
                                        const optics::Disturbance& true_dist);

}  // namespace vofm::calib
