#include "vofm/calib.hpp"

#include <Eigen/Dense>
#include <Eigen/QR>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

using nlohmann::json;

namespace vofm::calib {

namespace {
constexpr int kEstimateFormatVersion = 1;
}

std::string DisturbanceEstimate::to_json() const {
  json j = json::parse(estimate.to_json());
  j["format_version"] = kEstimateFormatVersion;
  j["residual_rms_nm"] = residual_rms_nm;
  return j.dump(2) + "\n";
}

DisturbanceEstimate DisturbanceEstimate::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad estimate: ") + e.what());
  }
  if (!j.contains("format_version") ||
      j["format_version"].get<int>() != kEstimateFormatVersion)
    throw Error(ErrorKind::format, "estimate format version mismatch");
  DisturbanceEstimate est;
  est.estimate = optics::Disturbance::from_json(text);
  try {
    est.residual_rms_nm = j.at("residual_rms_nm").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad estimate: ") + e.what());
  }
  return est;
}

SurfaceGrid cap_topography(double amplitude_nm, int grid_size) {
  SurfaceGrid g(grid_size);
  for (int row = 0; row < grid_size; ++row) {
    double y = pixel_coord(row, grid_size);
    for (int col = 0; col < grid_size; ++col) {
      double x = pixel_coord(col, grid_size);
      double r2 = x * x + y * y;
      if (r2 > 1.0) continue;
      g.at(row, col) = amplitude_nm * r2;
    }
  }
  return g;
}

std::vector<CalibrationSpecimen> generate_calibration_set(
    const optics::ForwardConfig& cfg, const optics::Disturbance& dist,
    const std::vector<double>& amplitudes_nm) {
  std::set<double> magnitudes;
  for (double a : amplitudes_nm) magnitudes.insert(std::fabs(a));
  if (magnitudes.size() < 2)
    throw Error(ErrorKind::invalid_input,
                "calibration needs at least two amplitudes of distinct magnitude");
  std::vector<CalibrationSpecimen> out;
  out.reserve(amplitudes_nm.size());
  for (double a : amplitudes_nm) {
    CalibrationSpecimen s;
    s.amplitude_nm = a;
    s.topo = cap_topography(a, cfg.grid_size);
    s.measured = optics::apply_disturbance(optics::forward_opd(s.topo, cfg), dist, cfg);
    out.push_back(std::move(s));
  }
  return out;
}

DisturbanceEstimate estimate_disturbance(
    const std::vector<CalibrationSpecimen>& specimens,
    const optics::ForwardConfig& cfg, int j_dist) {
  if (specimens.empty())
    throw Error(ErrorKind::invalid_input, "empty calibration set");
  if (j_dist < 2)
    throw Error(ErrorKind::invalid_input, "j_dist must be >= 2");
  const int m = cfg.grid_size;
  const int n_offsets = j_dist - 1;  // Noll j = 2..j_dist
  const int n_unknowns = 1 + n_offsets;

  std::vector<SurfaceGrid> basis;
  basis.reserve(n_offsets);
  for (int j = 2; j <= j_dist; ++j) basis.push_back(zernike::render_basis(j, m));

  std::vector<OPLField> models;
  models.reserve(specimens.size());
  for (const auto& s : specimens) models.push_back(optics::forward_opd(s.topo, cfg));

  DisturbanceEstimate est;
  est.estimate.channels.resize(cfg.channel_count());
  est.residual_rms_nm.resize(cfg.channel_count());

  for (int k = 0; k < cfg.channel_count(); ++k) {
    auto mask = optics::channel_mask(cfg.channels[k], m);
    std::vector<int> px;
    for (int i = 0; i < m * m; ++i)
      if (mask[i]) px.push_back(i);
    const size_t rows = px.size() * specimens.size();
    Eigen::MatrixXd design(rows, n_unknowns);
    Eigen::VectorXd rhs(rows);
    size_t r = 0;
    for (size_t s = 0; s < specimens.size(); ++s) {
      for (int i : px) {
        double lm = models[s].values[(static_cast<size_t>(k) * m * m) + i];
        design(r, 0) = lm;
        for (int o = 0; o < n_offsets; ++o) design(r, 1 + o) = basis[o].values[i];
        rhs(r) = specimens[s].measured.values[(static_cast<size_t>(k) * m * m) + i] - lm;
        ++r;
      }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < n_unknowns)
      throw Error(ErrorKind::conditioning,
                  "calibration design matrix rank deficient in channel " +
                      std::to_string(k));
    Eigen::VectorXd sol = qr.solve(rhs);
    optics::ChannelDisturbance ch;
    ch.gain = sol(0);
    for (int o = 0; o < n_offsets; ++o) ch.offsets.push_back({2 + o, sol(1 + o)});
    est.estimate.channels[k] = std::move(ch);
    double rss = (design * sol - rhs).squaredNorm();
    est.residual_rms_nm[k] = std::sqrt(rss / static_cast<double>(rows));
  }
  return est;
}

OPLField hybrid_delta_opd(const SurfaceGrid& specimen_topo,
                                  const optics::ForwardConfig& cfg,
                                  const optics::Disturbance& true_dist,
                                  const DisturbanceEstimate& est) {
  const int m = cfg.grid_size;
  if (specimen_topo.size != m)
    throw Error(ErrorKind::invalid_input, "specimen size mismatch");
  if (est.estimate.channels.size() != static_cast<size_t>(cfg.channel_count()))
    throw Error(ErrorKind::invalid_input, "estimate channel count mismatch");
  OPLField measured = optics::apply_disturbance(
      optics::forward_opd(specimen_topo, cfg), true_dist, cfg);
  OPLField design_model =
      optics::forward_opd(optics::design_topography(cfg.design, m), cfg);

  OPLField out(m, cfg.channel_count());
  for (int k = 0; k < cfg.channel_count(); ++k) {
    const auto& ch = est.estimate.channels[k];
    double denom = 1.0 + ch.gain;
    if (std::fabs(denom) < 1e-6)
      throw Error(ErrorKind::numeric,
                  "degenerate estimated gain in channel " + std::to_string(k));
    auto mask = optics::channel_mask(cfg.channels[k], m);
    SurfaceGrid offset;
    if (!ch.offsets.empty()) offset = zernike::synthesize_surface(ch.offsets, m);
    for (int row = 0; row < m; ++row) {
      for (int col = 0; col < m; ++col) {
        if (!mask[static_cast<size_t>(row) * m + col]) continue;
        double v = measured.at(k, row, col) -
                   denom * design_model.at(k, row, col);
        if (!ch.offsets.empty()) v -= offset.at(row, col);
        out.at(k, row, col) = v / denom;
      }
    }
  }
  return out;
}

OPLField uncalibrated_delta_opd(const SurfaceGrid& specimen_topo,
                                        const optics::ForwardConfig& cfg,
                                        const optics::Disturbance& true_dist) {
  const int m = cfg.grid_size;
  if (specimen_topo.size != m)
    throw Error(ErrorKind::invalid_input, "specimen size mismatch");
  OPLField measured = optics::apply_disturbance(
      optics::forward_opd(specimen_topo, cfg), true_dist, cfg);
  OPLField design_model =
      optics::forward_opd(optics::design_topography(cfg.design, m), cfg);
  for (size_t i = 0; i < measured.values.size(); ++i)
    measured.values[i] -= design_model.values[i];
  return measured;
}

}  // namespace vofm::calib
