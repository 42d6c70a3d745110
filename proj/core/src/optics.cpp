#include "vofm/optics.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "vofm/digest.hpp"

using nlohmann::json;

namespace vofm::optics {

namespace {

constexpr int kConfigFormatVersion = 1;
constexpr double kPi = 3.14159265358979323846;

// Bilinear sample of a grid at unit-disc coordinates (x, y); zero outside
// the disc and outside the pixel lattice.
double sample_bilinear(const SurfaceGrid& g, double x, double y) {
  if (x * x + y * y > 1.0) return 0.0;
  const int m = g.size;
  // invert pixel_coord: i = (x*M + M - 1) / 2
  double u = (x * m + m - 1.0) * 0.5;
  double v = (y * m + m - 1.0) * 0.5;
  int c0 = static_cast<int>(std::floor(u));
  int r0 = static_cast<int>(std::floor(v));
  double fu = u - c0;
  double fv = v - r0;
  auto val = [&](int r, int c) -> double {
    if (r < 0 || c < 0 || r >= m || c >= m) return 0.0;
    return g.at(r, c);
  };
  return (1 - fv) * ((1 - fu) * val(r0, c0) + fu * val(r0, c0 + 1)) +
         fv * ((1 - fu) * val(r0 + 1, c0) + fu * val(r0 + 1, c0 + 1));
}

json channel_to_json(const ChannelConfig& ch) {
  return json{{"shear_x", ch.shear_x}, {"shear_y", ch.shear_y},
              {"theta", ch.theta},     {"mask_cx", ch.mask_cx},
              {"mask_cy", ch.mask_cy}, {"mask_radius", ch.mask_radius}};
}

ChannelConfig channel_from_json(const json& j) {
  ChannelConfig ch;
  ch.shear_x = j.at("shear_x").get<double>();
  ch.shear_y = j.at("shear_y").get<double>();
  ch.theta = j.at("theta").get<double>();
  ch.mask_cx = j.at("mask_cx").get<double>();
  ch.mask_cy = j.at("mask_cy").get<double>();
  ch.mask_radius = j.at("mask_radius").get<double>();
  return ch;
}

}  // namespace

double ChannelConfig::gain() const { return 2.0 / std::cos(theta); }

void ForwardConfig::validate() const {
  if (grid_size < 8)
    throw Error(ErrorKind::invalid_input, "grid size must be >= 8");
  if (beta < 0.0) throw Error(ErrorKind::invalid_input, "beta must be >= 0");
  if (channels.empty())
    throw Error(ErrorKind::invalid_input, "at least one channel required");
  if (design != "asphere" && design != "freeform")
    throw Error(ErrorKind::invalid_input, "unknown design: " + design);
  for (const auto& ch : channels) {
    if (!(std::fabs(ch.theta) < kPi / 2))
      throw Error(ErrorKind::invalid_input, "|theta| must be < pi/2");
    if (!(ch.mask_radius > 0.0))
      throw Error(ErrorKind::invalid_input, "mask radius must be > 0");
  }
}

std::string ForwardConfig::to_json() const {
  json j;
  j["format_version"] = kConfigFormatVersion;
  j["grid_size"] = grid_size;
  j["beta"] = beta;
  j["design"] = design;
  j["channels"] = json::array();
  for (const auto& ch : channels) j["channels"].push_back(channel_to_json(ch));
  return j.dump(2) + "\n";
}

ForwardConfig ForwardConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad forward config: ") + e.what());
  }
  if (!j.contains("format_version") ||
      j["format_version"].get<int>() != kConfigFormatVersion)
    throw Error(ErrorKind::format, "forward config format version mismatch");
  ForwardConfig cfg;
  try {
    cfg.grid_size = j.at("grid_size").get<int>();
    cfg.beta = j.at("beta").get<double>();
    cfg.design = j.at("design").get<std::string>();
    for (const auto& cj : j.at("channels")) cfg.channels.push_back(channel_from_json(cj));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad forward config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string ForwardConfig::digest() const { return digest_hex(to_json()); }

std::string Disturbance::to_json() const {
  json j;
  j["format_version"] = kConfigFormatVersion;
  j["channels"] = json::array();
  for (const auto& ch : channels) {
    json cj;
    cj["gain"] = ch.gain;
    cj["offsets"] = json::array();
    for (const auto& t : ch.offsets)
      cj["offsets"].push_back(json{{"j", t.j}, {"coeff_nm", t.coeff_nm}});
    j["channels"].push_back(cj);
  }
  return j.dump(2) + "\n";
}

Disturbance Disturbance::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad disturbance: ") + e.what());
  }
  if (!j.contains("format_version") ||
      j["format_version"].get<int>() != kConfigFormatVersion)
    throw Error(ErrorKind::format, "disturbance format version mismatch");
  Disturbance d;
  try {
    for (const auto& cj : j.at("channels")) {
      ChannelDisturbance ch;
      ch.gain = cj.at("gain").get<double>();
      for (const auto& t : cj.at("offsets"))
        ch.offsets.push_back({t.at("j").get<int>(), t.at("coeff_nm").get<double>()});
      d.channels.push_back(ch);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad disturbance: ") + e.what());
  }
  return d;
}

ForwardConfig default_config(const std::string& design, int grid_size) {
  ForwardConfig cfg;
  cfg.grid_size = grid_size;
  cfg.design = design;
  cfg.beta = 5e-6;
  if (design == "asphere") {
    const double deg = kPi / 180.0;
    cfg.channels = {
        {0.0, 0.0, 0.0 * deg, 0.0, 0.0, 2.0},
        {0.15, 0.0, 2.0 * deg, 0.4, 0.4, 0.45},
        {0.0, 0.15, 4.0 * deg, -0.4, 0.4, 0.45},
        {-0.15, -0.15, 6.0 * deg, -0.4, -0.4, 0.45},
    };
  } else if (design == "freeform") {
    cfg.channels = {{0.0, 0.0, 0.0, 0.0, 0.0, 2.0}};
  } else {
    throw Error(ErrorKind::invalid_input, "unknown design: " + design);
  }
  return cfg;
}

SurfaceGrid design_topography(const std::string& design, int grid_size) {
  if (grid_size < 8)
    throw Error(ErrorKind::invalid_input, "grid size must be >= 8");
  SurfaceGrid g(grid_size);
  if (design == "asphere") {
    // conic sag, aperture radius 10 mm mapped onto the unit disc
    const double c = 0.01;    // 1/mm
    const double kappa = -1.5;
    const double a4 = 1e-6;   // 1/mm^3
    const double aperture_mm = 10.0;
    for (int row = 0; row < grid_size; ++row) {
      double y = pixel_coord(row, grid_size);
      for (int col = 0; col < grid_size; ++col) {
        double x = pixel_coord(col, grid_size);
        double r2u = x * x + y * y;
        if (r2u > 1.0) continue;
        double r2 = r2u * aperture_mm * aperture_mm;  // mm^2
        double sag_mm = c * r2 / (1.0 + std::sqrt(1.0 - (1.0 + kappa) * c * c * r2)) +
                        a4 * r2 * r2;
        g.at(row, col) = sag_mm * 1e6;  // mm -> nm
      }
    }
  } else if (design == "freeform") {
    // three off-axis spherical caps, heights in nm, lateral scale 10 mm
    struct Cap { double cx, cy, rim, sphere_r; };  // rim/centers in unit coords, sphere_r in mm
    const Cap caps[] = {
        {0.0, 0.0, 1.0, 1000.0},
        {0.5, 0.2, 0.45, 500.0},
        {-0.4, -0.4, 0.5, 800.0},
    };
    const double scale_mm = 10.0;
    for (int row = 0; row < grid_size; ++row) {
      double y = pixel_coord(row, grid_size);
      for (int col = 0; col < grid_size; ++col) {
        double x = pixel_coord(col, grid_size);
        if (x * x + y * y > 1.0) continue;
        double sag_mm = 0.0;
        for (const auto& cap : caps) {
          double d_mm = std::hypot(x - cap.cx, y - cap.cy) * scale_mm;
          double rim_mm = cap.rim * scale_mm;
          if (d_mm >= rim_mm) continue;
          sag_mm += std::sqrt(cap.sphere_r * cap.sphere_r - d_mm * d_mm) -
                    std::sqrt(cap.sphere_r * cap.sphere_r - rim_mm * rim_mm);
        }
        g.at(row, col) = sag_mm * 1e6;
      }
    }
  } else {
    throw Error(ErrorKind::invalid_input, "unknown design: " + design);
  }
  return g;
}

std::vector<uint8_t> channel_mask(const ChannelConfig& ch, int grid_size) {
  std::vector<uint8_t> mask(static_cast<size_t>(grid_size) * grid_size, 0);
  for (int row = 0; row < grid_size; ++row) {
    double y = pixel_coord(row, grid_size);
    for (int col = 0; col < grid_size; ++col) {
      double x = pixel_coord(col, grid_size);
      if (x * x + y * y > 1.0) continue;
      double dx = x - ch.mask_cx;
      double dy = y - ch.mask_cy;
      if (dx * dx + dy * dy <= ch.mask_radius * ch.mask_radius)
        mask[static_cast<size_t>(row) * grid_size + col] = 1;
    }
  }
  return mask;
}

OPLField forward_opd(const SurfaceGrid& topo, const ForwardConfig& cfg) {
  cfg.validate();
  if (topo.size != cfg.grid_size)
    throw Error(ErrorKind::invalid_input, "topography size does not match config");
  const int m = cfg.grid_size;
  OPLField out(m, cfg.channel_count());
  for (int k = 0; k < cfg.channel_count(); ++k) {
    const ChannelConfig& ch = cfg.channels[k];
    const double a = ch.gain();
    auto mask = channel_mask(ch, m);
    for (int row = 0; row < m; ++row) {
      double y = pixel_coord(row, m);
      for (int col = 0; col < m; ++col) {
        if (!mask[static_cast<size_t>(row) * m + col]) continue;
        double x = pixel_coord(col, m);
        double t = sample_bilinear(topo, x + ch.shear_x, y + ch.shear_y);
        out.at(k, row, col) = a * t + cfg.beta * t * t;
      }
    }
  }
  return out;
}

OPLField apply_disturbance(const OPLField& field, const Disturbance& dist,
                           const ForwardConfig& cfg) {
  cfg.validate();
  if (field.size != cfg.grid_size || field.channels != cfg.channel_count())
    throw Error(ErrorKind::invalid_input, "field shape does not match config");
  if (dist.channels.size() != static_cast<size_t>(cfg.channel_count()))
    throw Error(ErrorKind::invalid_input, "disturbance channel count mismatch");
  const int m = cfg.grid_size;
  OPLField out(m, field.channels);
  for (int k = 0; k < field.channels; ++k) {
    const ChannelDisturbance& d = dist.channels[k];
    auto mask = channel_mask(cfg.channels[k], m);
    SurfaceGrid offset;
    if (!d.offsets.empty()) offset = zernike::synthesize_surface(d.offsets, m);
    for (int row = 0; row < m; ++row) {
      for (int col = 0; col < m; ++col) {
        if (!mask[static_cast<size_t>(row) * m + col]) continue;
        double v = (1.0 + d.gain) * field.at(k, row, col);
        if (!d.offsets.empty()) v += offset.at(row, col);
        out.at(k, row, col) = v;
      }
    }
  }
  return out;
}

OPLField delta_opd_perfect(const SurfaceGrid& delta_topo, const ForwardConfig& cfg) {
  cfg.validate();
  if (delta_topo.size != cfg.grid_size)
    throw Error(ErrorKind::invalid_input, "delta topography size mismatch");
  SurfaceGrid design = design_topography(cfg.design, cfg.grid_size);
  SurfaceGrid specimen(cfg.grid_size);
  for (size_t i = 0; i < specimen.values.size(); ++i)
    specimen.values[i] = design.values[i] + delta_topo.values[i];
  OPLField ls = forward_opd(specimen, cfg);
  OPLField ld = forward_opd(design, cfg);
  for (size_t i = 0; i < ls.values.size(); ++i) ls.values[i] -= ld.values[i];
  return ls;
}

Disturbance sample_disturbance(const ForwardConfig& cfg, uint64_t seed) {
  cfg.validate();
  Disturbance d;
  for (int k = 0; k < cfg.channel_count(); ++k) {
    Rng rng(derive_stream(seed, 0xd157 + k));
    ChannelDisturbance ch;
    ch.gain = rng.uniform(-0.02, 0.02);
    for (int j = 2; j <= 10; ++j)
      ch.offsets.push_back({j, rng.uniform(-100.0, 100.0)});
    d.channels.push_back(ch);
  }
  return d;
}

}  // namespace vofm::optics
