#include <doctest.h>

#include <cmath>

#include "vofm/calib.hpp"
#include "vofm/dataset.hpp"

using namespace vofm;
using namespace vofm::calib;

namespace {

const std::vector<double> kAmps = {5e3, -5e3, 1e4, -1e4, 2e4};

double field_rms(const OPLField& a, const OPLField& b, int m) {
  double acc = 0.0;
  long long n = 0;
  for (int k = 0; k < a.channels; ++k)
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c)
        if (in_disc(r, c, m)) {
          double d = a.at(k, r, c) - b.at(k, r, c);
          acc += d * d;
          ++n;
        }
  return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace

TEST_CASE("cap topography is a pure defocus bowl") {
  SurfaceGrid g = cap_topography(1e4, 64);
  // centre pixels sit near r = 0, rim pixels near r = 1
  CHECK(g.at(32, 32) == doctest::Approx(1e4 * (pixel_coord(32, 64) *
                                                   pixel_coord(32, 64) * 2))
                            .epsilon(1e-12));
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      if (!in_disc(r, c, 64)) CHECK(g.at(r, c) == 0.0);
}

TEST_CASE("calibration recovers gains and offsets of a known disturbance") {
  for (const char* design : {"asphere", "freeform"}) {
    optics::ForwardConfig cfg = optics::default_config(design, 64);
    optics::Disturbance dist = optics::sample_disturbance(cfg, 2024);
    auto specimens = generate_calibration_set(cfg, dist, kAmps);
    DisturbanceEstimate est = estimate_disturbance(specimens, cfg, 10);
    REQUIRE(est.estimate.channels.size() == dist.channels.size());
    for (size_t k = 0; k < dist.channels.size(); ++k) {
      CHECK(std::abs(est.estimate.channels[k].gain - dist.channels[k].gain) <
            1e-6);
      for (const auto& t : est.estimate.channels[k].offsets) {
        double want = 0.0;
        for (const auto& o : dist.channels[k].offsets)
          if (o.j == t.j) want = o.coeff_nm;
        CHECK(std::abs(t.coeff_nm - want) < 1e-3);
      }
      CHECK(est.residual_rms_nm[k] < 1e-6);
    }
  }
}

TEST_CASE("calibration needs at least two distinct amplitudes") {
  optics::ForwardConfig cfg = optics::default_config("freeform", 32);
  optics::Disturbance dist = optics::sample_disturbance(cfg, 5);
  CHECK_THROWS_AS(generate_calibration_set(cfg, dist, {1e4}), Error);
  CHECK_THROWS_AS(generate_calibration_set(cfg, dist, {1e4, 1e4}), Error);
}

TEST_CASE("estimate serialization round trips") {
  optics::ForwardConfig cfg = optics::default_config("freeform", 32);
  optics::Disturbance dist = optics::sample_disturbance(cfg, 7);
  auto specimens = generate_calibration_set(cfg, dist, kAmps);
  DisturbanceEstimate est = estimate_disturbance(specimens, cfg, 10);
  DisturbanceEstimate back = DisturbanceEstimate::from_json(est.to_json());
  CHECK(back.to_json() == est.to_json());
}

TEST_CASE("hybrid inputs cancel the disturbance almost exactly") {
  optics::ForwardConfig cfg = optics::default_config("asphere", 64);
  optics::Disturbance dist = optics::sample_disturbance(cfg, 31);
  auto specimens = generate_calibration_set(cfg, dist, kAmps);
  DisturbanceEstimate est = estimate_disturbance(specimens, cfg, 10);
  SurfaceGrid design = optics::design_topography(cfg.design, cfg.grid_size);
  for (uint64_t i = 0; i < 3; ++i) {
    SurfaceGrid dt = data::sample_delta_topography(77, i, cfg.grid_size, {});
    SurfaceGrid specimen = design;
    for (size_t p = 0; p < specimen.values.size(); ++p)
      specimen.values[p] += dt.values[p];
    OPLField hybrid = hybrid_delta_opd(specimen, cfg, dist, est);
    OPLField perfect = optics::delta_opd_perfect(dt, cfg);
    CHECK(field_rms(hybrid, perfect, cfg.grid_size) < 1e-3);
    // the uncalibrated input, by contrast, is dominated by the offsets
    OPLField uncal = uncalibrated_delta_opd(specimen, cfg, dist);
    CHECK(field_rms(uncal, perfect, cfg.grid_size) > 1.0);
  }
}

TEST_CASE("hybrid correction rejects degenerate gain estimates") {
  optics::ForwardConfig cfg = optics::default_config("freeform", 32);
  optics::Disturbance dist = optics::sample_disturbance(cfg, 3);
  DisturbanceEstimate est;
  est.estimate.channels.resize(1);
  est.estimate.channels[0].gain = -1.0;  // 1 + g == 0
  est.residual_rms_nm = {0.0};
  SurfaceGrid specimen = optics::design_topography("freeform", 32);
  CHECK_THROWS_AS(hybrid_delta_opd(specimen, cfg, dist, est), Error);
}
