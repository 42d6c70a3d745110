#include <doctest.h>

#include <cmath>

#include "vofm/optics.hpp"

using namespace vofm;
using namespace vofm::optics;

namespace {

ForwardConfig single_channel(int m, double beta, ChannelConfig ch) {
  ForwardConfig cfg;
  cfg.grid_size = m;
  cfg.beta = beta;
  cfg.design = "freeform";
  cfg.channels = {ch};
  return cfg;
}

SurfaceGrid constant_in_disc(int m, double value) {
  SurfaceGrid g(m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c)
      if (in_disc(r, c, m)) g.at(r, c) = value;
  return g;
}

}  // namespace

TEST_CASE("zero topography maps to zero field") {
  ForwardConfig cfg = default_config("asphere", 32);
  OPLField f = forward_opd(SurfaceGrid(32), cfg);
  for (double v : f.values) CHECK(v == 0.0);
}

TEST_CASE("normal incidence without shear doubles the topography") {
  ForwardConfig cfg = single_channel(32, 0.0, {});
  SurfaceGrid g = constant_in_disc(32, 123.0);
  OPLField f = forward_opd(g, cfg);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c)
      CHECK(f.at(0, r, c) == doctest::Approx(in_disc(r, c, 32) ? 246.0 : 0.0));
}

TEST_CASE("hand-computed channel value: gain 2.5, quadratic term") {
  // cos(theta) = 0.8 gives a path gain of 2.5; T = 500 nm everywhere in the
  // disc, so L = 2.5 * 500 + 5e-6 * 500^2 = 1251.25 nm.
  ChannelConfig ch;
  ch.theta = std::acos(0.8);
  ForwardConfig cfg = single_channel(32, 5e-6, ch);
  SurfaceGrid g = constant_in_disc(32, 500.0);
  OPLField f = forward_opd(g, cfg);
  CHECK(f.at(0, 16, 16) == doctest::Approx(1251.25));
}

TEST_CASE("hand-computed difference field including the design cross term") {
  // T_d = 5e4 nm, dT = 500 nm, a = 2, beta = 5e-6 /nm:
  // dL = 2*500 + 5e-6 * (2 * 5e4 * 500 + 500^2) = 1251.25 nm
  ForwardConfig cfg = single_channel(32, 5e-6, {});
  SurfaceGrid design = constant_in_disc(32, 5e4);
  SurfaceGrid specimen = constant_in_disc(32, 5e4 + 500.0);
  OPLField base = forward_opd(design, cfg);
  OPLField meas = forward_opd(specimen, cfg);
  CHECK(meas.at(0, 16, 16) - base.at(0, 16, 16) == doctest::Approx(1251.25));
}

TEST_CASE("an integer-pixel shear shifts the sampled column") {
  const int m = 32;
  ChannelConfig ch;
  ch.shear_x = 2.0 / m;  // exactly one pixel to the right
  ForwardConfig cfg = single_channel(m, 0.0, ch);
  SurfaceGrid g(m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c)
      if (in_disc(r, c, m)) g.at(r, c) = 1000.0 + c;
  OPLField f = forward_opd(g, cfg);
  // interior pixel: the sheared sample reads the neighbour to the right
  CHECK(f.at(0, 16, 14) == doctest::Approx(2.0 * g.at(16, 15)));
}

TEST_CASE("sample points outside the disc contribute zero") {
  const int m = 32;
  ChannelConfig ch;
  ch.shear_x = 0.5;
  ForwardConfig cfg = single_channel(m, 0.0, ch);
  SurfaceGrid g = constant_in_disc(m, 100.0);
  OPLField f = forward_opd(g, cfg);
  // rightmost in-disc pixel on the centre row shears past the rim
  int c = m - 1;
  while (!in_disc(m / 2, c, m)) --c;
  CHECK(f.at(0, m / 2, c) == 0.0);
}

TEST_CASE("the forward model is linear when beta is zero") {
  ForwardConfig cfg = default_config("asphere", 32);
  cfg.beta = 0.0;
  SurfaceGrid g(32);
  Rng rng(7);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c)
      if (in_disc(r, c, 32)) g.at(r, c) = rng.uniform(-300.0, 300.0);
  SurfaceGrid g3 = g;
  for (double& v : g3.values) v *= 3.0;
  OPLField f1 = forward_opd(g, cfg);
  OPLField f3 = forward_opd(g3, cfg);
  for (size_t i = 0; i < f1.values.size(); ++i)
    CHECK(f3.values[i] == doctest::Approx(3.0 * f1.values[i]));
  // and the difference field of a linear system is the field of the difference
  OPLField df = delta_opd_perfect(g, cfg);
  for (size_t i = 0; i < f1.values.size(); ++i)
    CHECK(df.values[i] == doctest::Approx(f1.values[i]).epsilon(1e-7));
}

TEST_CASE("disturbance applies gain and additive offsets inside the mask") {
  const int m = 32;
  ForwardConfig cfg = single_channel(m, 0.0, {});
  SurfaceGrid g = constant_in_disc(m, 100.0);
  OPLField f = forward_opd(g, cfg);
  Disturbance dist;
  dist.channels.resize(1);
  dist.channels[0].gain = 0.01;
  dist.channels[0].offsets = {{4, 50.0}};
  OPLField fd = apply_disturbance(f, dist, cfg);
  SurfaceGrid z4 = zernike::render_basis(4, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) {
      double want = in_disc(r, c, m)
                        ? 1.01 * f.at(0, r, c) + 50.0 * z4.at(r, c)
                        : 0.0;
      CHECK(fd.at(0, r, c) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("sampled disturbances stay within their documented ranges") {
  ForwardConfig cfg = default_config("asphere", 32);
  Disturbance d = sample_disturbance(cfg, 123);
  REQUIRE(d.channels.size() == cfg.channels.size());
  for (const auto& ch : d.channels) {
    CHECK(std::abs(ch.gain) <= 0.02);
    REQUIRE(ch.offsets.size() == 9);  // Noll 2..10
    for (const auto& t : ch.offsets) {
      CHECK(t.j >= 2);
      CHECK(t.j <= 10);
      CHECK(std::abs(t.coeff_nm) <= 100.0);
    }
  }
  // deterministic in the seed
  Disturbance d2 = sample_disturbance(cfg, 123);
  CHECK(d.to_json() == d2.to_json());
  Disturbance d3 = sample_disturbance(cfg, 124);
  CHECK(d.to_json() != d3.to_json());
}

TEST_CASE("forward config round-trips through json") {
  ForwardConfig cfg = default_config("asphere", 64);
  ForwardConfig back = ForwardConfig::from_json(cfg.to_json());
  CHECK(back.digest() == cfg.digest());
  CHECK(back.grid_size == cfg.grid_size);
  CHECK(back.channels.size() == cfg.channels.size());
  CHECK_THROWS_AS(ForwardConfig::from_json("{}"), Error);
}

TEST_CASE("default configurations are valid and distinct") {
  ForwardConfig a = default_config("asphere");
  ForwardConfig f = default_config("freeform");
  CHECK(a.channel_count() == 4);
  CHECK(f.channel_count() == 1);
  CHECK(a.digest() != f.digest());
  CHECK_THROWS_AS(default_config("torus"), Error);
}

TEST_CASE("design topographies are deterministic and finite") {
  for (const char* d : {"asphere", "freeform"}) {
    SurfaceGrid g1 = design_topography(d, 64);
    SurfaceGrid g2 = design_topography(d, 64);
    CHECK(g1.values == g2.values);
    for (double v : g1.values) CHECK(std::isfinite(v));
  }
}
