#include <doctest.h>

#include <cmath>

#include "vofm/rng.hpp"
#include "vofm/zernike.hpp"

using namespace vofm;
using namespace vofm::zernike;

TEST_CASE("noll index maps to known (n, m) pairs") {
  struct Case { int j, n, m; };
  // the classical table: piston, tilts, defocus, astigmatisms, comas,
  // trefoils, primary spherical
  const Case cases[] = {
      {1, 0, 0}, {2, 1, 1},  {3, 1, -1}, {4, 2, 0},  {5, 2, -2}, {6, 2, 2},
      {7, 3, -1}, {8, 3, 1}, {9, 3, -3}, {10, 3, 3}, {11, 4, 0}, {12, 4, 2},
      {13, 4, -2}, {14, 4, 4}, {15, 4, -4}, {22, 6, 0}, {35, 7, -7}, {36, 7, 7}};
  for (const auto& c : cases) {
    ZernikeIndex idx = noll_to_nm(c.j);
    CHECK(idx.n == c.n);
    CHECK(idx.m == c.m);
  }
}

TEST_CASE("noll mapping is a bijection up to j = 100") {
  for (int j = 1; j <= 100; ++j) {
    ZernikeIndex idx = noll_to_nm(j);
    CHECK(nm_to_noll(idx.n, idx.m) == j);
    CHECK((idx.n - std::abs(idx.m)) % 2 == 0);
    CHECK(std::abs(idx.m) <= idx.n);
  }
  CHECK_THROWS_AS(noll_to_nm(0), Error);
  CHECK_THROWS_AS(nm_to_noll(2, 1), Error);  // n - |m| odd
}

TEST_CASE("low-order radial values match closed forms") {
  // piston is identically 1
  CHECK(eval_zernike(1, 0.0, 0.0) == doctest::Approx(1.0));
  CHECK(eval_zernike(1, 0.73, 2.1) == doctest::Approx(1.0));
  // tilt Z2 = 2 r cos(phi)
  CHECK(eval_zernike(2, 1.0, 0.0) == doctest::Approx(2.0));
  CHECK(eval_zernike(2, 0.5, 0.0) == doctest::Approx(1.0));
  // defocus Z4 = sqrt(3) (2 r^2 - 1)
  CHECK(eval_zernike(4, 1.0, 0.3) == doctest::Approx(std::sqrt(3.0)));
  CHECK(eval_zernike(4, 0.0, 0.0) == doctest::Approx(-std::sqrt(3.0)));
  // spherical Z11 = sqrt(5) (6 r^4 - 6 r^2 + 1)
  CHECK(eval_zernike(11, 1.0, 0.0) == doctest::Approx(std::sqrt(5.0)));
  CHECK(eval_zernike(11, 0.0, 0.0) == doctest::Approx(std::sqrt(5.0)));
}

TEST_CASE("rendered modes vanish outside the disc") {
  SurfaceGrid g = render_basis(7, 33);
  for (int r = 0; r < g.size; ++r)
    for (int c = 0; c < g.size; ++c)
      if (!in_disc(r, c, g.size)) CHECK(g.at(r, c) == 0.0);
}

TEST_CASE("discrete modes are orthonormal in the disc-averaged inner product") {
  const int m = 128, j_max = 15;
  std::vector<SurfaceGrid> basis;
  for (int j = 1; j <= j_max; ++j) basis.push_back(render_basis(j, m));
  auto mask = disc_mask(m);
  long long n_in = 0;
  for (uint8_t b : mask) n_in += b;
  for (int a = 1; a <= j_max; ++a)
    for (int b = a; b <= j_max; ++b) {
      double dot = 0.0;
      for (size_t p = 0; p < mask.size(); ++p)
        if (mask[p]) dot += basis[a - 1].values[p] * basis[b - 1].values[p];
      dot /= static_cast<double>(n_in);
      double expect = (a == b) ? 1.0 : 0.0;
      CHECK(dot == doctest::Approx(expect).epsilon(1e-2));
    }
}

TEST_CASE("fit recovers synthesis coefficients") {
  ZernikeCoeffs coeffs;
  Rng rng(99);
  for (int j = 2; j <= 20; ++j)
    coeffs.push_back({j, rng.uniform(-50.0, 50.0)});
  SurfaceGrid g = synthesize_surface(coeffs, 128);
  ZernikeCoeffs fitted = fit_zernike(g, 20);
  for (const auto& term : fitted) {
    double want = 0.0;
    for (const auto& t : coeffs)
      if (t.j == term.j) want = t.coeff_nm;
    CHECK(term.coeff_nm == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("synthesis rejects bad coefficient lists") {
  CHECK_THROWS_AS(synthesize_surface({{4, 1.0}, {4, 2.0}}, 32), Error);
  CHECK_THROWS_AS(
      synthesize_surface({{4, std::numeric_limits<double>::quiet_NaN()}}, 32),
      Error);
}

TEST_CASE("fit reports rank deficiency on too-small grids") {
  SurfaceGrid tiny(4);
  CHECK_THROWS_AS(fit_zernike(tiny, 36), Error);
}
