#pragma once

#include <vector>

#include "vofm/grid.hpp"

namespace vofm::zernike {

// Noll single-index Zernike mode. j=1 is piston, j=4 defocus, j=11 primary
// spherical. Normalization is Noll's: orthonormal with respect to the
// area-averaged inner product on the unit disc.
struct ZernikeIndex {
  int j = 1;  // Noll index, >= 1
  int n = 0;  // radial order
  int m = 0;  // signed azimuthal order
};

struct ZernikeTerm {
  int j;            // Noll index
  double coeff_nm;  // weight in nm
};

using ZernikeCoeffs = std::vector<ZernikeTerm>;

// Noll index -> (n, m). Throws invalid_input for j < 1.
ZernikeIndex noll_to_nm(int j);

// Inverse of noll_to_nm. Throws invalid_input if (n, m) is not a valid mode.
int nm_to_noll(int n, int m);

// Noll-normalized Zernike value at polar (r, phi), 0 <= r <= 1.
double eval_zernike(const ZernikeIndex& idx, double r, double phi);
double eval_zernike(int j, double r, double phi);

// M x M grid of mode j at pixel centers, exactly zero outside the disc.
SurfaceGrid render_basis(int j, int size);

// Weighted sum of rendered basis modes. Throws on non-finite coefficients
// or duplicate indices.
SurfaceGrid synthesize_surface(const ZernikeCoeffs& coeffs, int size);

// Least-squares projection of an arbitrary grid onto modes j = 1..j_max,
// over in-disc pixels. Throws conditioning error when the design matrix is
// rank deficient (grid too small for j_max).
ZernikeCoeffs fit_zernike(const SurfaceGrid& grid, int j_max);

}  // namespace vofm::zernike
