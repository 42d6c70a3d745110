#include "vofm/zernike.hpp"

#include <Eigen/Dense>
#include <Eigen/QR>
#include <cmath>
#include <set>

namespace vofm::zernike {

namespace {

// Modes of radial order n in Noll order: |m| ascending; for |m| > 0 the two
// signs occupy consecutive indices with even j -> m >= 0, odd j -> m < 0.
void modes_of_order(int n, std::vector<int>& ms, int& j_first) {
  j_first = n * (n + 1) / 2 + 1;
  ms.clear();
  for (int am = (n % 2 == 0) ? 0 : 1; am <= n; am += 2) {
    if (am == 0) {
      ms.push_back(0);
    } else {
      ms.push_back(am);
      ms.push_back(am);
    }
  }
}

}  // namespace

ZernikeIndex noll_to_nm(int j) {
  if (j < 1) throw Error(ErrorKind::invalid_input, "Noll index must be >= 1");
  int n = 0;
  while ((n + 1) * (n + 2) / 2 < j) ++n;
  int j_first;
  std::vector<int> ms;
  modes_of_order(n, ms, j_first);
  int am = ms[j - j_first];
  int m;
  if (am == 0) {
    m = 0;
  } else {
    m = (j % 2 == 0) ? am : -am;
  }
  return ZernikeIndex{j, n, m};
}

int nm_to_noll(int n, int m) {
  int am = std::abs(m);
  if (n < 0 || am > n || (n - am) % 2 != 0)
    throw Error(ErrorKind::invalid_input, "invalid (n, m) Zernike pair");
  int j_first = n * (n + 1) / 2 + 1;
  // position of |m| within the order: |m| ascending, two slots per |m| > 0
  int pos = 0;
  for (int a = (n % 2 == 0) ? 0 : 1; a < am; a += 2) pos += (a == 0) ? 1 : 2;
  int ja = j_first + pos;
  if (am == 0) return ja;
  int jb = ja + 1;
  int j_even = (ja % 2 == 0) ? ja : jb;
  int j_odd = (ja % 2 == 0) ? jb : ja;
  return (m > 0) ? j_even : j_odd;
}

double eval_zernike(const ZernikeIndex& idx, double r, double phi) {
  if (r < 0.0 || r > 1.0)
    throw Error(ErrorKind::invalid_input, "Zernike radius outside [0, 1]");
  int n = idx.n;
  int am = std::abs(idx.m);
  // radial polynomial R_n^{|m|}(r)
  double rad = 0.0;
  int smax = (n - am) / 2;
  for (int s = 0; s <= smax; ++s) {
    double num = 1.0;
    for (int k = 2; k <= n - s; ++k) num *= k;
    double den = 1.0;
    for (int k = 2; k <= s; ++k) den *= k;
    for (int k = 2; k <= (n + am) / 2 - s; ++k) den *= k;
    for (int k = 2; k <= (n - am) / 2 - s; ++k) den *= k;
    double term = num / den * std::pow(r, n - 2 * s);
    rad += (s % 2 == 0) ? term : -term;
  }
  double norm = (am == 0) ? std::sqrt(n + 1.0) : std::sqrt(2.0 * (n + 1.0));
  if (idx.m == 0) return norm * rad;
  if (idx.m > 0) return norm * rad * std::cos(am * phi);
  return norm * rad * std::sin(am * phi);
}

double eval_zernike(int j, double r, double phi) {
  return eval_zernike(noll_to_nm(j), r, phi);
}

SurfaceGrid render_basis(int j, int size) {
  if (size < 8) throw Error(ErrorKind::invalid_input, "grid size must be >= 8");
  ZernikeIndex idx = noll_to_nm(j);
  SurfaceGrid g(size);
  for (int row = 0; row < size; ++row) {
    double y = pixel_coord(row, size);
    for (int col = 0; col < size; ++col) {
      double x = pixel_coord(col, size);
      double r2 = x * x + y * y;
      if (r2 > 1.0) continue;  // stays exactly 0
      g.at(row, col) = eval_zernike(idx, std::sqrt(r2), std::atan2(y, x));
    }
  }
  return g;
}

SurfaceGrid synthesize_surface(const ZernikeCoeffs& coeffs, int size) {
  if (size < 8) throw Error(ErrorKind::invalid_input, "grid size must be >= 8");
  std::set<int> seen;
  for (const auto& t : coeffs) {
    if (!std::isfinite(t.coeff_nm))
      throw Error(ErrorKind::invalid_input, "non-finite Zernike coefficient");
    if (!seen.insert(t.j).second)
      throw Error(ErrorKind::invalid_input, "duplicate Noll index in coefficients");
  }
  SurfaceGrid g(size);
  for (const auto& t : coeffs) {
    SurfaceGrid basis = render_basis(t.j, size);
    for (size_t i = 0; i < g.values.size(); ++i)
      g.values[i] += t.coeff_nm * basis.values[i];
  }
  return g;
}

ZernikeCoeffs fit_zernike(const SurfaceGrid& grid, int j_max) {
  if (j_max < 1) throw Error(ErrorKind::invalid_input, "j_max must be >= 1");
  if (grid.size < 8 ||
      grid.values.size() != static_cast<size_t>(grid.size) * grid.size)
    throw Error(ErrorKind::invalid_input, "invalid grid dimensions");
  const int size = grid.size;
  std::vector<std::pair<int, int>> px;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      if (in_disc(r, c, size)) px.emplace_back(r, c);

  Eigen::MatrixXd design(px.size(), j_max);
  Eigen::VectorXd rhs(px.size());
  for (int j = 1; j <= j_max; ++j) {
    SurfaceGrid basis = render_basis(j, size);
    for (size_t i = 0; i < px.size(); ++i)
      design(i, j - 1) = basis.at(px[i].first, px[i].second);
  }
  for (size_t i = 0; i < px.size(); ++i)
    rhs(i) = grid.at(px[i].first, px[i].second);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < j_max)
    throw Error(ErrorKind::conditioning,
                "rank-deficient Zernike design matrix: grid too small for j_max");
  Eigen::VectorXd sol = qr.solve(rhs);
  ZernikeCoeffs out;
  out.reserve(j_max);
  for (int j = 1; j <= j_max; ++j) out.push_back({j, sol(j - 1)});
  return out;
}

}  // namespace vofm::zernike
