#pragma once

#include <cstdint>
#include <vector>

#include "vofm/errors.hpp"

namespace vofm {

// Pixel-center coordinate of column/row index i on an M-pixel axis,
// in unit-disc coordinates.
inline double pixel_coord(int i, int size) {
  return (2.0 * i + 1.0 - size) / size;
}

inline bool in_disc(int row, int col, int size) {
  double x = pixel_coord(col, size);
  double y = pixel_coord(row, size);
  return x * x + y * y <= 1.0;
}

// M x M height map in nm on the unit disc; zero outside the disc for
// difference topographies.
struct SurfaceGrid {
  int size = 0;
  std::vector<double> values;  // row-major [row][col]

  SurfaceGrid() = default;
  explicit SurfaceGrid(int m) : size(m), values(static_cast<size_t>(m) * m, 0.0) {}

  double& at(int row, int col) { return values[static_cast<size_t>(row) * size + col]; }
  double at(int row, int col) const { return values[static_cast<size_t>(row) * size + col]; }
};

// M x M x K per-channel optical path length (difference) images in nm,
// channel-major [channel][row][col].
struct OPLField {
  int size = 0;
  int channels = 0;
  std::vector<double> values;

  OPLField() = default;
  OPLField(int m, int k)
      : size(m), channels(k), values(static_cast<size_t>(m) * m * k, 0.0) {}

  double& at(int ch, int row, int col) {
    return values[(static_cast<size_t>(ch) * size + row) * size + col];
  }
  double at(int ch, int row, int col) const {
    return values[(static_cast<size_t>(ch) * size + row) * size + col];
  }
};

inline std::vector<uint8_t> disc_mask(int size) {
  std::vector<uint8_t> mask(static_cast<size_t>(size) * size, 0);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      mask[static_cast<size_t>(r) * size + c] = in_disc(r, c, size) ? 1 : 0;
  return mask;
}

}  // namespace vofm
