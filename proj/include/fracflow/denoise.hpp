#pragma once

// Separable 3D convolutional kriging for voxel saturation data.

#include <array>
#include <cstdint>
#include <vector>

namespace fracflow::denoise {

struct VoxelGrid {
  int nx = 0, ny = 0, nz = 0;
  double spacing_x = 1.0, spacing_y = 1.0, spacing_z = 1.0;
  std::vector<double> values;      // x slowest: ((i*ny + j)*nz + k)
  std::vector<std::uint8_t> mask;  // optional validity mask, empty = all valid

  int size() const { return nx * ny * nz; }
  int idx(int i, int j, int k) const { return (i * ny + j) * nz + k; }
  bool valid(int i, int j, int k) const {
    return mask.empty() || mask[idx(i, j, k)] != 0;
  }
};

// (1,1,1,1,2,1,1,1,1)/10; taps sum to exactly one.
std::array<double, 9> kriging_kernel();

// Sequential separable convolution along x, y, z with mirror padding at
// domain boundaries and across mask edges. Axes shorter than the kernel
// are skipped (warning on stderr). Output has the same shape and mask.
VoxelGrid denoise3d(const VoxelGrid& g);

} // namespace fracflow::denoise
