#include "fracflow/denoise.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace fracflow::denoise {

std::array<double, 9> kriging_kernel() {
  std::array<double, 9> k{1, 1, 1, 1, 2, 1, 1, 1, 1};
  for (double& v : k) v /= 10.0;
  return k;
}

namespace {

// Convolve one line segment of contiguous valid voxels with symmetric
// (edge-repeating) mirror extension; preserves the segment sum for a
// normalized symmetric kernel.
void convolve_run(const std::vector<double>& in, std::vector<double>& out,
                  const std::vector<int>& run, const std::array<double, 9>& k) {
  const int n = static_cast<int>(run.size());
  auto reflect = [n](int i) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -1 - i;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };
  for (int c = 0; c < n; ++c) {
    double acc = 0.0;
    for (int m = -4; m <= 4; ++m) acc += k[m + 4] * in[run[reflect(c + m)]];
    out[run[c]] = acc;
  }
}

void pass_axis(VoxelGrid& g, int axis, const std::array<double, 9>& k) {
  const int dims[3] = {g.nx, g.ny, g.nz};
  if (dims[axis] < static_cast<int>(k.size())) {
    std::fprintf(stderr, "denoise3d: axis %d has %d voxels (< kernel length 9), skipped\n", axis,
                 dims[axis]);
    return;
  }
  std::vector<double> src = g.values;
  std::vector<int> run;
  run.reserve(dims[axis]);

  const int u_dim = axis == 0 ? g.ny : g.nx;
  const int v_dim = axis == 2 ? g.ny : g.nz;
  for (int u = 0; u < u_dim; ++u)
    for (int v = 0; v < v_dim; ++v) {
      run.clear();
      for (int w = 0; w < dims[axis]; ++w) {
        int i, j, kk;
        if (axis == 0) {
          i = w;
          j = u;
          kk = v;
        } else if (axis == 1) {
          i = u;
          j = w;
          kk = v;
        } else {
          i = u;
          j = v;
          kk = w;
        }
        if (g.valid(i, j, kk)) {
          run.push_back(g.idx(i, j, kk));
        } else if (!run.empty()) {
          convolve_run(src, g.values, run, k);
          run.clear();
        }
      }
      if (!run.empty()) convolve_run(src, g.values, run, k);
    }
}

} // namespace

VoxelGrid denoise3d(const VoxelGrid& g) {
  if (g.size() <= 0) throw std::invalid_argument("denoise3d: empty grid");
  if (static_cast<int>(g.values.size()) != g.size())
    throw std::invalid_argument("denoise3d: value array does not match dims");
  for (int c = 0; c < g.size(); ++c)
    if ((g.mask.empty() || g.mask[c]) && !std::isfinite(g.values[c]))
      throw std::invalid_argument("denoise3d: non-finite input voxel");

  const auto k = kriging_kernel();
  VoxelGrid out = g;
  for (int axis = 0; axis < 3; ++axis) pass_axis(out, axis, k);
  return out;
}

} // namespace fracflow::denoise
