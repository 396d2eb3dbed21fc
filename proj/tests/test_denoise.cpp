#include <doctest.h>

#include <cmath>
#include <random>

#include "fracflow/denoise.hpp"

using namespace fracflow::denoise;

namespace {

VoxelGrid random_grid(int nx, int ny, int nz, unsigned seed) {
  VoxelGrid g;
  g.nx = nx;
  g.ny = ny;
  g.nz = nz;
  g.values.resize(g.size());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : g.values) v = u(rng);
  return g;
}

double total_variation(const VoxelGrid& g) {
  double tv = 0.0;
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j)
      for (int k = 0; k < g.nz; ++k) {
        if (i + 1 < g.nx) tv += std::abs(g.values[g.idx(i + 1, j, k)] - g.values[g.idx(i, j, k)]);
        if (j + 1 < g.ny) tv += std::abs(g.values[g.idx(i, j + 1, k)] - g.values[g.idx(i, j, k)]);
        if (k + 1 < g.nz) tv += std::abs(g.values[g.idx(i, j, k + 1)] - g.values[g.idx(i, j, k)]);
      }
  return tv;
}

int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -1 - i;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

// direct (non-separable) 3D convolution with the product kernel
VoxelGrid direct_conv(const VoxelGrid& g) {
  auto k = kriging_kernel();
  VoxelGrid out = g;
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j)
      for (int kk = 0; kk < g.nz; ++kk) {
        double acc = 0.0;
        for (int a = -4; a <= 4; ++a)
          for (int b = -4; b <= 4; ++b)
            for (int c = -4; c <= 4; ++c)
              acc += k[a + 4] * k[b + 4] * k[c + 4] *
                     g.values[g.idx(reflect(i + a, g.nx), reflect(j + b, g.ny),
                                    reflect(kk + c, g.nz))];
        out.values[out.idx(i, j, kk)] = acc;
      }
  return out;
}

} // namespace

TEST_CASE("kernel taps") {
  auto k = kriging_kernel();
  double sum = 0.0;
  for (double v : k) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(k[4] == doctest::Approx(0.2).epsilon(1e-15));
  for (int i = 0; i < 4; ++i) CHECK(k[i] == k[8 - i]); // symmetric
}

TEST_CASE("constant field unchanged to 1e-14") {
  VoxelGrid g = random_grid(12, 10, 11, 1);
  for (double& v : g.values) v = 0.371;
  VoxelGrid out = denoise3d(g);
  for (double v : out.values) CHECK(std::abs(v - 0.371) < 1e-14);
}

TEST_CASE("separable pass equals a direct 3D convolution oracle") {
  VoxelGrid g = random_grid(11, 12, 13, 3);
  VoxelGrid sep = denoise3d(g);
  VoxelGrid dir = direct_conv(g);
  double maxdiff = 0.0;
  for (int c = 0; c < g.size(); ++c)
    maxdiff = std::max(maxdiff, std::abs(sep.values[c] - dir.values[c]));
  CHECK(maxdiff < 1e-12);
}

TEST_CASE("spike spreads with preserved total sum") {
  VoxelGrid g;
  g.nx = g.ny = g.nz = 15;
  g.values.assign(g.size(), 0.0);
  g.values[g.idx(7, 7, 7)] = 1.0;
  VoxelGrid out = denoise3d(g);
  double sum = 0.0;
  for (double v : out.values) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.values[out.idx(7, 7, 7)] == doctest::Approx(0.2 * 0.2 * 0.2).epsilon(1e-12));
  CHECK(out.values[out.idx(3, 7, 7)] == doctest::Approx(0.1 * 0.2 * 0.2).epsilon(1e-12));
}

TEST_CASE("mean preserved over the valid mask") {
  VoxelGrid g = random_grid(16, 14, 12, 7);
  // cylinder-ish mask in (x,z)
  g.mask.assign(g.size(), 0);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j)
      for (int k = 0; k < g.nz; ++k) {
        const double x = (i + 0.5) / g.nx - 0.5, z = (k + 0.5) / g.nz - 0.5;
        if (x * x + z * z <= 0.25) g.mask[g.idx(i, j, k)] = 1;
      }
  double before = 0.0;
  int n = 0;
  for (int c = 0; c < g.size(); ++c)
    if (g.mask[c]) {
      before += g.values[c];
      ++n;
    }
  VoxelGrid out = denoise3d(g);
  double after = 0.0;
  for (int c = 0; c < g.size(); ++c)
    if (g.mask[c]) after += out.values[c];
  CHECK(std::abs(after - before) / n < 1e-12);
  // masked voxels untouched
  for (int c = 0; c < g.size(); ++c)
    if (!g.mask[c]) CHECK(out.values[c] == g.values[c]);
}

TEST_CASE("linearity and range containment") {
  VoxelGrid a = random_grid(11, 11, 11, 11);
  VoxelGrid b = random_grid(11, 11, 11, 13);
  VoxelGrid combo = a;
  for (int c = 0; c < a.size(); ++c) combo.values[c] = 2.0 * a.values[c] - 0.5 * b.values[c];
  VoxelGrid da = denoise3d(a), db = denoise3d(b), dc = denoise3d(combo);
  for (int c = 0; c < a.size(); ++c)
    CHECK(dc.values[c] ==
          doctest::Approx(2.0 * da.values[c] - 0.5 * db.values[c]).epsilon(1e-12));

  double lo = 1e30, hi = -1e30;
  for (double v : a.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : da.values) {
    CHECK(v >= lo - 1e-14);
    CHECK(v <= hi + 1e-14);
  }
}

TEST_CASE("repeated application smooths: total variation non-increasing") {
  VoxelGrid g = random_grid(13, 13, 13, 17);
  VoxelGrid once = denoise3d(g);
  VoxelGrid twice = denoise3d(once);
  CHECK(total_variation(once) <= total_variation(g));
  CHECK(total_variation(twice) <= total_variation(once));
}

TEST_CASE("short axes are skipped, non-finite input rejected") {
  VoxelGrid g = random_grid(20, 20, 1, 23); // nz = 1 < kernel
  VoxelGrid out = denoise3d(g);             // x and y passes only
  CHECK(out.size() == g.size());

  VoxelGrid bad = random_grid(10, 10, 10, 29);
  bad.values[5] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(denoise3d(bad));
}
