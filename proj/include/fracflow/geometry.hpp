#pragma once

// Core-sample domain geometry, fracture point clouds and collocation
// set generation. Coordinates are centered on the core axis: x,z in
// [-r_c, r_c], flow direction y in [0, L]. A slab2d domain is the
// (x,y) mid-plane reduction with sealed walls at x = +-r_c.

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fracflow/autodiff.hpp"

namespace fracflow::geom {

using Vec3 = Eigen::Vector3d;
using Mat = Eigen::MatrixXd;

enum class DomainKind { cylinder3d, slab2d };

struct CoreGeometry {
  double length = 0.058;  // m, flow direction y
  double radius = 0.0125; // m
  DomainKind kind = DomainKind::cylinder3d;
  double slab_thickness = 0.001; // m, out-of-plane extent of a slab2d domain

  bool inside(const Vec3& p) const;
  double cross_section_area() const;
  void validate() const;
};

struct FracturePlane {
  Vec3 origin = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();
};

struct Fracture {
  std::vector<Vec3> points;
  FracturePlane plane;
  bool has_plane = false;
};

struct FractureSet {
  std::vector<Fracture> fractures;
  double aperture = 0.001; // e_V, m, shared

  std::size_t total_points() const;
  // All fracture points flattened with their fracture index.
  std::vector<std::pair<Vec3, int>> flattened() const;
};

// Axis-aligned or general plane discretized at the matrix lattice spacing.
Fracture make_planar_fracture(const CoreGeometry& geom, const FracturePlane& plane,
                              const Eigen::Vector3i& resolution);

FractureSet load_fracture_csv(const std::string& path, double aperture);
std::string fracture_csv(const FractureSet& fs);

enum class TimeMode { sqrt_uniform, uniform, random_sqrt };

struct TemporalSampler {
  double t_min = 1.0;
  double t_max = 1.0e6;
  int count = 1;
  TimeMode mode = TimeMode::sqrt_uniform;
};

std::vector<double> sample_times(const TemporalSampler& s, std::mt19937_64& rng);

// Cartesian lattice restricted to the domain interior, minus points
// within `exclusion` of any fracture point. Throws if nothing is left.
std::vector<Vec3> sample_matrix_points(const CoreGeometry& geom, const Eigen::Vector3i& resolution,
                                       const FractureSet& fractures, double exclusion);

struct BoundaryPoints {
  std::vector<Vec3> inlet;  // y = 0
  std::vector<Vec3> outlet; // y = L
  std::vector<Vec3> radial; // on the sealed lateral surface
};

BoundaryPoints sample_boundary_points(const CoreGeometry& geom, const Eigen::Vector3i& resolution,
                                      int n_face, int n_radial, std::mt19937_64& rng);

// Tagged spatiotemporal samples. Rows are (x, y, z, t). The
// matrix_fracture block shares coordinates row-by-row with the fracture
// block so transfer terms pair exactly.
struct CollocationSet {
  Mat matrix;          // N x 4
  Mat fracture;        // NF x 4
  Mat matrix_fracture; // NF x 4, same coordinates as fracture
  Mat inlet;
  Mat outlet;
  Mat radial;
  Mat fracture_inlet;  // fracture points on y=0, with times
  Mat fracture_outlet; // fracture points on y=L, with times
  Mat initial_matrix;   // t = 0
  Mat initial_fracture; // t = 0
  std::vector<int> fracture_id; // per fracture/matrix_fracture row

  std::string csv() const;
};

struct CollocationConfig {
  Eigen::Vector3i resolution{30, 60, 30};
  double exclusion = 0.0006; // m
  int n_face = 32;           // inlet and outlet counts
  int n_radial = 64;
  int n_initial_matrix = 256; // spatial points reused at t=0
  TemporalSampler time{1.0, 1.0e6, 0, TimeMode::random_sqrt};
  double boundary_tol_frac = 0.5; // |y| < frac*dy counts as on-face
};

CollocationSet build_collocation(const CoreGeometry& geom, const FractureSet& fractures,
                                 const CollocationConfig& cfg, std::mt19937_64& rng);

// Replaces `fraction` of the matrix spatial points with fresh
// lattice-jittered samples and redraws all temporal coordinates when
// epoch is a resampling epoch. Fracture and boundary spatial points are
// kept fixed. Returns the input set unchanged otherwise.
CollocationSet resample(const CollocationSet& c, const CoreGeometry& geom,
                        const FractureSet& fractures, const CollocationConfig& cfg,
                        double fraction, std::int64_t epoch, std::int64_t period,
                        std::mt19937_64& rng);

struct InletAreas {
  double matrix = 0.0;   // m^2
  double fracture = 0.0; // m^2
};

InletAreas inlet_areas(const CoreGeometry& geom, const FractureSet& fractures, double y_tol);

// Brute-force checks used by tests and after resampling.
double min_distance_to_fractures(const std::vector<Vec3>& pts, const FractureSet& fractures);
void check_invariants(const CollocationSet& c, const CoreGeometry& geom,
                      const FractureSet& fractures, double exclusion);

} // namespace fracflow::geom
