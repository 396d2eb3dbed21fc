#pragma once

// File formats: CSV series, the FRACFLOW-VOX1 voxel container and
// observation bundles.

#include <string>
#include <vector>

#include "fracflow/denoise.hpp"
#include "fracflow/geometry.hpp"
#include "fracflow/pinn.hpp"

namespace fracflow::io {

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

// two-column CSV: header then rows `t,value`
void write_series_csv(const std::string& path, const std::string& header,
                      const std::vector<double>& t, const std::vector<double>& v);
std::pair<std::vector<double>, std::vector<double>> read_series_csv(const std::string& path);

// Voxel container: text header (magic, dims, spacing, origin, time, value
// name) followed by row-major little-endian float64 payload, x slowest.
struct VoxelFile {
  denoise::VoxelGrid grid;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero(); // center of cell (0,0,0) minus half spacing
  double time = 0.0;
  std::string value_name = "sw";
};

void write_voxel(const std::string& path, const VoxelFile& v);
VoxelFile read_voxel(const std::string& path);

// Observation bundle loader; every series is validated (monotone time,
// physical ranges, voxel dims against the expected grid).
struct ObservationPaths {
  std::string rf_csv;
  std::string qinj_csv;
  std::string voxel_manifest; // JSON: {"snapshots": ["a.vox", ...]}
};

pinn::Observations load_observations(const ObservationPaths& paths,
                                     const geom::CoreGeometry& geometry);

} // namespace fracflow::io
