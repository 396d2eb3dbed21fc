#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "fracflow/io.hpp"

namespace fracflow::io {

namespace {

void check_monotone(const std::vector<double>& t, const std::string& what) {
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1]))
      throw std::runtime_error(what + ": time stamps not strictly increasing");
}

} // namespace

pinn::Observations load_observations(const ObservationPaths& paths,
                                     const geom::CoreGeometry& geometry) {
  pinn::Observations obs;

  if (!paths.rf_csv.empty()) {
    auto [t, rf] = read_series_csv(paths.rf_csv);
    check_monotone(t, "rf series");
    for (double v : rf)
      if (!(v >= 0.0 && v <= 1.0))
        throw std::runtime_error("rf series: value outside [0,1]");
    obs.rf.t = std::move(t);
    obs.rf.rf = std::move(rf);
  }

  if (!paths.qinj_csv.empty()) {
    auto [t, q] = read_series_csv(paths.qinj_csv);
    check_monotone(t, "qinj series");
    obs.qinj_t = std::move(t);
    obs.qinj_rate = std::move(q);
  }

  if (!paths.voxel_manifest.empty()) {
    nlohmann::json man = nlohmann::json::parse(read_text(paths.voxel_manifest));
    if (!man.contains("snapshots"))
      throw std::runtime_error("voxel manifest: missing 'snapshots'");
    const std::string dir = [&]() {
      const auto slash = paths.voxel_manifest.find_last_of('/');
      return slash == std::string::npos ? std::string()
                                        : paths.voxel_manifest.substr(0, slash + 1);
    }();

    std::vector<Eigen::Vector4d> rows;
    std::vector<double> vals;
    double last_t = -1.0;
    int expect_nx = -1, expect_ny = -1, expect_nz = -1;
    for (const auto& name : man.at("snapshots")) {
      VoxelFile v = read_voxel(dir + name.get<std::string>());
      if (!(v.time > last_t))
        throw std::runtime_error("voxel snapshots: time stamps not strictly increasing");
      last_t = v.time;
      if (expect_nx < 0) {
        expect_nx = v.grid.nx;
        expect_ny = v.grid.ny;
        expect_nz = v.grid.nz;
        const double width = v.grid.nx * v.grid.spacing_x;
        if (std::abs(width - 2.0 * geometry.radius) > 0.05 * 2.0 * geometry.radius)
          throw std::runtime_error("voxel snapshots: x extent does not match the core radius");
      } else if (v.grid.nx != expect_nx || v.grid.ny != expect_ny || v.grid.nz != expect_nz) {
        throw std::runtime_error("voxel snapshots: inconsistent dims");
      }
      for (int i = 0; i < v.grid.nx; ++i)
        for (int j = 0; j < v.grid.ny; ++j)
          for (int k = 0; k < v.grid.nz; ++k) {
            const double sw = v.grid.values[v.grid.idx(i, j, k)];
            if (std::isnan(sw)) continue; // masked voxel
            Eigen::Vector4d row;
            row << v.origin.x() + (i + 0.5) * v.grid.spacing_x,
                v.origin.y() + (j + 0.5) * v.grid.spacing_y,
                v.origin.z() + (k + 0.5) * v.grid.spacing_z, v.time;
            if (!geometry.inside(Eigen::Vector3d(row[0], row[1], row[2]))) continue;
            rows.push_back(row);
            vals.push_back(sw);
          }
    }
    obs.insitu_pts.resize(rows.size(), 4);
    obs.insitu_sw.resize(vals.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      obs.insitu_pts.row(i) = rows[i];
      obs.insitu_sw[i] = vals[i];
    }
  }
  return obs;
}

} // namespace fracflow::io
