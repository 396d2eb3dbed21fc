#include "fracflow/fdsim.hpp"

#include <cmath>
#include <stdexcept>

namespace fracflow::fdsim {

Eigen::Vector3d Grid::center(int i, int j, int k) const {
  const double x0 = -0.5 * dx * nx;
  const double z0 = kind == geom::DomainKind::cylinder3d ? -0.5 * dz * nz : 0.0;
  return {x0 + (i + 0.5) * dx, (j + 0.5) * dy,
          kind == geom::DomainKind::cylinder3d ? z0 + (k + 0.5) * dz : 0.0};
}

int Grid::active_count() const {
  int n = 0;
  for (Medium m : medium)
    if (m != Medium::inactive) ++n;
  return n;
}

Grid build_grid(const FlowProblem& problem, int nx, int ny, int nz) {
  const auto& geo = problem.geometry;
  geo.validate();
  if (nx < 1 || ny < 1 || nz < 1) throw std::invalid_argument("build_grid: bad resolution");
  if (geo.kind == geom::DomainKind::slab2d && nz != 1)
    throw std::invalid_argument("build_grid: slab2d requires nz = 1");

  Grid g;
  g.nx = nx;
  g.ny = ny;
  g.nz = nz;
  g.kind = geo.kind;
  g.dx = 2.0 * geo.radius / nx;
  g.dy = geo.length / ny;
  g.dz = geo.kind == geom::DomainKind::cylinder3d ? 2.0 * geo.radius / nz : geo.slab_thickness;
  g.medium.assign(g.size(), Medium::matrix);

  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k) {
        const Eigen::Vector3d c = g.center(i, j, k);
        if (geo.kind == geom::DomainKind::cylinder3d &&
            c.x() * c.x() + c.z() * c.z() > geo.radius * geo.radius)
          g.medium[g.idx(i, j, k)] = Medium::inactive;
      }

  // one lattice layer of fracture cells per planar fracture
  for (const auto& frac : problem.fractures.fractures) {
    if (!frac.has_plane) {
      // point-cloud fracture: tag the host cell of each point
      for (const auto& p : frac.points) {
        const int i = std::min(nx - 1, std::max(0, static_cast<int>((p.x() + geo.radius) / g.dx)));
        const int j = std::min(ny - 1, std::max(0, static_cast<int>(p.y() / g.dy)));
        const int k =
            geo.kind == geom::DomainKind::cylinder3d
                ? std::min(nz - 1, std::max(0, static_cast<int>((p.z() + geo.radius) / g.dz)))
                : 0;
        if (g.medium[g.idx(i, j, k)] != Medium::inactive)
          g.medium[g.idx(i, j, k)] = Medium::fracture;
      }
      continue;
    }
    const Eigen::Vector3d n = frac.plane.normal.normalized();
    const double half = 0.5 * (std::abs(n.x()) * g.dx + std::abs(n.y()) * g.dy +
                               (geo.kind == geom::DomainKind::cylinder3d ? std::abs(n.z()) * g.dz
                                                                         : 0.0));
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j)
        for (int k = 0; k < nz; ++k) {
          const int id = g.idx(i, j, k);
          if (g.medium[id] == Medium::inactive) continue;
          const double d = n.dot(g.center(i, j, k) - frac.plane.origin);
          if (std::abs(d) < half) g.medium[id] = Medium::fracture;
        }
  }
  return g;
}

} // namespace fracflow::fdsim
