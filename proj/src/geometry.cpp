#include "fracflow/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace fracflow::geom {

bool CoreGeometry::inside(const Vec3& p) const {
  if (p.y() < 0.0 || p.y() > length) return false;
  if (kind == DomainKind::cylinder3d)
    return p.x() * p.x() + p.z() * p.z() <= radius * radius;
  return std::abs(p.x()) <= radius;
}

double CoreGeometry::cross_section_area() const {
  if (kind == DomainKind::cylinder3d) return std::numbers::pi * radius * radius;
  return 2.0 * radius * slab_thickness;
}

void CoreGeometry::validate() const {
  if (!(length > 0.0) || !(radius > 0.0))
    throw std::invalid_argument("CoreGeometry: length and radius must be positive");
  if (kind == DomainKind::slab2d && !(slab_thickness > 0.0))
    throw std::invalid_argument("CoreGeometry: slab thickness must be positive");
}

std::size_t FractureSet::total_points() const {
  std::size_t n = 0;
  for (const auto& f : fractures) n += f.points.size();
  return n;
}

std::vector<std::pair<Vec3, int>> FractureSet::flattened() const {
  std::vector<std::pair<Vec3, int>> out;
  out.reserve(total_points());
  for (std::size_t i = 0; i < fractures.size(); ++i)
    for (const auto& p : fractures[i].points) out.emplace_back(p, static_cast<int>(i));
  return out;
}

namespace {

struct Lattice {
  Eigen::Vector3i n;
  Vec3 lo, spacing;

  Vec3 point(int i, int j, int k) const {
    return lo + Vec3((i + 0.5) * spacing.x(), (j + 0.5) * spacing.y(), (k + 0.5) * spacing.z());
  }
};

Lattice make_lattice(const CoreGeometry& geom, Eigen::Vector3i res) {
  if (geom.kind == DomainKind::slab2d) res.z() = 1;
  if (res.x() < 2 || res.y() < 2 || (geom.kind == DomainKind::cylinder3d && res.z() < 2))
    throw std::invalid_argument("lattice resolution components must be >= 2");
  Lattice lat;
  lat.n = res;
  const double r = geom.radius;
  if (geom.kind == DomainKind::cylinder3d) {
    lat.lo = Vec3(-r, 0.0, -r);
    lat.spacing = Vec3(2.0 * r / res.x(), geom.length / res.y(), 2.0 * r / res.z());
  } else {
    // single z layer at the mid-plane
    lat.lo = Vec3(-r, 0.0, 0.0);
    lat.spacing = Vec3(2.0 * r / res.x(), geom.length / res.y(), 0.0);
  }
  return lat;
}

double dist2(const Vec3& a, const Vec3& b) { return (a - b).squaredNorm(); }

} // namespace

Fracture make_planar_fracture(const CoreGeometry& geom, const FracturePlane& plane,
                              const Eigen::Vector3i& resolution) {
  const Lattice lat = make_lattice(geom, resolution);
  const Vec3 n = plane.normal.normalized();
  const double half = 0.5 * (std::abs(n.x()) * lat.spacing.x() + std::abs(n.y()) * lat.spacing.y() +
                             std::abs(n.z()) * lat.spacing.z());

  Fracture frac;
  frac.plane = plane;
  frac.plane.normal = n;
  frac.has_plane = true;

  std::map<std::array<long long, 3>, Vec3> dedup;
  auto keep = [&](const Vec3& p) {
    const double d = n.dot(p - plane.origin);
    if (std::abs(d) > half) return;
    const Vec3 proj = p - d * n;
    if (!geom.inside(proj)) return;
    const double q = 1e9; // quantize at nm scale to merge straddling layers
    dedup.emplace(std::array<long long, 3>{llround(proj.x() * q), llround(proj.y() * q),
                                           llround(proj.z() * q)},
                  proj);
  };

  for (int i = 0; i < lat.n.x(); ++i)
    for (int j = 0; j < lat.n.y(); ++j)
      for (int k = 0; k < lat.n.z(); ++k) keep(lat.point(i, j, k));
  // face traces so the fracture reaches the inlet/outlet planes exactly
  for (int i = 0; i < lat.n.x(); ++i)
    for (int k = 0; k < lat.n.z(); ++k) {
      Vec3 p0 = lat.point(i, 0, k);
      p0.y() = 0.0;
      keep(p0);
      Vec3 p1 = lat.point(i, lat.n.y() - 1, k);
      p1.y() = geom.length;
      keep(p1);
    }

  frac.points.reserve(dedup.size());
  for (const auto& [key, p] : dedup) frac.points.push_back(p);
  return frac;
}

FractureSet load_fracture_csv(const std::string& path, double aperture) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fracture file: " + path);
  std::string line;
  std::getline(in, line); // header x_m,y_m,z_m,fracture_id
  FractureSet fs;
  fs.aperture = aperture;
  std::map<int, std::vector<Vec3>> by_id;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    double x, y, z;
    int id;
    char comma;
    ss >> x >> comma >> y >> comma >> z >> comma >> id;
    if (!ss) throw std::runtime_error("bad fracture row: " + line);
    by_id[id].emplace_back(x, y, z);
  }
  for (auto& [id, pts] : by_id) {
    Fracture f;
    f.points = std::move(pts);
    if (f.points.size() >= 3) {
      // PCA normal estimate for the fracture plane
      Vec3 c = Vec3::Zero();
      for (const auto& p : f.points) c += p;
      c /= static_cast<double>(f.points.size());
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      for (const auto& p : f.points) cov += (p - c) * (p - c).transpose();
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
      f.plane.origin = c;
      f.plane.normal = eig.eigenvectors().col(0);
      f.has_plane = true;
    }
    fs.fractures.push_back(std::move(f));
  }
  return fs;
}

std::string fracture_csv(const FractureSet& fs) {
  std::ostringstream os;
  os.precision(12);
  os << "x_m,y_m,z_m,fracture_id\n";
  for (std::size_t i = 0; i < fs.fractures.size(); ++i)
    for (const auto& p : fs.fractures[i].points)
      os << p.x() << ',' << p.y() << ',' << p.z() << ',' << i << '\n';
  return os.str();
}

std::vector<double> sample_times(const TemporalSampler& s, std::mt19937_64& rng) {
  if (!(s.t_min > 0.0) || !(s.t_min < s.t_max))
    throw std::invalid_argument("TemporalSampler: need 0 < t_min < t_max");
  if (s.count < 1) throw std::invalid_argument("TemporalSampler: count must be >= 1");
  const double a = std::sqrt(s.t_min), b = std::sqrt(s.t_max);
  std::vector<double> out(s.count);
  if (s.count == 1) {
    out[0] = s.t_min;
    return out;
  }
  const double step = (b - a) / (s.count - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < s.count; ++i) {
    double root = 0.0;
    switch (s.mode) {
      case TimeMode::sqrt_uniform:
        root = a + i * step;
        break;
      case TimeMode::uniform:
        out[i] = s.t_min + (s.t_max - s.t_min) * i / (s.count - 1);
        continue;
      case TimeMode::random_sqrt: {
        const double lo = a + i * step;
        const double hi = std::min(b, lo + step);
        root = lo + (hi - lo) * u01(rng);
        break;
      }
    }
    out[i] = root * root;
  }
  if (s.mode == TimeMode::sqrt_uniform) {
    out.front() = s.t_min;
    out.back() = s.t_max;
  }
  return out;
}

std::vector<Vec3> sample_matrix_points(const CoreGeometry& geom, const Eigen::Vector3i& resolution,
                                       const FractureSet& fractures, double exclusion) {
  if (exclusion < 0.0) throw std::invalid_argument("exclusion must be >= 0");
  const Lattice lat = make_lattice(geom, resolution);
  const auto fpts = fractures.flattened();
  const double ex2 = exclusion * exclusion;

  std::vector<Vec3> out;
  for (int i = 0; i < lat.n.x(); ++i)
    for (int j = 0; j < lat.n.y(); ++j)
      for (int k = 0; k < lat.n.z(); ++k) {
        const Vec3 p = lat.point(i, j, k);
        if (!geom.inside(p)) continue;
        bool excluded = false;
        for (const auto& [fp, id] : fpts)
          if (dist2(p, fp) <= ex2) {
            excluded = true;
            break;
          }
        if (!excluded) out.push_back(p);
      }
  if (out.empty())
    throw std::runtime_error("sample_matrix_points: exclusion removed every lattice point");
  return out;
}

BoundaryPoints sample_boundary_points(const CoreGeometry& geom, const Eigen::Vector3i& resolution,
                                      int n_face, int n_radial, std::mt19937_64& rng) {
  if (n_face < 1 || n_radial < 1)
    throw std::invalid_argument("sample_boundary_points: counts must be >= 1");
  const Lattice lat = make_lattice(geom, resolution);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> ypick(0, lat.n.y() - 1);

  BoundaryPoints bp;
  auto face_xy = [&]() -> std::pair<double, double> {
    if (geom.kind == DomainKind::cylinder3d) {
      while (true) {
        const double x = (2.0 * u01(rng) - 1.0) * geom.radius;
        const double z = (2.0 * u01(rng) - 1.0) * geom.radius;
        if (x * x + z * z < geom.radius * geom.radius) return {x, z};
      }
    }
    return {(2.0 * u01(rng) - 1.0) * geom.radius, 0.0};
  };

  for (int i = 0; i < n_face; ++i) {
    auto [x, z] = face_xy();
    bp.inlet.emplace_back(x, 0.0, z);
    auto [x2, z2] = face_xy();
    bp.outlet.emplace_back(x2, geom.length, z2);
  }
  for (int i = 0; i < n_radial; ++i) {
    const double y = lat.point(0, ypick(rng), 0).y();
    if (geom.kind == DomainKind::cylinder3d) {
      const double beta = 2.0 * std::numbers::pi * u01(rng);
      bp.radial.emplace_back(geom.radius * std::cos(beta), y, geom.radius * std::sin(beta));
    } else {
      const double x = (u01(rng) < 0.5) ? -geom.radius : geom.radius;
      bp.radial.emplace_back(x, y, 0.0);
    }
  }
  return bp;
}

namespace {

Mat with_times(const std::vector<Vec3>& pts, const TemporalSampler& ts, std::mt19937_64& rng) {
  TemporalSampler s = ts;
  s.count = static_cast<int>(pts.size());
  Mat out(pts.size(), 4);
  if (pts.empty()) return out;
  std::vector<double> t = sample_times(s, rng);
  // decouple the time ordering from the spatial ordering
  std::shuffle(t.begin(), t.end(), rng);
  for (std::size_t i = 0; i < pts.size(); ++i)
    out.row(i) << pts[i].x(), pts[i].y(), pts[i].z(), t[i];
  return out;
}

Mat at_time_zero(const std::vector<Vec3>& pts) {
  Mat out(pts.size(), 4);
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(i) << pts[i].x(), pts[i].y(), pts[i].z(), 0.0;
  return out;
}

std::vector<Vec3> rows_to_points(const Mat& m) {
  std::vector<Vec3> out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[i] = Vec3(m(i, 0), m(i, 1), m(i, 2));
  return out;
}

} // namespace

CollocationSet build_collocation(const CoreGeometry& geom, const FractureSet& fractures,
                                 const CollocationConfig& cfg, std::mt19937_64& rng) {
  geom.validate();
  const Lattice lat = make_lattice(geom, cfg.resolution);
  const double ytol = cfg.boundary_tol_frac * lat.spacing.y();

  CollocationSet c;
  std::vector<Vec3> mpts = sample_matrix_points(geom, cfg.resolution, fractures, cfg.exclusion);
  c.matrix = with_times(mpts, cfg.time, rng);

  std::vector<Vec3> fpts;
  for (const auto& [p, id] : fractures.flattened()) {
    fpts.push_back(p);
    c.fracture_id.push_back(id);
  }
  c.fracture = with_times(fpts, cfg.time, rng);
  c.matrix_fracture = c.fracture; // paired evaluation at identical coordinates

  BoundaryPoints bp = sample_boundary_points(geom, cfg.resolution, cfg.n_face, cfg.n_radial, rng);
  c.inlet = with_times(bp.inlet, cfg.time, rng);
  c.outlet = with_times(bp.outlet, cfg.time, rng);
  c.radial = with_times(bp.radial, cfg.time, rng);

  std::vector<Vec3> f_in, f_out;
  for (const auto& p : fpts) {
    if (std::abs(p.y()) < ytol) f_in.push_back(p);
    if (std::abs(p.y() - geom.length) < ytol) f_out.push_back(p);
  }
  c.fracture_inlet = with_times(f_in, cfg.time, rng);
  c.fracture_outlet = with_times(f_out, cfg.time, rng);

  std::vector<Vec3> ic = mpts;
  std::shuffle(ic.begin(), ic.end(), rng);
  if (static_cast<int>(ic.size()) > cfg.n_initial_matrix) ic.resize(cfg.n_initial_matrix);
  c.initial_matrix = at_time_zero(ic);
  c.initial_fracture = at_time_zero(fpts);
  return c;
}

CollocationSet resample(const CollocationSet& c, const CoreGeometry& geom,
                        const FractureSet& fractures, const CollocationConfig& cfg,
                        double fraction, std::int64_t epoch, std::int64_t period,
                        std::mt19937_64& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("resample: fraction must be in (0,1]");
  if (period <= 0 || epoch % period != 0) return c;

  const Lattice lat = make_lattice(geom, cfg.resolution);
  const auto fpts = fractures.flattened();
  const double ex2 = cfg.exclusion * cfg.exclusion;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> xi(0, lat.n.x() - 1), yi(0, lat.n.y() - 1),
      zi(0, lat.n.z() - 1);

  CollocationSet out = c;

  auto fresh_point = [&]() -> std::pair<bool, Vec3> {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Vec3 p = lat.point(xi(rng), yi(rng), zi(rng));
      p.x() += (u01(rng) - 0.5) * lat.spacing.x();
      p.y() += (u01(rng) - 0.5) * lat.spacing.y();
      if (geom.kind == DomainKind::cylinder3d) p.z() += (u01(rng) - 0.5) * lat.spacing.z();
      if (!geom.inside(p)) continue;
      bool excluded = false;
      for (const auto& [fp, id] : fpts)
        if (dist2(p, fp) <= ex2) {
          excluded = true;
          break;
        }
      if (!excluded) return {true, p};
    }
    return {false, Vec3::Zero()};
  };

  const Eigen::Index n = out.matrix.rows();
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const Eigen::Index n_swap = static_cast<Eigen::Index>(fraction * static_cast<double>(n));
  for (Eigen::Index i = 0; i < n_swap; ++i) {
    auto [ok, p] = fresh_point();
    if (ok) out.matrix.row(idx[i]).head(3) << p.x(), p.y(), p.z();
  }

  auto redraw = [&](Mat& block) {
    if (block.rows() == 0) return;
    TemporalSampler s = cfg.time;
    s.count = static_cast<int>(block.rows());
    std::vector<double> t = sample_times(s, rng);
    std::shuffle(t.begin(), t.end(), rng);
    for (Eigen::Index i = 0; i < block.rows(); ++i) block(i, 3) = t[i];
  };
  redraw(out.matrix);
  redraw(out.fracture);
  out.matrix_fracture = out.fracture;
  redraw(out.inlet);
  redraw(out.outlet);
  redraw(out.radial);
  redraw(out.fracture_inlet);
  redraw(out.fracture_outlet);
  return out;
}

InletAreas inlet_areas(const CoreGeometry& geom, const FractureSet& fractures, double y_tol) {
  InletAreas a;
  const double total = geom.cross_section_area();
  if (geom.kind == DomainKind::cylinder3d) {
    std::vector<Vec3> counted;
    for (const auto& [p, id] : fractures.flattened()) {
      if (std::abs(p.y()) >= y_tol) continue;
      bool overlaps = false;
      for (const auto& q : counted)
        if (dist2(p, q) < fractures.aperture * fractures.aperture) {
          overlaps = true;
          break;
        }
      if (!overlaps) counted.push_back(p);
    }
    a.fracture = static_cast<double>(counted.size()) * std::numbers::pi *
                 (fractures.aperture / 2.0) * (fractures.aperture / 2.0);
  } else {
    int n_hit = 0;
    for (const auto& f : fractures.fractures)
      for (const auto& p : f.points)
        if (std::abs(p.y()) < y_tol) {
          ++n_hit;
          break;
        }
    a.fracture = static_cast<double>(n_hit) * fractures.aperture * geom.slab_thickness;
  }
  if (a.fracture >= total)
    throw std::runtime_error("inlet_areas: fracture area exceeds the cross-section");
  a.matrix = total - a.fracture;
  return a;
}

double min_distance_to_fractures(const std::vector<Vec3>& pts, const FractureSet& fractures) {
  const auto fpts = fractures.flattened();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts)
    for (const auto& [fp, id] : fpts) best = std::min(best, (p - fp).norm());
  return best;
}

void check_invariants(const CollocationSet& c, const CoreGeometry& geom,
                      const FractureSet& fractures, double exclusion) {
  auto fail = [](const std::string& what) {
    throw std::runtime_error("collocation invariant violated: " + what);
  };
  for (Eigen::Index i = 0; i < c.matrix.rows(); ++i)
    if (!geom.inside(Vec3(c.matrix(i, 0), c.matrix(i, 1), c.matrix(i, 2))))
      fail("matrix point outside domain");
  if (fractures.total_points() > 0 && c.matrix.rows() > 0) {
    if (min_distance_to_fractures(rows_to_points(c.matrix), fractures) <= exclusion)
      fail("matrix point within exclusion radius");
  }
  for (Eigen::Index i = 0; i < c.inlet.rows(); ++i)
    if (c.inlet(i, 1) != 0.0) fail("inlet point off the y=0 face");
  for (Eigen::Index i = 0; i < c.outlet.rows(); ++i)
    if (c.outlet(i, 1) != geom.length) fail("outlet point off the y=L face");
  for (Eigen::Index i = 0; i < c.radial.rows(); ++i) {
    const double x = c.radial(i, 0), z = c.radial(i, 2);
    const double r2 = geom.kind == DomainKind::cylinder3d ? x * x + z * z : x * x;
    if (std::abs(r2 - geom.radius * geom.radius) > 1e-12 * geom.radius * geom.radius)
      fail("radial point off the lateral surface");
  }
  if (c.matrix_fracture.rows() != c.fracture.rows() ||
      (c.fracture.rows() > 0 &&
       (c.matrix_fracture.leftCols(3) - c.fracture.leftCols(3)).cwiseAbs().maxCoeff() > 0.0))
    fail("matrix_fracture coordinates not paired with fracture");
  for (Eigen::Index i = 0; i < c.initial_matrix.rows(); ++i)
    if (c.initial_matrix(i, 3) != 0.0) fail("initial point with t != 0");
}

std::string CollocationSet::csv() const {
  std::ostringstream os;
  os.precision(12);
  os << "x,y,z,t,tag\n";
  auto dump = [&os](const Mat& m, const char* tag) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      os << m(i, 0) << ',' << m(i, 1) << ',' << m(i, 2) << ',' << m(i, 3) << ',' << tag << '\n';
  };
  dump(matrix, "matrix");
  dump(fracture, "fracture");
  dump(matrix_fracture, "matrix_fracture");
  dump(inlet, "inlet");
  dump(outlet, "outlet");
  dump(radial, "radial");
  dump(initial_matrix, "initial");
  dump(initial_fracture, "initial");
  return os.str();
}

} // namespace fracflow::geom
