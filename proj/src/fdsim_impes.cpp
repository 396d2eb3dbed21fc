#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fracflow/fdsim.hpp"

namespace fracflow::fdsim {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

struct Face {
  int a, b;
  double T;   // geometric transmissibility including permeability, m^3
  bool mf;    // matrix-fracture coupling face
};

struct BFace {
  int cell;
  double T;
  bool inlet;
};

// Kirchhoff potential G(S) = int_0^S (krw/mu_w)(-dpc/du) du per medium.
// The capillary water flux between same-medium cells is T*(G_a - G_b),
// the exact two-point form of the degenerate diffusion term; plain
// phase-potential upwinding overshoots imbibition fronts badly on
// desk-scale grids.
class KirchhoffTable {
 public:
  KirchhoffTable() = default;
  KirchhoffTable(const closure::SaturationFunctions& f, const closure::FluidProps& fl) {
    const int n = 20000;
    g_.resize(n + 1, 0.0);
    const double lo = closure::kEps, hi = 1.0 - closure::kEps;
    auto integrand = [&](double S) {
      return closure::rel_perm(S, f.corey).krw / fl.mu_w *
             (-closure::leverett_dj(S, f.leverett)) * f.leverett.sigma *
             std::sqrt(f.porosity / f.permeability);
    };
    double prev = integrand(lo);
    for (int i = 1; i <= n; ++i) {
      const double s0 = lo + (hi - lo) * (i - 1) / n;
      const double s1 = lo + (hi - lo) * i / n;
      const double cur = integrand(s1);
      g_[i] = g_[i - 1] + 0.5 * (prev + cur) * (s1 - s0);
      prev = cur;
    }
  }

  double operator()(double S) const {
    const double lo = closure::kEps, hi = 1.0 - closure::kEps;
    const double u = std::clamp((S - lo) / (hi - lo), 0.0, 1.0) * (g_.size() - 1);
    const int i = std::min<int>(static_cast<int>(g_.size()) - 2, static_cast<int>(u));
    return g_[i] + (u - i) * (g_[i + 1] - g_[i]);
  }

 private:
  std::vector<double> g_;
};

class Engine {
 public:
  Engine(const FlowProblem& prob, const Grid& grid)
      : prob_(prob),
        grid_(grid),
        g_matrix_(prob.matrix, prob.fluids),
        g_fracture_(prob.fracture, prob.fluids) {
    build_topology();
    pc_.resize(grid_.size());
    krw_.resize(grid_.size());
    krnw_.resize(grid_.size());
    gpot_.resize(grid_.size());
    fw_face_.resize(faces_.size());
    fnw_face_.resize(faces_.size());
    fw_bface_.resize(bfaces_.size());
    fnw_bface_.resize(bfaces_.size());
  }

  const closure::SaturationFunctions& closure_of(int cell) const {
    return grid_.medium[cell] == Medium::fracture ? prob_.fracture : prob_.matrix;
  }

  // fracture cells represent a slab of aperture e_V inside a cell of
  // width dx: conductance and pore volume carry the e_V/dx ratio so the
  // equivalent model is invariant under grid refinement
  double fracture_scale() const { return prob_.fractures.aperture / grid_.dx; }

  double cell_volume() const { return grid_.dx * grid_.dy * grid_.dz; }

  double pore_volume(int cell) const {
    const double scale = grid_.medium[cell] == Medium::fracture ? fracture_scale() : 1.0;
    return closure_of(cell).porosity * scale * cell_volume();
  }

  double total_pore_volume() const {
    double pv = 0.0;
    for (int c = 0; c < grid_.size(); ++c)
      if (grid_.medium[c] != Medium::inactive) pv += pore_volume(c);
    return pv;
  }

  void update_cell_props(const FDState& s) {
    for (int c = 0; c < grid_.size(); ++c) {
      if (grid_.medium[c] == Medium::inactive) continue;
      const auto& f = closure_of(c);
      const double S = closure::normalized_saturation(s.sw[c], f.corey.s_wc, f.corey.s_nwr);
      const auto kr = closure::rel_perm(S, f.corey);
      krw_[c] = kr.krw;
      krnw_[c] = kr.krnw;
      pc_[c] = closure::capillary_pressure(closure::clamp_eps(S), f);
      gpot_[c] = grid_.medium[c] == Medium::fracture ? g_fracture_(S) : g_matrix_(S);
    }
  }

  // wetting/non-wetting volumetric fluxes for the current state
  void compute_fluxes(const FDState& s) {
    const double mu_w = prob_.fluids.mu_w, mu_nw = prob_.fluids.mu_nw;
    for (std::size_t i = 0; i < faces_.size(); ++i) {
      const Face& f = faces_[i];
      const double phiw_a = s.p[f.a] - pc_[f.a], phiw_b = s.p[f.b] - pc_[f.b];
      const int upw = phiw_a >= phiw_b ? f.a : f.b;
      const int upn = s.p[f.a] >= s.p[f.b] ? f.a : f.b;
      if (f.mf) {
        // Eq.(8) exchange on the phase-pressure difference
        fw_face_[i] = f.T * (krw_[upw] / mu_w) * (phiw_a - phiw_b);
      } else {
        fw_face_[i] = f.T * ((krw_[upw] / mu_w) * (s.p[f.a] - s.p[f.b]) +
                             (gpot_[f.a] - gpot_[f.b]));
      }
      fnw_face_[i] = f.T * (krnw_[upn] / mu_nw) * (s.p[f.a] - s.p[f.b]);
    }
    for (std::size_t i = 0; i < bfaces_.size(); ++i) {
      const BFace& bf = bfaces_[i];
      const auto& cl = closure_of(bf.cell);
      if (bf.inlet) {
        const double S_g = 1.0 - closure::kEps;
        const auto kr_g = closure::rel_perm(S_g, cl.corey);
        const double pc_g = closure::capillary_pressure(S_g, cl);
        const double g_g =
            grid_.medium[bf.cell] == Medium::fracture ? g_fracture_(S_g) : g_matrix_(S_g);
        const double phiw_c = s.p[bf.cell] - pc_[bf.cell];
        const double p_gnw = prob_.p_in + pc_g;
        const double krw_up = phiw_c >= prob_.p_in ? krw_[bf.cell] : kr_g.krw;
        const double krn_up = s.p[bf.cell] >= p_gnw ? krnw_[bf.cell] : kr_g.krnw;
        fw_bface_[i] = bf.T * ((krw_up / mu_w) * (s.p[bf.cell] - p_gnw) +
                               (gpot_[bf.cell] - g_g));
        fnw_bface_[i] = bf.T * (krn_up / mu_nw) * (s.p[bf.cell] - p_gnw);
      } else {
        // free outflow: ghost mirrors the cell saturation, pc cancels
        fw_bface_[i] = bf.T * (krw_[bf.cell] / mu_w) * (s.p[bf.cell] - prob_.p_out);
        fnw_bface_[i] = bf.T * (krnw_[bf.cell] / mu_nw) * (s.p[bf.cell] - prob_.p_out);
      }
    }
  }

  void solve_pressure(FDState& s) {
    const double mu_w = prob_.fluids.mu_w, mu_nw = prob_.fluids.mu_nw;
    const int n = static_cast<int>(act2cell_.size());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(faces_.size() * 4 + bfaces_.size());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);

    for (const Face& f : faces_) {
      const double phiw_a = s.p[f.a] - pc_[f.a], phiw_b = s.p[f.b] - pc_[f.b];
      const int upw = phiw_a >= phiw_b ? f.a : f.b;
      const int upn = s.p[f.a] >= s.p[f.b] ? f.a : f.b;
      const double lw = krw_[upw] / mu_w;
      const double ln = krnw_[upn] / mu_nw;
      const double c = f.T * (lw + ln);
      const int ia = cell2act_[f.a], ib = cell2act_[f.b];
      trips.emplace_back(ia, ia, c);
      trips.emplace_back(ib, ib, c);
      trips.emplace_back(ia, ib, -c);
      trips.emplace_back(ib, ia, -c);
      const double cap = f.mf ? f.T * lw * (pc_[f.a] - pc_[f.b])
                              : -f.T * (gpot_[f.a] - gpot_[f.b]);
      rhs[ia] += cap;
      rhs[ib] -= cap;
    }
    for (const BFace& bf : bfaces_) {
      const auto& cl = closure_of(bf.cell);
      const int ia = cell2act_[bf.cell];
      if (bf.inlet) {
        const double S_g = 1.0 - closure::kEps;
        const auto kr_g = closure::rel_perm(S_g, cl.corey);
        const double pc_g = closure::capillary_pressure(S_g, cl);
        const double g_g =
            grid_.medium[bf.cell] == Medium::fracture ? g_fracture_(S_g) : g_matrix_(S_g);
        const double p_gnw = prob_.p_in + pc_g;
        const double phiw_c = s.p[bf.cell] - pc_[bf.cell];
        const double lw = (phiw_c >= prob_.p_in ? krw_[bf.cell] : kr_g.krw) / mu_w;
        const double ln = (s.p[bf.cell] >= p_gnw ? krnw_[bf.cell] : kr_g.krnw) / mu_nw;
        trips.emplace_back(ia, ia, bf.T * (lw + ln));
        rhs[ia] += bf.T * (lw + ln) * p_gnw - bf.T * (gpot_[bf.cell] - g_g);
      } else {
        const double lw = krw_[bf.cell] / mu_w;
        const double ln = krnw_[bf.cell] / mu_nw;
        trips.emplace_back(ia, ia, bf.T * (lw + ln));
        rhs[ia] += bf.T * (lw + ln) * prob_.p_out;
      }
    }

    SpMat A(n, n);
    A.setFromTriplets(trips.begin(), trips.end());
    if (!analyzed_) {
      solver_.analyzePattern(A);
      analyzed_ = true;
    }
    solver_.factorize(A);
    if (solver_.info() != Eigen::Success)
      throw std::runtime_error("pressure_step: singular system (factorization failed)");
    Eigen::VectorXd x = solver_.solve(rhs);
    if (solver_.info() != Eigen::Success)
      throw std::runtime_error("pressure_step: linear solve failed");
    for (int i = 0; i < n; ++i) s.p[act2cell_[i]] = x[i];
  }

  // explicit upwind advance over dt with CFL sub-stepping
  int advance_saturation(FDState& s, double dt, double cfl, SimResult* diag) {
    const double vol = cell_volume();
    double remaining = dt;
    int steps = 0;
    const double total_pv = total_pore_volume();

    while (remaining > 1e-12) {
      update_cell_props(s);
      compute_fluxes(s);

      // throughput-based sub-step limit
      std::vector<double> absw(grid_.size(), 0.0);
      for (std::size_t i = 0; i < faces_.size(); ++i) {
        absw[faces_[i].a] += std::abs(fw_face_[i]);
        absw[faces_[i].b] += std::abs(fw_face_[i]);
      }
      for (std::size_t i = 0; i < bfaces_.size(); ++i)
        absw[bfaces_[i].cell] += std::abs(fw_bface_[i]);
      double dts = remaining;
      for (int c = 0; c < grid_.size(); ++c) {
        if (grid_.medium[c] == Medium::inactive || absw[c] <= 0.0) continue;
        dts = std::min(dts, cfl * 0.1 * pore_volume(c) / absw[c]);
      }
      if (dts < 1e-12)
        throw std::runtime_error("saturation_step: CFL sub-step underflow (dt < 1e-12 s)");

      // conservative update
      std::vector<double> ds(grid_.size(), 0.0);
      double transfer_m = 0.0, transfer_f = 0.0, transfer_abs = 0.0;
      for (std::size_t i = 0; i < faces_.size(); ++i) {
        const Face& f = faces_[i];
        ds[f.a] -= fw_face_[i];
        ds[f.b] += fw_face_[i];
        if (f.mf) {
          const bool a_is_matrix = grid_.medium[f.a] == Medium::matrix;
          transfer_m += a_is_matrix ? -fw_face_[i] : fw_face_[i];
          transfer_f += a_is_matrix ? fw_face_[i] : -fw_face_[i];
          transfer_abs += std::abs(fw_face_[i]);
        }
      }
      double boundary_influx = 0.0;
      for (std::size_t i = 0; i < bfaces_.size(); ++i) {
        ds[bfaces_[i].cell] -= fw_bface_[i];
        boundary_influx -= fw_bface_[i];
      }

      // audit the raw scheme, then project into the mobile window
      double storage_change = 0.0;
      double violation = 0.0;
      for (int c = 0; c < grid_.size(); ++c) {
        if (grid_.medium[c] == Medium::inactive) continue;
        const auto& cl = closure_of(c);
        const double pv = cl.porosity * vol;
        const double snew = s.sw[c] + dts * ds[c] / pv;
        storage_change += (snew - s.sw[c]) * pv;
        const double lo = cl.corey.s_wc, hi = 1.0 - cl.corey.s_nwr;
        if (snew < lo) {
          violation = std::max(violation, lo - snew);
          s.sw[c] = lo;
        } else if (snew > hi) {
          violation = std::max(violation, snew - hi);
          s.sw[c] = hi;
        } else {
          s.sw[c] = snew;
        }
      }

      if (diag) {
        const double err = std::abs(storage_change - boundary_influx * dts) / total_pv;
        diag->max_mass_error = std::max(diag->max_mass_error, err);
        if (transfer_abs > 0.0)
          diag->max_transfer_imbalance = std::max(
              diag->max_transfer_imbalance, std::abs(transfer_m + transfer_f) / transfer_abs);
        diag->max_bound_violation = std::max(diag->max_bound_violation, violation);
        diag->substeps += 1;
      }

      remaining -= dts;
      ++steps;
    }
    return steps;
  }

  double inlet_water_rate(const FDState& s) {
    update_cell_props(s);
    compute_fluxes(s);
    double q = 0.0;
    for (std::size_t i = 0; i < bfaces_.size(); ++i)
      if (bfaces_[i].inlet) q -= fw_bface_[i];
    return q;
  }

  double matrix_rf(const FDState& s) const {
    double pv = 0.0, wet = 0.0;
    for (int c = 0; c < grid_.size(); ++c) {
      if (grid_.medium[c] != Medium::matrix) continue;
      const double v = pore_volume(c);
      pv += v;
      wet += v * s.sw[c];
    }
    return pv > 0.0 ? wet / pv : 0.0;
  }

 private:
  void build_topology() {
    cell2act_.assign(grid_.size(), -1);
    for (int i = 0; i < grid_.nx; ++i)
      for (int j = 0; j < grid_.ny; ++j)
        for (int k = 0; k < grid_.nz; ++k) {
          const int c = grid_.idx(i, j, k);
          if (grid_.medium[c] == Medium::inactive) continue;
          cell2act_[c] = static_cast<int>(act2cell_.size());
          act2cell_.push_back(c);
        }

    auto K_of = [&](int c) {
      return grid_.medium[c] == Medium::fracture
                 ? prob_.fracture.permeability * fracture_scale()
                 : prob_.matrix.permeability;
    };
    auto add_face = [&](int a, int b, double area, double h) {
      if (grid_.medium[a] == Medium::inactive || grid_.medium[b] == Medium::inactive) return;
      Face f;
      f.a = a;
      f.b = b;
      const bool mixed = grid_.medium[a] != grid_.medium[b];
      f.mf = mixed;
      if (mixed) {
        // Eq.(8) coupling: matrix permeability over half the aperture
        f.T = area * prob_.matrix.permeability / (prob_.fractures.aperture / 2.0);
      } else {
        f.T = area / (0.5 * h / K_of(a) + 0.5 * h / K_of(b));
      }
      faces_.push_back(f);
    };

    const double ax = grid_.dy * grid_.dz, ay = grid_.dx * grid_.dz, az = grid_.dx * grid_.dy;
    for (int i = 0; i < grid_.nx; ++i)
      for (int j = 0; j < grid_.ny; ++j)
        for (int k = 0; k < grid_.nz; ++k) {
          const int c = grid_.idx(i, j, k);
          if (i + 1 < grid_.nx) add_face(c, grid_.idx(i + 1, j, k), ax, grid_.dx);
          if (j + 1 < grid_.ny) add_face(c, grid_.idx(i, j + 1, k), ay, grid_.dy);
          if (k + 1 < grid_.nz) add_face(c, grid_.idx(i, j, k + 1), az, grid_.dz);
          if (grid_.medium[c] == Medium::inactive) continue;
          if (j == 0) bfaces_.push_back({c, ay * K_of(c) / (0.5 * grid_.dy), true});
          if (j == grid_.ny - 1) bfaces_.push_back({c, ay * K_of(c) / (0.5 * grid_.dy), false});
        }
  }

  const FlowProblem& prob_;
  const Grid& grid_;
  std::vector<Face> faces_;
  std::vector<BFace> bfaces_;
  std::vector<int> cell2act_, act2cell_;
  std::vector<double> pc_, krw_, krnw_, gpot_;
  KirchhoffTable g_matrix_, g_fracture_;
  std::vector<double> fw_face_, fnw_face_, fw_bface_, fnw_bface_;
  Eigen::SimplicialLDLT<SpMat> solver_;
  bool analyzed_ = false;
};

} // namespace

FDState initial_state(const FlowProblem& problem, const Grid& grid) {
  FDState s;
  s.sw.assign(grid.size(), 0.0);
  s.p.assign(grid.size(), problem.p_init);
  for (int c = 0; c < grid.size(); ++c) {
    const auto& cl =
        grid.medium[c] == Medium::fracture ? problem.fracture.corey : problem.matrix.corey;
    s.sw[c] = cl.s_wc;
  }
  s.t = 0.0;
  return s;
}

void pressure_step(const FlowProblem& problem, const Grid& grid, FDState& state) {
  Engine e(problem, grid);
  e.update_cell_props(state);
  e.solve_pressure(state);
}

int saturation_step(const FlowProblem& problem, const Grid& grid, FDState& state, double dt,
                    double cfl, SimResult* diag) {
  Engine e(problem, grid);
  return e.advance_saturation(state, dt, cfl, diag);
}

SimResult simulate(const FlowProblem& problem, const Grid& grid, const SimSchedule& schedule) {
  problem.validate();
  if (schedule.cfl <= 0.0 || schedule.cfl > 1.0)
    throw std::invalid_argument("simulate: CFL must be in (0,1]");

  Engine engine(problem, grid);
  SimResult res;
  FDState s = initial_state(problem, grid);

  auto record = [&]() {
    res.times.push_back(s.t);
    res.rf.push_back(engine.matrix_rf(s));
    res.qinj.push_back(engine.inlet_water_rate(s));
  };
  auto snapshot = [&]() {
    Snapshot snap;
    snap.t = s.t;
    snap.sw = s.sw;
    snap.p = s.p;
    res.snapshots.push_back(std::move(snap));
  };

  std::vector<double> reports = schedule.report_times;
  std::sort(reports.begin(), reports.end());
  std::size_t next_report = 0;

  if (schedule.end_time <= 0.0) {
    engine.update_cell_props(s);
    engine.solve_pressure(s);
    record();
    snapshot();
    res.final_state = s;
    return res;
  }

  // bootstrap: solve twice so upwind directions see a real field
  engine.update_cell_props(s);
  engine.solve_pressure(s);
  engine.solve_pressure(s);
  res.pressure_solves += 2;
  record();
  while (next_report < reports.size() && reports[next_report] <= 0.0) {
    snapshot();
    ++next_report;
  }

  double dt = schedule.dt_init;
  while (s.t < schedule.end_time - 1e-9) {
    double step = std::min(dt, schedule.end_time - s.t);
    if (next_report < reports.size()) step = std::min(step, reports[next_report] - s.t);

    engine.update_cell_props(s);
    engine.solve_pressure(s);
    res.pressure_solves += 1;
    std::vector<double> sw_before = s.sw;
    engine.advance_saturation(s, step, schedule.cfl, &res);
    s.t += step;
    record();

    if (next_report < reports.size() && s.t >= reports[next_report] - 1e-9) {
      snapshot();
      ++next_report;
    }
    // keep the frozen-pressure window small where saturations move fast
    double moved = 0.0;
    for (std::size_t c = 0; c < sw_before.size(); ++c)
      moved = std::max(moved, std::abs(s.sw[c] - sw_before[c]));
    double factor = schedule.dt_grow;
    if (moved > 1e-12) factor = std::min(factor, 0.1 * schedule.cfl / moved);
    dt = std::min(std::max(dt * factor, schedule.dt_init), schedule.dt_max);
  }
  res.final_state = s;
  return res;
}

} // namespace fracflow::fdsim
