#pragma once

// Reference physics: an incompressible two-phase IMPES simulator on a
// structured grid with embedded fracture cells, the Buckley-Leverett /
// Welge analytical solver, and a Nelder-Mead history-matching baseline.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fracflow/problem.hpp"

namespace fracflow::fdsim {

enum class Medium : std::int8_t { inactive = -1, matrix = 0, fracture = 1 };

struct Grid {
  int nx = 1, ny = 1, nz = 1;
  double dx = 0, dy = 0, dz = 0;
  geom::DomainKind kind = geom::DomainKind::cylinder3d;
  std::vector<Medium> medium; // nx*ny*nz, x slowest: ((i*ny + j)*nz + k)

  int size() const { return nx * ny * nz; }
  int idx(int i, int j, int k) const { return (i * ny + j) * nz + k; }
  Eigen::Vector3d center(int i, int j, int k) const;
  int active_count() const;
};

// Tags cells outside the cylinder inactive and marks one lattice layer
// of fracture cells per fracture plane.
Grid build_grid(const FlowProblem& problem, int nx, int ny, int nz);

struct FDState {
  std::vector<double> sw;
  std::vector<double> p; // non-wetting pressure, Pa
  double t = 0.0;
};

struct SimSchedule {
  double end_time = 0.0;
  double cfl = 0.5;
  std::vector<double> report_times;
  double dt_init = 10.0;
  double dt_max = 1.0e4;
  double dt_grow = 1.25;
};

struct Snapshot {
  double t = 0.0;
  std::vector<double> sw; // full grid, inactive cells zero
  std::vector<double> p;
};

struct SimResult {
  std::vector<double> times; // macro steps
  std::vector<double> rf;    // pore-volume mean matrix saturation
  std::vector<double> qinj;  // inlet water rate, m^3/s
  std::vector<Snapshot> snapshots;
  FDState final_state;
  // diagnostics
  double max_mass_error = 0.0;        // |d storage - net influx| / pore volume, per step
  double max_transfer_imbalance = 0.0; // matrix vs fracture side of the coupling
  double max_bound_violation = 0.0;
  std::int64_t pressure_solves = 0;
  std::int64_t substeps = 0;
};

FDState initial_state(const FlowProblem& problem, const Grid& grid);

// One implicit incompressible pressure solve at the current saturations.
void pressure_step(const FlowProblem& problem, const Grid& grid, FDState& state);

// One explicit upwind saturation advance by dt (internally sub-stepped to
// the CFL target). Returns the sub-step count.
int saturation_step(const FlowProblem& problem, const Grid& grid, FDState& state, double dt,
                    double cfl, SimResult* diag = nullptr);

SimResult simulate(const FlowProblem& problem, const Grid& grid, const SimSchedule& schedule);

// --- Buckley-Leverett ------------------------------------------------------

struct WelgeSolution {
  double S_shock = 1.0;      // normalized tangency saturation
  double shock_slope = 1.0;  // df/dS at the shock (chord slope from origin)
  bool degenerate = false;   // contact discontinuity (linear flux)
};

WelgeSolution welge_tangent(const closure::SaturationFunctions& f, const closure::FluidProps& fl);

// u_t = K_F * krw_max / mu_w * dp / l
double total_velocity(const closure::SaturationFunctions& f, double K_F, double mu_w, double dp,
                      double l);

// Analytical profile s_w(x) at time t for total velocity u_t and porosity
// phi; x is measured from the inlet.
std::vector<double> bl_profile(const closure::SaturationFunctions& f,
                               const closure::FluidProps& fl, double u_t, double phi, double t,
                               const std::vector<double>& x);

// --- Nelder-Mead -----------------------------------------------------------

struct NMOptions {
  int max_iter = 400;
  double ftol = 1e-12;
  double xtol = 1e-10;
  double init_step = 0.25;
  std::function<bool()> stop; // optional wall-clock budget
};

struct NMResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  std::vector<double> trace; // best objective per iteration
  std::string status;
};

NMResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                     const Eigen::VectorXd& x0, const NMOptions& opt);

// --- history matching ------------------------------------------------------

// Inverse parameter order used by both the FD-NM baseline and the PINN:
inline const std::vector<std::string> kInverseParamNames = {
    "krw_max", "krnw_max", "n_w1", "n_w2", "n_nw1", "n_nw2", "s_nwr", "J1", "J2", "K_F"};

Eigen::VectorXd pack_inverse_params(const FlowProblem& p);
FlowProblem apply_inverse_params(const FlowProblem& base, const Eigen::VectorXd& gamma);

struct RFSeries {
  std::vector<double> t;
  std::vector<double> rf;
};

double interp_series(const std::vector<double>& t, const std::vector<double>& v, double at);

struct HistMatchOptions {
  NMOptions nm;
  double penalty = 1.0e6; // objective for failed simulations
};

struct HistMatchResult {
  FlowProblem fitted;
  NMResult nm;
  int failures = 0;
};

// Minimizes MAE(RF_sim, RF_obs) over log-parameters with a full forward
// simulation per candidate.
HistMatchResult histmatch_fd(const FlowProblem& base, int nx, int ny, int nz,
                             const SimSchedule& schedule, const RFSeries& observed,
                             const Eigen::VectorXd& gamma0, const HistMatchOptions& opt);

} // namespace fracflow::fdsim
