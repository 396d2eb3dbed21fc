#include <cmath>
#include <stdexcept>

#include "fracflow/fdsim.hpp"

namespace fracflow::fdsim {

Eigen::VectorXd pack_inverse_params(const FlowProblem& p) {
  Eigen::VectorXd g(10);
  g << p.matrix.corey.krw_max, p.matrix.corey.krnw_max, p.matrix.corey.n_w1, p.matrix.corey.n_w2,
      p.matrix.corey.n_nw1, p.matrix.corey.n_nw2, p.matrix.corey.s_nwr, p.matrix.leverett.J1,
      p.matrix.leverett.J2, p.fracture.permeability;
  return g;
}

FlowProblem apply_inverse_params(const FlowProblem& base, const Eigen::VectorXd& gamma) {
  if (gamma.size() != 10) throw std::invalid_argument("apply_inverse_params: expected 10 entries");
  FlowProblem p = base;
  p.matrix.corey.krw_max = std::min(gamma[0], 1.0);
  p.matrix.corey.krnw_max = std::min(gamma[1], 1.0);
  p.matrix.corey.n_w1 = gamma[2];
  p.matrix.corey.n_w2 = gamma[3];
  p.matrix.corey.n_nw1 = gamma[4];
  p.matrix.corey.n_nw2 = gamma[5];
  p.matrix.corey.s_nwr = std::min(gamma[6], 0.9 * (1.0 - p.matrix.corey.s_wc));
  p.matrix.leverett.J1 = gamma[7];
  p.matrix.leverett.J2 = gamma[8];
  p.fracture = make_fracture_closure(gamma[9], base.fracture.porosity, p.matrix.leverett);
  return p;
}

double interp_series(const std::vector<double>& t, const std::vector<double>& v, double at) {
  if (t.empty()) throw std::invalid_argument("interp_series: empty series");
  if (at <= t.front()) return v.front();
  if (at >= t.back()) return v.back();
  auto it = std::upper_bound(t.begin(), t.end(), at);
  const std::size_t i = static_cast<std::size_t>(it - t.begin());
  const double w = (at - t[i - 1]) / (t[i] - t[i - 1]);
  return v[i - 1] * (1.0 - w) + v[i] * w;
}

HistMatchResult histmatch_fd(const FlowProblem& base, int nx, int ny, int nz,
                             const SimSchedule& schedule, const RFSeries& observed,
                             const Eigen::VectorXd& gamma0, const HistMatchOptions& opt) {
  if (observed.t.empty()) throw std::invalid_argument("histmatch_fd: empty observation series");

  HistMatchResult out;
  int failures = 0;

  auto objective = [&](const Eigen::VectorXd& logg) -> double {
    Eigen::VectorXd gamma = logg.array().exp();
    try {
      FlowProblem cand = apply_inverse_params(base, gamma);
      cand.validate();
      Grid grid = build_grid(cand, nx, ny, nz);
      SimResult sim = simulate(cand, grid, schedule);
      double acc = 0.0;
      for (std::size_t i = 0; i < observed.t.size(); ++i)
        acc += std::abs(interp_series(sim.times, sim.rf, observed.t[i]) - observed.rf[i]);
      return acc / static_cast<double>(observed.t.size());
    } catch (const std::exception&) {
      ++failures;
      return opt.penalty;
    }
  };

  NMResult nm = nelder_mead(objective, gamma0.array().log().matrix(), opt.nm);
  out.fitted = apply_inverse_params(base, nm.x.array().exp().matrix());
  out.nm = std::move(nm);
  out.failures = failures;
  return out;
}

} // namespace fracflow::fdsim
