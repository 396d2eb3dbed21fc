#include <cmath>
#include <stdexcept>

#include "fracflow/pinn.hpp"

namespace fracflow::pinn {

// --- closure handles ---------------------------------------------------------

ClosureHandles ClosureHandles::constants(const closure::SaturationFunctions& f) {
  ClosureHandles h;
  h.krw_max = ad::constant(f.corey.krw_max);
  h.krnw_max = ad::constant(f.corey.krnw_max);
  h.n_w1 = ad::constant(f.corey.n_w1);
  h.n_w2 = ad::constant(f.corey.n_w2);
  h.n_nw1 = ad::constant(f.corey.n_nw1);
  h.n_nw2 = ad::constant(f.corey.n_nw2);
  h.s_wc = ad::constant(f.corey.s_wc);
  h.s_nwr = ad::constant(f.corey.s_nwr);
  h.J1 = ad::constant(f.leverett.J1);
  h.J2 = ad::constant(f.leverett.J2);
  h.S_eq = ad::constant(f.leverett.S_eq);
  h.sigma = ad::constant(f.leverett.sigma);
  h.porosity = ad::constant(f.porosity);
  h.permeability = ad::constant(f.permeability);
  return h;
}

Value ClosureHandles::normalized(const Value& s_w) const {
  return closure::core::normalized_saturation(s_w, s_wc, s_nwr);
}

namespace {
Value clamp_unit(const Value& S) {
  return ad::clamp_max(ad::clamp_min(S, closure::kEps), 1.0 - closure::kEps);
}
} // namespace

Value ClosureHandles::krw(const Value& S) const {
  return closure::core::krw(clamp_unit(S), krw_max, n_w1, n_w2);
}

Value ClosureHandles::krnw(const Value& S) const {
  return closure::core::krnw(clamp_unit(S), krnw_max, n_nw1, n_nw2);
}

Value ClosureHandles::leverett_j(const Value& S) const {
  return closure::core::leverett_j(clamp_unit(S), J1, J2, S_eq);
}

Value ClosureHandles::capillary_pressure(const Value& S) const {
  return sigma * ad::sqrt(porosity / permeability) * leverett_j(S);
}

// --- batches -----------------------------------------------------------------

PointBatch PointBatch::from(const Mat& pts) {
  if (pts.cols() != 4) throw std::invalid_argument("PointBatch: expected 4 columns");
  PointBatch b;
  b.n = pts.rows();
  b.x = ad::leaf(Mat(pts.col(0)));
  b.y = ad::leaf(Mat(pts.col(1)));
  b.z = ad::leaf(Mat(pts.col(2)));
  b.t = ad::leaf(Mat(pts.col(3)));
  return b;
}

Value PointBatch::input() const { return ad::hstack({x, y, z, t}); }

Value dof(const Value& out, const Value& leaf) {
  return ad::gradients(ad::sum(out), {leaf})[0];
}

// --- kappa constants ----------------------------------------------------------

std::pair<double, double> kappa_constants(const FlowProblem& p) {
  const double kp = 0.5 * (p.p_in + p.p_out);
  const double kr = p.t_max / (0.5 * (p.fluids.rho_w + p.fluids.rho_nw));
  return {kp, kr};
}

Value threshold(const Value& e, double tau, double w) {
  return ad::relu(e - tau) * w;
}

// --- field evaluation ----------------------------------------------------------

StateEval PinnContext::eval_matrix(const Mat& pts) const {
  if (matrix_field) return matrix_field(matrix_cl, pts);
  StateEval e;
  e.pts = PointBatch::from(pts);
  Value nin = nets->in_matrix.normalize(e.pts.input());
  Value raw_s = nets->out_sw_m.denormalize(nets->m_sw.forward(nin));
  e.s_w = net::saturation_head(raw_s, matrix_cl.s_wc, matrix_cl.s_nwr);
  e.p_nw = nets->out_p_m.denormalize(nets->m_p.forward(nin));
  e.S = matrix_cl.normalized(e.s_w);
  e.p_w = e.p_nw - matrix_cl.capillary_pressure(e.S);
  return e;
}

StateEval PinnContext::eval_fracture(const Mat& pts) const {
  if (fracture_field) return fracture_field(fracture_cl, pts);
  StateEval e;
  e.pts = PointBatch::from(pts);
  Value nin = nets->in_fracture.normalize(e.pts.input());
  Value raw_s = nets->out_sw_f.denormalize(nets->f_sw.forward(nin));
  e.s_w = net::saturation_head(raw_s, fracture_cl.s_wc, fracture_cl.s_nwr);
  e.p_nw = nets->out_p_f.denormalize(nets->f_p.forward(nin));
  e.S = fracture_cl.normalized(e.s_w);
  e.p_w = e.p_nw - fracture_cl.capillary_pressure(e.S);
  return e;
}

// --- residuals -----------------------------------------------------------------

namespace {

// phase residuals of the matrix conservation law at an evaluated batch;
// transfer velocities (positive into the matrix) may be attached
std::pair<Value, Value> matrix_pde(const PinnContext& ctx, const StateEval& e, const Value* v_w,
                                   const Value* v_nw) {
  const auto& fl = ctx.prob->fluids;
  const Value phi = ctx.matrix_cl.porosity;
  const Value K = ctx.matrix_cl.permeability;

  Value dswdt = dof(e.s_w, e.pts.t);
  Value krw = ctx.matrix_cl.krw(e.S);
  Value krnw = ctx.matrix_cl.krnw(e.S);

  auto divergence = [&](const Value& p, const Value& kr) {
    Value fx = kr * dof(p, e.pts.x);
    Value fy = kr * dof(p, e.pts.y);
    Value div = dof(fx, e.pts.x) + dof(fy, e.pts.y);
    if (!ctx.two_d) {
      Value fz = kr * dof(p, e.pts.z);
      div = div + dof(fz, e.pts.z);
    }
    return div;
  };

  Value res_w = fl.rho_w * (phi * dswdt - (K / fl.mu_w) * divergence(e.p_w, krw));
  Value res_nw = fl.rho_nw * (-1.0 * phi * dswdt - (K / fl.mu_nw) * divergence(e.p_nw, krnw));

  const double e_v = ctx.prob->fractures.aperture;
  if (v_w) res_w = res_w - (fl.rho_w / e_v) * 2.0 * (*v_w);
  if (v_nw) res_nw = res_nw - (fl.rho_nw / e_v) * 2.0 * (*v_nw);
  return {res_w, res_nw};
}

Value omega_of(const PinnContext& ctx, const net::MLP& omega_net, const Value& input,
               bool fracture_domain) {
  const net::Normalizer& nrm = fracture_domain ? ctx.nets->in_fracture : ctx.nets->in_matrix;
  return omega_net.forward(nrm.normalize(input));
}

ResidualPair weighted_pair(const Value& res_w, const Value& res_nw, const Value& omega,
                           double kappa_r) {
  ResidualPair out;
  out.water = ad::mean(ad::abs(res_w)) / kappa_r;
  out.nonwetting = ad::mean(ad::abs(res_nw)) / kappa_r;
  // pointwise weighting before averaging
  Value pointwise = (ad::abs(res_w) + ad::abs(res_nw)) / kappa_r;
  out.weighted = ad::mean(pointwise * ad::exp(omega));
  out.omega_constraint = ad::mean(ad::abs(omega));
  return out;
}

} // namespace

ResidualPair residual_matrix(const PinnContext& ctx, const Mat& pts) {
  StateEval e = ctx.eval_matrix(pts);
  auto [res_w, res_nw] = matrix_pde(ctx, e, nullptr, nullptr);
  ad::check_finite(res_w, "matrix residual (water)");
  ad::check_finite(res_nw, "matrix residual (non-wetting)");
  Value omega = omega_of(ctx, ctx.nets->w_m, e.pts.input(), false);
  return weighted_pair(res_w, res_nw, omega, ctx.kappa_r);
}

TransferEval transfer_velocities(const PinnContext& ctx, const Mat& pts) {
  TransferEval te;
  te.matrix = ctx.eval_matrix(pts);
  te.fracture = ctx.eval_fracture(pts);
  const auto& fl = ctx.prob->fluids;
  const double e_v = ctx.prob->fractures.aperture;
  const Value K_perp = ctx.matrix_cl.permeability; // interactions set by the matrix

  // phase-potential upwinded relative mobilities, each side with its own curves
  Value krw_m = ctx.matrix_cl.krw(te.matrix.S);
  Value krw_f = ctx.fracture_cl.krw(te.fracture.S);
  Value krnw_m = ctx.matrix_cl.krnw(te.matrix.S);
  Value krnw_f = ctx.fracture_cl.krnw(te.fracture.S);
  Mat up_w = ad::gt_mask(te.matrix.p_w, te.fracture.p_w);
  Mat up_nw = ad::gt_mask(te.matrix.p_nw, te.fracture.p_nw);
  Value lam_w = ad::where(up_w, krw_m, krw_f) / fl.mu_w;
  Value lam_nw = ad::where(up_nw, krnw_m, krnw_f) / fl.mu_nw;

  te.v_w = -1.0 * K_perp * lam_w * (te.matrix.p_w - te.fracture.p_w) / (e_v / 2.0);
  te.v_nw = -1.0 * K_perp * lam_nw * (te.matrix.p_nw - te.fracture.p_nw) / (e_v / 2.0);
  if (ctx.xi_field.defined()) {
    te.v_w = te.v_w * ctx.xi_field;
    te.v_nw = te.v_nw * ctx.xi_field;
  }
  return te;
}

ResidualPair residual_matrix_fracture(const PinnContext& ctx, const Mat& pts,
                                      const Value& /*xi: carried in ctx.xi_field*/) {
  TransferEval te = transfer_velocities(ctx, pts);
  auto [res_w, res_nw] = matrix_pde(ctx, te.matrix, &te.v_w, &te.v_nw);
  ad::check_finite(res_w, "matrix-fracture residual (water)");
  Value omega = omega_of(ctx, ctx.nets->w_mf, te.matrix.pts.input(), false);
  return weighted_pair(res_w, res_nw, omega, ctx.kappa_r);
}

ResidualPair residual_fracture(const PinnContext& ctx, const Mat& pts, bool with_transfer) {
  StateEval e = ctx.eval_fracture(pts);
  const auto& fl = ctx.prob->fluids;
  const Value phiF = ctx.fracture_cl.porosity;
  const Value K_F = ctx.fracture_cl.permeability;
  const Eigen::Vector3d n = ctx.fracture_normal.normalized();

  Value dswdt = dof(e.s_w, e.pts.t);
  Value krw = ctx.fracture_cl.krw(e.S);
  Value krnw = ctx.fracture_cl.krnw(e.S);

  // in-plane divergence of kr * grad_parallel(p) for a constant plane normal
  auto div_parallel = [&](const Value& p, const Value& kr) {
    std::vector<Value> axes{e.pts.x, e.pts.y};
    std::vector<double> ncomp{n.x(), n.y()};
    if (!ctx.two_d) {
      axes.push_back(e.pts.z);
      ncomp.push_back(n.z());
    }
    std::vector<Value> dp(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) dp[i] = dof(p, axes[i]);

    Value ndotgrad = ncomp[0] * dp[0];
    for (std::size_t i = 1; i < axes.size(); ++i) ndotgrad = ndotgrad + ncomp[i] * dp[i];

    Value div;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      if (std::abs(ncomp[i]) > 1.0 - 1e-12) continue; // no variation along the normal
      Value gpar = dp[i] - ncomp[i] * ndotgrad;
      Value vi = kr * gpar;
      Value term = dof(vi, axes[i]);
      if (std::abs(ncomp[i]) > 1e-12) {
        Value corr = ncomp[0] * dof(vi, axes[0]);
        for (std::size_t j = 1; j < axes.size(); ++j) corr = corr + ncomp[j] * dof(vi, axes[j]);
        term = term - ncomp[i] * corr;
      }
      div = div.defined() ? div + term : term;
    }
    return div;
  };

  Value res_w = fl.rho_w * (phiF * dswdt - (K_F / fl.mu_w) * div_parallel(e.p_w, krw));
  Value res_nw =
      fl.rho_nw * (-1.0 * phiF * dswdt - (K_F / fl.mu_nw) * div_parallel(e.p_nw, krnw));

  if (with_transfer) {
    // opposite sign of the matrix-side term at the same points
    TransferEval te = transfer_velocities(ctx, pts);
    const double e_v = ctx.prob->fractures.aperture;
    res_w = res_w + (fl.rho_w / e_v) * 2.0 * te.v_w;
    res_nw = res_nw + (fl.rho_nw / e_v) * 2.0 * te.v_nw;
  }
  ad::check_finite(res_w, "fracture residual (water)");
  Value omega = omega_of(ctx, ctx.nets->w_f, e.pts.input(), true);
  return weighted_pair(res_w, res_nw, omega, ctx.kappa_r);
}

// --- initial and boundary conditions -------------------------------------------

std::vector<std::pair<std::string, Value>> loss_ic_bc(const PinnContext& ctx,
                                                      const geom::CollocationSet& colloc) {
  std::vector<std::pair<std::string, Value>> out;
  const auto& p = *ctx.prob;

  auto add = [&](const std::string& name, Value v) { out.emplace_back(name, std::move(v)); };

  if (colloc.initial_matrix.rows() > 0) {
    StateEval e = ctx.eval_matrix(colloc.initial_matrix);
    add("L_IC_sw_M", ad::mae(e.s_w, ctx.matrix_cl.s_wc));
    add("L_IC_pnw_M", ad::mae(e.p_nw, ad::constant(p.p_init)) / ctx.kappa_p);
  }
  if (colloc.inlet.rows() > 0) {
    StateEval e = ctx.eval_matrix(colloc.inlet);
    add("L_BC0_sw_M", ad::mae(e.s_w, 1.0 - ctx.matrix_cl.s_nwr));
    // the wetting phase is held at p_in; expressed through p_w = p_nw - pc
    add("L_BC0_pnw_M", ad::mae(e.p_w, ad::constant(p.p_in)) / ctx.kappa_p);
  }
  if (colloc.outlet.rows() > 0) {
    StateEval e = ctx.eval_matrix(colloc.outlet);
    add("L_BC1_pnw_M", ad::mae(e.p_nw, ad::constant(p.p_out)) / ctx.kappa_p);
  }
  if (colloc.radial.rows() > 0) {
    StateEval e = ctx.eval_matrix(colloc.radial);
    Value grad_sum = dof(e.p_nw, e.pts.x);
    if (!ctx.two_d) grad_sum = grad_sum + dof(e.p_nw, e.pts.z);
    add("L_BCr_M", ad::mean(ad::abs(grad_sum)) / ctx.kappa_p);
  }

  if (colloc.initial_fracture.rows() > 0) {
    StateEval e = ctx.eval_fracture(colloc.initial_fracture);
    add("L_IC_sw_F", ad::mae(e.s_w, ctx.fracture_cl.s_wc));
    add("L_IC_pnw_F", ad::mae(e.p_nw, ad::constant(p.p_init)) / ctx.kappa_p);
  }
  if (colloc.fracture_inlet.rows() > 0) {
    StateEval e = ctx.eval_fracture(colloc.fracture_inlet);
    add("L_BC0_sw_F", ad::mae(e.s_w, 1.0 - ctx.fracture_cl.s_nwr));
    add("L_BC0_pnw_F", ad::mae(e.p_w, ad::constant(p.p_in)) / ctx.kappa_p);
  }
  if (colloc.fracture_outlet.rows() > 0) {
    StateEval e = ctx.eval_fracture(colloc.fracture_outlet);
    add("L_BC1_pnw_F", ad::mae(e.p_nw, ad::constant(p.p_out)) / ctx.kappa_p);
  }
  return out;
}

// --- pre-training --------------------------------------------------------------

PretrainTargets pretrain_targets(const FlowProblem& prob, const Mat& pts,
                                 bool connected_to_inlet) {
  PretrainTargets t;
  t.sw.resize(pts.rows());
  t.pnw.resize(pts.rows());
  if (!connected_to_inlet) {
    t.sw.setConstant(prob.fracture.corey.s_wc);
    t.pnw.setConstant(prob.p_init);
    return t;
  }
  const double u_t =
      fdsim::total_velocity(prob.fracture, prob.fracture.permeability, prob.fluids.mu_w,
                            prob.p_in - prob.p_out, prob.geometry.length);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double arc = pts(i, 1); // fractures run along the flow axis
    const double frac = arc / prob.geometry.length;
    t.pnw[i] = prob.p_in + (prob.p_out - prob.p_in) * frac;
    t.sw[i] = fdsim::bl_profile(prob.fracture, prob.fluids, u_t, prob.fracture.porosity,
                                pts(i, 3), {arc})[0];
  }
  return t;
}

PretrainLosses pretrain_losses(const PinnContext& ctx, const Mat& pts,
                               const PretrainTargets& targets, const Value& xi_field) {
  PretrainLosses out;
  StateEval e = ctx.eval_matrix(pts);
  Value xi = xi_field.defined() ? xi_field : ad::constant(Mat::Ones(pts.rows(), 1));
  Value dsw = (e.s_w - ad::constant(Mat(targets.sw))) * xi;
  Value dpn = (e.p_nw - ad::constant(Mat(targets.pnw))) * xi;
  out.sw = ad::mean(ad::abs(dsw));
  out.pnw = ad::mean(ad::abs(dpn)) / ctx.kappa_p;
  out.xi = ad::mae(xi, ad::constant(1.0));
  return out;
}

// --- data losses ----------------------------------------------------------------

Value loss_data_rf(const PinnContext& ctx, const Mat& matrix_spatial, double t_r,
                   double observed_rf) {
  Mat pts = matrix_spatial;
  pts.col(3).setConstant(t_r);
  StateEval e = ctx.eval_matrix(pts);
  Value rf = ad::mean(e.s_w);
  return ad::abs(rf - observed_rf);
}

Value loss_data_insitu(const PinnContext& ctx, const Mat& pts, const Eigen::VectorXd& sw_obs) {
  StateEval e = ctx.eval_matrix(pts);
  return ad::mae(e.s_w, ad::constant(Mat(sw_obs)));
}

Value loss_data_injection(const PinnContext& ctx, const geom::CollocationSet& colloc,
                          const geom::InletAreas& areas, double t_q, double observed_rate) {
  if (areas.fracture > 0.0 && colloc.fracture_inlet.rows() == 0)
    throw std::runtime_error("loss_data_injection: fracture inlet area without inlet points");
  const auto& fl = ctx.prob->fluids;

  Mat mpts = colloc.inlet;
  mpts.col(3).setConstant(t_q);
  StateEval em = ctx.eval_matrix(mpts);
  Value uym = -1.0 * (ctx.matrix_cl.permeability * ctx.matrix_cl.krw(em.S) / fl.mu_w) *
              dof(em.p_w, em.pts.y);
  Value q = areas.matrix * ad::mean(uym);

  if (colloc.fracture_inlet.rows() > 0) {
    Mat fpts = colloc.fracture_inlet;
    fpts.col(3).setConstant(t_q);
    StateEval ef = ctx.eval_fracture(fpts);
    Value uyf = -1.0 * (ctx.fracture_cl.permeability * ctx.fracture_cl.krw(ef.S) / fl.mu_w) *
                dof(ef.p_w, ef.pts.y);
    q = q + areas.fracture * ad::mean(uyf);
  }
  return ad::abs(q - observed_rate);
}

Value total_loss(const std::vector<std::pair<std::string, Value>>& terms,
                 const LossWeights& weights) {
  Value total;
  for (const auto& [name, term] : terms) {
    Value weighted = term * weights.get(name);
    total = total.defined() ? total + weighted : weighted;
  }
  if (!total.defined()) throw std::invalid_argument("total_loss: no active terms");
  return total;
}

} // namespace fracflow::pinn
