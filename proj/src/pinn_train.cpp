#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include "fracflow/pinn.hpp"

namespace fracflow::pinn {

// --- inverse parameters --------------------------------------------------------

double inverse_value(double gamma_init, double kappa, double theta) {
  return gamma_init * std::exp(kappa * theta);
}

double randomize_initial(double gamma_base, double xi_m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return gamma_base * std::pow(10.0, u(rng) * xi_m);
}

int InverseParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return static_cast<int>(i);
  return -1;
}

Value InverseParamSet::value(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw std::invalid_argument("InverseParamSet: unknown parameter " + name);
  const auto& e = entries[i];
  return e.init * ad::exp(ad::constant(e.kappa) * e.theta);
}

double InverseParamSet::value_double(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw std::invalid_argument("InverseParamSet: unknown parameter " + name);
  const auto& e = entries[i];
  return inverse_value(e.init, e.kappa, e.theta.val()(0, 0));
}

std::vector<Value> InverseParamSet::thetas() const {
  std::vector<Value> out;
  for (const auto& e : entries) out.push_back(e.theta);
  return out;
}

// --- optimizer -------------------------------------------------------------------

namespace {

// first-order adaptive-moment update with decoupled weight decay
class Adam {
 public:
  explicit Adam(std::vector<Value> params) : params_(std::move(params)) {
    for (const auto& p : params_) {
      m_.push_back(Mat::Zero(p.rows(), p.cols()));
      v_.push_back(Mat::Zero(p.rows(), p.cols()));
    }
  }

  const std::vector<Value>& params() const { return params_; }

  void step(const std::vector<Mat>& grads, double lr, double weight_decay) {
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
      v_[i] = (b2 * v_[i].array() + (1.0 - b2) * grads[i].array().square()).matrix();
      Mat mhat = m_[i] / c1;
      Mat vhat = v_[i] / c2;
      Mat upd = (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
      Mat next = params_[i].val() - lr * upd - lr * weight_decay * params_[i].val();
      params_[i].set_value(next);
    }
  }

 private:
  std::vector<Value> params_;
  std::vector<Mat> m_, v_;
  int t_ = 0;
};

Eigen::RowVectorXd row4(double a, double b, double c, double d) {
  Eigen::RowVectorXd r(4);
  r << a, b, c, d;
  return r;
}

} // namespace

// --- trainer ----------------------------------------------------------------------

Trainer::Trainer(const FlowProblem& prob, const geom::CollocationConfig& ccfg,
                 const net::NetworkSetConfig& ncfg, const TrainConfig& tcfg)
    : prob_(prob), ccfg_(ccfg), ncfg_(ncfg), tcfg_(tcfg), nets_(ncfg, tcfg.seed), rng_(tcfg.seed) {
  prob_.validate();
  if (tcfg_.inverse) {
    const Eigen::VectorXd base = fdsim::pack_inverse_params(prob_);
    for (int i = 0; i < base.size(); ++i) {
      InverseParam e;
      e.name = fdsim::kInverseParamNames[i];
      e.base = base[i];
      e.kappa = tcfg_.kappa;
      // saturation bounds leave less randomization room
      e.xi_m = e.name == "s_nwr" ? std::min(tcfg_.xi_m, 0.2) : tcfg_.xi_m;
      e.init = randomize_initial(e.base, e.xi_m, rng_);
      e.theta = ad::leaf(0.0);
      inverse_.entries.push_back(std::move(e));
    }
  }
}

FlowProblem Trainer::problem_with_inverse() const {
  if (!tcfg_.inverse) return prob_;
  Eigen::VectorXd gamma(inverse_.entries.size());
  for (std::size_t i = 0; i < inverse_.entries.size(); ++i)
    gamma[i] = inverse_.value_double(inverse_.entries[i].name);
  return fdsim::apply_inverse_params(prob_, gamma);
}

PinnContext Trainer::context() const {
  PinnContext ctx;
  ctx.prob = &prob_;
  ctx.nets = &nets_;
  ctx.two_d = prob_.geometry.kind == geom::DomainKind::slab2d;
  auto [kp, kr] = kappa_constants(prob_);
  ctx.kappa_p = kp;
  ctx.kappa_r = kr;
  if (!prob_.fractures.fractures.empty() && prob_.fractures.fractures[0].has_plane)
    ctx.fracture_normal = prob_.fractures.fractures[0].plane.normal;

  ctx.matrix_cl = ClosureHandles::constants(prob_.matrix);
  ctx.fracture_cl = ClosureHandles::constants(prob_.fracture);
  if (tcfg_.inverse) {
    auto& m = ctx.matrix_cl;
    m.krw_max = ad::clamp_max(inverse_.value("krw_max"), 1.0);
    m.krnw_max = ad::clamp_max(inverse_.value("krnw_max"), 1.0);
    m.n_w1 = inverse_.value("n_w1");
    m.n_w2 = inverse_.value("n_w2");
    m.n_nw1 = inverse_.value("n_nw1");
    m.n_nw2 = inverse_.value("n_nw2");
    m.s_nwr = ad::clamp_max(inverse_.value("s_nwr"), 0.9 * (1.0 - prob_.matrix.corey.s_wc));
    m.J1 = inverse_.value("J1");
    m.J2 = inverse_.value("J2");
    // fracture transmissibility through K_F; its weak pc scales along
    auto& f = ctx.fracture_cl;
    f.permeability = inverse_.value("K_F");
    f.sigma = ad::constant(prob_.matrix.leverett.sigma * 1e-3);
  }
  ctx.xi_field = xi_field_;
  return ctx;
}

Mat Trainer::predict_matrix(const Mat& pts) const {
  ad::TapeScope scope;
  PinnContext ctx = context();
  StateEval e = ctx.eval_matrix(pts);
  Mat out(pts.rows(), 3);
  out.col(0) = e.s_w.val();
  out.col(1) = e.p_nw.val();
  out.col(2) = e.p_w.val();
  return out;
}

TrainResult Trainer::run(const Observations* obs) {
  const auto t_start = std::chrono::steady_clock::now();
  TrainResult result;
  result.net_config = ncfg_;

  geom::CollocationSet colloc = geom::build_collocation(prob_.geometry, prob_.fractures, ccfg_, rng_);

  // input statistics over each domain's sample rows
  {
    std::vector<const Mat*> mparts{&colloc.matrix, &colloc.inlet, &colloc.outlet, &colloc.radial,
                                   &colloc.initial_matrix};
    Eigen::Index n = 0;
    for (auto* m : mparts) n += m->rows();
    Mat all(n, 4);
    Eigen::Index at = 0;
    for (auto* m : mparts) {
      all.middleRows(at, m->rows()) = *m;
      at += m->rows();
    }
    nets_.in_matrix = net::Normalizer::fit(all);

    std::vector<const Mat*> fparts{&colloc.fracture, &colloc.fracture_inlet,
                                   &colloc.fracture_outlet, &colloc.initial_fracture};
    n = 0;
    for (auto* m : fparts) n += m->rows();
    if (n > 0) {
      Mat allf(n, 4);
      at = 0;
      for (auto* m : fparts) {
        allf.middleRows(at, m->rows()) = *m;
        at += m->rows();
      }
      nets_.in_fracture = net::Normalizer::fit(allf);
    } else {
      nets_.in_fracture = nets_.in_matrix;
    }
  }
  // output scales from the problem statement
  {
    const auto& c = prob_.matrix.corey;
    const double wm = 1.0 - c.s_wc - c.s_nwr;
    nets_.out_sw_m = net::Normalizer::manual(row4(c.s_wc + 0.5 * wm, 0, 0, 0).leftCols(1),
                                             row4(0.5 * wm, 1, 1, 1).leftCols(1));
    const auto& cf = prob_.fracture.corey;
    const double wf = 1.0 - cf.s_wc - cf.s_nwr;
    nets_.out_sw_f = net::Normalizer::manual(row4(cf.s_wc + 0.5 * wf, 0, 0, 0).leftCols(1),
                                             row4(0.5 * wf, 1, 1, 1).leftCols(1));
    auto [kp, kr] = kappa_constants(prob_);
    const double pstd = 0.5 * (prob_.p_in - prob_.p_out);
    nets_.out_p_m = net::Normalizer::manual(row4(kp, 0, 0, 0).leftCols(1),
                                            row4(pstd, 1, 1, 1).leftCols(1));
    nets_.out_p_f = nets_.out_p_m;
  }

  if (tcfg_.xi_field && colloc.matrix_fracture.rows() > 0)
    xi_field_ = ad::leaf(Mat::Ones(colloc.matrix_fracture.rows(), 1));

  std::vector<Value> net_params = nets_.params();
  if (xi_field_.defined()) net_params.push_back(xi_field_);
  Adam opt(net_params);
  Adam opt_inverse(inverse_.thetas());

  const bool frac_connected = colloc.fracture_inlet.rows() > 0;
  PretrainTargets targets;
  if (colloc.matrix_fracture.rows() > 0)
    targets = pretrain_targets(prob_, colloc.matrix_fracture, frac_connected);

  geom::InletAreas areas;
  if (obs && obs->has_qinj())
    areas = geom::inlet_areas(prob_.geometry, prob_.fractures,
                              0.5 * prob_.geometry.length / ccfg_.resolution.y());

  const int total_epochs = tcfg_.pretrain_epochs + tcfg_.coupled_epochs;
  double ref_loss = -1.0;
  std::uniform_int_distribution<std::size_t> pick_rf(
      0, obs && obs->has_rf() ? obs->rf.t.size() - 1 : 0);
  std::uniform_int_distribution<std::size_t> pick_q(
      0, obs && obs->has_qinj() ? obs->qinj_t.size() - 1 : 0);

  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    if (epoch > 0 && tcfg_.resample_period > 0 && epoch % tcfg_.resample_period == 0) {
      colloc = geom::resample(colloc, prob_.geometry, prob_.fractures, ccfg_,
                              tcfg_.resample_fraction, epoch, tcfg_.resample_period, rng_);
      if (colloc.matrix_fracture.rows() > 0)
        targets = pretrain_targets(prob_, colloc.matrix_fracture, frac_connected);
    }

    ad::TapeScope scope;
    PinnContext ctx = context();
    const bool stage_a = epoch < tcfg_.pretrain_epochs;

    std::vector<std::pair<std::string, Value>> logged;
    std::vector<std::pair<std::string, Value>> active;
    auto log_only = [&](const std::string& n, const Value& v) { logged.emplace_back(n, v); };
    auto act = [&](const std::string& n, const Value& v) {
      logged.emplace_back(n, v);
      active.emplace_back(n, v);
    };

    if (colloc.matrix.rows() > 0) {
      ResidualPair rm = residual_matrix(ctx, colloc.matrix);
      log_only("L_w_M", rm.water);
      log_only("L_nw_M", rm.nonwetting);
      act("L_PI_M", rm.weighted);
      act("L_omega_M", rm.omega_constraint);
    }

    if (colloc.matrix_fracture.rows() > 0) {
      if (stage_a) {
        PretrainLosses pt = pretrain_losses(ctx, colloc.matrix_fracture, targets, xi_field_);
        act("L_PT_sw_MF", pt.sw);
        act("L_PT_pnw_MF", pt.pnw);
        act("L_xi_MF", pt.xi);
      } else {
        ResidualPair rmf = residual_matrix_fracture(ctx, colloc.matrix_fracture, xi_field_);
        log_only("L_w_MF", rmf.water);
        log_only("L_nw_MF", rmf.nonwetting);
        act("L_PI_MF", rmf.weighted);
        act("L_omega_MF", rmf.omega_constraint);
      }
    }

    if (colloc.fracture.rows() > 0) {
      ResidualPair rf = residual_fracture(ctx, colloc.fracture, /*with_transfer=*/!stage_a);
      log_only("L_w_F", rf.water);
      log_only("L_nw_F", rf.nonwetting);
      act("L_PI_F", rf.weighted);
      act("L_omega_F", rf.omega_constraint);
    }

    for (auto& [name, term] : loss_ic_bc(ctx, colloc)) {
      logged.emplace_back(name, term);
      active.emplace_back(name, threshold(term, tcfg_.tau, 1.0));
    }

    if (obs) {
      if (obs->has_rf()) {
        const std::size_t i = pick_rf(rng_);
        act("L_RF", loss_data_rf(ctx, colloc.matrix, obs->rf.t[i], obs->rf.rf[i]));
      }
      if (obs->has_insitu()) {
        const Eigen::Index n = obs->insitu_pts.rows();
        const Eigen::Index take = std::min<Eigen::Index>(tcfg_.insitu_subsample, n);
        Mat pts(take, 4);
        Eigen::VectorXd vals(take);
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        for (Eigen::Index i = 0; i < take; ++i) {
          const Eigen::Index j = pick(rng_);
          pts.row(i) = obs->insitu_pts.row(j);
          vals[i] = obs->insitu_sw[j];
        }
        act("L_sw", loss_data_insitu(ctx, pts, vals));
      }
      if (obs->has_qinj()) {
        const std::size_t i = pick_q(rng_);
        act("L_Qinj",
            loss_data_injection(ctx, colloc, areas, obs->qinj_t[i], obs->qinj_rate[i]));
      }
    }

    Value lt = total_loss(active, tcfg_.weights);
    const double lt_val = lt.scalar();
    if (!std::isfinite(lt_val)) {
      result.diverged = true;
      break;
    }
    if (epoch == 10) ref_loss = lt_val;
    if (ref_loss > 0.0 && lt_val > tcfg_.divergence_factor * ref_loss) {
      result.diverged = true;
      break;
    }

    // one reverse pass over everything that trains
    std::vector<Value> all_params = opt.params();
    const std::size_t n_net = all_params.size();
    for (const auto& th : inverse_.thetas()) all_params.push_back(th);
    std::vector<Value> grads = ad::gradients(lt, all_params);

    const double frac =
        total_epochs > 1 ? static_cast<double>(epoch) / (total_epochs - 1) : 0.0;
    const double lr = tcfg_.lr_start + (tcfg_.lr_end - tcfg_.lr_start) * frac;

    std::vector<Mat> gnet(n_net);
    for (std::size_t i = 0; i < n_net; ++i) gnet[i] = grads[i].val();
    opt.step(gnet, lr, tcfg_.weight_decay);

    if (tcfg_.inverse && epoch >= tcfg_.freeze_epochs) {
      std::vector<Mat> ginv(inverse_.entries.size());
      for (std::size_t i = 0; i < ginv.size(); ++i) ginv[i] = grads[n_net + i].val();
      opt_inverse.step(ginv, lr, 0.0); // reparameterized exponents carry no decay
    }

    if (epoch % std::max(1, tcfg_.history_stride) == 0 || epoch == total_epochs - 1) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.total = lt_val;
      for (const auto& [name, term] : logged) rec.terms.emplace_back(name, term.scalar());
      if (tcfg_.inverse) {
        for (const auto& e : inverse_.entries)
          rec.gammas.emplace_back(e.name, inverse_.value_double(e.name));
      }
      FlowProblem cur = problem_with_inverse();
      rec.lambda_bar = closure::lambda_area(cur.matrix, cur.fluids, 101);
      result.history.push_back(std::move(rec));
    }
  }

  result.fitted = problem_with_inverse();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

std::string TrainResult::history_csv() const {
  std::set<std::string> term_names, gamma_names;
  for (const auto& r : history) {
    for (const auto& [n, v] : r.terms) term_names.insert(n);
    for (const auto& [n, v] : r.gammas) gamma_names.insert(n);
  }
  std::ostringstream os;
  os.precision(10);
  os << "epoch,L_t";
  for (const auto& n : term_names) os << ',' << n;
  for (const auto& n : gamma_names) os << ",gamma_" << n;
  os << ",lambda_bar\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << r.total;
    for (const auto& n : term_names) {
      double v = 0.0;
      for (const auto& [tn, tv] : r.terms)
        if (tn == n) v = tv;
      os << ',' << v;
    }
    for (const auto& n : gamma_names) {
      double v = 0.0;
      for (const auto& [gn, gv] : r.gammas)
        if (gn == n) v = gv;
      os << ',' << v;
    }
    os << ',' << r.lambda_bar << '\n';
  }
  return os.str();
}

// --- curves, nmae, ensemble ---------------------------------------------------------

CurveSet sample_curves(const closure::SaturationFunctions& f, const closure::FluidProps& fl,
                       int n) {
  CurveSet c;
  for (int i = 1; i <= n; ++i) {
    const double S = static_cast<double>(i) / (n + 1);
    c.S.push_back(S);
    c.lambda.push_back(closure::cdc_lambda(S, f, fl));
    auto kr = closure::rel_perm(S, f.corey);
    c.krw.push_back(kr.krw);
    c.krnw.push_back(kr.krnw);
    c.pc.push_back(closure::capillary_pressure(S, f));
  }
  return c;
}

double nmae(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("nmae: size mismatch");
  double err = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    err += std::abs(pred[i] - truth[i]);
    scale += std::abs(truth[i]);
  }
  if (scale <= 0.0) throw std::invalid_argument("nmae: zero reference curve");
  return err / scale;
}

EnsembleResult ensemble_invert(const FlowProblem& base, const geom::CollocationConfig& ccfg,
                               const net::NetworkSetConfig& ncfg, const TrainConfig& tcfg,
                               const Observations& obs, int n_seeds, int parallelism,
                               const closure::SaturationFunctions* truth) {
  if (n_seeds < 1) throw std::invalid_argument("ensemble_invert: n_seeds must be >= 1");
  EnsembleResult out;
  out.members.resize(n_seeds);

  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n_seeds) return;
      TrainConfig cfg = tcfg;
      cfg.inverse = true;
      cfg.seed = tcfg.seed + 1000 * static_cast<std::uint64_t>(i);
      EnsembleMember& m = out.members[i];
      m.seed = cfg.seed;
      try {
        Trainer tr(base, ccfg, ncfg, cfg);
        TrainResult res = tr.run(&obs);
        m.diverged = res.diverged;
        m.curves = sample_curves(res.fitted.matrix, res.fitted.fluids);
        for (const auto& e : tr.inverse_params().entries)
          m.gammas.emplace_back(e.name, tr.inverse_params().value_double(e.name));
        if (truth) {
          CurveSet ref = sample_curves(*truth, base.fluids);
          m.nmae_lambda = nmae(m.curves.lambda, ref.lambda);
          m.nmae_pc = nmae(m.curves.pc, ref.pc);
          m.nmae_krw = nmae(m.curves.krw, ref.krw);
        }
      } catch (const std::exception&) {
        m.diverged = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int th = 0; th < std::max(1, parallelism); ++th) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  // aggregate over members that finished
  std::vector<const EnsembleMember*> ok;
  for (const auto& m : out.members)
    if (!m.diverged) ok.push_back(&m);
  if (truth && !ok.empty()) {
    double acc = 0.0;
    for (auto* m : ok) acc += m->nmae_lambda;
    out.mean_nmae_lambda = acc / ok.size();
  }
  if (ok.size() >= 2) {
    double pl = 0, pp = 0, pk = 0;
    int cnt = 0;
    for (std::size_t a = 0; a < ok.size(); ++a)
      for (std::size_t b = 0; b < ok.size(); ++b) {
        if (a == b) continue;
        pl += nmae(ok[a]->curves.lambda, ok[b]->curves.lambda);
        pp += nmae(ok[a]->curves.pc, ok[b]->curves.pc);
        pk += nmae(ok[a]->curves.krw, ok[b]->curves.krw);
        ++cnt;
      }
    out.pairwise_nmae_lambda = pl / cnt;
    out.pairwise_nmae_pc = pp / cnt;
    out.pairwise_nmae_krw = pk / cnt;
  }
  return out;
}

} // namespace fracflow::pinn
