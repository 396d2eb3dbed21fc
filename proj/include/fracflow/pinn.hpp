#pragma once

// Physics-informed training: the full loss ledger over matrix, fracture
// and matrix-fracture collocation sets, two-stage (pre-training then
// fully coupled) optimization, inverse parameter estimation through an
// exponential reparameterization, and ensemble uncertainty runs.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fracflow/autodiff.hpp"
#include "fracflow/fdsim.hpp"
#include "fracflow/geometry.hpp"
#include "fracflow/network.hpp"
#include "fracflow/problem.hpp"

namespace fracflow::pinn {

using ad::Mat;
using ad::Value;

// --- differentiable closure parameters --------------------------------------

struct ClosureHandles {
  Value krw_max, krnw_max, n_w1, n_w2, n_nw1, n_nw2, s_wc, s_nwr;
  Value J1, J2, S_eq, sigma;
  Value porosity, permeability;

  static ClosureHandles constants(const closure::SaturationFunctions& f);

  Value normalized(const Value& s_w) const; // (s - swc)/(1 - snwr - swc)
  Value krw(const Value& S) const;
  Value krnw(const Value& S) const;
  Value leverett_j(const Value& S) const;   // S clamped to [eps, 1-eps] first
  Value capillary_pressure(const Value& S) const;
};

// --- batches and field evaluations ------------------------------------------

struct PointBatch {
  Value x, y, z, t; // leaves, N x 1
  Eigen::Index n = 0;

  static PointBatch from(const Mat& pts); // pts: N x 4
  Value input() const;                    // N x 4
};

// per-sample derivative of a column output with respect to one leaf
Value dof(const Value& out, const Value& leaf);

struct StateEval {
  PointBatch pts;
  Value s_w;  // physical saturation after the bounded head
  Value p_nw; // Pa
  Value p_w;  // p_nw - pc(s_w)
  Value S;    // normalized saturation
};

// --- configuration -----------------------------------------------------------

struct InverseParam {
  std::string name;
  double base = 1.0;      // gamma_i*
  double init = 1.0;      // gamma_i after randomization
  double kappa = 0.5;
  double xi_m = 0.6;
  Value theta;            // trainable exponent, initialized to zero
};

struct InverseParamSet {
  std::vector<InverseParam> entries;

  bool active() const { return !entries.empty(); }
  int index_of(const std::string& name) const;
  Value value(const std::string& name) const; // init * exp(kappa * theta)
  double value_double(const std::string& name) const;
  std::vector<Value> thetas() const;
};

// gamma = gamma_i * exp(kappa * theta)
double inverse_value(double gamma_init, double kappa, double theta);
// gamma_i = gamma_i* x 10^(xi x xi_m), xi ~ U(-1, 1)
double randomize_initial(double gamma_base, double xi_m, std::mt19937_64& rng);

struct LossWeights {
  std::map<std::string, double> w;
  double get(const std::string& name) const {
    auto it = w.find(name);
    return it == w.end() ? 1.0 : it->second;
  }
};

struct TrainConfig {
  int pretrain_epochs = 2000;
  int coupled_epochs = 13000;
  int freeze_epochs = 2000; // inverse parameters held at init
  double lr_start = 3e-4;
  double lr_end = 1e-4;
  double weight_decay = 1e-4;
  double tau = 0.003; // IC/BC error threshold
  std::int64_t resample_period = 10;
  double resample_fraction = 0.33;
  int insitu_subsample = 25000;
  double divergence_factor = 1e6;
  std::uint64_t seed = 1;
  bool inverse = false;
  bool xi_field = false; // trainable fracture uncertainty multipliers
  double kappa = 0.5;
  double xi_m = 0.6;
  int history_stride = 10; // record the breakdown every n epochs
  LossWeights weights;
};

struct Observations {
  fdsim::RFSeries rf;                        // observed mean matrix saturation
  std::vector<double> qinj_t, qinj_rate;     // m^3/s
  Mat insitu_pts;                            // N x 4 sample coordinates
  Eigen::VectorXd insitu_sw;

  bool has_rf() const { return !rf.t.empty(); }
  bool has_qinj() const { return !qinj_t.empty(); }
  bool has_insitu() const { return insitu_pts.rows() > 0; }
};

// --- loss assembly -----------------------------------------------------------

using LossBreakdown = std::vector<std::pair<std::string, double>>;

// kappa_p = (p_in + p_out)/2; kappa_r = t_max / ((rho_w + rho_nw)/2)
std::pair<double, double> kappa_constants(const FlowProblem& p);

// max(0, e - tau) * w
Value threshold(const Value& e, double tau, double w);

struct PinnContext {
  const FlowProblem* prob = nullptr;
  const net::NetworkSet* nets = nullptr;
  ClosureHandles matrix_cl;
  ClosureHandles fracture_cl;
  double kappa_p = 1.0;
  double kappa_r = 1.0;
  Eigen::Vector3d fracture_normal = Eigen::Vector3d::UnitX();
  bool two_d = true;  // slab2d: no z derivatives
  Value xi_field;     // optional transfer multipliers (undefined = ones)

  // test seams: closed-form fields instead of the networks
  std::function<StateEval(const ClosureHandles&, const Mat&)> matrix_field;
  std::function<StateEval(const ClosureHandles&, const Mat&)> fracture_field;

  StateEval eval_matrix(const Mat& pts) const;
  StateEval eval_fracture(const Mat& pts) const;
};

struct ResidualPair {
  Value water;
  Value nonwetting;
  Value weighted; // (L_w + L_nw) . e^omega, averaged
  Value omega_constraint;
};

// plain matrix PDE residuals; when transfer=true the Eq.(8)-(9) exchange
// with the fracture field enters and the omega^MF network weights points
ResidualPair residual_matrix(const PinnContext& ctx, const Mat& pts);
ResidualPair residual_matrix_fracture(const PinnContext& ctx, const Mat& pts,
                                      const Value& xi_field);
ResidualPair residual_fracture(const PinnContext& ctx, const Mat& pts, bool with_transfer);

// per-point transfer velocities at paired coordinates (positive into the matrix)
struct TransferEval {
  Value v_w, v_nw;          // m/s
  StateEval matrix, fracture;
};
TransferEval transfer_velocities(const PinnContext& ctx, const Mat& pts);

std::vector<std::pair<std::string, Value>> loss_ic_bc(const PinnContext& ctx,
                                                      const geom::CollocationSet& colloc);

struct PretrainTargets {
  Eigen::VectorXd sw;  // s_w^{F,BL} per matrix_fracture row
  Eigen::VectorXd pnw; // linear pressure drop per row
};
PretrainTargets pretrain_targets(const FlowProblem& prob, const Mat& pts,
                                 bool connected_to_inlet = true);

struct PretrainLosses {
  Value sw;
  Value pnw;
  Value xi;
};
PretrainLosses pretrain_losses(const PinnContext& ctx, const Mat& pts,
                               const PretrainTargets& targets, const Value& xi_field);

Value loss_data_rf(const PinnContext& ctx, const Mat& matrix_spatial, double t_r,
                   double observed_rf);
Value loss_data_insitu(const PinnContext& ctx, const Mat& pts, const Eigen::VectorXd& sw_obs);
Value loss_data_injection(const PinnContext& ctx, const geom::CollocationSet& colloc,
                          const geom::InletAreas& areas, double t_q, double observed_rate);

Value total_loss(const std::vector<std::pair<std::string, Value>>& terms,
                 const LossWeights& weights);

// --- training ----------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double total = 0.0;
  LossBreakdown terms;
  std::vector<std::pair<std::string, double>> gammas;
  double lambda_bar = 0.0;
};

struct TrainResult {
  net::NetworkSetConfig net_config;
  std::vector<EpochRecord> history;
  bool diverged = false;
  FlowProblem fitted; // problem with final inverse parameters applied
  double wall_seconds = 0.0;

  std::string history_csv() const;
};

class Trainer {
 public:
  Trainer(const FlowProblem& prob, const geom::CollocationConfig& ccfg,
          const net::NetworkSetConfig& ncfg, const TrainConfig& tcfg);

  TrainResult run(const Observations* obs = nullptr);

  const net::NetworkSet& networks() const { return nets_; }
  net::NetworkSet& networks() { return nets_; }
  const InverseParamSet& inverse_params() const { return inverse_; }

  // matrix-field saturation/pressure on arbitrary physical points
  Mat predict_matrix(const Mat& pts) const; // columns: s_w, p_nw, p_w

 private:
  FlowProblem prob_;
  geom::CollocationConfig ccfg_;
  net::NetworkSetConfig ncfg_;
  TrainConfig tcfg_;
  net::NetworkSet nets_;
  InverseParamSet inverse_;
  Value xi_field_;
  std::mt19937_64 rng_;

  PinnContext context() const;
  FlowProblem problem_with_inverse() const;
};

// sampled constitutive curves on a fixed normalized-saturation grid
struct CurveSet {
  std::vector<double> S;
  std::vector<double> lambda, krw, krnw, pc;
};
CurveSet sample_curves(const closure::SaturationFunctions& f, const closure::FluidProps& fl,
                       int n = 99);

double nmae(const std::vector<double>& pred, const std::vector<double>& truth);

struct EnsembleMember {
  std::uint64_t seed = 0;
  bool diverged = false;
  CurveSet curves;
  std::vector<std::pair<std::string, double>> gammas;
  double nmae_lambda = -1.0, nmae_pc = -1.0, nmae_krw = -1.0; // vs truth when known
};

struct EnsembleResult {
  std::vector<EnsembleMember> members;
  double mean_nmae_lambda = -1.0;
  double pairwise_nmae_lambda = -1.0;
  double pairwise_nmae_pc = -1.0;
  double pairwise_nmae_krw = -1.0;
};

EnsembleResult ensemble_invert(const FlowProblem& base, const geom::CollocationConfig& ccfg,
                               const net::NetworkSetConfig& ncfg, const TrainConfig& tcfg,
                               const Observations& obs, int n_seeds, int parallelism,
                               const closure::SaturationFunctions* truth = nullptr);

} // namespace fracflow::pinn
