#include <filesystem>
#include <random>
#include <sstream>

#include <json.hpp>

#include "fracflow/experiments.hpp"

namespace fracflow::cli {

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

char hexdigit(std::uint64_t v) { return "0123456789abcdef"[v & 0xf]; }

std::string hex64(std::uint64_t v) {
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = hexdigit(v);
  return s;
}

io::VoxelFile voxel_of(const fdsim::Grid& grid, const std::vector<double>& field, double time,
                       const std::string& name) {
  io::VoxelFile v;
  v.grid.nx = grid.nx;
  v.grid.ny = grid.ny;
  v.grid.nz = grid.nz;
  v.grid.spacing_x = grid.dx;
  v.grid.spacing_y = grid.dy;
  v.grid.spacing_z = grid.dz;
  v.grid.values = field;
  v.grid.mask.resize(grid.size());
  for (int c = 0; c < grid.size(); ++c)
    v.grid.mask[c] = grid.medium[c] != fdsim::Medium::inactive;
  v.origin = grid.center(0, 0, 0) - 0.5 * Eigen::Vector3d(grid.dx, grid.dy, grid.dz);
  if (grid.kind == geom::DomainKind::slab2d) v.origin.z() = -0.5 * grid.dz;
  v.time = time;
  v.value_name = name;
  return v;
}

} // namespace

void write_manifest(const ExperimentConfig& cfg, const std::string& outdir,
                    const std::string& verb) {
  nlohmann::json j;
  j["tool"] = "fracflow";
  j["version"] = 1;
  j["verb"] = verb;
  j["seed"] = cfg.seed;
  j["config_hash"] = hex64(cfg.hash());
  j["timestamp"] = static_cast<long long>(::time(nullptr));
  io::write_text(join(outdir, "manifest.json"), j.dump(2) + "\n");
}

void run_gen_colloc(const ExperimentConfig& cfg, const std::string& outdir) {
  ensure_dir(outdir);
  std::mt19937_64 rng(cfg.seed);
  geom::CollocationSet c =
      geom::build_collocation(cfg.problem.geometry, cfg.problem.fractures, cfg.colloc, rng);
  io::write_text(join(outdir, "collocation.csv"), c.csv());
  io::write_text(join(outdir, "fractures.csv"), geom::fracture_csv(cfg.problem.fractures));
  write_manifest(cfg, outdir, "gen-colloc");
}

void run_curves(const ExperimentConfig& cfg, const std::string& outdir) {
  ensure_dir(outdir);
  io::write_text(join(outdir, "curves.csv"),
                 closure::curve_csv(cfg.problem.matrix, cfg.problem.fluids));
  write_manifest(cfg, outdir, "curves");
}

void run_bl(const ExperimentConfig& cfg, const std::string& outdir) {
  ensure_dir(outdir);
  const auto& p = cfg.problem;
  const double u_t = fdsim::total_velocity(p.fracture, p.fracture.permeability, p.fluids.mu_w,
                                           p.p_in - p.p_out, p.geometry.length);
  std::ostringstream os;
  os.precision(12);
  os << "x_m";
  std::vector<double> times = cfg.fd.schedule.report_times;
  if (times.empty()) times = {0.25 * p.t_max, 0.5 * p.t_max, p.t_max};
  for (double t : times) os << ",sw_t" << t;
  os << '\n';
  const int n = 400;
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) xs[i] = (i + 0.5) * p.geometry.length / n;
  std::vector<std::vector<double>> profiles;
  for (double t : times)
    profiles.push_back(
        fdsim::bl_profile(p.fracture, p.fluids, u_t, p.fracture.porosity, t, xs));
  for (int i = 0; i < n; ++i) {
    os << xs[i];
    for (const auto& prof : profiles) os << ',' << prof[i];
    os << '\n';
  }
  io::write_text(join(outdir, "bl_profiles.csv"), os.str());
  write_manifest(cfg, outdir, "bl");
}

ForwardFDOutcome run_forward_fd(const ExperimentConfig& cfg, const std::string& outdir) {
  ensure_dir(outdir);
  ForwardFDOutcome out;
  out.grid = fdsim::build_grid(cfg.problem, cfg.fd.nx, cfg.fd.ny, cfg.fd.nz);
  out.sim = fdsim::simulate(cfg.problem, out.grid, cfg.fd.schedule);

  io::write_series_csv(join(outdir, "rf.csv"), "t_s,rf", out.sim.times, out.sim.rf);
  io::write_series_csv(join(outdir, "qinj.csv"), "t_s,q_m3_per_s", out.sim.times, out.sim.qinj);

  nlohmann::json man;
  man["snapshots"] = nlohmann::json::array();
  for (std::size_t i = 0; i < out.sim.snapshots.size(); ++i) {
    const auto& snap = out.sim.snapshots[i];
    char name[64];
    std::snprintf(name, sizeof(name), "sw_%03zu.vox", i);
    io::write_voxel(join(outdir, name), voxel_of(out.grid, snap.sw, snap.t, "sw"));
    man["snapshots"].push_back(name);
    std::snprintf(name, sizeof(name), "p_%03zu.vox", i);
    io::write_voxel(join(outdir, name), voxel_of(out.grid, snap.p, snap.t, "p_nw"));
  }
  io::write_text(join(outdir, "snapshots.json"), man.dump(2) + "\n");
  write_manifest(cfg, outdir, "forward-fd");
  return out;
}

namespace {

PinnOutcome run_pinn(const ExperimentConfig& cfg, const std::string& outdir,
                     const char* verb) {
  ensure_dir(outdir);
  PinnOutcome out;
  pinn::Observations obs;
  const bool has_obs =
      !cfg.rf_csv.empty() || !cfg.qinj_csv.empty() || !cfg.voxel_manifest.empty();
  if (has_obs)
    obs = io::load_observations({cfg.rf_csv, cfg.qinj_csv, cfg.voxel_manifest},
                                cfg.problem.geometry);

  pinn::Trainer trainer(cfg.problem, cfg.colloc, cfg.nets, cfg.train);
  out.result = trainer.run(has_obs ? &obs : nullptr);

  io::write_text(join(outdir, "history.csv"), out.result.history_csv());
  out.checkpoint_path = join(outdir, "checkpoint.json");
  trainer.networks().save(out.checkpoint_path);

  if (cfg.train.inverse) {
    nlohmann::json rep;
    for (const auto& e : trainer.inverse_params().entries) {
      rep["gamma"][e.name] = trainer.inverse_params().value_double(e.name);
      rep["gamma_init"][e.name] = e.init;
      rep["gamma_base"][e.name] = e.base;
    }
    pinn::CurveSet curves =
        pinn::sample_curves(out.result.fitted.matrix, out.result.fitted.fluids);
    rep["curves"]["S"] = curves.S;
    rep["curves"]["lambda"] = curves.lambda;
    rep["curves"]["krw"] = curves.krw;
    rep["curves"]["krnw"] = curves.krnw;
    rep["curves"]["pc_Pa"] = curves.pc;
    rep["diverged"] = out.result.diverged;
    rep["wall_seconds"] = out.result.wall_seconds;
    io::write_text(join(outdir, "inverse_report.json"), rep.dump(2) + "\n");
  }
  write_manifest(cfg, outdir, verb);
  return out;
}

} // namespace

PinnOutcome run_forward_pinn(const ExperimentConfig& cfg, const std::string& outdir) {
  ExperimentConfig c = cfg;
  c.train.inverse = false;
  return run_pinn(c, outdir, "forward-pinn");
}

PinnOutcome run_invert_pinn(const ExperimentConfig& cfg, const std::string& outdir) {
  ExperimentConfig c = cfg;
  c.train.inverse = true;
  return run_pinn(c, outdir, "invert-pinn");
}

FdNmOutcome run_invert_fd_nm(const ExperimentConfig& cfg, const std::string& outdir,
                             double wall_budget_s) {
  ensure_dir(outdir);
  pinn::Observations obs = io::load_observations({cfg.rf_csv, "", ""}, cfg.problem.geometry);
  if (!obs.has_rf()) throw ConfigError("invert-fd-nm needs observations.rf_csv");

  // same randomized starting point distribution as the PINN inverse
  std::mt19937_64 rng(cfg.seed);
  Eigen::VectorXd base = fdsim::pack_inverse_params(cfg.problem);
  Eigen::VectorXd start(base.size());
  for (int i = 0; i < base.size(); ++i) {
    const double xi_m = fdsim::kInverseParamNames[i] == "s_nwr" ? 0.2 : cfg.train.xi_m;
    start[i] = pinn::randomize_initial(base[i], xi_m, rng);
  }

  fdsim::HistMatchOptions opt;
  opt.nm.max_iter = 100000;
  const auto t0 = std::chrono::steady_clock::now();
  if (wall_budget_s > 0.0)
    opt.nm.stop = [t0, wall_budget_s]() {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >
             wall_budget_s;
    };

  FdNmOutcome out;
  fdsim::RFSeries rfs;
  rfs.t = obs.rf.t;
  rfs.rf = obs.rf.rf;
  out.result = fdsim::histmatch_fd(cfg.problem, cfg.fd.nx, cfg.fd.ny, cfg.fd.nz,
                                   cfg.fd.schedule, rfs, start, opt);

  nlohmann::json rep;
  rep["objective"] = out.result.nm.f;
  rep["iterations"] = out.result.nm.iterations;
  rep["evaluations"] = out.result.nm.evaluations;
  rep["status"] = out.result.nm.status;
  rep["failures"] = out.result.failures;
  rep["trace"] = out.result.nm.trace;
  pinn::CurveSet curves =
      pinn::sample_curves(out.result.fitted.matrix, out.result.fitted.fluids);
  rep["curves"]["S"] = curves.S;
  rep["curves"]["lambda"] = curves.lambda;
  io::write_text(join(outdir, "fdnm_report.json"), rep.dump(2) + "\n");
  write_manifest(cfg, outdir, "invert-fd-nm");
  return out;
}

pinn::EnsembleResult run_ensemble(const ExperimentConfig& cfg, const std::string& outdir,
                                  int n_seeds, int parallelism) {
  ensure_dir(outdir);
  pinn::Observations obs =
      io::load_observations({cfg.rf_csv, cfg.qinj_csv, cfg.voxel_manifest},
                            cfg.problem.geometry);
  pinn::EnsembleResult res = pinn::ensemble_invert(cfg.problem, cfg.colloc, cfg.nets, cfg.train,
                                                   obs, n_seeds, parallelism, nullptr);
  nlohmann::json rep;
  for (const auto& m : res.members) {
    nlohmann::json jm;
    jm["seed"] = m.seed;
    jm["diverged"] = m.diverged;
    for (const auto& [n, v] : m.gammas) jm["gamma"][n] = v;
    jm["lambda"] = m.curves.lambda;
    jm["pc_Pa"] = m.curves.pc;
    jm["krw"] = m.curves.krw;
    rep["members"].push_back(jm);
  }
  rep["pairwise_nmae_lambda"] = res.pairwise_nmae_lambda;
  rep["pairwise_nmae_pc"] = res.pairwise_nmae_pc;
  rep["pairwise_nmae_krw"] = res.pairwise_nmae_krw;
  io::write_text(join(outdir, "ensemble.json"), rep.dump(2) + "\n");
  write_manifest(cfg, outdir, "ensemble");
  return res;
}

void run_denoise(const std::string& in_vox, const std::string& out_vox) {
  io::VoxelFile v = io::read_voxel(in_vox);
  v.grid = denoise::denoise3d(v.grid);
  io::write_voxel(out_vox, v);
}

void run_add_noise(const ExperimentConfig& cfg, const std::string& in_vox,
                   const std::string& out_vox) {
  io::VoxelFile v = io::read_voxel(in_vox);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  for (int c = 0; c < v.grid.size(); ++c) {
    if (!v.grid.mask.empty() && !v.grid.mask[c]) continue;
    v.grid.values[c] = std::clamp(v.grid.values[c] + noise(rng), 0.0, 1.0);
  }
  io::write_voxel(out_vox, v);
}

} // namespace fracflow::cli
