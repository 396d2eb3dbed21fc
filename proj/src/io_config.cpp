#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fracflow/config.hpp"
#include "fracflow/io.hpp"
#include "fracflow/units.hpp"

namespace fracflow::cli {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
T field(const json& j, const std::string& key, const T& def) {
  if (!j.contains(key) || j.at(key).is_null()) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("field '" + key + "': " + e.what());
  }
}

geom::DomainKind parse_kind(const std::string& s) {
  if (s == "slab2d") return geom::DomainKind::slab2d;
  if (s == "cylinder3d") return geom::DomainKind::cylinder3d;
  throw ConfigError("geometry.kind must be 'slab2d' or 'cylinder3d', got '" + s + "'");
}

closure::CoreyParams parse_corey(const json& j, const std::string& where) {
  check_keys(j, {"krw_max", "krnw_max", "n_w1", "n_w2", "n_nw1", "n_nw2", "s_wc", "s_nwr"},
             where);
  closure::CoreyParams c;
  c.krw_max = field(j, "krw_max", 1.0);
  c.krnw_max = field(j, "krnw_max", 1.0);
  c.n_w1 = field(j, "n_w1", 1.0);
  c.n_w2 = field(j, "n_w2", 1.0);
  c.n_nw1 = field(j, "n_nw1", 1.0);
  c.n_nw2 = field(j, "n_nw2", 1.0);
  c.s_wc = field(j, "s_wc", 0.0);
  c.s_nwr = field(j, "s_nwr", 0.0);
  return c;
}

closure::LeverettParams parse_leverett(const json& j, const std::string& where) {
  check_keys(j, {"J1", "J2", "S_eq", "sigma_N_m"}, where);
  closure::LeverettParams l;
  l.J1 = field(j, "J1", 0.0);
  l.J2 = field(j, "J2", 0.0);
  l.S_eq = field(j, "S_eq", 1.0 - closure::kEps);
  l.sigma = field(j, "sigma_N_m", 0.0);
  return l;
}

} // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }
  check_keys(j, {"problem", "collocation", "network", "training", "fd", "observations",
                 "noise_sigma", "seed"},
             "top level");

  ExperimentConfig cfg;
  cfg.seed = field<std::uint64_t>(j, "seed", 1);
  cfg.noise_sigma = field(j, "noise_sigma", 0.0);

  if (!j.contains("problem")) throw ConfigError("missing 'problem' block");
  const json& jp = j.at("problem");
  check_keys(jp, {"geometry", "fluids", "matrix", "fracture", "bc", "t_max_s"}, "problem");

  {
    const json& g = jp.at("geometry");
    check_keys(g, {"kind", "length_m", "radius_m", "slab_thickness_m"}, "problem.geometry");
    cfg.problem.geometry.kind = parse_kind(field<std::string>(g, "kind", "slab2d"));
    cfg.problem.geometry.length = field(g, "length_m", 0.058);
    cfg.problem.geometry.radius = field(g, "radius_m", 0.0125);
    cfg.problem.geometry.slab_thickness = field(g, "slab_thickness_m", 0.001);
  }
  {
    const json& f = jp.at("fluids");
    check_keys(f, {"mu_w_cP", "mu_nw_cP", "rho_w_kg_m3", "rho_nw_kg_m3"}, "problem.fluids");
    cfg.problem.fluids.mu_w = units::from_cP(field(f, "mu_w_cP", 1.0));
    cfg.problem.fluids.mu_nw = units::from_cP(field(f, "mu_nw_cP", 1.0));
    cfg.problem.fluids.rho_w = field(f, "rho_w_kg_m3", 1000.0);
    cfg.problem.fluids.rho_nw = field(f, "rho_nw_kg_m3", 1000.0);
  }
  {
    const json& m = jp.at("matrix");
    check_keys(m, {"porosity", "permeability_mD", "corey", "leverett"}, "problem.matrix");
    cfg.problem.matrix.porosity = field(m, "porosity", 0.1);
    cfg.problem.matrix.permeability = units::from_mD(field(m, "permeability_mD", 1.0));
    cfg.problem.matrix.corey = parse_corey(m.at("corey"), "problem.matrix.corey");
    cfg.problem.matrix.leverett = parse_leverett(m.at("leverett"), "problem.matrix.leverett");
  }

  if (!j.contains("collocation")) throw ConfigError("missing 'collocation' block");
  {
    const json& c = j.at("collocation");
    check_keys(c, {"nx", "ny", "nz", "exclusion_m", "n_face", "n_radial", "n_initial",
                   "t_min_s", "time_mode", "boundary_tol_frac"},
               "collocation");
    cfg.colloc.resolution = {field(c, "nx", 30), field(c, "ny", 60), field(c, "nz", 30)};
    cfg.colloc.exclusion = field(c, "exclusion_m", 0.0006);
    cfg.colloc.n_face = field(c, "n_face", 32);
    cfg.colloc.n_radial = field(c, "n_radial", 64);
    cfg.colloc.n_initial_matrix = field(c, "n_initial", 256);
    cfg.colloc.time.t_min = field(c, "t_min_s", 1.0);
    cfg.colloc.time.t_max = field(jp, "t_max_s", 1.0e6);
    cfg.colloc.boundary_tol_frac = field(c, "boundary_tol_frac", 0.5);
    const std::string mode = field<std::string>(c, "time_mode", "random_sqrt");
    if (mode == "random_sqrt")
      cfg.colloc.time.mode = geom::TimeMode::random_sqrt;
    else if (mode == "sqrt_uniform")
      cfg.colloc.time.mode = geom::TimeMode::sqrt_uniform;
    else if (mode == "uniform")
      cfg.colloc.time.mode = geom::TimeMode::uniform;
    else
      throw ConfigError("collocation.time_mode: unknown mode '" + mode + "'");
  }

  {
    const json& f = jp.at("fracture");
    check_keys(f, {"porosity", "permeability_mD", "aperture_m", "planes", "pointcloud_csv"},
               "problem.fracture");
    const double K_F = units::from_mD(field(f, "permeability_mD", 1.0));
    const double phi_F = field(f, "porosity", cfg.problem.matrix.porosity);
    cfg.problem.fracture = make_fracture_closure(K_F, phi_F, cfg.problem.matrix.leverett);
    cfg.problem.fractures.aperture = field(f, "aperture_m", 0.001);

    const std::string cloud = field<std::string>(f, "pointcloud_csv", "");
    if (!cloud.empty()) {
      cfg.problem.fractures =
          geom::load_fracture_csv(cloud, cfg.problem.fractures.aperture);
    } else if (f.contains("planes")) {
      for (const auto& pj : f.at("planes")) {
        check_keys(pj, {"normal", "origin_m"}, "problem.fracture.planes[]");
        geom::FracturePlane plane;
        const auto nrm = pj.at("normal");
        plane.normal = geom::Vec3(nrm[0].get<double>(), nrm[1].get<double>(),
                                  nrm[2].get<double>());
        if (pj.contains("origin_m")) {
          const auto org = pj.at("origin_m");
          plane.origin = geom::Vec3(org[0].get<double>(), org[1].get<double>(),
                                    org[2].get<double>());
        }
        cfg.problem.fractures.fractures.push_back(
            geom::make_planar_fracture(cfg.problem.geometry, plane, cfg.colloc.resolution));
      }
    }
  }
  {
    const json& b = jp.at("bc");
    check_keys(b, {"p_in_psi", "p_out_psi", "p_init_psi"}, "problem.bc");
    cfg.problem.p_in = units::from_psi(field(b, "p_in_psi", 0.0));
    cfg.problem.p_out = units::from_psi(field(b, "p_out_psi", 0.0));
    cfg.problem.p_init = units::from_psi(field(b, "p_init_psi", field(b, "p_out_psi", 0.0)));
  }
  cfg.problem.t_max = field(jp, "t_max_s", 1.0e6);

  if (j.contains("network")) {
    const json& n = j.at("network");
    check_keys(n, {"matrix_width", "matrix_depth", "fracture_width", "fracture_depth",
                   "omega_width", "omega_depth", "fourier_sw"},
               "network");
    const bool four = field(n, "fourier_sw", true);
    cfg.nets.matrix_sw = {4, 1, field(n, "matrix_width", 80), field(n, "matrix_depth", 8), four,
                          true};
    cfg.nets.matrix_p = {4, 1, field(n, "matrix_width", 80), field(n, "matrix_depth", 8), false,
                         true};
    cfg.nets.fracture_sw = {4, 1, field(n, "fracture_width", 60), field(n, "fracture_depth", 6),
                            four, true};
    cfg.nets.fracture_p = {4, 1, field(n, "fracture_width", 60), field(n, "fracture_depth", 6),
                           false, true};
    cfg.nets.omega = {4, 1, field(n, "omega_width", 40), field(n, "omega_depth", 4), false,
                      false};
  }

  if (j.contains("training")) {
    const json& t = j.at("training");
    check_keys(t, {"pretrain_epochs", "coupled_epochs", "freeze_epochs", "lr_start", "lr_end",
                   "weight_decay", "tau", "resample_period", "resample_fraction",
                   "insitu_subsample", "divergence_factor", "inverse", "xi_field", "kappa",
                   "xi_m", "history_stride", "loss_weights"},
               "training");
    auto& tc = cfg.train;
    tc.pretrain_epochs = field(t, "pretrain_epochs", tc.pretrain_epochs);
    tc.coupled_epochs = field(t, "coupled_epochs", tc.coupled_epochs);
    tc.freeze_epochs = field(t, "freeze_epochs", tc.freeze_epochs);
    tc.lr_start = field(t, "lr_start", tc.lr_start);
    tc.lr_end = field(t, "lr_end", tc.lr_end);
    tc.weight_decay = field(t, "weight_decay", tc.weight_decay);
    tc.tau = field(t, "tau", tc.tau);
    tc.resample_period = field(t, "resample_period", tc.resample_period);
    tc.resample_fraction = field(t, "resample_fraction", tc.resample_fraction);
    tc.insitu_subsample = field(t, "insitu_subsample", tc.insitu_subsample);
    tc.divergence_factor = field(t, "divergence_factor", tc.divergence_factor);
    tc.inverse = field(t, "inverse", false);
    tc.xi_field = field(t, "xi_field", false);
    tc.kappa = field(t, "kappa", 0.5);
    tc.xi_m = field(t, "xi_m", 0.6);
    tc.history_stride = field(t, "history_stride", 1);
    tc.seed = cfg.seed;
    if (t.contains("loss_weights")) {
      for (auto it = t.at("loss_weights").begin(); it != t.at("loss_weights").end(); ++it)
        tc.weights.w[it.key()] = it.value().get<double>();
    }
  } else {
    cfg.train.seed = cfg.seed;
  }

  if (j.contains("fd")) {
    const json& f = j.at("fd");
    check_keys(f, {"nx", "ny", "nz", "cfl", "end_time_s", "report_times_s", "dt_init_s",
                   "dt_max_s", "dt_grow"},
               "fd");
    cfg.fd.nx = field(f, "nx", 25);
    cfg.fd.ny = field(f, "ny", 50);
    cfg.fd.nz = field(f, "nz", 1);
    cfg.fd.schedule.cfl = field(f, "cfl", 0.5);
    cfg.fd.schedule.end_time = field(f, "end_time_s", cfg.problem.t_max);
    cfg.fd.schedule.dt_init = field(f, "dt_init_s", 10.0);
    cfg.fd.schedule.dt_max = field(f, "dt_max_s", 1.0e4);
    cfg.fd.schedule.dt_grow = field(f, "dt_grow", 1.25);
    if (f.contains("report_times_s"))
      for (const auto& rt : f.at("report_times_s"))
        cfg.fd.schedule.report_times.push_back(rt.get<double>());
  } else {
    cfg.fd.schedule.end_time = cfg.problem.t_max;
  }

  if (j.contains("observations")) {
    const json& o = j.at("observations");
    check_keys(o, {"rf_csv", "qinj_csv", "voxel_manifest"}, "observations");
    cfg.rf_csv = field<std::string>(o, "rf_csv", "");
    cfg.qinj_csv = field<std::string>(o, "qinj_csv", "");
    cfg.voxel_manifest = field<std::string>(o, "voxel_manifest", "");
  }

  try {
    cfg.problem.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("problem validation: ") + e.what());
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_json_text(io::read_text(path));
}

std::string ExperimentConfig::canonical_json() const {
  json j;
  j["seed"] = seed;
  j["noise_sigma"] = noise_sigma;
  j["geometry"] = {problem.geometry.length, problem.geometry.radius,
                   static_cast<int>(problem.geometry.kind), problem.geometry.slab_thickness};
  j["fluids"] = {problem.fluids.mu_w, problem.fluids.mu_nw, problem.fluids.rho_w,
                 problem.fluids.rho_nw};
  const auto& c = problem.matrix.corey;
  j["matrix"] = {problem.matrix.porosity, problem.matrix.permeability, c.krw_max, c.krnw_max,
                 c.n_w1, c.n_w2, c.n_nw1, c.n_nw2, c.s_wc, c.s_nwr,
                 problem.matrix.leverett.J1, problem.matrix.leverett.J2,
                 problem.matrix.leverett.S_eq, problem.matrix.leverett.sigma};
  j["fracture"] = {problem.fracture.porosity, problem.fracture.permeability,
                   problem.fractures.aperture,
                   static_cast<int>(problem.fractures.total_points())};
  j["bc"] = {problem.p_in, problem.p_out, problem.p_init, problem.t_max};
  j["colloc"] = {colloc.resolution.x(), colloc.resolution.y(), colloc.resolution.z(),
                 colloc.exclusion, colloc.n_face, colloc.n_radial, colloc.n_initial_matrix,
                 colloc.time.t_min, static_cast<int>(colloc.time.mode)};
  j["nets"] = {nets.matrix_sw.width, nets.matrix_sw.depth, nets.fracture_sw.width,
               nets.fracture_sw.depth, nets.omega.width, nets.omega.depth,
               nets.matrix_sw.fourier};
  j["train"] = {train.pretrain_epochs, train.coupled_epochs, train.freeze_epochs,
                train.lr_start, train.lr_end, train.weight_decay, train.tau,
                train.resample_period, train.resample_fraction, train.insitu_subsample,
                train.inverse, train.xi_field, train.kappa, train.xi_m};
  j["fd"] = {fd.nx, fd.ny, fd.nz, fd.schedule.cfl, fd.schedule.end_time, fd.schedule.dt_init,
             fd.schedule.dt_max, fd.schedule.dt_grow};
  return j.dump();
}

std::uint64_t ExperimentConfig::hash() const {
  const std::string s = canonical_json();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace fracflow::cli
