// Command-line front end: forward and inverse experiments, analytic
// profiles, collocation dumps and voxel utilities.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "fracflow/experiments.hpp"

namespace {

// distinct exit codes: 2 config, 3 numerics, 4 io/other
int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const fracflow::cli::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"fracflow: two-phase flow in fractured porous media"};
  app.require_subcommand(1);

  std::string config_path, outdir = "out", in_path, out_path;
  int n_seeds = 5, parallelism = 2;
  double budget = 0.0;
  long long seed_override = -1;

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    if (needs_config)
      sub->add_option("config", config_path, "experiment config (JSON)")->required();
    sub->add_option("-o,--out", outdir, "output directory");
    sub->add_option("--seed", seed_override, "override the config seed");
  };

  auto* gen = app.add_subcommand("gen-colloc", "generate and dump collocation sets");
  add_common(gen);
  auto* curves = app.add_subcommand("curves", "export constitutive curves as CSV");
  add_common(curves);
  auto* bl = app.add_subcommand("bl", "analytical Buckley-Leverett profiles");
  add_common(bl);
  auto* ffd = app.add_subcommand("forward-fd", "finite-difference forward simulation");
  add_common(ffd);
  auto* fpinn = app.add_subcommand("forward-pinn", "physics-informed forward training");
  add_common(fpinn);
  auto* ipinn = app.add_subcommand("invert-pinn", "inverse estimation by history matching");
  add_common(ipinn);
  auto* ifdnm = app.add_subcommand("invert-fd-nm", "FD + Nelder-Mead history matching");
  add_common(ifdnm);
  ifdnm->add_option("--budget-s", budget, "wall-clock budget in seconds");
  auto* ens = app.add_subcommand("ensemble", "ensemble of inverse runs");
  add_common(ens);
  ens->add_option("--seeds", n_seeds, "number of ensemble members");
  ens->add_option("--parallel", parallelism, "concurrent jobs");
  auto* den = app.add_subcommand("denoise", "3D convolutional kriging of a voxel file");
  den->add_option("input", in_path, "input .vox")->required();
  den->add_option("output", out_path, "output .vox")->required();
  auto* noise = app.add_subcommand("add-noise", "add Gaussian noise to a voxel file");
  add_common(noise);
  noise->add_option("--in", in_path, "input .vox")->required();
  noise->add_option("--out-vox", out_path, "output .vox")->required();

  CLI11_PARSE(app, argc, argv);

  auto load = [&]() {
    auto cfg = fracflow::cli::ExperimentConfig::load(config_path);
    if (seed_override >= 0) {
      cfg.seed = static_cast<std::uint64_t>(seed_override);
      cfg.train.seed = cfg.seed;
    }
    return cfg;
  };

  if (gen->parsed()) return guarded([&] { fracflow::cli::run_gen_colloc(load(), outdir); });
  if (curves->parsed()) return guarded([&] { fracflow::cli::run_curves(load(), outdir); });
  if (bl->parsed()) return guarded([&] { fracflow::cli::run_bl(load(), outdir); });
  if (ffd->parsed()) return guarded([&] { fracflow::cli::run_forward_fd(load(), outdir); });
  if (fpinn->parsed()) return guarded([&] { fracflow::cli::run_forward_pinn(load(), outdir); });
  if (ipinn->parsed()) return guarded([&] { fracflow::cli::run_invert_pinn(load(), outdir); });
  if (ifdnm->parsed())
    return guarded([&] { fracflow::cli::run_invert_fd_nm(load(), outdir, budget); });
  if (ens->parsed())
    return guarded([&] { fracflow::cli::run_ensemble(load(), outdir, n_seeds, parallelism); });
  if (den->parsed()) return guarded([&] { fracflow::cli::run_denoise(in_path, out_path); });
  if (noise->parsed())
    return guarded([&] { fracflow::cli::run_add_noise(load(), in_path, out_path); });
  return 1;
}
