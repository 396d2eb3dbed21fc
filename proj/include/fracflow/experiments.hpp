#pragma once

// Experiment orchestration shared by the command-line tool and the
// acceptance suite: each verb writes its artifacts plus a manifest under
// an output directory.

#include <string>

#include "fracflow/config.hpp"
#include "fracflow/io.hpp"

namespace fracflow::cli {

void write_manifest(const ExperimentConfig& cfg, const std::string& outdir,
                    const std::string& verb);

void run_gen_colloc(const ExperimentConfig& cfg, const std::string& outdir);
void run_curves(const ExperimentConfig& cfg, const std::string& outdir);
void run_bl(const ExperimentConfig& cfg, const std::string& outdir);

struct ForwardFDOutcome {
  fdsim::SimResult sim;
  fdsim::Grid grid;
};
// writes rf.csv, qinj.csv and sw/p voxel snapshots at the report times
ForwardFDOutcome run_forward_fd(const ExperimentConfig& cfg, const std::string& outdir);

struct PinnOutcome {
  pinn::TrainResult result;
  std::string checkpoint_path;
};
PinnOutcome run_forward_pinn(const ExperimentConfig& cfg, const std::string& outdir);
PinnOutcome run_invert_pinn(const ExperimentConfig& cfg, const std::string& outdir);

struct FdNmOutcome {
  fdsim::HistMatchResult result;
};
FdNmOutcome run_invert_fd_nm(const ExperimentConfig& cfg, const std::string& outdir,
                             double wall_budget_s);

pinn::EnsembleResult run_ensemble(const ExperimentConfig& cfg, const std::string& outdir,
                                  int n_seeds, int parallelism);

void run_denoise(const std::string& in_vox, const std::string& out_vox);
void run_add_noise(const ExperimentConfig& cfg, const std::string& in_vox,
                   const std::string& out_vox);

} // namespace fracflow::cli
