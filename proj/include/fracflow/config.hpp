#pragma once

// Experiment configuration: one structured JSON file with explicit units
// (mD, psi, cP at the boundary; SI inside). Unknown keys are rejected.

#include <cstdint>
#include <string>

#include "fracflow/fdsim.hpp"
#include "fracflow/geometry.hpp"
#include "fracflow/network.hpp"
#include "fracflow/pinn.hpp"
#include "fracflow/problem.hpp"

namespace fracflow::cli {

struct FDBlock {
  int nx = 25, ny = 50, nz = 1;
  fdsim::SimSchedule schedule;
};

struct ExperimentConfig {
  FlowProblem problem;
  geom::CollocationConfig colloc;
  net::NetworkSetConfig nets;
  pinn::TrainConfig train;
  FDBlock fd;
  std::string rf_csv, qinj_csv, voxel_manifest;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);

  std::string canonical_json() const; // deterministic re-serialization
  std::uint64_t hash() const;         // FNV-1a over the canonical form
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace fracflow::cli
