#pragma once

// Multilayer perceptrons over the autodiff graph: adaptive-tanh
// activation, optional Fourier-transform path for saturation networks,
// Glorot initialization, Z-score normalization, bounded saturation head.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fracflow/autodiff.hpp"

namespace fracflow::net {

using ad::Mat;
using ad::Value;

struct MLPConfig {
  int in = 4;
  int out = 1;
  int width = 32;
  int depth = 4; // hidden layers
  bool fourier = false;
  bool adaptive = true; // tanh(a_l * z) with trainable per-layer slope

  void validate() const;
};

struct Normalizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd stdev;

  static constexpr double kEpsStd = 1e-8;

  // Two-pass channel statistics over sample rows; stdev floored at kEpsStd.
  static Normalizer fit(const Mat& samples);
  static Normalizer manual(const Eigen::RowVectorXd& mean, const Eigen::RowVectorXd& stdev);

  Mat normalize(const Mat& x) const;
  Mat denormalize(const Mat& xn) const;
  Value normalize(const Value& x) const;
  Value denormalize(const Value& xn) const;
};

class MLP {
 public:
  MLP() = default;
  MLP(const MLPConfig& cfg, std::uint64_t seed);

  // x: batch x in, normalized. Returns batch x out, normalized.
  Value forward(const Value& x) const;

  const MLPConfig& config() const { return cfg_; }
  std::vector<Value> params() const;

  // flat parameter I/O for checkpoints
  std::vector<Mat> weights_snapshot() const;
  void load_snapshot(const std::vector<Mat>& arrays);

 private:
  MLPConfig cfg_;
  std::vector<Value> w_;
  std::vector<Value> b_;
  std::vector<Value> slope_; // 1x1 per hidden layer
  Value act(const Value& z, std::size_t layer) const;
  Value plain_forward(const Value& x) const;
  Value fourier_forward(const Value& x) const;
};

// Uniform(-sqrt(6/(fan_in+fan_out)), +...) weight draw.
Mat glorot(int fan_in, int fan_out, std::mt19937_64& rng);

// Smooth clamp of a denormalized raw output into [s_wc, 1 - s_nwr].
// Slope is 1 at the window center; the bounds may be graph values when
// they are inverse parameters.
Value saturation_head(const Value& raw, const Value& s_wc, const Value& s_nwr);

struct NetworkSetConfig {
  MLPConfig matrix_sw{4, 1, 80, 8, true, true};
  MLPConfig matrix_p{4, 1, 80, 8, false, true};
  MLPConfig fracture_sw{4, 1, 60, 6, true, true};
  MLPConfig fracture_p{4, 1, 60, 6, false, true};
  MLPConfig omega{4, 1, 40, 4, false, false}; // plain tanh
};

// The four primary state networks plus the three self-adaptive weight
// networks, with their input/output normalizers.
struct NetworkSet {
  MLP m_sw, m_p, f_sw, f_p;
  MLP w_m, w_f, w_mf;
  Normalizer in_matrix, in_fracture;
  Normalizer out_sw_m, out_p_m, out_sw_f, out_p_f;

  NetworkSet() = default;
  NetworkSet(const NetworkSetConfig& cfg, std::uint64_t seed);

  std::vector<Value> params() const;       // all trainable parameters
  std::vector<Value> state_params() const; // primary networks only

  void save(const std::string& path) const;
  void load(const std::string& path);
};

} // namespace fracflow::net
