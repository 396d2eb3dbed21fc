#include "fracflow/network.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fracflow::net {

void MLPConfig::validate() const {
  if (width < 1 || depth < 1 || in < 1 || out < 1)
    throw std::invalid_argument("MLPConfig: width, depth, in, out must be >= 1");
}

Normalizer Normalizer::fit(const Mat& samples) {
  if (samples.rows() < 1) throw std::invalid_argument("Normalizer::fit: empty sample");
  Normalizer n;
  n.mean = samples.colwise().mean();
  Mat centered = samples.rowwise() - n.mean;
  n.stdev = (centered.array().square().colwise().sum() / static_cast<double>(samples.rows()))
                .sqrt()
                .matrix();
  for (Eigen::Index j = 0; j < n.stdev.cols(); ++j)
    n.stdev(j) = std::max(n.stdev(j), kEpsStd);
  return n;
}

Normalizer Normalizer::manual(const Eigen::RowVectorXd& mean, const Eigen::RowVectorXd& stdev) {
  Normalizer n;
  n.mean = mean;
  n.stdev = stdev;
  for (Eigen::Index j = 0; j < n.stdev.cols(); ++j)
    n.stdev(j) = std::max(n.stdev(j), kEpsStd);
  return n;
}

Mat Normalizer::normalize(const Mat& x) const {
  return ((x.rowwise() - mean).array().rowwise() / stdev.array()).matrix();
}

Mat Normalizer::denormalize(const Mat& xn) const {
  return ((xn.array().rowwise() * stdev.array()).matrix().rowwise() + mean);
}

Value Normalizer::normalize(const Value& x) const {
  return (x - ad::constant(Mat(mean))) / ad::constant(Mat(stdev));
}

Value Normalizer::denormalize(const Value& xn) const {
  return xn * ad::constant(Mat(stdev)) + ad::constant(Mat(mean));
}

Mat glorot(int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Mat w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
  return w;
}

MLP::MLP(const MLPConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  auto add_layer = [&](int fi, int fo) {
    w_.push_back(ad::leaf(glorot(fi, fo, rng)));
    b_.push_back(ad::leaf(Mat::Zero(1, fo)));
  };

  if (!cfg_.fourier) {
    add_layer(cfg_.in, cfg_.width);
    for (int l = 1; l < cfg_.depth; ++l) add_layer(cfg_.width, cfg_.width);
    add_layer(cfg_.width, cfg_.out);
  } else {
    const int m = cfg_.width / 2 + 1;
    add_layer(cfg_.in, cfg_.width); // encoder
    add_layer(2 * m, cfg_.width);   // latent entry after the transform
    for (int l = 1; l < cfg_.depth; ++l) add_layer(cfg_.width, cfg_.width);
    add_layer(cfg_.width, 2 * m); // back to coefficient space
    add_layer(cfg_.width, cfg_.out); // decoder
  }
  for (int l = 0; l < cfg_.depth; ++l)
    slope_.push_back(ad::leaf(Mat::Ones(1, 1), cfg_.adaptive));
}

Value MLP::act(const Value& z, std::size_t layer) const {
  Value y = ad::tanh(slope_[layer] * z);
  if (!y.val().allFinite())
    throw std::runtime_error("MLP: non-finite activation in hidden layer " +
                             std::to_string(layer));
  return y;
}

Value MLP::plain_forward(const Value& x) const {
  Value h = x;
  for (int l = 0; l < cfg_.depth; ++l)
    h = act(ad::matmul(h, w_[l]) + b_[l], l);
  return ad::matmul(h, w_[cfg_.depth]) + b_[cfg_.depth];
}

Value MLP::fourier_forward(const Value& x) const {
  const int m = cfg_.width / 2 + 1;
  Value z = ad::matmul(x, w_[0]) + b_[0];
  auto [re, im] = ad::rfft(z);
  Value u = ad::hstack({re, im});
  Value h = act(ad::matmul(u, w_[1]) + b_[1], 0);
  for (int l = 1; l < cfg_.depth; ++l)
    h = act(ad::matmul(h, w_[l + 1]) + b_[l + 1], l);
  Value v = ad::matmul(h, w_[cfg_.depth + 1]) + b_[cfg_.depth + 1];
  Value x2 = ad::irfft(ad::slice_cols(v, 0, m), ad::slice_cols(v, m, m), cfg_.width);
  return ad::matmul(x2, w_[cfg_.depth + 2]) + b_[cfg_.depth + 2];
}

Value MLP::forward(const Value& x) const {
  if (x.cols() != cfg_.in)
    throw std::invalid_argument("MLP::forward: expected " + std::to_string(cfg_.in) +
                                " input channels, got " + std::to_string(x.cols()));
  return cfg_.fourier ? fourier_forward(x) : plain_forward(x);
}

std::vector<Value> MLP::params() const {
  std::vector<Value> ps;
  for (const auto& w : w_) ps.push_back(w);
  for (const auto& b : b_) ps.push_back(b);
  if (cfg_.adaptive)
    for (const auto& s : slope_) ps.push_back(s);
  return ps;
}

std::vector<Mat> MLP::weights_snapshot() const {
  std::vector<Mat> out;
  for (const auto& w : w_) out.push_back(w.val());
  for (const auto& b : b_) out.push_back(b.val());
  for (const auto& s : slope_) out.push_back(s.val());
  return out;
}

void MLP::load_snapshot(const std::vector<Mat>& arrays) {
  const std::size_t need = w_.size() + b_.size() + slope_.size();
  if (arrays.size() != need)
    throw std::runtime_error("MLP::load_snapshot: array count mismatch");
  std::size_t at = 0;
  for (auto& w : w_) w.set_value(arrays[at++]);
  for (auto& b : b_) b.set_value(arrays[at++]);
  for (auto& s : slope_) s.set_value(arrays[at++]);
}

Value saturation_head(const Value& raw, const Value& s_wc, const Value& s_nwr) {
  Value window = 1.0 - s_nwr - s_wc;
  Value center = s_wc + 0.5 * window;
  return s_wc + window * ad::sigmoid(4.0 * (raw - center) / window);
}

NetworkSet::NetworkSet(const NetworkSetConfig& cfg, std::uint64_t seed)
    : m_sw(cfg.matrix_sw, seed + 1),
      m_p(cfg.matrix_p, seed + 2),
      f_sw(cfg.fracture_sw, seed + 3),
      f_p(cfg.fracture_p, seed + 4),
      w_m(cfg.omega, seed + 5),
      w_f(cfg.omega, seed + 6),
      w_mf(cfg.omega, seed + 7) {}

std::vector<Value> NetworkSet::params() const {
  std::vector<Value> ps = state_params();
  for (const MLP* n : {&w_m, &w_f, &w_mf})
    for (const auto& p : n->params()) ps.push_back(p);
  return ps;
}

std::vector<Value> NetworkSet::state_params() const {
  std::vector<Value> ps;
  for (const MLP* n : {&m_sw, &m_p, &f_sw, &f_p})
    for (const auto& p : n->params()) ps.push_back(p);
  return ps;
}

namespace {

nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const nlohmann::json& j) {
  const Eigen::Index r = static_cast<Eigen::Index>(j.size());
  const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index jj = 0; jj < c; ++jj) m(i, jj) = j[i][jj].get<double>();
  return m;
}

nlohmann::json norm_to_json(const Normalizer& n) {
  return {{"mean", mat_to_json(Mat(n.mean))}, {"stdev", mat_to_json(Mat(n.stdev))}};
}

Normalizer norm_from_json(const nlohmann::json& j) {
  Mat mean = mat_from_json(j.at("mean"));
  Mat stdev = mat_from_json(j.at("stdev"));
  return Normalizer::manual(mean.row(0), stdev.row(0));
}

nlohmann::json mlp_to_json(const MLP& n) {
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& m : n.weights_snapshot()) arrays.push_back(mat_to_json(m));
  const auto& c = n.config();
  return {{"in", c.in},     {"out", c.out},         {"width", c.width},   {"depth", c.depth},
          {"fourier", c.fourier}, {"adaptive", c.adaptive}, {"arrays", std::move(arrays)}};
}

MLP mlp_from_json(const nlohmann::json& j) {
  MLPConfig c;
  c.in = j.at("in");
  c.out = j.at("out");
  c.width = j.at("width");
  c.depth = j.at("depth");
  c.fourier = j.at("fourier");
  c.adaptive = j.at("adaptive");
  MLP n(c, 0);
  std::vector<Mat> arrays;
  for (const auto& a : j.at("arrays")) arrays.push_back(mat_from_json(a));
  n.load_snapshot(arrays);
  return n;
}

} // namespace

void NetworkSet::save(const std::string& path) const {
  nlohmann::json j;
  j["format"] = "fracflow-checkpoint";
  j["version"] = 1;
  j["networks"] = {{"m_sw", mlp_to_json(m_sw)}, {"m_p", mlp_to_json(m_p)},
                   {"f_sw", mlp_to_json(f_sw)}, {"f_p", mlp_to_json(f_p)},
                   {"w_m", mlp_to_json(w_m)},   {"w_f", mlp_to_json(w_f)},
                   {"w_mf", mlp_to_json(w_mf)}};
  j["normalizers"] = {{"in_matrix", norm_to_json(in_matrix)},
                      {"in_fracture", norm_to_json(in_fracture)},
                      {"out_sw_m", norm_to_json(out_sw_m)},
                      {"out_p_m", norm_to_json(out_p_m)},
                      {"out_sw_f", norm_to_json(out_sw_f)},
                      {"out_p_f", norm_to_json(out_p_f)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump();
}

void NetworkSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "fracflow-checkpoint" || j.value("version", 0) != 1)
    throw std::runtime_error("unrecognized checkpoint format: " + path);
  const auto& n = j.at("networks");
  m_sw = mlp_from_json(n.at("m_sw"));
  m_p = mlp_from_json(n.at("m_p"));
  f_sw = mlp_from_json(n.at("f_sw"));
  f_p = mlp_from_json(n.at("f_p"));
  w_m = mlp_from_json(n.at("w_m"));
  w_f = mlp_from_json(n.at("w_f"));
  w_mf = mlp_from_json(n.at("w_mf"));
  const auto& nn = j.at("normalizers");
  in_matrix = norm_from_json(nn.at("in_matrix"));
  in_fracture = norm_from_json(nn.at("in_fracture"));
  out_sw_m = norm_from_json(nn.at("out_sw_m"));
  out_p_m = norm_from_json(nn.at("out_p_m"));
  out_sw_f = norm_from_json(nn.at("out_sw_f"));
  out_p_f = norm_from_json(nn.at("out_p_f"));
}

} // namespace fracflow::net
