#pragma once

// Reverse-mode automatic differentiation over dense double arrays.
// The backward pass emits ordinary graph nodes, so gradients are
// themselves differentiable: calling gradients() on a value produced
// by gradients() yields second derivatives.

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fracflow::ad {

using Mat = Eigen::MatrixXd;

class Node;
class Value;

using VjpFn = std::function<std::vector<Value>(const std::vector<Value>& parents,
                                               const Value& self, const Value& adj)>;

class Node {
 public:
  Mat val;
  std::vector<Value> parents;
  VjpFn vjp;
  bool requires_grad = false;
  const char* op = "leaf";
};

// Handle to a graph node. Values are cheap to copy; the graph is owned
// through parent references and (optionally) the active tape.
class Value {
 public:
  Value() = default;
  explicit Value(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  bool defined() const { return static_cast<bool>(n_); }
  const Mat& val() const { return n_->val; }
  Eigen::Index rows() const { return n_->val.rows(); }
  Eigen::Index cols() const { return n_->val.cols(); }
  double scalar() const;

  Node* node() const { return n_.get(); }
  const std::shared_ptr<Node>& ptr() const { return n_; }
  bool requires_grad() const { return n_ && n_->requires_grad; }

  // In-place update of a leaf's payload (optimizer steps).
  void set_value(const Mat& m);

 private:
  std::shared_ptr<Node> n_;
};

// Registers every node created while alive and severs all parent links
// on destruction, so long graphs free iteratively instead of through
// recursive shared_ptr chains. Scopes nest.
class TapeScope {
 public:
  TapeScope();
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

  std::size_t size() const { return nodes_.size(); }

 private:
  friend std::shared_ptr<Node> detail_register(std::shared_ptr<Node> n);
  std::vector<std::shared_ptr<Node>> nodes_;
  TapeScope* prev_ = nullptr;
};

// --- construction ---------------------------------------------------------

Value leaf(Mat v, bool requires_grad = true);
Value leaf(double v, bool requires_grad = true);
Value constant(Mat v);
Value constant(double v);

// --- elementwise arithmetic (broadcasting: equal dims, or 1x1, 1xm, nx1) ---

Value operator+(const Value& a, const Value& b);
Value operator-(const Value& a, const Value& b);
Value operator*(const Value& a, const Value& b);
Value operator/(const Value& a, const Value& b);
Value operator-(const Value& a);

inline Value operator+(const Value& a, double b) { return a + constant(b); }
inline Value operator+(double a, const Value& b) { return constant(a) + b; }
inline Value operator-(const Value& a, double b) { return a - constant(b); }
inline Value operator-(double a, const Value& b) { return constant(a) - b; }
inline Value operator*(const Value& a, double b) { return a * constant(b); }
inline Value operator*(double a, const Value& b) { return constant(a) * b; }
inline Value operator/(const Value& a, double b) { return a / constant(b); }
inline Value operator/(double a, const Value& b) { return constant(a) / b; }

// --- transcendental / shaping ----------------------------------------------

Value tanh(const Value& x);
Value exp(const Value& x);
Value log(const Value& x);
Value sqrt(const Value& x);
Value sigmoid(const Value& x);
Value sin(const Value& x);
Value cos(const Value& x);
Value abs(const Value& x);
Value pow(const Value& a, const Value& b);
Value pow(const Value& a, double b);

Value matmul(const Value& a, const Value& b);
Value transpose(const Value& a);

Value sum(const Value& x);
Value mean(const Value& x);
Value sum_rows(const Value& x); // n x m -> 1 x m
Value sum_cols(const Value& x); // n x m -> n x 1

Value col(const Value& x, Eigen::Index j);
Value slice_cols(const Value& x, Eigen::Index j0, Eigen::Index n);
Value hstack(std::span<const Value> parts);
inline Value hstack(std::initializer_list<Value> parts) {
  return hstack(std::span<const Value>(parts.begin(), parts.size()));
}

// Elementwise select with a fixed 0/1 mask (gradient flows only through
// the taken branch).
Value where(const Mat& mask, const Value& a, const Value& b);
Mat gt_mask(const Value& a, const Value& b);

Value relu(const Value& x);
Value clamp_min(const Value& x, double lo);
Value clamp_max(const Value& x, double hi);

// mean(|a - b|)
Value mae(const Value& a, const Value& b);

// Real DFT along the feature (column) axis, realized through constant
// coefficient matrices: exact, and differentiable like any matmul.
std::pair<Value, Value> rfft(const Value& x);
// Inverse transform keeping only the real output components.
Value irfft(const Value& re, const Value& im, Eigen::Index n);

// --- differentiation --------------------------------------------------------

// Reverse-mode gradients of a scalar (1x1) output with respect to each
// entry of wrt. Unreachable leaves get zero gradients.
std::vector<Value> gradients(const Value& out, const std::vector<Value>& wrt);

struct GradientReport {
  Mat analytic;
  Mat fd;
  double max_rel_err = 0.0;
};

// Central-difference comparison for a scalar-valued f at x.
GradientReport check_gradient(const std::function<Value(const Value&)>& f, const Mat& x,
                              double h = 1e-5);

void check_finite(const Value& v, const std::string& context);

} // namespace fracflow::ad
