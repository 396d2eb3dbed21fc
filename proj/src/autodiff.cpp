#include "fracflow/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace fracflow::ad {

namespace {

thread_local TapeScope* g_tape = nullptr;

} // namespace

std::shared_ptr<Node> detail_register(std::shared_ptr<Node> n) {
  if (g_tape) g_tape->nodes_.push_back(n);
  return n;
}

TapeScope::TapeScope() {
  prev_ = g_tape;
  g_tape = this;
}

TapeScope::~TapeScope() {
  for (auto& n : nodes_) {
    n->parents.clear();
    n->vjp = nullptr;
  }
  nodes_.clear();
  g_tape = prev_;
}

double Value::scalar() const {
  if (rows() != 1 || cols() != 1)
    throw std::invalid_argument("Value::scalar: node '" + std::string(n_->op) + "' is not 1x1");
  return n_->val(0, 0);
}

void Value::set_value(const Mat& m) {
  if (!n_->parents.empty())
    throw std::invalid_argument("Value::set_value: not a leaf");
  n_->val = m;
}

namespace {

Value make(Mat v, std::vector<Value> parents, VjpFn vjp, const char* op) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->op = op;
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  n->parents = std::move(parents);
  if (rg) n->vjp = std::move(vjp);
  return Value(detail_register(std::move(n)));
}

void bcast_dims(const char* op, const Value& a, const Value& b, Eigen::Index& r,
                Eigen::Index& c) {
  auto pick = [&](Eigen::Index x, Eigen::Index y) -> Eigen::Index {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw std::invalid_argument(std::string("shape mismatch in '") + op + "': " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  };
  r = pick(a.rows(), b.rows());
  c = pick(a.cols(), b.cols());
}

Mat bcast_to(const Mat& m, Eigen::Index r, Eigen::Index c) {
  if (m.rows() == r && m.cols() == c) return m;
  return m.replicate(r / m.rows(), c / m.cols());
}

// Sum a gradient back down to the operand's original shape.
Value reduce_to(const Value& g, Eigen::Index r, Eigen::Index c) {
  Value out = g;
  if (out.rows() != r) out = sum_rows(out);
  if (out.cols() != c) out = sum_cols(out);
  return out;
}

Value binary(const char* op, const Value& a, const Value& b,
             const std::function<Mat(const Mat&, const Mat&)>& fwd,
             const std::function<std::pair<Value, Value>(const std::vector<Value>&, const Value&,
                                                         const Value&)>& back) {
  Eigen::Index r, c;
  bcast_dims(op, a, b, r, c);
  Mat v = fwd(bcast_to(a.val(), r, c), bcast_to(b.val(), r, c));
  return make(std::move(v), {a, b},
              [back](const std::vector<Value>& ps, const Value& self,
                     const Value& adj) -> std::vector<Value> {
                auto [ga, gb] = back(ps, self, adj);
                return {reduce_to(ga, ps[0].rows(), ps[0].cols()),
                        reduce_to(gb, ps[1].rows(), ps[1].cols())};
              },
              op);
}

Value unary(const char* op, const Value& a, Mat v,
            const std::function<Value(const std::vector<Value>&, const Value&, const Value&)>&
                back) {
  return make(std::move(v), {a},
              [back](const std::vector<Value>& ps, const Value& self,
                     const Value& adj) -> std::vector<Value> { return {back(ps, self, adj)}; },
              op);
}

} // namespace

Value leaf(Mat v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->requires_grad = requires_grad;
  n->op = "leaf";
  return Value(detail_register(std::move(n)));
}

Value leaf(double v, bool requires_grad) { return leaf(Mat::Constant(1, 1, v), requires_grad); }

Value constant(Mat v) { return leaf(std::move(v), false); }
Value constant(double v) { return leaf(Mat::Constant(1, 1, v), false); }

Value operator+(const Value& a, const Value& b) {
  return binary("add", a, b, [](const Mat& x, const Mat& y) -> Mat { return x + y; },
                [](const std::vector<Value>&, const Value&, const Value& adj) {
                  return std::pair<Value, Value>{adj, adj};
                });
}

Value operator-(const Value& a, const Value& b) {
  return binary("sub", a, b, [](const Mat& x, const Mat& y) -> Mat { return x - y; },
                [](const std::vector<Value>&, const Value&, const Value& adj) {
                  return std::pair<Value, Value>{adj, -adj};
                });
}

Value operator*(const Value& a, const Value& b) {
  return binary("mul", a, b,
                [](const Mat& x, const Mat& y) -> Mat { return x.cwiseProduct(y); },
                [](const std::vector<Value>& ps, const Value&, const Value& adj) {
                  return std::pair<Value, Value>{adj * ps[1], adj * ps[0]};
                });
}

Value operator/(const Value& a, const Value& b) {
  return binary("div", a, b,
                [](const Mat& x, const Mat& y) -> Mat { return x.cwiseQuotient(y); },
                [](const std::vector<Value>& ps, const Value& self, const Value& adj) {
                  return std::pair<Value, Value>{adj / ps[1], -adj * self / ps[1]};
                });
}

Value operator-(const Value& a) {
  return unary("neg", a, -a.val(),
               [](const std::vector<Value>&, const Value&, const Value& adj) { return -adj; });
}

Value tanh(const Value& x) {
  return unary("tanh", x, x.val().array().tanh().matrix(),
               [](const std::vector<Value>&, const Value& self, const Value& adj) {
                 return adj * (1.0 - self * self);
               });
}

Value exp(const Value& x) {
  return unary("exp", x, x.val().array().exp().matrix(),
               [](const std::vector<Value>&, const Value& self, const Value& adj) {
                 return adj * self;
               });
}

Value log(const Value& x) {
  return unary("log", x, x.val().array().log().matrix(),
               [](const std::vector<Value>& ps, const Value&, const Value& adj) {
                 return adj / ps[0];
               });
}

Value sqrt(const Value& x) {
  return unary("sqrt", x, x.val().array().sqrt().matrix(),
               [](const std::vector<Value>&, const Value& self, const Value& adj) {
                 return adj * 0.5 / self;
               });
}

Value sigmoid(const Value& x) {
  Mat v = (1.0 / (1.0 + (-x.val().array()).exp())).matrix();
  return unary("sigmoid", x, std::move(v),
               [](const std::vector<Value>&, const Value& self, const Value& adj) {
                 return adj * self * (1.0 - self);
               });
}

Value sin(const Value& x) {
  return unary("sin", x, x.val().array().sin().matrix(),
               [](const std::vector<Value>& ps, const Value&, const Value& adj) {
                 return adj * cos(ps[0]);
               });
}

Value cos(const Value& x) {
  return unary("cos", x, x.val().array().cos().matrix(),
               [](const std::vector<Value>& ps, const Value&, const Value& adj) {
                 return -adj * sin(ps[0]);
               });
}

Value abs(const Value& x) {
  return unary("abs", x, x.val().array().abs().matrix(),
               [](const std::vector<Value>& ps, const Value&, const Value& adj) {
                 Mat sgn = ps[0].val().array().sign().matrix();
                 return adj * constant(std::move(sgn));
               });
}

Value pow(const Value& a, const Value& b) { return exp(b * log(a)); }
Value pow(const Value& a, double b) { return exp(constant(b) * log(a)); }

Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree (" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                ")");
  return make(a.val() * b.val(), {a, b},
              [](const std::vector<Value>& ps, const Value&,
                 const Value& adj) -> std::vector<Value> {
                return {matmul(adj, transpose(ps[1])), matmul(transpose(ps[0]), adj)};
              },
              "matmul");
}

Value transpose(const Value& a) {
  return unary("transpose", a, a.val().transpose(),
               [](const std::vector<Value>&, const Value&, const Value& adj) {
                 return transpose(adj);
               });
}

Value sum(const Value& x) {
  const Eigen::Index r = x.rows(), c = x.cols();
  return unary("sum", x, Mat::Constant(1, 1, x.val().sum()),
               [r, c](const std::vector<Value>&, const Value&, const Value& adj) {
                 return adj * constant(Mat::Ones(r, c));
               });
}

Value mean(const Value& x) {
  const double n = static_cast<double>(x.rows() * x.cols());
  return sum(x) / n;
}

Value sum_rows(const Value& x) {
  const Eigen::Index r = x.rows();
  return unary("sum_rows", x, x.val().colwise().sum(),
               [r](const std::vector<Value>&, const Value&, const Value& adj) {
                 return adj * constant(Mat::Ones(r, adj.cols()));
               });
}

Value sum_cols(const Value& x) {
  const Eigen::Index c = x.cols();
  return unary("sum_cols", x, x.val().rowwise().sum(),
               [c](const std::vector<Value>&, const Value&, const Value& adj) {
                 return adj * constant(Mat::Ones(adj.rows(), c));
               });
}

Value col(const Value& x, Eigen::Index j) { return slice_cols(x, j, 1); }

Value slice_cols(const Value& x, Eigen::Index j0, Eigen::Index n) {
  if (j0 < 0 || j0 + n > x.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  const Eigen::Index cols = x.cols();
  return unary("slice_cols", x, x.val().middleCols(j0, n),
               [j0, n, cols](const std::vector<Value>&, const Value&, const Value& adj) {
                 // embed the adjoint back into the full width
                 Mat embed = Mat::Zero(n, cols);
                 embed.block(0, j0, n, n) = Mat::Identity(n, n);
                 return matmul(adj, constant(std::move(embed)));
               });
}

Value hstack(std::span<const Value> parts) {
  if (parts.empty()) throw std::invalid_argument("hstack: empty");
  Eigen::Index r = parts[0].rows(), c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw std::invalid_argument("hstack: row mismatch");
    c += p.cols();
  }
  Mat v(r, c);
  Eigen::Index at = 0;
  std::vector<Value> ps;
  std::vector<Eigen::Index> offs;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.val();
    offs.push_back(at);
    at += p.cols();
    ps.push_back(p);
  }
  return make(std::move(v), std::move(ps),
              [offs](const std::vector<Value>& parents, const Value&,
                     const Value& adj) -> std::vector<Value> {
                std::vector<Value> out;
                for (std::size_t i = 0; i < parents.size(); ++i)
                  out.push_back(slice_cols(adj, offs[i], parents[i].cols()));
                return out;
              },
              "hstack");
}

Value where(const Mat& mask, const Value& a, const Value& b) {
  Value m = constant(mask);
  return m * a + (1.0 - m) * b;
}

Mat gt_mask(const Value& a, const Value& b) {
  Eigen::Index r, c;
  bcast_dims("gt_mask", a, b, r, c);
  return (bcast_to(a.val(), r, c).array() > bcast_to(b.val(), r, c).array()).cast<double>();
}

Value relu(const Value& x) {
  Mat mask = (x.val().array() > 0.0).cast<double>();
  return constant(std::move(mask)) * x;
}

Value clamp_min(const Value& x, double lo) {
  Mat mask = (x.val().array() > lo).cast<double>();
  Value m = constant(std::move(mask));
  return m * x + (1.0 - m) * lo;
}

Value clamp_max(const Value& x, double hi) {
  Mat mask = (x.val().array() < hi).cast<double>();
  Value m = constant(std::move(mask));
  return m * x + (1.0 - m) * hi;
}

Value mae(const Value& a, const Value& b) { return mean(abs(a - b)); }

namespace {

// Coefficient matrices for the real DFT along columns.
std::pair<Mat, Mat> rfft_mats(Eigen::Index n) {
  const Eigen::Index m = n / 2 + 1;
  Mat C(n, m), S(n, m);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < m; ++k) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(n);
      C(j, k) = std::cos(ang);
      S(j, k) = -std::sin(ang);
    }
  return {C, S};
}

std::pair<Mat, Mat> irfft_mats(Eigen::Index n) {
  const Eigen::Index m = n / 2 + 1;
  Mat A(m, n), B(m, n);
  for (Eigen::Index k = 0; k < m; ++k) {
    const bool edge = (k == 0) || (n % 2 == 0 && k == n / 2);
    const double w = (edge ? 1.0 : 2.0) / static_cast<double>(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(n);
      A(k, j) = w * std::cos(ang);
      B(k, j) = -w * std::sin(ang);
    }
  }
  return {A, B};
}

} // namespace

std::pair<Value, Value> rfft(const Value& x) {
  auto [C, S] = rfft_mats(x.cols());
  return {matmul(x, constant(std::move(C))), matmul(x, constant(std::move(S)))};
}

Value irfft(const Value& re, const Value& im, Eigen::Index n) {
  if (re.cols() != n / 2 + 1 || im.cols() != n / 2 + 1)
    throw std::invalid_argument("irfft: coefficient width does not match n");
  auto [A, B] = irfft_mats(n);
  return matmul(re, constant(std::move(A))) + matmul(im, constant(std::move(B)));
}

std::vector<Value> gradients(const Value& out, const std::vector<Value>& wrt) {
  if (!out.defined()) throw std::invalid_argument("gradients: undefined output");
  if (out.rows() != 1 || out.cols() != 1)
    throw std::invalid_argument("gradients: output must be scalar; apply a reduction first");

  auto zeros_for = [](const Value& w) { return constant(Mat::Zero(w.rows(), w.cols())); };

  if (!out.requires_grad()) {
    std::vector<Value> zs;
    zs.reserve(wrt.size());
    for (const auto& w : wrt) zs.push_back(zeros_for(w));
    return zs;
  }

  // Iterative post-order topological sort over the requires_grad subgraph.
  std::vector<std::shared_ptr<Node>> topo;
  std::unordered_set<Node*> seen;
  struct Frame {
    std::shared_ptr<Node> n;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({out.ptr()});
  seen.insert(out.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      const Value& p = f.n->parents[f.next++];
      if (p.requires_grad() && !seen.count(p.node())) {
        seen.insert(p.node());
        stack.push_back({p.ptr()});
      }
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }

  std::unordered_map<Node*, Value> adj;
  adj.emplace(out.node(), constant(Mat::Ones(1, 1)));

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = it->get();
    auto found = adj.find(n);
    if (found == adj.end() || !n->vjp) continue;
    const Value self(*it);
    std::vector<Value> contribs = n->vjp(n->parents, self, found->second);
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      const Value& p = n->parents[i];
      if (!p.requires_grad()) continue;
      auto at = adj.find(p.node());
      if (at == adj.end())
        adj.emplace(p.node(), contribs[i]);
      else
        at->second = at->second + contribs[i];
    }
  }

  std::vector<Value> grads;
  grads.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto at = adj.find(w.node());
    grads.push_back(at != adj.end() ? at->second : zeros_for(w));
  }
  return grads;
}

GradientReport check_gradient(const std::function<Value(const Value&)>& f, const Mat& x,
                              double h) {
  GradientReport rep;
  {
    Value xv = leaf(x);
    Value y = f(xv);
    if (!y.val().allFinite())
      throw std::runtime_error("check_gradient: non-finite function value");
    rep.analytic = gradients(y, {xv})[0].val();
  }
  rep.fd.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Mat xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double fp = f(leaf(xp, false)).scalar();
      const double fm = f(leaf(xm, false)).scalar();
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("check_gradient: non-finite probe value");
      rep.fd(i, j) = (fp - fm) / (2.0 * h);
    }
  double max_rel = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double denom = std::max({std::abs(rep.analytic(i, j)), std::abs(rep.fd(i, j)), 1e-8});
      max_rel = std::max(max_rel, std::abs(rep.analytic(i, j) - rep.fd(i, j)) / denom);
    }
  rep.max_rel_err = max_rel;
  return rep;
}

void check_finite(const Value& v, const std::string& context) {
  if (!v.val().allFinite())
    throw std::runtime_error("non-finite values in " + context + " (node '" +
                             std::string(v.node()->op) + "')");
}

} // namespace fracflow::ad
