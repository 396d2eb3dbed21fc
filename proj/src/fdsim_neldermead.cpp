#include <algorithm>
#include <cmath>
#include <numeric>

#include "fracflow/fdsim.hpp"

namespace fracflow::fdsim {

NMResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                     const Eigen::VectorXd& x0, const NMOptions& opt) {
  const int n = static_cast<int>(x0.size());
  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;

  NMResult res;
  std::vector<Eigen::VectorXd> xs(n + 1, x0);
  std::vector<double> fs(n + 1);
  for (int i = 1; i <= n; ++i)
    xs[i][i - 1] += (x0[i - 1] != 0.0 ? opt.init_step * std::abs(x0[i - 1]) : opt.init_step);
  for (int i = 0; i <= n; ++i) {
    fs[i] = objective(xs[i]);
    ++res.evaluations;
  }
  if (!std::isfinite(fs[0]))
    throw std::invalid_argument("nelder_mead: objective not finite at x0");

  std::vector<int> order(n + 1);
  auto sort_simplex = [&]() {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
  };

  res.status = "max_iter";
  for (int it = 0; it < opt.max_iter; ++it) {
    if (opt.stop && opt.stop()) {
      res.status = "budget";
      break;
    }
    sort_simplex();
    res.trace.push_back(fs[order[0]]);
    res.iterations = it + 1;

    const int best = order[0], worst = order[n], second = order[n - 1];
    double spread = 0.0;
    for (int i = 1; i <= n; ++i) spread = std::max(spread, (xs[order[i]] - xs[best]).norm());
    if (std::abs(fs[worst] - fs[best]) < opt.ftol && spread < opt.xtol) {
      res.status = "converged";
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += xs[i];
    centroid /= n;

    Eigen::VectorXd xr = centroid + alpha * (centroid - xs[worst]);
    const double fr = objective(xr);
    ++res.evaluations;

    if (fr < fs[best]) {
      Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
      const double fe = objective(xe);
      ++res.evaluations;
      if (fe < fr) {
        xs[worst] = xe;
        fs[worst] = fe;
      } else {
        xs[worst] = xr;
        fs[worst] = fr;
      }
      continue;
    }
    if (fr < fs[second]) {
      xs[worst] = xr;
      fs[worst] = fr;
      continue;
    }
    Eigen::VectorXd xc = centroid + rho * (xs[worst] - centroid);
    const double fc = objective(xc);
    ++res.evaluations;
    if (fc < fs[worst]) {
      xs[worst] = xc;
      fs[worst] = fc;
      continue;
    }
    // shrink toward the best vertex
    for (int i = 0; i <= n; ++i) {
      if (i == best) continue;
      xs[i] = xs[best] + sigma * (xs[i] - xs[best]);
      fs[i] = objective(xs[i]);
      ++res.evaluations;
    }
  }

  sort_simplex();
  res.x = xs[order[0]];
  res.f = fs[order[0]];
  if (!res.trace.empty() && res.trace.back() > res.f) res.trace.push_back(res.f);
  return res;
}

} // namespace fracflow::fdsim
