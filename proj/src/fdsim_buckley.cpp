#include <cmath>
#include <stdexcept>

#include "fracflow/fdsim.hpp"

namespace fracflow::fdsim {

namespace {

// chord-minus-tangent residual for the Welge construction from (0,0)
double tangency(const closure::SaturationFunctions& f, const closure::FluidProps& fl, double S) {
  return closure::fractional_flow_deriv(S, f, fl) * S - closure::fractional_flow(S, f, fl);
}

} // namespace

WelgeSolution welge_tangent(const closure::SaturationFunctions& f,
                            const closure::FluidProps& fl) {
  const double lo = 1e-6, hi = 1.0 - 1e-6;
  WelgeSolution w;

  double glo = tangency(f, fl, lo);
  double ghi = tangency(f, fl, hi);
  if (std::abs(glo) < 1e-14 && std::abs(ghi) < 1e-14) {
    // linear flux: contact discontinuity
    w.S_shock = 1.0;
    w.shock_slope = closure::fractional_flow_deriv(0.5, f, fl);
    w.degenerate = true;
    return w;
  }
  if (glo * ghi > 0.0) {
    // no interior tangency: piston displacement, shock to the endpoint
    w.S_shock = 1.0;
    w.shock_slope = closure::fractional_flow(hi, f, fl) / hi;
    return w;
  }

  double a = lo, b = hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    const double gm = tangency(f, fl, mid);
    if (std::abs(b - a) < 1e-10) break;
    if ((gm > 0.0) == (glo > 0.0)) {
      a = mid;
      glo = gm;
    } else {
      b = mid;
    }
  }
  w.S_shock = 0.5 * (a + b);
  w.shock_slope = closure::fractional_flow(w.S_shock, f, fl) / w.S_shock;
  return w;
}

double total_velocity(const closure::SaturationFunctions& f, double K_F, double mu_w, double dp,
                      double l) {
  if (!(K_F > 0.0) || !(mu_w > 0.0) || !(l > 0.0))
    throw std::invalid_argument("total_velocity: K_F, mu_w, l must be positive");
  return K_F * f.corey.krw_max / mu_w * dp / l;
}

std::vector<double> bl_profile(const closure::SaturationFunctions& f,
                               const closure::FluidProps& fl, double u_t, double phi, double t,
                               const std::vector<double>& x) {
  if (!(u_t > 0.0) || !(phi > 0.0)) throw std::invalid_argument("bl_profile: u_t, phi > 0");
  const double swc = f.corey.s_wc;
  const double window = 1.0 - f.corey.s_wc - f.corey.s_nwr;

  std::vector<double> out(x.size(), swc);
  if (t <= 0.0) return out;

  const WelgeSolution w = welge_tangent(f, fl);
  const double v = u_t / phi;
  // slopes are in normalized saturation units; actual-saturation
  // characteristic speeds carry a 1/window factor
  const double x_shock = v * t * w.shock_slope / window;
  const double hi = 1.0 - 1e-6;
  const double slope_at_max = closure::fractional_flow_deriv(hi, f, fl);

  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > x_shock) continue; // undisturbed
    if (w.degenerate) {
      out[i] = swc + window; // full displacement behind the contact
      continue;
    }
    const double target = x[i] * window / (v * t); // df/dS to invert on [S_shock, 1)
    if (target <= slope_at_max) {
      out[i] = swc + window;
      continue;
    }
    double a = w.S_shock, b = hi;
    // df/dS is decreasing above the tangency point
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (a + b);
      if (closure::fractional_flow_deriv(mid, f, fl) > target)
        a = mid;
      else
        b = mid;
      if (b - a < 1e-12) break;
    }
    out[i] = swc + window * 0.5 * (a + b);
  }
  return out;
}

} // namespace fracflow::fdsim
