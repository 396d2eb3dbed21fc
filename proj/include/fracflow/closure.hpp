#pragma once

// Saturation-dependent constitutive functions for two-phase flow:
// extended-Corey relative permeability, Bentsen-type Leverett J,
// capillary pressure, fractional flow and the normalized capillary
// diffusion coefficient.

#include <cmath>
#include <stdexcept>
#include <string>

namespace fracflow::closure {

// Endpoint clamp for J and dJ/dSw, which diverge at Sw = 0 and 1.
inline constexpr double kEps = 1e-6;

struct CoreyParams {
  double krw_max = 1.0;
  double krnw_max = 1.0;
  double n_w1 = 1.0;
  double n_w2 = 1.0;
  double n_nw1 = 1.0;
  double n_nw2 = 1.0;
  double s_wc = 0.0;
  double s_nwr = 0.0;

  void validate() const;
};

struct LeverettParams {
  double J1 = 0.0;
  double J2 = 0.0;
  double S_eq = 1.0 - kEps;
  double sigma = 0.0; // N/m

  void validate() const;
};

struct FluidProps {
  double mu_w = 1.0e-3;   // Pa*s
  double mu_nw = 1.0e-3;  // Pa*s
  double rho_w = 1000.0;  // kg/m^3
  double rho_nw = 1000.0; // kg/m^3

  void validate() const;
};

struct SaturationFunctions {
  CoreyParams corey;
  LeverettParams leverett;
  double porosity = 0.1;
  double permeability = 1e-15; // m^2

  void validate() const;
};

// Generic formula kernels, shared verbatim between the plain double path
// and the differentiable-graph path. Saturation argument is the
// normalized saturation on (0,1); callers own range handling.
namespace core {

using std::exp;
using std::log;
using std::pow;
using std::sqrt;

template <class S, class P>
auto krw(const S& Sw, const P& krw_max, const P& n_w1, const P& n_w2) {
  auto n = n_w1 * Sw + n_w2 * (1.0 - Sw);
  return krw_max * pow(Sw, n);
}

template <class S, class P>
auto krnw(const S& Sw, const P& krnw_max, const P& n_nw1, const P& n_nw2) {
  auto n = n_nw1 * Sw + n_nw2 * (1.0 - Sw);
  return krnw_max * pow(1.0 - Sw, n);
}

template <class S, class P>
auto leverett_j(const S& Sw, const P& J1, const P& J2, const P& S_eq) {
  return -1.0 * J1 * log(Sw / S_eq) + J2 * log((1.0 - Sw) / (1.0 - S_eq));
}

template <class S, class P>
auto leverett_dj(const S& Sw, const P& J1, const P& J2) {
  return -1.0 * J1 / Sw - J2 / (1.0 - Sw);
}

template <class S, class P>
auto normalized_saturation(const S& sw, const P& s_wc, const P& s_nwr) {
  return (sw - s_wc) / (1.0 - s_nwr - s_wc);
}

} // namespace core

// --- double-valued operations -------------------------------------------

// Sw = (sw - swc)/(1 - snwr - swc), clamped to [0,1] outside the mobile
// window. Throws on a degenerate denominator.
double normalized_saturation(double sw, double swc, double snwr);

struct RelPerm {
  double krw;
  double krnw;
};

RelPerm rel_perm(double Sw, const CoreyParams& p);

// Analytic d(krw)/dSw and d(krnw)/dSw; Sw is clamped to [kEps, 1-kEps]
// before the log terms are formed.
RelPerm rel_perm_deriv(double Sw, const CoreyParams& p);

// Throws std::domain_error at Sw = 0 or 1 exactly; callers clamp.
double leverett_j(double Sw, const LeverettParams& p);
double leverett_dj(double Sw, const LeverettParams& p);

double capillary_pressure(double Sw, const SaturationFunctions& f);

double fractional_flow(double Sw, const SaturationFunctions& f, const FluidProps& fl);
double fractional_flow_deriv(double Sw, const SaturationFunctions& f, const FluidProps& fl);

// Lambda = mu_m * lam_nw * f_w * (-dJ/dSw) with mu_m = sqrt(mu_w*mu_nw)
// and lam_nw the relative mobility krnw/mu_nw.
double cdc_lambda(double Sw, const SaturationFunctions& f, const FluidProps& fl);

// Trapezoid integral of Lambda over Sw in [kEps, 1-kEps] on n grid points.
double lambda_area(const SaturationFunctions& f, const FluidProps& fl, int n);

inline double clamp_eps(double Sw) {
  return Sw < kEps ? kEps : (Sw > 1.0 - kEps ? 1.0 - kEps : Sw);
}

// CSV export: header Sw,krw,krnw,J,pc_Pa,fw,lambda; n rows on a uniform
// Sw grid (J-dependent columns evaluated at the clamped saturation).
std::string curve_csv(const SaturationFunctions& f, const FluidProps& fl, int n = 1001);

} // namespace fracflow::closure
