#include "fracflow/closure.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fracflow::closure {

void CoreyParams::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("CoreyParams: " + what); };
  if (!(krw_max > 0.0 && krw_max <= 1.0)) bad("krw_max must be in (0,1]");
  if (!(krnw_max > 0.0 && krnw_max <= 1.0)) bad("krnw_max must be in (0,1]");
  if (!(n_w1 > 0.0 && n_w2 > 0.0 && n_nw1 > 0.0 && n_nw2 > 0.0)) bad("exponents must be positive");
  if (!(s_wc >= 0.0 && s_wc < 1.0)) bad("s_wc must be in [0,1)");
  if (!(s_nwr >= 0.0 && s_nwr < 1.0)) bad("s_nwr must be in [0,1)");
  if (!(s_wc + s_nwr < 1.0)) bad("s_wc + s_nwr must be < 1");
}

void LeverettParams::validate() const {
  if (J1 < 0.0 || J2 < 0.0) throw std::invalid_argument("LeverettParams: J1, J2 must be >= 0");
  if (!(S_eq > 0.0 && S_eq < 1.0)) throw std::invalid_argument("LeverettParams: S_eq must be in (0,1)");
  if (sigma < 0.0) throw std::invalid_argument("LeverettParams: sigma must be >= 0");
}

void FluidProps::validate() const {
  if (!(mu_w > 0.0 && mu_nw > 0.0 && rho_w > 0.0 && rho_nw > 0.0))
    throw std::invalid_argument("FluidProps: viscosities and densities must be positive");
}

void SaturationFunctions::validate() const {
  corey.validate();
  leverett.validate();
  if (!(porosity > 0.0 && porosity < 1.0))
    throw std::invalid_argument("SaturationFunctions: porosity must be in (0,1)");
  if (!(permeability > 0.0))
    throw std::invalid_argument("SaturationFunctions: permeability must be positive");
}

double normalized_saturation(double sw, double swc, double snwr) {
  const double denom = 1.0 - snwr - swc;
  if (!(denom > 0.0))
    throw std::invalid_argument("normalized_saturation: s_wc + s_nwr >= 1");
  return std::clamp((sw - swc) / denom, 0.0, 1.0);
}

RelPerm rel_perm(double Sw, const CoreyParams& p) {
  return {core::krw(Sw, p.krw_max, p.n_w1, p.n_w2),
          core::krnw(Sw, p.krnw_max, p.n_nw1, p.n_nw2)};
}

RelPerm rel_perm_deriv(double Sw, const CoreyParams& p) {
  const double S = clamp_eps(Sw);
  const double nw = p.n_w1 * S + p.n_w2 * (1.0 - S);
  const double nnw = p.n_nw1 * S + p.n_nw2 * (1.0 - S);
  const double dnw = p.n_w1 - p.n_w2;
  const double dnnw = p.n_nw1 - p.n_nw2;
  const double dkrw = p.krw_max * std::pow(S, nw) * (dnw * std::log(S) + nw / S);
  const double dkrnw =
      p.krnw_max * std::pow(1.0 - S, nnw) * (dnnw * std::log(1.0 - S) - nnw / (1.0 - S));
  return {dkrw, dkrnw};
}

double leverett_j(double Sw, const LeverettParams& p) {
  if (!(Sw > 0.0 && Sw < 1.0))
    throw std::domain_error("leverett_j: singular at Sw = " + std::to_string(Sw));
  return core::leverett_j(Sw, p.J1, p.J2, p.S_eq);
}

double leverett_dj(double Sw, const LeverettParams& p) {
  if (!(Sw > 0.0 && Sw < 1.0))
    throw std::domain_error("leverett_dj: singular at Sw = " + std::to_string(Sw));
  return core::leverett_dj(Sw, p.J1, p.J2);
}

double capillary_pressure(double Sw, const SaturationFunctions& f) {
  return f.leverett.sigma * std::sqrt(f.porosity / f.permeability) * leverett_j(Sw, f.leverett);
}

double fractional_flow(double Sw, const SaturationFunctions& f, const FluidProps& fl) {
  const RelPerm kr = rel_perm(Sw, f.corey);
  const double lw = kr.krw / fl.mu_w;
  const double lnw = kr.krnw / fl.mu_nw;
  if (lw + lnw <= 0.0) return Sw; // doubly immobile point: endpoint convention
  return lw / (lw + lnw);
}

double fractional_flow_deriv(double Sw, const SaturationFunctions& f, const FluidProps& fl) {
  const double S = clamp_eps(Sw);
  const RelPerm kr = rel_perm(S, f.corey);
  const RelPerm dkr = rel_perm_deriv(S, f.corey);
  const double a = kr.krw / fl.mu_w;
  const double b = kr.krnw / fl.mu_nw;
  const double da = dkr.krw / fl.mu_w;
  const double db = dkr.krnw / fl.mu_nw;
  const double s = a + b;
  return (da * b - a * db) / (s * s);
}

double cdc_lambda(double Sw, const SaturationFunctions& f, const FluidProps& fl) {
  const double mu_m = std::sqrt(fl.mu_w * fl.mu_nw);
  const RelPerm kr = rel_perm(Sw, f.corey);
  const double lam_nw = kr.krnw / fl.mu_nw;
  const double fw = fractional_flow(Sw, f, fl);
  const double mdj = -leverett_dj(Sw, f.leverett);
  return mu_m * lam_nw * fw * mdj;
}

double lambda_area(const SaturationFunctions& f, const FluidProps& fl, int n) {
  if (n < 2) throw std::invalid_argument("lambda_area: n must be >= 2");
  const double a = kEps;
  const double b = 1.0 - kEps;
  const double h = (b - a) / (n - 1);
  double sum = 0.0;
  double prev = cdc_lambda(a, f, fl);
  for (int i = 1; i < n; ++i) {
    const double cur = cdc_lambda(a + i * h, f, fl);
    sum += 0.5 * (prev + cur) * h;
    prev = cur;
  }
  return sum;
}

std::string curve_csv(const SaturationFunctions& f, const FluidProps& fl, int n) {
  std::ostringstream os;
  os.precision(12);
  os << "Sw,krw,krnw,J,pc_Pa,fw,lambda\n";
  for (int i = 0; i < n; ++i) {
    const double Sw = static_cast<double>(i) / (n - 1);
    const double Sc = clamp_eps(Sw);
    const RelPerm kr = rel_perm(Sw, f.corey);
    os << Sw << ',' << kr.krw << ',' << kr.krnw << ',' << leverett_j(Sc, f.leverett) << ','
       << capillary_pressure(Sc, f) << ',' << fractional_flow(Sw, f, fl) << ','
       << cdc_lambda(Sc, f, fl) << '\n';
  }
  return os.str();
}

} // namespace fracflow::closure
