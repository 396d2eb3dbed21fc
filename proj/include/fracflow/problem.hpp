#pragma once

// The complete statement of a flow problem: geometry, fluids, matrix and
// fracture constitutive sets, boundary/initial pressures and duration.

#include "fracflow/closure.hpp"
#include "fracflow/geometry.hpp"

namespace fracflow {

struct FlowProblem {
  geom::CoreGeometry geometry;
  geom::FractureSet fractures;
  closure::SaturationFunctions matrix;   // carries phi and K
  closure::SaturationFunctions fracture; // linear kr, weak pc, phi_F and K_F
  closure::FluidProps fluids;
  double p_in = 0.0;   // Pa, wetting phase at the inlet face
  double p_out = 0.0;  // Pa, non-wetting phase at the outlet face
  double p_init = 0.0; // Pa, initial non-wetting pressure
  double t_max = 1.0e6; // s

  void validate() const {
    geometry.validate();
    matrix.validate();
    fracture.validate();
    fluids.validate();
    if (!(p_in > p_out)) throw std::invalid_argument("FlowProblem: need p_in > p_out");
    if (!(t_max > 0.0)) throw std::invalid_argument("FlowProblem: t_max must be positive");
  }
};

// Fracture constitutive set: linear relative permeability with endpoint
// one, and a weak capillary curve at 1e-3 of the Leverett magnitude to
// keep displacement fronts resolvable.
inline closure::SaturationFunctions make_fracture_closure(double K_F, double phi_F,
                                                          const closure::LeverettParams& lev) {
  closure::SaturationFunctions f;
  f.corey = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  f.leverett = lev;
  f.leverett.sigma = lev.sigma * 1e-3;
  f.porosity = phi_F;
  f.permeability = K_F;
  return f;
}

} // namespace fracflow
