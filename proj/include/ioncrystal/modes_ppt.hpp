#pragma once

#include "ioncrystal/equilibrium.hpp"
#include "ioncrystal/modes.hpp"
#include "ioncrystal/trap.hpp"

namespace ioncrystal {

/// Small-oscillation modes about a pseudopotential minimum: eigenpairs of
/// the pseudopotential Hessian, reported as exponents beta_k = sqrt(mu_k)
/// and frequencies f_k = beta_k * omega_rf / (4 pi), tagged via
/// tag_modes(). Throws DomainError("not a stable equilibrium") when any
/// Hessian eigenvalue is below -1e-8.
ModeSet ppt_modes(const TrapConfig& cfg, const CrystalConfiguration& crystal);

/// Same computation from bare secular exponents (the pseudopotential layer
/// does not involve q directly).
ModeSet ppt_modes(const SecularBetas& b, double omega_rf,
                  const CrystalConfiguration& crystal);

/// Pseudopotential prediction of the 3-ion zigzag pair from measured
/// centre-of-mass frequencies alone. The x axis never enters the planar
/// observables (the x block of the Hessian decouples exactly for a planar
/// crystal), so no rf parameter is needed. Uncertainties are propagated by
/// re-evaluating the pipeline at f +/- sigma for each input and summing
/// the four resulting shifts in quadrature.
struct ZigzagPrediction {
    double zz_b_hz = 0.0;
    double zz_a_hz = 0.0;
    double sigma_b_hz = 0.0;
    double sigma_a_hz = 0.0;
};

ZigzagPrediction ppt_predict_from_cm(double f_cm_z_hz, double f_cm_y_hz,
                                     double sigma_z_hz, double sigma_y_hz,
                                     double omega_rf);

} // namespace ioncrystal
