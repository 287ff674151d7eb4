#pragma once

#include "ioncrystal/equilibrium.hpp"
#include "ioncrystal/trap.hpp"

#include <Eigen/Dense>

namespace ioncrystal {

/// A pi-periodic crystal orbit under the full time-dependent potential,
/// represented by an even cosine series per degree of freedom:
///   u(xi) = sum_{k=0..order} coeffs.col(k) * cos(2 k xi).
/// Row index of `coeffs` is the flattened DOF 3*ion + axis, ions in the
/// seed (canonical) order.
struct PeriodicOrbit {
    int n_ions;
    int order;                     ///< highest retained harmonic K
    Eigen::MatrixXd coeffs;        ///< 3N x (order + 1)
    double residual;               ///< max EOM defect on a fine xi grid
    TrapConfig trap;
};

struct OrbitOptions {
    int initial_order = 8;   ///< starting K; escalated automatically
    int max_order = 64;
};

/// Solve the time-periodic equations of motion by harmonic balance with a
/// Newton iteration on the projected residuals. The harmonic order is
/// raised by 2 until the tail coefficient is below 1e-12 of the leading
/// one AND raising the order further moves no mean coefficient by more
/// than 1e-10 (otherwise the order would be too small). The converged
/// orbit's pointwise EOM defect must come out below 1e-9.
PeriodicOrbit find_orbit(const TrapConfig& trap, const Positions& seed,
                         const OrbitOptions& opts = {});

/// Positions and velocities (du/dxi) on the orbit at drive phase xi.
struct OrbitState {
    Positions positions;
    Positions velocities;
};
OrbitState orbit_state(const PeriodicOrbit& orbit, double xi);

/// Time-averaged positions over one period: the k = 0 Fourier block.
Positions orbit_mean(const PeriodicOrbit& orbit);

/// Canonicalized configuration built from the time-averaged positions.
/// Requires a fully stable trap (pseudopotential energy is reported).
CrystalConfiguration orbit_average(const PeriodicOrbit& orbit);

} // namespace ioncrystal
