#pragma once

#include "ioncrystal/modes.hpp"
#include "ioncrystal/orbit.hpp"
#include "ioncrystal/trap.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace ioncrystal {

/// Full time-dependent linearization about a periodic orbit. Small
/// displacements obey phi'' + D(xi) phi = 0 with
///   D(xi) = diag(a_i - 2 q_i cos 2 xi) + CoulombHessian(u(xi)).
Eigen::MatrixXd linearized_coupling(const PeriodicOrbit& orbit, double xi);

struct FloquetSpectrum {
    Eigen::MatrixXd monodromy;        ///< 6N x 6N map over one drive period
    Eigen::VectorXcd multipliers;     ///< Floquet multipliers
    double unit_circle_deviation = 0; ///< max | |lambda| - 1 |
    double symplectic_defect = 0;     ///< max |M^T J M - J|
    bool stable = false;              ///< deviation <= 1e-6
    ModeSet modes;                    ///< filled only when stable
};

/// Monodromy spectrum of the linearized flow. Throws
/// IntegratorAccuracyError when the monodromy is not symplectic to 1e-8,
/// and DynamicalInstabilityError when any multiplier leaves the unit
/// circle by more than 1e-6 ("crystal dynamically unstable at these
/// parameters"). Exponents beta_k = |arg lambda_k| / pi; mode vectors are
/// the position parts of the Floquet eigenvectors at xi = 0, phase-rotated
/// to their best real representative. Exponent pairs closer than 1e-9 are
/// flagged as a degenerate subspace.
FloquetSpectrum flt_spectrum(const PeriodicOrbit& orbit);

/// Same computation but instability does not throw: `stable` is false and
/// `modes` stays empty. Symplecticity is still enforced. Used by stability
/// scans that deliberately cross the boundary.
FloquetSpectrum flt_spectrum_allow_unstable(const PeriodicOrbit& orbit);

/// One row of the zigzag-pair-versus-q sweep.
struct QSweepRow {
    double q = 0.0;
    bool ok = false;
    std::string error;       ///< failure reason when !ok
    double zz_a_hz = 0.0;
    double zz_b_hz = 0.0;
    double zz_a_ppt_hz = 0.0; ///< q-independent pseudopotential reference
    double zz_b_ppt_hz = 0.0;
};

struct QSweepOptions {
    double omega_rf = 0.0;
    double f_cm_y_hz = 0.0;    ///< transverse cm target held fixed per row
    double f_cm_z_hz = 0.0;    ///< axial cm target held fixed per row
    std::vector<double> q_grid;
    std::uint64_t seed = 20177;
    int jobs = 1;              ///< row-level parallelism; output order fixed
};

/// Full-theory zigzag frequencies versus drive parameter q at fixed
/// measured cm frequencies: per row, (a_z, a_y) are re-solved so the
/// single-ion exponents keep the cm targets, then the 3-ion zigzag orbit
/// and its Floquet spectrum are evaluated. Rows where the trap is
/// unstable, the crystal is not a planar zigzag, or the spectrum is
/// dynamically unstable are flagged and the sweep continues.
std::vector<QSweepRow> zz_shift_vs_q(const QSweepOptions& opts);

} // namespace ioncrystal
