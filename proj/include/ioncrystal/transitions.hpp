#pragma once

#include "ioncrystal/trap.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ioncrystal {

/// Anisotropy parameters (alpha_x, alpha_y) = ((beta_z/beta_x)^2,
/// (beta_z/beta_y)^2), built from the exact exponents. Throws
/// UnstableAxisError if any axis is Mathieu-unstable.
std::pair<double, double> alpha_of(const TrapConfig& cfg);

struct CriticalAlpha {
    double alpha_c = 0.0;
    double bracket_lo = 0.0;   ///< final bisection bracket
    double bracket_hi = 0.0;
    std::string kind;          ///< e.g. "linear->planar_yz"
    std::string method;        ///< "ppt" or "flt"
    bool first_order = false;  ///< hysteresis between branches detected
    std::string branch_low;    ///< labels when first_order
    std::string branch_high;
};

struct TransitionScan {
    int n_ions = 0;
    std::vector<double> alpha_grid;
    /// Structure label per grid point: the geometry class, plus the signed
    /// y pattern (e.g. "planar_yz:+-+-") for planar crystals.
    std::vector<std::string> classifications;
    std::vector<CriticalAlpha> criticals;
};

struct AlphaScanOptions {
    /// Drive parameter of the scan family. The dc coefficients follow a
    /// fixed-depth path a_y(t) = a_y0 - (t - a_z0)/2, a_z(t) = t with the
    /// y-soft base (a_y0, a_z0) = (-0.35, 0.1) * q_y^2/2, so the scanned
    /// anisotropy covers (0, 1) while every axis stays Mathieu-stable.
    double q_y = 0.1;
    double omega_rf = 2.203513087227881e8; ///< 2 pi * 35.07 MHz
    double resolution = 0.005;  ///< grid step; brackets refine far below it
    std::uint64_t seed = 20177;
};

/// Scan the structural classification of the pseudopotential minimum over
/// an anisotropy interval. Second-order chain->zigzag boundaries are
/// refined by bisecting the zero crossing of the lowest transverse Hessian
/// eigenvalue of the chain; other label changes are bisected on the label
/// of the global minimum. Continuation (warm-started) branches are
/// compared against fresh multi-starts in both scan directions; a
/// disagreement marks the transition first-order and reports both
/// branches.
TransitionScan scan_alpha_ppt(int n_ions, double alpha_min, double alpha_max,
                              const AlphaScanOptions& opts = {});

/// Same scan in the full time-dependent theory: the chain branch's
/// Floquet spectrum decides stability, and the chain->zigzag boundary is
/// the bisected edge of | |lambda| - 1 | <= 1e-6.
TransitionScan scan_alpha_flt(int n_ions, double alpha_min, double alpha_max,
                              const AlphaScanOptions& opts = {});

} // namespace ioncrystal
