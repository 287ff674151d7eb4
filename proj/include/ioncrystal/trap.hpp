#pragma once

#include <array>
#include <optional>

namespace ioncrystal {

/// Axis indices used throughout: 0 = x, 1 = y, 2 = z (z is the trap axis).
enum Axis : int { AXIS_X = 0, AXIS_Y = 1, AXIS_Z = 2 };

/// Dimensionless linear-trap configuration. The independent parameters are
/// (omega_rf, q_y, a_y, a_z); the remaining Mathieu coefficients follow
/// from the quadrupole geometry and Laplace's equation:
///   q_x = -q_y,  q_z = 0,  a_x = -a_y - a_z   (exact, not approximate).
class TrapConfig {
public:
    /// Validated constructor: every axis must lie inside the Mathieu
    /// stability region, otherwise UnstableAxisError names the offending
    /// axis. Characteristic exponents are computed once and cached.
    static TrapConfig make(double omega_rf, double q_y, double a_y, double a_z);

    /// Constructor that skips the per-axis stability check. Intended for
    /// invariant-subspace analysis (e.g. the pure-dc limit q_y = 0, where
    /// Laplace's equation forbids simultaneous stability of all axes) and
    /// for scans that probe the stability edge. beta(axis) still throws on
    /// an unstable axis.
    static TrapConfig make_unchecked(double omega_rf, double q_y, double a_y,
                                     double a_z);

    double omega_rf() const { return omega_rf_; }
    double q(Axis ax) const { return q_[ax]; }
    double a(Axis ax) const { return a_[ax]; }

    /// Exact characteristic exponent of axis `ax`; throws UnstableAxisError
    /// when that axis is Mathieu-unstable.
    double beta(Axis ax) const;

    /// True when axis `ax` is inside the Mathieu stability region.
    bool axis_stable(Axis ax) const { return beta_[ax].has_value(); }

    /// Single-ion secular frequency of axis `ax` in Hz:
    ///   f = beta * omega_rf / (4 pi).
    double secular_frequency_hz(Axis ax) const;

private:
    TrapConfig() = default;
    static TrapConfig build(double omega_rf, double q_y, double a_y,
                            double a_z, bool require_stable);

    double omega_rf_ = 0.0;
    std::array<double, 3> q_{};
    std::array<double, 3> a_{};
    std::array<std::optional<double>, 3> beta_{};
};

/// Physical trap description; converted to dimensionless parameters by
/// from_physical(). The dc electrode potential contributes
/// e U_dc gamma_i x_i^2 per axis, the rf potential e U_rf gamma'_i x_i^2
/// cos(Omega t), with curvatures gamma in 1/m^2. Hence
///   a_i = 4 e U_dc gamma_i / (m Omega^2),
///   q_i = 2 e U_rf gamma'_i / (m Omega^2).
struct PhysicalTrap {
    double omega_rf = 0.0;   ///< rad/s
    double u_dc = 0.0;       ///< V
    double u_rf = 0.0;       ///< V (amplitude)
    double gamma_x = 0.0;    ///< 1/m^2, dc curvature; must satisfy sum gamma_i = 0
    double gamma_y = 0.0;
    double gamma_z = 0.0;
    double gamma_prime_y = 0.0; ///< 1/m^2, rf curvature; x is -this, z is 0
    double ion_mass_kg = 0.0;
    double ion_charge_c = 0.0;
};

/// Build the dimensionless configuration from electrode voltages and
/// geometry. Validates the quadrupole constraints (dc curvatures sum to
/// zero; positive mass/charge) before delegating to TrapConfig::make.
TrapConfig from_physical(const PhysicalTrap& trap);

/// Characteristic length of the dimensionless coordinates:
///   l^3 = e^2 / (4 pi eps0 m (Omega/2)^2).
/// Dimensionless positions multiply by `meters` to give SI positions.
struct LengthScale {
    double meters = 0.0;
};

LengthScale length_scale(double ion_mass_kg, double ion_charge_c,
                         double omega_rf);

} // namespace ioncrystal
