#include "ioncrystal/trap.hpp"

#include "ioncrystal/errors.hpp"
#include "ioncrystal/mathieu.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace ioncrystal {

namespace {

constexpr double kVacuumPermittivity = 8.8541878128e-12; // F/m

const char* axis_name(int ax) {
    static const char* names[3] = {"x", "y", "z"};
    return names[ax];
}

} // namespace

TrapConfig TrapConfig::build(double omega_rf, double q_y, double a_y,
                             double a_z, bool require_stable) {
    if (!(omega_rf > 0.0))
        throw DomainError("TrapConfig: omega_rf must be positive");

    TrapConfig cfg;
    cfg.omega_rf_ = omega_rf;
    // Laplace's equation fixes the third dc coefficient exactly; the rf
    // quadrupole has no axial component.
    cfg.q_ = {-q_y, q_y, 0.0};
    cfg.a_ = {-a_y - a_z, a_y, a_z};

    for (int ax = 0; ax < 3; ++ax) {
        const MathieuSolution sol = mathieu_solve(cfg.a_[ax], cfg.q_[ax]);
        if (sol.stable) {
            cfg.beta_[ax] = sol.beta;
        } else if (require_stable) {
            throw UnstableAxisError(
                std::string("TrapConfig: axis ") + axis_name(ax) +
                " is Mathieu-unstable at (a = " + std::to_string(cfg.a_[ax]) +
                ", q = " + std::to_string(cfg.q_[ax]) + ")");
        }
    }
    return cfg;
}

TrapConfig TrapConfig::make(double omega_rf, double q_y, double a_y,
                            double a_z) {
    return build(omega_rf, q_y, a_y, a_z, true);
}

TrapConfig TrapConfig::make_unchecked(double omega_rf, double q_y, double a_y,
                                      double a_z) {
    return build(omega_rf, q_y, a_y, a_z, false);
}

double TrapConfig::beta(Axis ax) const {
    if (!beta_[ax])
        throw UnstableAxisError(std::string("TrapConfig::beta: axis ") +
                                axis_name(ax) +
                                " is Mathieu-unstable at (a = " +
                                std::to_string(a_[ax]) + ", q = " +
                                std::to_string(q_[ax]) + ")");
    return *beta_[ax];
}

double TrapConfig::secular_frequency_hz(Axis ax) const {
    return beta(ax) * omega_rf_ / (4.0 * std::numbers::pi);
}

TrapConfig from_physical(const PhysicalTrap& trap) {
    if (!(trap.ion_mass_kg > 0.0))
        throw DomainError("from_physical: ion mass must be positive");
    if (!(trap.ion_charge_c > 0.0))
        throw DomainError("from_physical: ion charge must be positive");
    if (!(trap.omega_rf > 0.0))
        throw DomainError("from_physical: omega_rf must be positive");

    const double gmax = std::max({std::abs(trap.gamma_x),
                                  std::abs(trap.gamma_y),
                                  std::abs(trap.gamma_z)});
    const double gsum = trap.gamma_x + trap.gamma_y + trap.gamma_z;
    if (gmax == 0.0 || std::abs(gsum) > 1e-9 * gmax)
        throw DomainError("from_physical: dc curvatures must satisfy "
                          "gamma_x + gamma_y + gamma_z = 0 (Laplace)");

    const double scale = trap.ion_charge_c /
                         (trap.ion_mass_kg * trap.omega_rf * trap.omega_rf);
    const double a_y = 4.0 * trap.u_dc * trap.gamma_y * scale;
    const double a_z = 4.0 * trap.u_dc * trap.gamma_z * scale;
    const double q_y = 2.0 * trap.u_rf * trap.gamma_prime_y * scale;
    return TrapConfig::make(trap.omega_rf, q_y, a_y, a_z);
}

LengthScale length_scale(double ion_mass_kg, double ion_charge_c,
                         double omega_rf) {
    if (!(ion_mass_kg > 0.0) || !(ion_charge_c > 0.0) || !(omega_rf > 0.0))
        throw DomainError("length_scale: mass, charge and omega_rf must be "
                          "positive");
    const double half_omega = 0.5 * omega_rf;
    const double cubed = ion_charge_c * ion_charge_c /
                         (4.0 * std::numbers::pi * kVacuumPermittivity *
                          ion_mass_kg * half_omega * half_omega);
    return LengthScale{std::cbrt(cubed)};
}

} // namespace ioncrystal
