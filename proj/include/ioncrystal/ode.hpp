#pragma once

#include <boost/numeric/odeint.hpp>

#include <vector>

namespace ioncrystal::detail {

/// Integrate dy/dxi = rhs(y, xi) from xi0 to xi1 with an adaptive
/// Runge-Kutta-Fehlberg 7(8) stepper at abs/rel tolerance `tol`.
/// State is a flat vector of doubles; `rhs` has signature
/// (const std::vector<double>& y, std::vector<double>& dydxi, double xi).
template <typename Rhs>
void integrate_rkf78(Rhs&& rhs, std::vector<double>& y, double xi0, double xi1,
                     double tol = 1e-12) {
    namespace odeint = boost::numeric::odeint;
    using stepper_t = odeint::runge_kutta_fehlberg78<std::vector<double>>;
    odeint::integrate_adaptive(odeint::make_controlled<stepper_t>(tol, tol),
                               std::forward<Rhs>(rhs), y, xi0, xi1,
                               (xi1 - xi0) / 64.0);
}

} // namespace ioncrystal::detail
