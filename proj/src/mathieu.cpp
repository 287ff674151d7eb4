#include "ioncrystal/mathieu.hpp"

#include "ioncrystal/errors.hpp"
#include "ioncrystal/ode.hpp"

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <numbers>
#include <string>

namespace ioncrystal {

namespace {

std::string param_str(double a, double q) {
    return "(a = " + std::to_string(a) + ", q = " + std::to_string(q) + ")";
}

} // namespace

double beta_approx(double a, double q) {
    const double radicand = a + 0.5 * q * q;
    if (radicand < 0.0)
        throw DomainError("beta_approx: a + q^2/2 < 0 at " + param_str(a, q) +
                          "; lowest-order exponent is not real");
    return std::sqrt(radicand);
}

MathieuSolution mathieu_solve(double a, double q) {
    // Two fundamental solutions integrated together: state is
    // (u1, u1', u2, u2') with (u1, u1')(0) = (1, 0), (u2, u2')(0) = (0, 1).
    std::vector<double> y = {1.0, 0.0, 0.0, 1.0};
    auto rhs = [a, q](const std::vector<double>& s, std::vector<double>& ds,
                      double xi) {
        const double c = a - 2.0 * q * std::cos(2.0 * xi);
        ds[0] = s[1];
        ds[1] = -c * s[0];
        ds[2] = s[3];
        ds[3] = -c * s[2];
    };
    detail::integrate_rkf78(rhs, y, 0.0, std::numbers::pi);

    MathieuSolution sol;
    sol.a = a;
    sol.q = q;
    sol.monodromy << y[0], y[2], y[1], y[3];

    // The Wronskian is conserved: det M = 1 up to integrator error.
    const double det = sol.monodromy.determinant();
    if (std::abs(det - 1.0) > 1e-9)
        throw IntegratorAccuracyError(
            "mathieu_solve: monodromy determinant deviates from 1 by " +
            std::to_string(det - 1.0) + " at " + param_str(a, q));

    const double tr = sol.monodromy.trace();
    sol.stable = std::abs(tr) < 2.0;
    if (sol.stable)
        sol.beta = std::acos(0.5 * tr) / std::numbers::pi;
    return sol;
}

double beta_exact(double a, double q) {
    const MathieuSolution sol = mathieu_solve(a, q);
    if (!sol.stable)
        throw UnstableAxisError("beta_exact: Mathieu-unstable at " +
                                param_str(a, q));
    return sol.beta;
}

double a_for_target_beta(double q, double beta_target) {
    if (!(beta_target > 0.0) || !(beta_target < 1.0))
        throw DomainError("a_for_target_beta: target exponent must lie in "
                          "(0, 1), got " + std::to_string(beta_target));

    // Signed residual that stays monotone through the band edges: below the
    // band tr M > 2 (beta -> 0), above it tr M < -2 (beta -> 1).
    auto residual = [q, beta_target](double a) {
        const MathieuSolution sol = mathieu_solve(a, q);
        if (sol.stable)
            return sol.beta - beta_target;
        return sol.monodromy.trace() > 0.0 ? -beta_target
                                           : 1.0 - beta_target;
    };

    double a0 = beta_target * beta_target - 0.5 * q * q;
    double delta = std::max(0.1 * (std::abs(a0) + beta_target * beta_target +
                                   q * q),
                            1e-4);
    double lo = a0 - delta, hi = a0 + delta;
    double flo = residual(lo), fhi = residual(hi);
    for (int i = 0; i < 60 && flo * fhi > 0.0; ++i) {
        delta *= 2.0;
        lo = a0 - delta;
        hi = a0 + delta;
        flo = residual(lo);
        fhi = residual(hi);
    }
    if (flo * fhi > 0.0)
        throw ConvergenceError("a_for_target_beta: no bracket for beta = " +
                               std::to_string(beta_target) + " at q = " +
                               std::to_string(q));

    boost::math::tools::eps_tolerance<double> tol(52);
    std::uintmax_t max_iter = 200;
    const auto r = boost::math::tools::toms748_solve(residual, lo, hi, flo,
                                                     fhi, tol, max_iter);
    return 0.5 * (r.first + r.second);
}

} // namespace ioncrystal
