#pragma once

#include <Eigen/Dense>

namespace ioncrystal {

/// Result of integrating one Mathieu equation u'' + (a - 2 q cos 2 xi) u = 0
/// across one period of the drive (xi in [0, pi]).
struct MathieuSolution {
    double a = 0.0;
    double q = 0.0;
    /// Characteristic exponent in (0, 1); valid only when `stable`.
    double beta = 0.0;
    bool stable = false;
    /// Monodromy matrix mapping (u, u') at xi = 0 to xi = pi.
    Eigen::Matrix2d monodromy = Eigen::Matrix2d::Zero();
};

/// Lowest-order expansion beta = sqrt(a + q^2/2), valid for small |a|, |q|.
/// Throws DomainError when the radicand is negative.
double beta_approx(double a, double q);

/// Characteristic exponent from the monodromy matrix of the Mathieu
/// equation, exact to integrator tolerance. Stability boundary is
/// |tr M| = 2; `beta` is set only inside the stable region.
MathieuSolution mathieu_solve(double a, double q);

/// Convenience wrapper: exact beta for a stable (a, q); throws
/// UnstableAxisError outside the stability region.
double beta_exact(double a, double q);

/// Solve beta_exact(a, q) == beta_target for the dc parameter `a` at fixed
/// q, by bracketed root finding on the monotone branch containing a ~
/// beta^2 - q^2/2. Throws ConvergenceError if no bracket is found.
double a_for_target_beta(double q, double beta_target);

} // namespace ioncrystal
