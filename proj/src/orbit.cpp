#include "ioncrystal/orbit.hpp"

#include "ioncrystal/coulomb.hpp"
#include "ioncrystal/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

namespace ioncrystal {

namespace {

Positions positions_at(const Eigen::MatrixXd& coeffs, double xi) {
    const Eigen::Index dof = coeffs.rows();
    Eigen::VectorXd flat = Eigen::VectorXd::Zero(dof);
    for (Eigen::Index k = 0; k < coeffs.cols(); ++k)
        flat += coeffs.col(k) * std::cos(2.0 * k * xi);
    Positions u(dof / 3, 3);
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        u.row(i) = flat.segment<3>(3 * i).transpose();
    return u;
}

Eigen::VectorXd axis_coefficient(const TrapConfig& trap, Eigen::Index n_ions,
                                 double xi) {
    Eigen::VectorXd c(3 * n_ions);
    for (Eigen::Index i = 0; i < n_ions; ++i)
        for (int ax = 0; ax < 3; ++ax)
            c[3 * i + ax] = trap.a(static_cast<Axis>(ax)) -
                            2.0 * trap.q(static_cast<Axis>(ax)) *
                                std::cos(2.0 * xi);
    return c;
}

/// EOM defect u'' + (a - 2q cos 2xi) u + grad_coulomb(u) at one phase.
Eigen::VectorXd defect_at(const TrapConfig& trap,
                          const Eigen::MatrixXd& coeffs, double xi) {
    const Eigen::Index dof = coeffs.rows();
    Eigen::VectorXd u = Eigen::VectorXd::Zero(dof);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(dof);
    for (Eigen::Index k = 0; k < coeffs.cols(); ++k) {
        const double c = std::cos(2.0 * k * xi);
        u += coeffs.col(k) * c;
        acc += coeffs.col(k) * (-4.0 * double(k) * double(k) * c);
    }
    Positions up(dof / 3, 3);
    for (Eigen::Index i = 0; i < up.rows(); ++i)
        up.row(i) = u.segment<3>(3 * i).transpose();
    return acc + axis_coefficient(trap, dof / 3, xi).cwiseProduct(u) +
           coulomb_gradient(up);
}

/// One harmonic-balance solve at fixed order. Unknowns are the stacked
/// cosine coefficients; equations are the residual projections onto
/// cos(2k xi) over a uniform grid of M = 4(K+1) phases (exact discrete
/// orthogonality for all retained harmonics).
Eigen::MatrixXd solve_order(const TrapConfig& trap,
                            const Eigen::MatrixXd& seed_coeffs, int order) {
    const Eigen::Index dof = seed_coeffs.rows();
    const int m = 4 * (order + 1);

    Eigen::MatrixXd coeffs = Eigen::MatrixXd::Zero(dof, order + 1);
    coeffs.leftCols(std::min<Eigen::Index>(seed_coeffs.cols(), order + 1)) =
        seed_coeffs.leftCols(
            std::min<Eigen::Index>(seed_coeffs.cols(), order + 1));

    std::vector<double> xis(m);
    for (int j = 0; j < m; ++j)
        xis[j] = std::numbers::pi * j / m;

    const Eigen::Index n_unknown = dof * (order + 1);
    for (int iter = 0; iter < 50; ++iter) {
        Eigen::VectorXd eqs = Eigen::VectorXd::Zero(n_unknown);
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n_unknown, n_unknown);

        for (int j = 0; j < m; ++j) {
            const double xi = xis[j];
            const Positions u = positions_at(coeffs, xi);
            const Eigen::VectorXd res = defect_at(trap, coeffs, xi);
            if (!res.allFinite())
                throw ConvergenceError("find_orbit: non-finite residual "
                                       "(ion collision along the iteration)");
            const Eigen::MatrixXd dmat =
                coulomb_hessian(u) +
                Eigen::MatrixXd(
                    axis_coefficient(trap, dof / 3, xi).asDiagonal());

            for (int k = 0; k <= order; ++k) {
                const double proj = std::cos(2.0 * k * xi) / m;
                eqs.segment(k * dof, dof) += proj * res;
                for (int kp = 0; kp <= order; ++kp) {
                    const double basis = std::cos(2.0 * kp * xi);
                    jac.block(k * dof, kp * dof, dof, dof) +=
                        proj * basis *
                        (dmat - 4.0 * double(kp) * double(kp) *
                                    Eigen::MatrixXd::Identity(dof, dof));
                }
            }
        }

        if (eqs.cwiseAbs().maxCoeff() < 1e-13)
            return coeffs;

        const Eigen::VectorXd delta = jac.partialPivLu().solve(-eqs);
        if (!delta.allFinite())
            throw ConvergenceError("find_orbit: singular harmonic-balance "
                                   "Jacobian");
        for (int k = 0; k <= order; ++k)
            coeffs.col(k) += delta.segment(k * dof, dof);
    }
    throw ConvergenceError("find_orbit: Newton iteration did not converge "
                           "at harmonic order " + std::to_string(order));
}

} // namespace

PeriodicOrbit find_orbit(const TrapConfig& trap, const Positions& seed,
                         const OrbitOptions& opts) {
    const Eigen::Index n = seed.rows();
    if (n < 1)
        throw DomainError("find_orbit: need at least one ion");

    Eigen::MatrixXd seed_coeffs = Eigen::MatrixXd::Zero(3 * n, 1);
    for (Eigen::Index i = 0; i < n; ++i)
        seed_coeffs.block<3, 1>(3 * i, 0) = seed.row(i).transpose();

    int order = std::max(opts.initial_order, 2);
    Eigen::MatrixXd current = solve_order(trap, seed_coeffs, order);

    Eigen::MatrixXd accepted;
    int accepted_order = -1;
    while (true) {
        const Eigen::MatrixXd next = solve_order(trap, current, order + 2);

        const double lead = current.col(0).cwiseAbs().maxCoeff();
        const double tail = current.col(order).cwiseAbs().maxCoeff();
        const bool tail_ok = tail <= 1e-12 * lead;
        // Raising the order must leave the mean coefficients in place,
        // otherwise the original order was too small.
        const bool mean_ok =
            (next.col(0) - current.col(0)).cwiseAbs().maxCoeff() <= 1e-10;

        if (tail_ok && mean_ok) {
            accepted = next;
            accepted_order = order + 2;
            break;
        }
        order += 2;
        current = next;
        if (order + 2 > opts.max_order)
            throw ConvergenceError(
                "find_orbit: harmonic order escalation exceeded K = " +
                std::to_string(opts.max_order));
    }

    // Pointwise defect on a fine grid, off the collocation phases.
    const int fine = 8 * (accepted_order + 1) + 3;
    double worst = 0.0;
    for (int j = 0; j < fine; ++j) {
        const double xi = std::numbers::pi * (j + 0.5) / fine;
        worst = std::max(worst,
                         defect_at(trap, accepted, xi).cwiseAbs().maxCoeff());
    }
    if (worst > 1e-9)
        throw ConvergenceError("find_orbit: converged orbit has EOM defect " +
                               std::to_string(worst) + " > 1e-9");
    return PeriodicOrbit{static_cast<int>(n), accepted_order, accepted, worst,
                         trap};
}

OrbitState orbit_state(const PeriodicOrbit& orbit, double xi) {
    const Eigen::Index dof = orbit.coeffs.rows();
    Eigen::VectorXd u = Eigen::VectorXd::Zero(dof);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dof);
    for (Eigen::Index k = 0; k < orbit.coeffs.cols(); ++k) {
        u += orbit.coeffs.col(k) * std::cos(2.0 * k * xi);
        v += orbit.coeffs.col(k) * (-2.0 * double(k) * std::sin(2.0 * k * xi));
    }
    OrbitState state;
    state.positions.resize(dof / 3, 3);
    state.velocities.resize(dof / 3, 3);
    for (Eigen::Index i = 0; i < dof / 3; ++i) {
        state.positions.row(i) = u.segment<3>(3 * i).transpose();
        state.velocities.row(i) = v.segment<3>(3 * i).transpose();
    }
    return state;
}

Positions orbit_mean(const PeriodicOrbit& orbit) {
    const Eigen::Index dof = orbit.coeffs.rows();
    Positions u(dof / 3, 3);
    for (Eigen::Index i = 0; i < dof / 3; ++i)
        u.row(i) = orbit.coeffs.col(0).segment<3>(3 * i).transpose();
    return u;
}

CrystalConfiguration orbit_average(const PeriodicOrbit& orbit) {
    return canonicalize(betas_of(orbit.trap), orbit_mean(orbit));
}

} // namespace ioncrystal
