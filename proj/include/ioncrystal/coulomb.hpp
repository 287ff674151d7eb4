#pragma once

#include "ioncrystal/errors.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace ioncrystal {

/// N x 3 matrix of dimensionless ion positions, one row per ion, columns
/// (x, y, z). Flattened degree-of-freedom index is 3*ion + axis.
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Mutual Coulomb energy sum_{n<m} 1/|r_n - r_m| in dimensionless units.
inline double coulomb_energy(const Positions& u) {
    const Eigen::Index n = u.rows();
    double e = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            e += 1.0 / (u.row(i) - u.row(j)).norm();
    return e;
}

/// Gradient of coulomb_energy with respect to the flattened coordinates.
inline Eigen::VectorXd coulomb_gradient(const Positions& u) {
    const Eigen::Index n = u.rows();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(3 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Eigen::RowVector3d d = u.row(i) - u.row(j);
            const double r = d.norm();
            const Eigen::RowVector3d f = -d / (r * r * r);
            g.segment<3>(3 * i) += f.transpose();
            g.segment<3>(3 * j) -= f.transpose();
        }
    }
    return g;
}

/// Hessian of coulomb_energy: 3N x 3N, blocks
///   d2E/du_i du_j = -B_ij (i != j),  d2E/du_i du_i = sum_{j != i} B_ij,
/// with B_ij = 3 d d^T / r^5 - I / r^3 for d = u_i - u_j.
inline Eigen::MatrixXd coulomb_hessian(const Positions& u) {
    const Eigen::Index n = u.rows();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Eigen::Vector3d d = (u.row(i) - u.row(j)).transpose();
            const double r = d.norm();
            const double r3 = r * r * r;
            const Eigen::Matrix3d b =
                3.0 * d * d.transpose() / (r3 * r * r) -
                Eigen::Matrix3d::Identity() / r3;
            h.block<3, 3>(3 * i, 3 * i) += b;
            h.block<3, 3>(3 * j, 3 * j) += b;
            h.block<3, 3>(3 * i, 3 * j) -= b;
            h.block<3, 3>(3 * j, 3 * i) -= b;
        }
    }
    return h;
}

} // namespace ioncrystal
