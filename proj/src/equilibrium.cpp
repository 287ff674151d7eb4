#include "ioncrystal/equilibrium.hpp"

#include "ioncrystal/errors.hpp"
#include "ioncrystal/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

namespace ioncrystal {

namespace {

Eigen::Vector3d beta_squared(const SecularBetas& b) {
    return {b.x * b.x, b.y * b.y, b.z * b.z};
}

double min_pair_distance(const Positions& u) {
    const Eigen::Index n = u.rows();
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            dmin = std::min(dmin, (u.row(i) - u.row(j)).norm());
    return dmin;
}

Positions from_flat(const Eigen::VectorXd& v) {
    Positions u(v.size() / 3, 3);
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        u.row(i) = v.segment<3>(3 * i).transpose();
    return u;
}

Eigen::VectorXd to_flat(const Positions& u) {
    Eigen::VectorXd v(3 * u.rows());
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        v.segment<3>(3 * i) = u.row(i).transpose();
    return v;
}

/// Descent-only trust-region Newton step loop. Returns the minimizer, or
/// nullopt when the start fails (no descent possible, iteration budget,
/// or convergence to a saddle).
std::optional<Positions> try_minimize(const SecularBetas& b,
                                      const Positions& seed) {
    Positions u = seed;
    double energy = pseudo_energy(b, u);
    if (!std::isfinite(energy))
        return std::nullopt;

    double damping = 1e-6;
    for (int iter = 0; iter < 10000; ++iter) {
        const Eigen::VectorXd g = pseudo_gradient(b, u);
        if (!g.allFinite())
            return std::nullopt;

        const Eigen::MatrixXd h = pseudo_hessian(b, u);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
        const Eigen::VectorXd& evals = es.eigenvalues();

        if (g.norm() < 1e-12) {
            // Stationary point reached; only accept genuine minima.
            if (evals.minCoeff() < -1e-9)
                return std::nullopt;
            return u;
        }

        const double scale = std::max(1.0, evals.cwiseAbs().maxCoeff());
        bool stepped = false;
        for (int attempt = 0; attempt < 60; ++attempt) {
            // shift >= -lambda_min + margin keeps every denominator positive.
            const double shift =
                std::max(damping, -evals.minCoeff() + 1e-8 * scale);
            const Eigen::ArrayXd denom = evals.array() + shift;
            Eigen::VectorXd p =
                -(es.eigenvectors() *
                  ((es.eigenvectors().transpose() * g).array() / denom)
                      .matrix());
            // Keep steps short of any ion collision.
            const double dmin = min_pair_distance(u);
            if (std::isfinite(dmin) && p.norm() > 0.4 * dmin)
                p *= 0.4 * dmin / p.norm();

            const Positions u_new = from_flat(to_flat(u) + p);
            const double e_new = pseudo_energy(b, u_new);
            if (std::isfinite(e_new) && e_new <= energy) {
                u = u_new;
                energy = e_new;
                damping = std::max(damping / 3.0, 1e-12);
                stepped = true;
                break;
            }
            damping *= 4.0;
        }
        if (!stepped)
            return std::nullopt;
    }
    return std::nullopt;
}

} // namespace

SecularBetas betas_of(const TrapConfig& cfg) {
    return {cfg.beta(AXIS_X), cfg.beta(AXIS_Y), cfg.beta(AXIS_Z)};
}

const char* to_string(CrystalClass c) {
    switch (c) {
    case CrystalClass::linear:
        return "linear";
    case CrystalClass::planar_yz:
        return "planar_yz";
    case CrystalClass::three_d:
        return "three_d";
    }
    return "?";
}

double pseudo_energy(const SecularBetas& b, const Positions& u) {
    const Eigen::Vector3d b2 = beta_squared(b);
    double e = coulomb_energy(u);
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (int ax = 0; ax < 3; ++ax)
            e += 0.5 * b2[ax] * u(i, ax) * u(i, ax);
    return e;
}

Eigen::VectorXd pseudo_gradient(const SecularBetas& b, const Positions& u) {
    const Eigen::Vector3d b2 = beta_squared(b);
    Eigen::VectorXd g = coulomb_gradient(u);
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (int ax = 0; ax < 3; ++ax)
            g[3 * i + ax] += b2[ax] * u(i, ax);
    return g;
}

Eigen::MatrixXd pseudo_hessian(const SecularBetas& b, const Positions& u) {
    const Eigen::Vector3d b2 = beta_squared(b);
    Eigen::MatrixXd h = coulomb_hessian(u);
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (int ax = 0; ax < 3; ++ax)
            h(3 * i + ax, 3 * i + ax) += b2[ax];
    return h;
}

double pseudo_energy(const TrapConfig& cfg, const Positions& u) {
    return pseudo_energy(betas_of(cfg), u);
}

Eigen::VectorXd pseudo_gradient(const TrapConfig& cfg, const Positions& u) {
    return pseudo_gradient(betas_of(cfg), u);
}

Eigen::MatrixXd pseudo_hessian(const TrapConfig& cfg, const Positions& u) {
    return pseudo_hessian(betas_of(cfg), u);
}

CrystalClass classify(const Positions& u) {
    const double extent = u.cwiseAbs().maxCoeff();
    // Crystal spacings are O(1) in these units; an extent this small can
    // only be numerical noise around a single ion at the origin.
    if (extent < 1e-9)
        return CrystalClass::linear;
    const double tol = 1e-5 * extent;
    if (u.col(0).cwiseAbs().maxCoeff() > tol)
        return CrystalClass::three_d;
    if (u.col(1).cwiseAbs().maxCoeff() > tol)
        return CrystalClass::planar_yz;
    return CrystalClass::linear;
}

CrystalConfiguration canonicalize(const SecularBetas& b, const Positions& u) {
    const Eigen::Index n = u.rows();
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    auto row_less = [&u](int i, int j) {
        if (u(i, 2) != u(j, 2))
            return u(i, 2) < u(j, 2);
        if (u(i, 1) != u(j, 1))
            return u(i, 1) < u(j, 1);
        return u(i, 0) < u(j, 0);
    };
    std::sort(order.begin(), order.end(), row_less);

    Positions sorted(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
        sorted.row(i) = u.row(order[static_cast<size_t>(i)]);

    // Mirror gauge: the potential is even in x and in y, so fix each sign
    // by the first ion whose component is significant.
    const double extent = sorted.cwiseAbs().maxCoeff();
    const double tol = 1e-12 * (1.0 + extent);
    for (int ax : {1, 0}) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(sorted(i, ax)) > tol) {
                if (sorted(i, ax) < 0.0)
                    sorted.col(ax) = -sorted.col(ax);
                break;
            }
        }
    }
    std::vector<int> order2(static_cast<size_t>(n));
    std::iota(order2.begin(), order2.end(), 0);
    auto row_less2 = [&sorted](int i, int j) {
        if (sorted(i, 2) != sorted(j, 2))
            return sorted(i, 2) < sorted(j, 2);
        if (sorted(i, 1) != sorted(j, 1))
            return sorted(i, 1) < sorted(j, 1);
        return sorted(i, 0) < sorted(j, 0);
    };
    std::sort(order2.begin(), order2.end(), row_less2);
    Positions canonical(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
        canonical.row(i) = sorted.row(order2[static_cast<size_t>(i)]);

    CrystalConfiguration cfg;
    cfg.n_ions = static_cast<int>(n);
    cfg.positions = canonical;
    cfg.labels.resize(static_cast<size_t>(n));
    std::iota(cfg.labels.begin(), cfg.labels.end(), 0);
    cfg.classification = classify(canonical);
    cfg.energy = pseudo_energy(b, canonical);
    return cfg;
}

Positions chain_positions(double beta_z, int n_ions) {
    if (n_ions < 1)
        throw DomainError("chain_positions: need at least one ion");
    if (!(beta_z > 0.0))
        throw DomainError("chain_positions: beta_z must be positive");

    Positions u = Positions::Zero(n_ions, 3);
    if (n_ions == 1)
        return u;

    const double bz2 = beta_z * beta_z;
    const double span =
        std::cbrt(1.0 / bz2) * std::pow(double(n_ions), 0.56);
    for (int i = 0; i < n_ions; ++i)
        u(i, 2) = -0.5 * span + span * i / double(n_ions - 1);

    // Axial Newton iteration; the chain interior is strictly convex along
    // the ordered-z manifold, so plain Newton converges from the seed.
    Eigen::VectorXd z = u.col(2);
    for (int iter = 0; iter < 200; ++iter) {
        Eigen::VectorXd g = bz2 * z;
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_ions, n_ions);
        h.diagonal().array() += bz2;
        for (int i = 0; i < n_ions; ++i) {
            for (int j = i + 1; j < n_ions; ++j) {
                const double d = z[i] - z[j];
                const double s = d > 0.0 ? 1.0 : -1.0;
                g[i] -= s / (d * d);
                g[j] += s / (d * d);
                const double c = 2.0 / std::abs(d * d * d);
                h(i, i) += c;
                h(j, j) += c;
                h(i, j) -= c;
                h(j, i) -= c;
            }
        }
        if (g.norm() < 1e-13)
            break;
        z -= h.ldlt().solve(g);
    }
    u.col(2) = z;
    std::sort(u.col(2).data(), u.col(2).data() + n_ions);
    return u;
}

CrystalConfiguration find_equilibrium(const SecularBetas& b, int n_ions,
                                      const EquilibriumOptions& opts) {
    if (n_ions < 1)
        throw DomainError("find_equilibrium: need at least one ion");
    if (!(b.x > 0.0) || !(b.y > 0.0) || !(b.z > 0.0))
        throw DomainError("find_equilibrium: all secular exponents must be "
                          "positive");

    const double span = std::cbrt(1.0 / (b.z * b.z)) *
                        std::pow(double(n_ions), 0.56);

    std::vector<Positions> seeds;
    if (opts.warm_start != nullptr)
        seeds.push_back(*opts.warm_start);

    Positions chain = Positions::Zero(n_ions, 3);
    for (int i = 0; i < n_ions; ++i)
        chain(i, 2) = n_ions == 1 ? 0.0
                                  : -0.5 * span + span * i / double(n_ions - 1);
    seeds.push_back(chain);

    Positions zigzag = chain;
    for (int i = 0; i < n_ions; ++i)
        zigzag(i, 1) = 0.8 * (span / n_ions) * (i % 2 == 0 ? 1.0 : -1.0);
    seeds.push_back(zigzag);

    if (!opts.quick) {
        detail::GaussianSampler sampler(opts.seed);
        const double cloud = 0.4 * span;
        const double dmin_ok = 0.1 * span / n_ions;
        for (int k = 0; k < opts.random_starts; ++k) {
            Positions pts(n_ions, 3);
            for (int attempt = 0; attempt < 200; ++attempt) {
                for (int i = 0; i < n_ions; ++i)
                    for (int ax = 0; ax < 3; ++ax)
                        pts(i, ax) = cloud * sampler.normal();
                if (n_ions == 1 || min_pair_distance(pts) > dmin_ok)
                    break;
            }
            seeds.push_back(pts);
        }
    }

    std::vector<CrystalConfiguration> found;
    for (const Positions& seed : seeds) {
        const auto result = try_minimize(b, seed);
        if (result)
            found.push_back(canonicalize(b, *result));
    }
    if (found.empty())
        throw ConvergenceError("find_equilibrium: no start converged to a "
                               "minimum for N = " + std::to_string(n_ions));

    // Reduce by energy, then lexicographic positions, so the winner is
    // independent of start order.
    double e_best = found.front().energy;
    for (const auto& c : found)
        e_best = std::min(e_best, c.energy);
    const double tol_e = 1e-10 * (1.0 + std::abs(e_best));
    const CrystalConfiguration* best = nullptr;
    for (const auto& c : found) {
        if (c.energy > e_best + tol_e)
            continue;
        if (best == nullptr) {
            best = &c;
            continue;
        }
        const Eigen::VectorXd va = to_flat(c.positions);
        const Eigen::VectorXd vb = to_flat(best->positions);
        for (Eigen::Index i = 0; i < va.size(); ++i) {
            if (va[i] != vb[i]) {
                if (va[i] < vb[i])
                    best = &c;
                break;
            }
        }
    }
    return *best;
}

CrystalConfiguration find_equilibrium(const TrapConfig& cfg, int n_ions,
                                      const EquilibriumOptions& opts) {
    return find_equilibrium(betas_of(cfg), n_ions, opts);
}

CrystalConfiguration refine_equilibrium(const SecularBetas& b,
                                        const Positions& seed) {
    const auto result = try_minimize(b, seed);
    if (!result)
        throw ConvergenceError("refine_equilibrium: start did not converge "
                               "to a local minimum (saddle or iteration "
                               "budget)");
    return canonicalize(b, *result);
}

} // namespace ioncrystal
