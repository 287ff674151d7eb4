#include "ioncrystal/transitions.hpp"

#include "ioncrystal/equilibrium.hpp"
#include "ioncrystal/errors.hpp"
#include "ioncrystal/mathieu.hpp"
#include "ioncrystal/modes_flt.hpp"
#include "ioncrystal/orbit.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace ioncrystal {

std::pair<double, double> alpha_of(const TrapConfig& cfg) {
    const double bx = cfg.beta(AXIS_X);
    const double by = cfg.beta(AXIS_Y);
    const double bz = cfg.beta(AXIS_Z);
    return {(bz / bx) * (bz / bx), (bz / by) * (bz / by)};
}

namespace {

/// One point of the scan family: the dc depth t = a_z moves along a line
/// of constant 2 a_y + a_z (y kept the soft transverse axis).
struct ScanFamily {
    double omega_rf;
    double q_y;
    double a_y0;
    double a_z0;

    explicit ScanFamily(const AlphaScanOptions& opts)
        : omega_rf(opts.omega_rf), q_y(opts.q_y),
          a_y0(-0.35 * 0.5 * opts.q_y * opts.q_y),
          a_z0(0.1 * 0.5 * opts.q_y * opts.q_y) {}

    TrapConfig trap_at(double t) const {
        return TrapConfig::make(omega_rf, q_y, a_y0 - 0.5 * (t - a_z0), t);
    }

    double alpha_at(double t) const {
        return alpha_of(trap_at(t)).second;
    }

    /// Invert alpha(t) on the monotone branch by bracketed root finding.
    double t_of_alpha(double alpha) const {
        const double depth = 0.5 * q_y * q_y;
        auto residual = [this, alpha](double t) {
            try {
                return alpha_at(t) - alpha;
            } catch (const UnstableAxisError&) {
                return 1e6; // past the y edge: alpha has diverged
            }
        };
        double lo = 1e-9 * depth, hi = 1.399 * depth;
        double flo = residual(lo), fhi = residual(hi);
        if (flo > 0.0 || fhi < 0.0)
            throw DomainError("alpha scan: target anisotropy " +
                              std::to_string(alpha) +
                              " is outside the reachable range of the scan "
                              "family");
        boost::math::tools::eps_tolerance<double> tol(48);
        std::uintmax_t max_iter = 200;
        const auto r = boost::math::tools::toms748_solve(residual, lo, hi,
                                                         flo, fhi, tol,
                                                         max_iter);
        return 0.5 * (r.first + r.second);
    }
};

/// Structure label: geometry class plus the signed y pattern for
/// non-linear crystals ('0' marks a y component below 1e-5 of the
/// extent).
std::string label_of(const CrystalConfiguration& c) {
    std::string label = to_string(c.classification);
    if (c.classification == CrystalClass::linear)
        return label;
    const double tol = 1e-5 * c.positions.cwiseAbs().maxCoeff();
    std::string pattern;
    for (int i = 0; i < c.n_ions; ++i) {
        const double y = c.positions(i, 1);
        pattern += std::abs(y) <= tol ? '0' : (y > 0.0 ? '+' : '-');
    }
    // Mirror-gauge fix: when ions sit exactly on the axis (the '0' slots),
    // the sign of the rest would otherwise be inherited from solver noise.
    // Flip the whole pattern so its first signed entry is '+'.
    for (char ch : pattern) {
        if (ch == '0')
            continue;
        if (ch == '-')
            for (char& p : pattern)
                p = p == '-' ? '+' : (p == '+' ? '-' : p);
        break;
    }
    return label + ":" + pattern;
}

/// Lowest eigenvalue of the y block of the chain Hessian; its sign change
/// is the exact second-order chain->zigzag condition. The chain Hessian is
/// axis-diagonal, so the y block decouples exactly.
double chain_y_stiffness(const TrapConfig& trap, int n_ions) {
    const SecularBetas b = betas_of(trap);
    const Positions chain = chain_positions(b.z, n_ions);
    const Eigen::MatrixXd h = pseudo_hessian(b, chain);
    Eigen::MatrixXd hy(n_ions, n_ions);
    for (int i = 0; i < n_ions; ++i)
        for (int j = 0; j < n_ions; ++j)
            hy(i, j) = h(3 * i + 1, 3 * j + 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hy);
    return es.eigenvalues().minCoeff();
}

/// Chain branch dynamical stability under the full drive.
bool chain_flt_stable(const TrapConfig& trap, int n_ions) {
    const Positions chain = chain_positions(betas_of(trap).z, n_ions);
    const PeriodicOrbit orbit = find_orbit(trap, chain);
    return flt_spectrum_allow_unstable(orbit).stable;
}

struct GridPoint {
    double alpha;
    double t;
    std::string label_multistart;
    std::string label_forward;  ///< continuation from below
    std::string label_backward; ///< continuation from above
};

TransitionScan scan_impl(int n_ions, double alpha_min, double alpha_max,
                         const AlphaScanOptions& opts, bool flt) {
    if (n_ions < 2)
        throw DomainError("alpha scan: need at least two ions");
    if (!(alpha_min > 0.0) || !(alpha_max > alpha_min))
        throw DomainError("alpha scan: need 0 < alpha_min < alpha_max");
    if (!(opts.resolution > 0.0))
        throw DomainError("alpha scan: resolution must be positive");

    const ScanFamily family(opts);

    TransitionScan scan;
    scan.n_ions = n_ions;
    const int n_grid =
        1 + static_cast<int>(std::floor((alpha_max - alpha_min) /
                                        opts.resolution + 1e-9));
    std::vector<GridPoint> grid(static_cast<size_t>(n_grid));
    for (int i = 0; i < n_grid; ++i) {
        grid[static_cast<size_t>(i)].alpha = alpha_min + i * opts.resolution;
        grid[static_cast<size_t>(i)].t =
            family.t_of_alpha(grid[static_cast<size_t>(i)].alpha);
    }

    EquilibriumOptions eq_opts;
    eq_opts.seed = opts.seed;

    // Multi-start labels plus two continuation branches (hysteresis probe).
    std::optional<Positions> warm;
    for (auto& gp : grid) {
        const TrapConfig trap = family.trap_at(gp.t);
        const CrystalConfiguration ms = find_equilibrium(trap, n_ions,
                                                         eq_opts);
        gp.label_multistart = label_of(ms);

        CrystalConfiguration cont;
        try {
            cont = refine_equilibrium(betas_of(trap),
                                      warm ? *warm : ms.positions);
        } catch (const ConvergenceError&) {
            cont = ms; // branch vanished; continuation falls to the minimum
        }
        gp.label_forward = label_of(cont);
        warm = cont.positions;
    }
    warm.reset();
    for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
        const TrapConfig trap = family.trap_at(it->t);
        CrystalConfiguration cont;
        try {
            if (warm)
                cont = refine_equilibrium(betas_of(trap), *warm);
            else
                cont = find_equilibrium(trap, n_ions, eq_opts);
        } catch (const ConvergenceError&) {
            cont = find_equilibrium(trap, n_ions, eq_opts);
        }
        it->label_backward = label_of(cont);
        warm = cont.positions;
    }

    scan.alpha_grid.reserve(grid.size());
    scan.classifications.reserve(grid.size());
    for (const auto& gp : grid) {
        scan.alpha_grid.push_back(gp.alpha);
        scan.classifications.push_back(gp.label_multistart);
    }

    // In the full theory the chain branch's Floquet stability replaces the
    // static Hessian criterion for the linear->zigzag boundary.
    auto chain_stable_at = [&](double alpha) {
        const TrapConfig trap = family.trap_at(family.t_of_alpha(alpha));
        if (flt)
            return chain_flt_stable(trap, n_ions);
        return chain_y_stiffness(trap, n_ions) > 0.0;
    };
    auto label_at = [&](double alpha) {
        const TrapConfig trap = family.trap_at(family.t_of_alpha(alpha));
        return label_of(find_equilibrium(trap, n_ions, eq_opts));
    };

    const double bisect_tol = std::max(1e-3 * opts.resolution, 1e-9);
    for (size_t i = 0; i + 1 < grid.size(); ++i) {
        const std::string& lo_label = grid[i].label_multistart;
        const std::string& hi_label = grid[i + 1].label_multistart;
        if (lo_label == hi_label)
            continue;

        CriticalAlpha crit;
        crit.method = flt ? "flt" : "ppt";
        crit.kind = lo_label + "->" + hi_label;

        double lo = grid[i].alpha, hi = grid[i + 1].alpha;
        const bool chain_boundary =
            lo_label == "linear" &&
            hi_label.rfind("planar_yz", 0) == 0;
        if (chain_boundary) {
            // The dynamical stability edge need not fall inside the
            // static-label bracket (micromotion moves it); expand until the
            // criterion changes sign across [lo, hi].
            int guard = 0;
            while (!chain_stable_at(lo)) {
                hi = lo;
                lo -= opts.resolution;
                if (!(lo > 0.0) || ++guard > 1000)
                    throw ConvergenceError(
                        "alpha scan: no stable chain found below the "
                        "structural boundary");
            }
            guard = 0;
            while (chain_stable_at(hi)) {
                lo = hi;
                hi += opts.resolution;
                if (++guard > 1000)
                    throw ConvergenceError(
                        "alpha scan: no unstable chain found above the "
                        "structural boundary");
            }
            // Second-order boundary: bisect the exact soft-mode criterion.
            while (hi - lo > bisect_tol) {
                const double mid = 0.5 * (lo + hi);
                (chain_stable_at(mid) ? lo : hi) = mid;
            }
        } else {
            while (hi - lo > bisect_tol) {
                const double mid = 0.5 * (lo + hi);
                (label_at(mid) == lo_label ? lo : hi) = mid;
            }
        }
        crit.bracket_lo = lo;
        crit.bracket_hi = hi;
        crit.alpha_c = 0.5 * (lo + hi);

        // Hysteresis: the two continuation branches disagreeing with each
        // other around the transition marks it first-order.
        const bool hysteresis =
            grid[i].label_forward != grid[i].label_backward ||
            grid[i + 1].label_forward != grid[i + 1].label_backward;
        if (hysteresis) {
            crit.first_order = true;
            crit.branch_low = grid[i].label_forward;
            crit.branch_high = grid[i + 1].label_backward;
        }
        scan.criticals.push_back(std::move(crit));
    }
    return scan;
}

} // namespace

TransitionScan scan_alpha_ppt(int n_ions, double alpha_min, double alpha_max,
                              const AlphaScanOptions& opts) {
    return scan_impl(n_ions, alpha_min, alpha_max, opts, false);
}

TransitionScan scan_alpha_flt(int n_ions, double alpha_min, double alpha_max,
                              const AlphaScanOptions& opts) {
    return scan_impl(n_ions, alpha_min, alpha_max, opts, true);
}

} // namespace ioncrystal
