#include "ioncrystal/fitting.hpp"

#include "ioncrystal/equilibrium.hpp"
#include "ioncrystal/errors.hpp"
#include "ioncrystal/mathieu.hpp"
#include "ioncrystal/modes_flt.hpp"
#include "ioncrystal/modes_ppt.hpp"
#include "ioncrystal/orbit.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>

namespace ioncrystal {

const char* to_string(FitModel m) {
    return m == FitModel::ppt ? "ppt" : "flt";
}

double chi2_sf(double x, int k) {
    if (x < 0.0)
        throw DomainError("chi2_sf: statistic must be non-negative");
    if (k < 1)
        throw DomainError("chi2_sf: need at least one degree of freedom");
    if (k == 2)
        return std::exp(-0.5 * x); // exact for two degrees of freedom
    return boost::math::gamma_q(0.5 * k, 0.5 * x);
}

namespace {

struct ForwardEval {
    std::map<std::string, double> freqs;
    Positions equilibrium;
};

ForwardEval forward_eval(FitModel model, const TrapConfig& trap, int n_ions,
                         const EquilibriumOptions& eq_opts) {
    ForwardEval out;
    const CrystalConfiguration eq = find_equilibrium(trap, n_ions, eq_opts);
    out.equilibrium = eq.positions;

    ModeSet set;
    if (model == FitModel::ppt) {
        set = ppt_modes(trap, eq);
    } else {
        const PeriodicOrbit orbit = find_orbit(trap, eq.positions);
        set = flt_spectrum(orbit).modes;
    }
    for (const Mode& m : set.modes)
        out.freqs[m.tag.str()] = m.freq_hz;
    return out;
}

} // namespace

std::map<std::string, double> forward_model(FitModel model,
                                            const TrapConfig& trap,
                                            int n_ions) {
    return forward_eval(model, trap, n_ions, EquilibriumOptions{}).freqs;
}

FitResult fit_trap(const std::vector<Measurement>& data, double omega_rf,
                   int n_ions, FitModel model, const FitOptions& opts) {
    if (data.size() < 4)
        throw DomainError("fit_trap: need at least 4 measurements for 3 "
                          "parameters plus one degree of freedom");
    for (const Measurement& m : data)
        if (!(m.sigma_hz > 0.0) || !(m.freq_hz > 0.0))
            throw DomainError("fit_trap: measurement '" + m.tag +
                              "' needs positive frequency and sigma");

    // Initial guess from the measured centre-of-mass modes.
    std::map<std::string, double> cm;
    for (const Measurement& m : data)
        if (m.tag == "cm_x" || m.tag == "cm_y" || m.tag == "cm_z")
            cm[m.tag] = m.freq_hz;
    if (cm.size() != 3)
        throw DomainError("fit_trap: initial guess needs cm_x, cm_y and "
                          "cm_z measurements");
    const auto beta_of = [omega_rf](double f_hz) {
        return 4.0 * std::numbers::pi * f_hz / omega_rf;
    };
    const double q0 = std::sqrt(2.0) * beta_of(cm.at("cm_x"));
    const double az0 = a_for_target_beta(0.0, beta_of(cm.at("cm_z")));
    const double ay0 = a_for_target_beta(q0, beta_of(cm.at("cm_y")));

    // Forward evaluations warm-start from the last successful equilibrium;
    // the converged point is re-verified with a full multi-start below.
    std::optional<Positions> warm;
    auto residuals_at = [&](const Eigen::Vector3d& p) {
        const TrapConfig trap =
            TrapConfig::make(omega_rf, p[0], p[1], p[2]);
        EquilibriumOptions eq_opts;
        eq_opts.seed = opts.seed;
        eq_opts.quick = warm.has_value();
        eq_opts.warm_start = warm ? &*warm : nullptr;
        const ForwardEval eval = forward_eval(model, trap, n_ions, eq_opts);
        Eigen::VectorXd r(data.size());
        for (size_t i = 0; i < data.size(); ++i) {
            const auto it = eval.freqs.find(data[i].tag);
            if (it == eval.freqs.end())
                throw DomainError("fit_trap: forward model has no mode "
                                  "tagged '" + data[i].tag + "'");
            r[static_cast<Eigen::Index>(i)] =
                (it->second - data[i].freq_hz) / data[i].sigma_hz;
        }
        warm = eval.equilibrium;
        return r;
    };

    // Central finite-difference Jacobian, step 1e-6 per parameter. A step
    // that leaves the feasible region is halved a few times before giving
    // up.
    auto jacobian_at = [&](const Eigen::Vector3d& p) {
        Eigen::MatrixXd jac(data.size(), 3);
        for (int j = 0; j < 3; ++j) {
            double h = 1e-6;
            for (int attempt = 0;; ++attempt) {
                try {
                    Eigen::Vector3d pp = p, pm = p;
                    pp[j] += h;
                    pm[j] -= h;
                    jac.col(j) = (residuals_at(pp) - residuals_at(pm)) /
                                 (2.0 * h);
                    break;
                } catch (const Error&) {
                    if (attempt >= 3)
                        throw;
                    h *= 0.5;
                }
            }
        }
        return jac;
    };

    Eigen::Vector3d p(q0, ay0, az0);
    Eigen::VectorXd r = residuals_at(p);
    double chi2 = r.squaredNorm();
    double lambda = 1e-3;

    Eigen::MatrixXd jac;
    int iterations = 0;
    bool converged = false;
    for (; iterations < opts.max_iterations; ++iterations) {
        jac = jacobian_at(p);
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        const Eigen::Vector3d grad = jac.transpose() * r;

        // Gradient in the normalized metric: |g_j| / ||J col_j|| is the
        // directional derivative per unit scaled step, in sigma units.
        // (The raw gradient carries the huge Hz-per-dimensionless Jacobian
        // scale and would never reach a fixed threshold.)
        double scaled_grad = 0.0;
        for (int j = 0; j < 3; ++j)
            scaled_grad = std::max(
                scaled_grad, std::abs(grad[j]) /
                                 std::sqrt(std::max(jtj(j, j), 1e-300)));

        bool stepped = false;
        for (int attempt = 0; attempt < 50; ++attempt) {
            Eigen::Matrix3d damped = jtj;
            damped.diagonal() += lambda * jtj.diagonal();
            const Eigen::Vector3d delta = damped.ldlt().solve(-grad);

            if (scaled_grad < 1e-6 &&
                delta.norm() < 1e-10 * (1.0 + p.norm())) {
                converged = true;
                break;
            }

            try {
                const Eigen::Vector3d p_new = p + delta;
                const Eigen::VectorXd r_new = residuals_at(p_new);
                const double chi2_new = r_new.squaredNorm();
                if (chi2_new <= chi2) {
                    p = p_new;
                    r = r_new;
                    chi2 = chi2_new;
                    lambda = std::max(lambda / 3.0, 1e-12);
                    stepped = true;
                    break;
                }
            } catch (const Error&) {
                // Infeasible step (trap unstable, zigzag lost): shrink.
            }
            lambda *= 3.0;
            if (lambda > 1e10)
                break;
        }
        if (converged)
            break;
        if (!stepped) {
            std::ostringstream msg;
            msg << "fit_trap: no acceptable step from chi2 = " << chi2
                << " (trust region collapsed)";
            throw ConvergenceError(msg.str());
        }
    }
    if (!converged)
        throw ConvergenceError("fit_trap: not converged after " +
                               std::to_string(opts.max_iterations) +
                               " iterations");

    // Re-verify the converged point against the full multi-start pipeline;
    // the quick warm-started path must not have drifted into a side basin.
    const TrapConfig trap_final =
        TrapConfig::make(omega_rf, p[0], p[1], p[2]);
    EquilibriumOptions full;
    full.seed = opts.seed;
    const ForwardEval final_eval =
        forward_eval(model, trap_final, n_ions, full);

    FitResult result;
    result.q_y = p[0];
    result.a_y = p[1];
    result.a_z = p[2];
    result.a_x = -p[1] - p[2];
    result.omega_rf = omega_rf;
    result.model = model;
    result.predicted_hz = final_eval.freqs;
    result.iterations = iterations;

    double chi2_final = 0.0;
    result.residuals.reserve(data.size());
    for (const Measurement& m : data) {
        const auto it = final_eval.freqs.find(m.tag);
        if (it == final_eval.freqs.end())
            throw DomainError("fit_trap: converged model lost mode '" +
                              m.tag + "' under full multi-start");
        const double res = (it->second - m.freq_hz) / m.sigma_hz;
        result.residuals.push_back(res);
        chi2_final += res * res;
    }
    result.chi2 = chi2_final;
    result.dof = static_cast<int>(data.size()) - 3;
    result.p_value = chi2_sf(result.chi2, result.dof);

    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    result.covariance = jtj.inverse();
    for (int i = 0; i < 3; ++i)
        result.param_sigma[i] = std::sqrt(result.covariance(i, i));
    return result;
}

} // namespace ioncrystal
