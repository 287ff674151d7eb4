// Acceptance harness: checks the numbered end-to-end claims this toolkit
// makes about the three-ion zigzag spectrum, the structural transition
// scans, and the solver invariants. Prints exactly one [PASS]/[FAIL] line
// per criterion and exits with the number of failed criteria.
//
// Every tolerance is pinned here as a literal; reference values marked
// "frozen" were produced by an independent prototype implementation and
// must not be adjusted to match this code.

#include "ioncrystal/equilibrium.hpp"
#include "ioncrystal/errors.hpp"
#include "ioncrystal/fitting.hpp"
#include "ioncrystal/mathieu.hpp"
#include "ioncrystal/modes_flt.hpp"
#include "ioncrystal/modes_ppt.hpp"
#include "ioncrystal/orbit.hpp"
#include "ioncrystal/transitions.hpp"
#include "ioncrystal/trap.hpp"

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace ioncrystal;

constexpr double kOmegaRf = 2.203513087227881e8; // 2 pi * 35.07 MHz

struct Line {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        pass = false;
        detail += (detail.empty() ? "" : "; ") + why;
    }
    void note(const std::string& what) {
        detail += (detail.empty() ? "" : "; ") + what;
    }
    void within(const std::string& name, double value, double center,
                double tol) {
        char buf[160];
        if (std::abs(value - center) <= tol) {
            std::snprintf(buf, sizeof(buf), "%s=%.4g ok", name.c_str(), value);
            note(buf);
        } else {
            std::snprintf(buf, sizeof(buf), "%s=%.6g outside %.6g +- %.2g",
                          name.c_str(), value, center, tol);
            fail(buf);
        }
    }
};

int g_failures = 0;

void report(int id, const std::string& title, const Line& line) {
    if (!line.pass) ++g_failures;
    std::printf("[%s] criterion %d: %s (%s)\n", line.pass ? "PASS" : "FAIL",
                id, title.c_str(), line.detail.c_str());
    std::fflush(stdout);
}

std::vector<Measurement> bundled_measurements() {
    const std::string path =
        std::string(IONMODES_SOURCE_DIR) + "/data/table1_fig3.csv";
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open bundled dataset " + path);
    std::string line;
    std::getline(in, line); // header
    std::vector<Measurement> data;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tag, f, s;
        std::getline(ss, tag, ',');
        std::getline(ss, f, ',');
        std::getline(ss, s, ',');
        data.push_back({tag, 1e3 * std::stod(f), 1e3 * std::stod(s)});
    }
    if (data.size() != 5)
        throw DomainError("bundled dataset must hold five measurements");
    return data;
}

double measured(const std::vector<Measurement>& data, const std::string& tag) {
    for (const auto& m : data)
        if (m.tag == tag) return m.freq_hz;
    throw DomainError("missing tag " + tag);
}

} // namespace

int main() {
    std::vector<Measurement> data;
    FitResult flt, ppt;
    ZigzagPrediction from_cm;
    bool setup_ok = true;
    std::string setup_err;
    double fit_seconds = 0.0;
    try {
        data = bundled_measurements();
        const auto t0 = std::chrono::steady_clock::now();
        flt = fit_trap(data, kOmegaRf, 3, FitModel::flt);
        fit_seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        ppt = fit_trap(data, kOmegaRf, 3, FitModel::ppt);
        from_cm = ppt_predict_from_cm(measured(data, "cm_z"),
                                      measured(data, "cm_y"), 2e3, 3e3,
                                      kOmegaRf);
    } catch (const std::exception& e) {
        setup_ok = false;
        setup_err = e.what();
    }

    // ----- criterion 1: full-theory fit reproduces the reference spectrum
    {
        Line c;
        if (!setup_ok) {
            c.fail("setup failed: " + setup_err);
        } else {
            const std::map<std::string, double> ref_khz{{"zz_b", 715.1},
                                                        {"zz_a", 1078.5},
                                                        {"cm_z", 1239.5},
                                                        {"cm_y", 1690.7}};
            for (const auto& [tag, ref] : ref_khz)
                c.within(tag + "_khz", flt.predicted_hz.at(tag) / 1e3, ref,
                         0.5);
            char buf[64];
            std::snprintf(buf, sizeof(buf), "fit took %.2f s", fit_seconds);
            c.note(buf);
            if (fit_seconds > 60.0) c.fail("fit exceeded the 60 s budget");
        }
        report(1, "full-theory fit of the bundled dataset matches the "
                  "reference spectrum to +-0.5 kHz", c);
    }

    // ----- criterion 2: time-averaged prediction from the cm modes alone
    {
        Line c;
        if (!setup_ok) {
            c.fail("setup failed: " + setup_err);
        } else {
            c.within("zz_b_khz", from_cm.zz_b_hz / 1e3, 730.0, 2.0);
            c.within("zz_a_khz", from_cm.zz_a_hz / 1e3, 1041.0, 2.0);
            c.within("sigma_b_khz", from_cm.sigma_b_hz / 1e3, 14.0, 3.0);
            c.within("sigma_a_khz", from_cm.sigma_a_hz / 1e3, 12.0, 3.0);
        }
        report(2, "cm-only time-averaged prediction of the zigzag pair with "
                  "propagated uncertainties", c);
    }

    // ----- criterion 3: goodness-of-fit separates the two theories
    {
        Line c;
        if (!setup_ok) {
            c.fail("setup failed: " + setup_err);
        } else {
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "p_flt=%.4f p_ppt=%.3g chi2_gap=%.2f", flt.p_value,
                          ppt.p_value, ppt.chi2 - flt.chi2);
            c.note(buf);
            if (flt.p_value < 0.10 || flt.p_value > 0.40)
                c.fail("full-theory p-value outside [0.10, 0.40]");
            if (!(ppt.p_value < 1e-8))
                c.fail("time-averaged p-value not below 1e-8");
            if (!(ppt.chi2 - flt.chi2 > 25.0))
                c.fail("chi2 gap not above 25");
        }
        report(3, "full-theory fit is statistically acceptable, "
                  "time-averaged fit is rejected", c);
    }

    // ----- criterion 4: size of the time-averaged discrepancy
    {
        Line c;
        if (!setup_ok) {
            c.fail("setup failed: " + setup_err);
        } else {
            const double da =
                std::abs(from_cm.zz_a_hz - measured(data, "zz_a")) / 1e3;
            const double db =
                std::abs(from_cm.zz_b_hz - measured(data, "zz_b")) / 1e3;
            c.within("zz_a_gap_khz", da, 37.0, 3.0);
            c.within("zz_b_gap_khz", db, 15.0, 3.0);
        }
        report(4, "time-averaged zigzag pair misses the measurements by the "
                  "documented margins", c);
    }

    // ----- criterion 5: three-ion chain->zigzag critical anisotropy
    {
        Line c;
        try {
            const double alpha_exact = 5.0 / 12.0;
            const auto ppt_scan = scan_alpha_ppt(3, 0.40, 0.43);
            if (ppt_scan.criticals.size() != 1) {
                c.fail("time-averaged scan found " +
                       std::to_string(ppt_scan.criticals.size()) +
                       " criticals, expected 1");
            } else {
                const auto& cr = ppt_scan.criticals.front();
                c.within("alpha_c_ppt", cr.alpha_c, alpha_exact, 1e-4);
                if (cr.bracket_lo > alpha_exact + 1e-4 ||
                    cr.bracket_hi < alpha_exact - 1e-4)
                    c.fail("bisection bracket does not enclose 5/12");
                AlphaScanOptions opts;
                opts.q_y = 0.1;
                opts.omega_rf = kOmegaRf;
                const auto flt_scan = scan_alpha_flt(3, 0.40, 0.43, opts);
                if (flt_scan.criticals.size() != 1) {
                    c.fail("full-theory scan found " +
                           std::to_string(flt_scan.criticals.size()) +
                           " criticals, expected 1");
                } else {
                    const double af = flt_scan.criticals.front().alpha_c;
                    const double rel = std::abs(af - cr.alpha_c) / cr.alpha_c;
                    char buf[96];
                    std::snprintf(buf, sizeof(buf),
                                  "alpha_c_flt=%.6f rel_diff=%.4f", af, rel);
                    c.note(buf);
                    if (rel > 0.02)
                        c.fail("full-theory critical differs from "
                               "time-averaged by more than 2%");
                }
            }
        } catch (const std::exception& e) {
            c.fail(std::string("scan threw: ") + e.what());
        }
        report(5, "critical anisotropy 5/12 bracketed to 1e-4; full-theory "
                  "shift below 2%", c);
    }

    // ----- criterion 6: zigzag-pair q-sweep at constant cm frequencies
    {
        Line c;
        if (!setup_ok) {
            c.fail("setup failed: " + setup_err);
        } else {
            try {
                QSweepOptions opts;
                opts.omega_rf = kOmegaRf;
                opts.f_cm_y_hz = flt.predicted_hz.at("cm_y");
                opts.f_cm_z_hz = flt.predicted_hz.at("cm_z");
                opts.jobs = 2;
                for (int k = 1; k <= 10; ++k)
                    opts.q_grid.push_back(0.05 * k);
                const auto rows = zz_shift_vs_q(opts);
                bool monotone = true;
                double prev = 0.0, max_frac = 0.0;
                int n_ok = 0;
                const QSweepRow* row_q02 = nullptr;
                for (const auto& r : rows) {
                    if (!r.ok) continue;
                    ++n_ok;
                    if (n_ok > 1 && r.zz_a_hz <= prev) monotone = false;
                    prev = r.zz_a_hz;
                    max_frac = std::max(
                        max_frac, (r.zz_a_hz - r.zz_a_ppt_hz) / r.zz_a_ppt_hz);
                    if (std::abs(r.q - 0.2) < 1e-9) row_q02 = &r;
                }
                char buf[128];
                std::snprintf(buf, sizeof(buf), "%d/%zu rows ok max_shift=%.3f",
                              n_ok, rows.size(), max_frac);
                c.note(buf);
                if (n_ok < 5) c.fail("fewer than 5 stable sweep rows");
                if (!monotone) c.fail("zz_a not strictly increasing in q");
                if (!(max_frac >= 0.10))
                    c.fail("fractional full-theory shift never reaches 10%");
                if (!row_q02) {
                    c.fail("no stable row at q = 0.2");
                } else {
                    c.within("zza_q02_khz", row_q02->zz_a_hz / 1e3,
                             flt.predicted_hz.at("zz_a") / 1e3, 1.0);
                    c.within("zzb_q02_khz", row_q02->zz_b_hz / 1e3,
                             flt.predicted_hz.at("zz_b") / 1e3, 1.0);
                }
            } catch (const std::exception& e) {
                c.fail(std::string("sweep threw: ") + e.what());
            }
        }
        report(6, "constant-cm q-sweep: monotone zigzag shift reaching 10%, "
                  "consistent with the fit at q ~ 0.2", c);
    }

    // ----- criterion 7: solver property suite
    {
        Line c;
        try {
            // (a)-(c): invariants of the fitted-trap Floquet spectrum.
            const auto trap =
                TrapConfig::make(kOmegaRf, 0.20446329, -0.01170409,
                                 0.00499701);
            const auto crystal = find_equilibrium(trap, 3);
            const auto orbit = find_orbit(trap, crystal.positions);
            const auto spec = flt_spectrum(orbit);
            if (!(spec.symplectic_defect < 1e-8))
                c.fail("monodromy symplectic defect >= 1e-8");
            double worst_pair = 0.0;
            for (Eigen::Index i = 0; i < spec.multipliers.size(); ++i) {
                double best = 1e300;
                for (Eigen::Index j = 0; j < spec.multipliers.size(); ++j)
                    best = std::min(best,
                                    std::abs(spec.multipliers[i] *
                                                 spec.multipliers[j] -
                                             1.0));
                worst_pair = std::max(worst_pair, best);
            }
            if (!(worst_pair < 1e-8))
                c.fail("multipliers not reciprocally paired");
            const double cm_ref[3] = {beta_exact(trap.a(AXIS_X),
                                                 trap.q(AXIS_X)),
                                      beta_exact(trap.a(AXIS_Y),
                                                 trap.q(AXIS_Y)),
                                      beta_exact(trap.a(AXIS_Z),
                                                 trap.q(AXIS_Z))};
            const char* cm_tags[3] = {"cm_x", "cm_y", "cm_z"};
            for (const auto& m : spec.modes.modes)
                for (int ax = 0; ax < 3; ++ax)
                    if (m.tag.str() == cm_tags[ax] &&
                        std::abs(m.beta - cm_ref[ax]) > 1e-9)
                        c.fail(std::string(cm_tags[ax]) +
                               " exponent differs from the single-ion value");

            // (d) full-theory -> time-averaged convergence is O(q^2):
            // hold (beta_y, beta_z) = (0.018, 0.013) and halve q twice.
            const double byT = 0.018, bzT = 0.013;
            const auto ppt_crystal =
                find_equilibrium(SecularBetas{1.0, byT, bzT}, 3);
            auto pset = ppt_modes(SecularBetas{1.0, byT, bzT}, kOmegaRf,
                                  ppt_crystal);
            double zza_ppt = 0.0;
            for (const auto& m : pset.modes)
                if (m.tag.str() == "zz_a") zza_ppt = m.beta;
            std::map<double, double> d_zza, d_avgy;
            for (const double q : {0.05, 0.1, 0.2}) {
                const double ay = a_for_target_beta(q, byT);
                const auto t = TrapConfig::make(kOmegaRf, q, ay, bzT * bzT);
                const auto eq = find_equilibrium(t, 3);
                const auto orb = find_orbit(t, eq.positions);
                const auto sp = flt_spectrum(orb);
                double zza = 0.0;
                for (const auto& m : sp.modes.modes)
                    if (m.tag.str() == "zz_a") zza = m.beta;
                d_zza[q] = std::abs(zza - zza_ppt);
                d_avgy[q] = std::abs(orbit_mean(orb)(0, 1) -
                                     eq.positions(0, 1)) /
                            std::abs(eq.positions(0, 1));
            }
            const double slopes[4] = {std::log2(d_zza[0.1] / d_zza[0.05]),
                                      std::log2(d_zza[0.2] / d_zza[0.1]),
                                      std::log2(d_avgy[0.1] / d_avgy[0.05]),
                                      std::log2(d_avgy[0.2] / d_avgy[0.1])};
            char buf[128];
            std::snprintf(buf, sizeof(buf),
                          "q2_slopes=%.2f/%.2f/%.2f/%.2f", slopes[0],
                          slopes[1], slopes[2], slopes[3]);
            c.note(buf);
            for (const double s : slopes)
                if (std::abs(s - 2.0) > 0.2)
                    c.fail("convergence slope outside 2 +- 0.2");

            // (e) analytic Hessian equals the finite difference of the
            // gradient at the zigzag equilibrium.
            const auto b = betas_of(trap);
            const auto h_exact = pseudo_hessian(b, crystal.positions);
            const double step = 1e-5;
            double h_err = 0.0;
            for (int j = 0; j < 9; ++j) {
                Positions up = crystal.positions, dn = crystal.positions;
                up(j / 3, j % 3) += step;
                dn(j / 3, j % 3) -= step;
                const Eigen::VectorXd col =
                    (pseudo_gradient(b, up) - pseudo_gradient(b, dn)) /
                    (2.0 * step);
                h_err = std::max(h_err,
                                 (col - h_exact.col(j)).cwiseAbs().maxCoeff());
            }
            if (!(h_err < 1e-6))
                c.fail("Hessian differs from finite-difference gradient");

            // (f) equilibrium gradient norms across crystal sizes at a
            // strongly anisotropic trap (alpha ~ 0.12: chains, zigzags and
            // a single ion all appear).
            const double bz7 = 2.0 * 111e3 / 14.62e6;
            const double by7 = 2.0 * 316e3 / 14.62e6;
            const double ay7 = a_for_target_beta(0.1, by7);
            const double bx7 = beta_exact(-ay7 - bz7 * bz7, -0.1);
            const SecularBetas b7{bx7, by7, bz7};
            double worst_grad = 0.0;
            for (int n = 1; n <= 17; ++n) {
                const auto eq = find_equilibrium(b7, n);
                worst_grad = std::max(
                    worst_grad, pseudo_gradient(b7, eq.positions).norm());
            }
            std::snprintf(buf, sizeof(buf), "max_gradnorm_N1..17=%.1e",
                          worst_grad);
            c.note(buf);
            if (!(worst_grad < 1e-10))
                c.fail("an equilibrium gradient norm reached 1e-10");

            // (g) leading micromotion coefficient: c1/c0 = -q_y/2 up to
            // O(q_y^2) on the transverse coordinate of an outer ion.
            const double q_y = trap.q(AXIS_Y);
            const double c0 = orbit.coeffs(1, 0); // ion 0, y, mean
            const double c1 = orbit.coeffs(1, 1); // ion 0, y, cos 2xi
            const double ratio_gap = std::abs(c1 / c0 + q_y / 2.0);
            std::snprintf(buf, sizeof(buf), "c1_over_c0_gap=%.2e<q2=%.2e",
                          ratio_gap, q_y * q_y);
            c.note(buf);
            if (!(ratio_gap < q_y * q_y))
                c.fail("c1/c0 deviates from -q_y/2 by more than O(q_y^2)");
        } catch (const std::exception& e) {
            c.fail(std::string("property suite threw: ") + e.what());
        }
        report(7, "solver invariants: symplecticity, multiplier pairing, cm "
                  "exponents, O(q^2) convergence, Hessian check, equilibrium "
                  "gradients N=1..17, micromotion ratio", c);
    }

    // ----- criterion 8: excluded by contract
    {
        Line c;
        c.note("excluded by contract: the position-imaging comparison has no "
               "published coordinates; the equilibrium property suite in "
               "criterion 7 stands in");
        report(8, "experimental position-imaging agreement", c);
    }

    std::printf("%d of 8 criteria failed\n", g_failures);
    return g_failures;
}
