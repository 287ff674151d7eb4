#include "ioncrystal/modes_flt.hpp"

#include "ioncrystal/coulomb.hpp"
#include "ioncrystal/errors.hpp"
#include "ioncrystal/mathieu.hpp"
#include "ioncrystal/modes_ppt.hpp"
#include "ioncrystal/ode.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <future>
#include <numbers>
#include <string>
#include <vector>

namespace ioncrystal {

Eigen::MatrixXd linearized_coupling(const PeriodicOrbit& orbit, double xi) {
    const int n = orbit.n_ions;
    const OrbitState state = orbit_state(orbit, xi);
    Eigen::MatrixXd d = coulomb_hessian(state.positions);
    for (int i = 0; i < n; ++i)
        for (int ax = 0; ax < 3; ++ax)
            d(3 * i + ax, 3 * i + ax) +=
                orbit.trap.a(static_cast<Axis>(ax)) -
                2.0 * orbit.trap.q(static_cast<Axis>(ax)) *
                    std::cos(2.0 * xi);
    return d;
}

namespace {

/// Hamiltonian structure matrix J for (phi, phi') phase space.
Eigen::MatrixXd symplectic_form(int dof) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * dof, 2 * dof);
    j.topRightCorner(dof, dof) = Eigen::MatrixXd::Identity(dof, dof);
    j.bottomLeftCorner(dof, dof) = -Eigen::MatrixXd::Identity(dof, dof);
    return j;
}

Eigen::MatrixXd monodromy_matrix(const PeriodicOrbit& orbit) {
    const int dof = 3 * orbit.n_ions;
    const int dim = 2 * dof;

    // Integrate Y' = A(xi) Y, Y(0) = I, with A = [[0, I], [-D(xi), 0]],
    // all columns at once; state is the row-major flattened Y.
    std::vector<double> state(static_cast<size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i)
        state[static_cast<size_t>(i) * dim + i] = 1.0;

    auto rhs = [&orbit, dof, dim](const std::vector<double>& y,
                                  std::vector<double>& dy, double xi) {
        const Eigen::MatrixXd d = linearized_coupling(orbit, xi);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>
            ym(y.data(), dim, dim);
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
            dym(dy.data(), dim, dim);
        dym.topRows(dof) = ym.bottomRows(dof);
        dym.bottomRows(dof) = -d * ym.topRows(dof);
    };
    detail::integrate_rkf78(rhs, state, 0.0, std::numbers::pi);

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        m(state.data(), dim, dim);
    return Eigen::MatrixXd(m);
}

/// Best real representative of a complex mode shape: rotate the phase so
/// the real part carries the largest possible norm, then normalize and fix
/// the overall sign.
Eigen::VectorXd real_representative(const Eigen::VectorXcd& v) {
    std::complex<double> s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        s += v[i] * v[i];
    const double phase = 0.5 * std::arg(s);
    Eigen::VectorXd re(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        re[i] = std::real(v[i] * std::polar(1.0, -phase));
    const double norm = re.norm();
    if (norm > 0.0)
        re /= norm;
    Eigen::Index imax = 0;
    re.cwiseAbs().maxCoeff(&imax);
    if (re[imax] < 0.0)
        re = -re;
    return re;
}

FloquetSpectrum spectrum_impl(const PeriodicOrbit& orbit,
                              bool throw_on_unstable) {
    const int dof = 3 * orbit.n_ions;

    FloquetSpectrum spec;
    spec.monodromy = monodromy_matrix(orbit);

    const Eigen::MatrixXd j = symplectic_form(dof);
    spec.symplectic_defect =
        (spec.monodromy.transpose() * j * spec.monodromy - j)
            .cwiseAbs()
            .maxCoeff();
    if (spec.symplectic_defect > 1e-8)
        throw IntegratorAccuracyError(
            "flt_spectrum: monodromy symplectic defect " +
            std::to_string(spec.symplectic_defect) +
            " > 1e-8; integrator accuracy insufficient");

    Eigen::EigenSolver<Eigen::MatrixXd> es(spec.monodromy);
    spec.multipliers = es.eigenvalues();

    double dev = 0.0;
    for (Eigen::Index i = 0; i < spec.multipliers.size(); ++i)
        dev = std::max(dev, std::abs(std::abs(spec.multipliers[i]) - 1.0));
    spec.unit_circle_deviation = dev;
    spec.stable = dev <= 1e-6;

    if (!spec.stable) {
        if (throw_on_unstable)
            throw DynamicalInstabilityError(
                "flt_spectrum: crystal dynamically unstable at these "
                "parameters (max | |lambda| - 1 | = " + std::to_string(dev) +
                ")");
        return spec;
    }

    // Unit-circle multipliers come in conjugate pairs; keep the upper
    // half-plane member of each pair. Real multipliers (+1 or -1 at a band
    // edge) appear twice, so taking every second member after sorting by
    // exponent keeps the count right.
    std::vector<std::pair<double, Eigen::Index>> all;
    for (Eigen::Index i = 0; i < spec.multipliers.size(); ++i)
        all.emplace_back(std::abs(std::arg(spec.multipliers[i])) /
                             std::numbers::pi,
                         i);
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) {
                         return a.first < b.first;
                     });

    std::vector<Eigen::Index> chosen;
    for (size_t i = 0; i < all.size(); i += 2) {
        // Prefer the Im >= 0 member of the pair for a consistent phase
        // convention.
        Eigen::Index pick = all[i].second;
        if (i + 1 < all.size() &&
            std::imag(spec.multipliers[all[i + 1].second]) >
                std::imag(spec.multipliers[pick]))
            pick = all[i + 1].second;
        chosen.push_back(pick);
    }

    spec.modes.method = ModeSet::Method::flt;
    spec.modes.n_ions = orbit.n_ions;
    for (Eigen::Index idx : chosen) {
        Mode mode;
        mode.beta = std::abs(std::arg(spec.multipliers[idx])) /
                    std::numbers::pi;
        mode.freq_hz = mode.beta * orbit.trap.omega_rf() /
                       (4.0 * std::numbers::pi);
        const Eigen::VectorXcd full = es.eigenvectors().col(idx);
        mode.vector = real_representative(full.head(dof));
        spec.modes.modes.push_back(std::move(mode));
    }
    std::stable_sort(spec.modes.modes.begin(), spec.modes.modes.end(),
                     [](const Mode& a, const Mode& b) {
                         return a.beta < b.beta;
                     });
    for (size_t m = 0; m + 1 < spec.modes.modes.size(); ++m)
        if (std::abs(spec.modes.modes[m].beta -
                     spec.modes.modes[m + 1].beta) < 1e-9)
            spec.modes.modes[m].degenerate =
                spec.modes.modes[m + 1].degenerate = true;

    // Tagging needs the canonical geometry class of the averaged crystal;
    // the classification is position-only, so unstable trap axes (allowed
    // in unchecked configurations) are not a problem here.
    CrystalConfiguration avg;
    avg.n_ions = orbit.n_ions;
    avg.positions = orbit_mean(orbit);
    avg.classification = classify(avg.positions);
    tag_modes(spec.modes, avg);
    return spec;
}

} // namespace

FloquetSpectrum flt_spectrum(const PeriodicOrbit& orbit) {
    return spectrum_impl(orbit, true);
}

FloquetSpectrum flt_spectrum_allow_unstable(const PeriodicOrbit& orbit) {
    return spectrum_impl(orbit, false);
}

namespace {

QSweepRow sweep_row(const QSweepOptions& opts, double q) {
    QSweepRow row;
    row.q = q;
    const double beta_y =
        4.0 * std::numbers::pi * opts.f_cm_y_hz / opts.omega_rf;
    const double beta_z =
        4.0 * std::numbers::pi * opts.f_cm_z_hz / opts.omega_rf;
    try {
        const double a_z = a_for_target_beta(0.0, beta_z);
        const double a_y = a_for_target_beta(q, beta_y);
        const TrapConfig trap =
            TrapConfig::make(opts.omega_rf, q, a_y, a_z);

        EquilibriumOptions eopts;
        eopts.seed = opts.seed;
        const CrystalConfiguration eq = find_equilibrium(trap, 3, eopts);
        if (eq.classification != CrystalClass::planar_yz)
            throw DomainError("equilibrium is not a planar zigzag (" +
                              std::string(to_string(eq.classification)) +
                              ")");

        const PeriodicOrbit orbit = find_orbit(trap, eq.positions);
        const FloquetSpectrum spec = flt_spectrum(orbit);
        for (const Mode& m : spec.modes.modes) {
            if (m.tag.kind == ModeTag::zz_a)
                row.zz_a_hz = m.freq_hz;
            if (m.tag.kind == ModeTag::zz_b)
                row.zz_b_hz = m.freq_hz;
        }
        if (row.zz_a_hz == 0.0 || row.zz_b_hz == 0.0)
            throw DomainError("zigzag modes not tagged");
        row.ok = true;
    } catch (const Error& e) {
        row.ok = false;
        row.error = e.what();
    }
    return row;
}

} // namespace

std::vector<QSweepRow> zz_shift_vs_q(const QSweepOptions& opts) {
    if (!(opts.omega_rf > 0.0))
        throw DomainError("zz_shift_vs_q: omega_rf must be positive");
    if (!(opts.f_cm_z_hz > 0.0) || !(opts.f_cm_y_hz > opts.f_cm_z_hz))
        throw DomainError("zz_shift_vs_q: need 0 < f_cm_z < f_cm_y");

    // q-independent pseudopotential reference for the same cm targets.
    const ZigzagPrediction ppt = ppt_predict_from_cm(
        opts.f_cm_z_hz, opts.f_cm_y_hz, 0.0, 0.0, opts.omega_rf);

    std::vector<QSweepRow> rows(opts.q_grid.size());
    const int jobs = std::max(1, opts.jobs);
    if (jobs == 1) {
        for (size_t i = 0; i < opts.q_grid.size(); ++i)
            rows[i] = sweep_row(opts, opts.q_grid[i]);
    } else {
        // Row-level fan-out; rows are independent and land at their own
        // index, so the result is schedule-independent.
        std::vector<std::future<QSweepRow>> futures(opts.q_grid.size());
        size_t next = 0;
        while (next < opts.q_grid.size()) {
            const size_t batch =
                std::min<size_t>(jobs, opts.q_grid.size() - next);
            for (size_t b = 0; b < batch; ++b)
                futures[next + b] =
                    std::async(std::launch::async, sweep_row, std::cref(opts),
                               opts.q_grid[next + b]);
            for (size_t b = 0; b < batch; ++b)
                rows[next + b] = futures[next + b].get();
            next += batch;
        }
    }
    for (QSweepRow& row : rows) {
        row.zz_a_ppt_hz = ppt.zz_a_hz;
        row.zz_b_ppt_hz = ppt.zz_b_hz;
    }
    return rows;
}

} // namespace ioncrystal
