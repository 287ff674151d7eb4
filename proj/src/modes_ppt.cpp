#include "ioncrystal/modes_ppt.hpp"

#include "ioncrystal/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ioncrystal {

std::string ModeTag::str() const {
    switch (kind) {
    case cm_x:
        return "cm_x";
    case cm_y:
        return "cm_y";
    case cm_z:
        return "cm_z";
    case zz_a:
        return "zz_a";
    case zz_b:
        return "zz_b";
    case other:
        return "other_" + std::to_string(index);
    }
    return "?";
}

const char* to_string(ModeSet::Method m) {
    return m == ModeSet::Method::ppt ? "ppt" : "flt";
}

void tag_modes(ModeSet& set, const CrystalConfiguration& crystal) {
    const int n = set.n_ions;
    std::vector<bool> tagged(set.modes.size(), false);

    // Rigid translations; exact cm modes project fully onto these.
    for (int ax = 0; ax < 3; ++ax) {
        Eigen::VectorXd t = Eigen::VectorXd::Zero(3 * n);
        for (int i = 0; i < n; ++i)
            t[3 * i + ax] = 1.0 / std::sqrt(double(n));
        for (size_t m = 0; m < set.modes.size(); ++m) {
            if (tagged[m])
                continue;
            if (std::abs(set.modes[m].vector.dot(t)) > 0.999) {
                set.modes[m].tag.kind = ax == 0   ? ModeTag::cm_x
                                        : ax == 1 ? ModeTag::cm_y
                                                  : ModeTag::cm_z;
                tagged[m] = true;
                break;
            }
        }
    }

    // Zigzag pair: defined for the 3-ion planar crystal only, and only
    // among the two lowest non-cm modes -- higher modes can carry a larger
    // (1,-2,1) overlap and must not steal the tag.
    if (n == 3 && crystal.classification == CrystalClass::planar_yz) {
        std::vector<size_t> rest;
        for (size_t m = 0; m < set.modes.size(); ++m)
            if (!tagged[m])
                rest.push_back(m); // set.modes is ascending in beta
        if (rest.size() >= 2) {
            Eigen::VectorXd w = Eigen::VectorXd::Zero(3 * n);
            w[3 * 0 + 1] = 1.0 / std::sqrt(6.0);
            w[3 * 1 + 1] = -2.0 / std::sqrt(6.0);
            w[3 * 2 + 1] = 1.0 / std::sqrt(6.0);
            const double ov0 = std::abs(set.modes[rest[0]].vector.dot(w));
            const double ov1 = std::abs(set.modes[rest[1]].vector.dot(w));
            if (std::abs(ov0 - ov1) < 0.01) {
                std::ostringstream msg;
                msg << "tag_modes: zigzag pair ambiguous; candidates "
                    << "(beta = " << set.modes[rest[0]].beta
                    << ", overlap = " << ov0 << ") and (beta = "
                    << set.modes[rest[1]].beta << ", overlap = " << ov1
                    << ")";
                throw AmbiguousTagError(msg.str());
            }
            const size_t ia = ov0 > ov1 ? rest[0] : rest[1];
            const size_t ib = ov0 > ov1 ? rest[1] : rest[0];
            set.modes[ia].tag.kind = ModeTag::zz_a;
            set.modes[ib].tag.kind = ModeTag::zz_b;
            tagged[ia] = tagged[ib] = true;
        }
    }

    int next = 0;
    for (size_t m = 0; m < set.modes.size(); ++m) {
        if (!tagged[m]) {
            set.modes[m].tag.kind = ModeTag::other;
            set.modes[m].tag.index = next++;
        } else {
            set.modes[m].tag.index = -1;
        }
    }
}

namespace {

/// Deterministic sign gauge: the largest-magnitude component is positive.
void fix_sign(Eigen::VectorXd& v) {
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0)
        v = -v;
}

ModeSet ppt_modes_impl(const SecularBetas& b, double omega_rf,
                       const CrystalConfiguration& crystal) {
    const Eigen::MatrixXd h = pseudo_hessian(b, crystal.positions);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    const Eigen::VectorXd& mu = es.eigenvalues();
    if (mu.minCoeff() < -1e-8)
        throw DomainError("ppt_modes: not a stable equilibrium (min Hessian "
                          "eigenvalue = " + std::to_string(mu.minCoeff()) +
                          ")");

    ModeSet set;
    set.method = ModeSet::Method::ppt;
    set.n_ions = crystal.n_ions;
    for (Eigen::Index k = 0; k < mu.size(); ++k) {
        Mode mode;
        mode.beta = std::sqrt(std::max(mu[k], 0.0));
        mode.freq_hz = mode.beta * omega_rf / (4.0 * std::numbers::pi);
        mode.vector = es.eigenvectors().col(k);
        fix_sign(mode.vector);
        set.modes.push_back(std::move(mode));
    }
    std::stable_sort(set.modes.begin(), set.modes.end(),
                     [](const Mode& a, const Mode& b2) {
                         return a.beta < b2.beta;
                     });
    for (size_t m = 0; m + 1 < set.modes.size(); ++m)
        if (std::abs(set.modes[m].beta - set.modes[m + 1].beta) < 1e-9)
            set.modes[m].degenerate = set.modes[m + 1].degenerate = true;

    tag_modes(set, crystal);
    return set;
}

} // namespace

ModeSet ppt_modes(const SecularBetas& b, double omega_rf,
                  const CrystalConfiguration& crystal) {
    return ppt_modes_impl(b, omega_rf, crystal);
}

ModeSet ppt_modes(const TrapConfig& cfg, const CrystalConfiguration& crystal) {
    return ppt_modes_impl(betas_of(cfg), cfg.omega_rf(), crystal);
}

namespace {

/// One pseudopotential pipeline pass from cm exponents to the zigzag pair.
/// The x exponent is a fixed stable placeholder: for a planar crystal the
/// x block decouples exactly and never touches the yz modes.
std::pair<double, double> zigzag_pair_hz(double beta_y, double beta_z,
                                         double omega_rf) {
    const SecularBetas b{0.9, beta_y, beta_z};
    const CrystalConfiguration eq = find_equilibrium(b, 3);
    if (eq.classification != CrystalClass::planar_yz)
        throw DomainError("ppt_predict_from_cm: equilibrium is not a planar "
                          "zigzag at these frequencies (alpha outside the "
                          "zigzag window)");
    const ModeSet set = ppt_modes(b, omega_rf, eq);
    double fa = -1.0, fb = -1.0;
    for (const Mode& m : set.modes) {
        if (m.tag.kind == ModeTag::zz_a)
            fa = m.freq_hz;
        if (m.tag.kind == ModeTag::zz_b)
            fb = m.freq_hz;
    }
    if (fa < 0.0 || fb < 0.0)
        throw DomainError("ppt_predict_from_cm: zigzag modes not found");
    return {fb, fa};
}

} // namespace

ZigzagPrediction ppt_predict_from_cm(double f_cm_z_hz, double f_cm_y_hz,
                                     double sigma_z_hz, double sigma_y_hz,
                                     double omega_rf) {
    if (!(f_cm_z_hz > 0.0) || !(f_cm_y_hz > 0.0))
        throw DomainError("ppt_predict_from_cm: frequencies must be positive");
    if (!(f_cm_z_hz < f_cm_y_hz))
        throw DomainError("ppt_predict_from_cm: need f_z < f_y (anisotropy "
                          "alpha < 1); no planar zigzag otherwise");

    const auto beta_of = [omega_rf](double f_hz) {
        return 4.0 * std::numbers::pi * f_hz / omega_rf;
    };

    const auto center = zigzag_pair_hz(beta_of(f_cm_y_hz), beta_of(f_cm_z_hz),
                                       omega_rf);

    // Two-sided propagation: shift each input by +/- sigma and accumulate
    // all four response deltas in quadrature.
    double var_b = 0.0, var_a = 0.0;
    const double fz[2] = {f_cm_z_hz + sigma_z_hz, f_cm_z_hz - sigma_z_hz};
    const double fy[2] = {f_cm_y_hz + sigma_y_hz, f_cm_y_hz - sigma_y_hz};
    for (double f : fz) {
        const auto p = zigzag_pair_hz(beta_of(f_cm_y_hz), beta_of(f),
                                      omega_rf);
        var_b += (p.first - center.first) * (p.first - center.first);
        var_a += (p.second - center.second) * (p.second - center.second);
    }
    for (double f : fy) {
        const auto p = zigzag_pair_hz(beta_of(f), beta_of(f_cm_z_hz),
                                      omega_rf);
        var_b += (p.first - center.first) * (p.first - center.first);
        var_a += (p.second - center.second) * (p.second - center.second);
    }

    ZigzagPrediction out;
    out.zz_b_hz = center.first;
    out.zz_a_hz = center.second;
    out.sigma_b_hz = std::sqrt(var_b);
    out.sigma_a_hz = std::sqrt(var_a);
    return out;
}

} // namespace ioncrystal
