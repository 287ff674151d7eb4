#pragma once

#include "ioncrystal/trap.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace ioncrystal {

/// One measured mode frequency, identified by its tag string ("cm_x",
/// "cm_y", "cm_z", "zz_a", "zz_b").
struct Measurement {
    std::string tag;
    double freq_hz = 0.0;
    double sigma_hz = 0.0;
};

enum class FitModel { ppt, flt };

const char* to_string(FitModel m);

/// Predicted mode frequencies by tag for an N-ion crystal at the given
/// trap parameters: equilibrium -> (orbit -> Floquet spectrum | Hessian
/// modes) -> tags. Throws with the failing stage named when a step cannot
/// deliver (trap unstable, equilibrium not a zigzag, missing tag...).
std::map<std::string, double> forward_model(FitModel model,
                                            const TrapConfig& trap,
                                            int n_ions);

/// Upper tail of the chi-squared distribution with k degrees of freedom:
/// P(X >= x). For k = 2 this is exactly exp(-x/2).
double chi2_sf(double x, int k);

struct FitResult {
    double q_y = 0.0;
    double a_y = 0.0;
    double a_z = 0.0;
    double a_x = 0.0;             ///< derived: -a_y - a_z
    double omega_rf = 0.0;
    FitModel model = FitModel::flt;
    std::map<std::string, double> predicted_hz;
    std::vector<double> residuals; ///< (model - measurement)/sigma, input order
    double chi2 = 0.0;
    int dof = 0;                   ///< n_measurements - 3
    double p_value = 0.0;
    Eigen::Matrix3d covariance;    ///< (J^T J)^{-1} in (q_y, a_y, a_z)
    Eigen::Vector3d param_sigma;   ///< sqrt(diag(covariance))
    int iterations = 0;
};

struct FitOptions {
    int max_iterations = 200;
    std::uint64_t seed = 20177; ///< equilibrium multi-start seed
};

/// Weighted least-squares fit of (q_y, a_y, a_z) at fixed omega_rf to the
/// measured mode frequencies. Initial guess from the measured cm modes:
/// q = sqrt(2) beta_x, a_z and a_y from exact single-ion inversion.
/// Levenberg-Marquardt on the sigma-scaled residuals with central
/// finite-difference Jacobians (step 1e-6 per dimensionless parameter);
/// steps that lose the zigzag or destabilize the trap are rejected and the
/// trust region shrinks. Converged when the relative step is below 1e-10
/// and the gradient below 1e-6.
FitResult fit_trap(const std::vector<Measurement>& data, double omega_rf,
                   int n_ions, FitModel model, const FitOptions& opts = {});

} // namespace ioncrystal
