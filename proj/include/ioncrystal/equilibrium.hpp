#pragma once

#include "ioncrystal/coulomb.hpp"
#include "ioncrystal/trap.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace ioncrystal {

/// Per-axis secular exponents defining the time-averaged (pseudopotential)
/// confinement: potential (1/2) sum_i beta_i^2 u_i^2 per ion, plus mutual
/// Coulomb repulsion. All pseudopotential quantities are expressed through
/// these exact exponents, never through the lowest-order a + q^2/2 form.
struct SecularBetas {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

/// Exponents of a fully stable trap configuration.
SecularBetas betas_of(const TrapConfig& cfg);

/// Geometry class of an equilibrium structure.
enum class CrystalClass { linear, planar_yz, three_d };

const char* to_string(CrystalClass c);

/// An equilibrium crystal: canonically ordered positions (sorted by z,
/// ties by y; overall y- and x-mirror signs fixed so the first ion with a
/// significant component is positive) together with the pseudopotential
/// energy and the geometry class.
struct CrystalConfiguration {
    int n_ions = 0;
    Positions positions;             ///< canonical order, one row per ion
    std::vector<int> labels;         ///< ion labels 0..N-1 in canonical order
    CrystalClass classification = CrystalClass::linear;
    double energy = 0.0;
};

/// Pseudopotential energy / gradient / Hessian of a set of positions.
double pseudo_energy(const SecularBetas& b, const Positions& u);
Eigen::VectorXd pseudo_gradient(const SecularBetas& b, const Positions& u);
Eigen::MatrixXd pseudo_hessian(const SecularBetas& b, const Positions& u);

double pseudo_energy(const TrapConfig& cfg, const Positions& u);
Eigen::VectorXd pseudo_gradient(const TrapConfig& cfg, const Positions& u);
Eigen::MatrixXd pseudo_hessian(const TrapConfig& cfg, const Positions& u);

/// Sort rows canonically, fix mirror signs, classify and compute energy.
CrystalConfiguration canonicalize(const SecularBetas& b, const Positions& u);

/// Classify positions: coordinates below 1e-5 of the largest coordinate
/// magnitude count as zero.
CrystalClass classify(const Positions& u);

/// Exact positions of an N-ion linear chain (x = y = 0), solving the axial
/// force balance by Newton iteration.
Positions chain_positions(double beta_z, int n_ions);

struct EquilibriumOptions {
    std::uint64_t seed = 20177;     ///< PRNG seed for the random starts
    int random_starts = 20;         ///< Gaussian-cloud seeds
    bool quick = false;             ///< chain + zigzag seeds only
    /// Optional continuation seed, tried before the built-in seeds.
    const Positions* warm_start = nullptr;
};

/// Global pseudopotential minimum by deterministic multi-start local
/// minimization (ordered chain seed scaled by N^0.56, zigzag-perturbed
/// chain, and Gaussian clouds from the seeded PRNG). Starts converging to
/// saddles are discarded; the survivors are reduced by energy, ties by
/// lexicographic position order, so the result does not depend on start
/// scheduling. Throws ConvergenceError when no start reaches a minimum.
CrystalConfiguration find_equilibrium(const SecularBetas& b, int n_ions,
                                      const EquilibriumOptions& opts = {});
CrystalConfiguration find_equilibrium(const TrapConfig& cfg, int n_ions,
                                      const EquilibriumOptions& opts = {});

/// Descent-only trust-region refinement from an explicit seed. Converges
/// when the gradient norm drops below 1e-12 (at most 1e4 iterations) and
/// verifies the Hessian is positive semidefinite at the solution.
CrystalConfiguration refine_equilibrium(const SecularBetas& b,
                                        const Positions& seed);

} // namespace ioncrystal
