#pragma once

#include "ioncrystal/equilibrium.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace ioncrystal {

/// Identity tag of a single vibrational mode.
struct ModeTag {
    enum Kind { cm_x, cm_y, cm_z, zz_a, zz_b, other } kind = other;
    int index = -1; ///< running index for `other` tags

    std::string str() const;
};

struct Mode {
    double beta = 0.0;           ///< characteristic exponent in (0, 1)
    double freq_hz = 0.0;        ///< beta * omega_rf / (4 pi)
    Eigen::VectorXd vector;      ///< real 3N displacement pattern at xi = 0,
                                 ///< DOF order 3*ion + axis, canonical ions
    ModeTag tag;
    bool degenerate = false;     ///< part of a degenerate exponent subspace
};

struct ModeSet {
    enum class Method { ppt, flt } method = Method::ppt;
    int n_ions = 0;
    std::vector<Mode> modes;     ///< ascending in beta
};

const char* to_string(ModeSet::Method m);

/// Assign identity tags in place:
///  - centre-of-mass tags where a mode overlaps a rigid translation by
///    more than 0.999 in absolute value;
///  - for a 3-ion planar zigzag, the two lowest non-cm modes are the
///    zigzag pair, split by their overlap with the (1, -2, 1)/sqrt(6)
///    transverse pattern (larger -> zz_a). When that overlap difference is
///    below 0.01 the assignment is ambiguous and AmbiguousTagError lists
///    both candidates;
///  - everything else becomes other_i in ascending beta order.
void tag_modes(ModeSet& set, const CrystalConfiguration& crystal);

} // namespace ioncrystal
