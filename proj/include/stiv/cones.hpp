#pragma once

#include <vector>

#include <Eigen/Core>

#include "stiv/errors.hpp"
#include "stiv/math.hpp"

namespace stiv {

enum class ConeKind { free_cone, nonneg, soc };

/// Contiguous slice of the variable vector with a cone membership.
struct ConeSlice {
    ConeKind kind = ConeKind::free_cone;
    Eigen::Index start = 0;
    Eigen::Index size = 0;
};

/// Second-order cone check: head >= ||tail||_2 within slack tol.
inline double soc_violation(const VectorXd& v)
{
    if (v.size() < 1) fail(ErrorCode::InvalidParams, "empty soc block");
    const double tail = v.size() > 1 ? v.tail(v.size() - 1).norm() : 0.0;
    return positive_part(tail - v[0]);
}

inline double cone_violation(const VectorXd& x, const std::vector<ConeSlice>& slices)
{
    double worst = 0.0;
    for (const auto& s : slices) {
        const auto seg = x.segment(s.start, s.size);
        switch (s.kind) {
        case ConeKind::free_cone: break;
        case ConeKind::nonneg:
            if (s.size > 0) worst = std::max(worst, positive_part(-seg.minCoeff()));
            break;
        case ConeKind::soc: worst = std::max(worst, soc_violation(seg)); break;
        }
    }
    return worst;
}

} // namespace stiv
