#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stiv/errors.hpp"
#include "stiv/math.hpp"

namespace stiv {

/// Observations for the structural model y = x'beta + u with instruments z
/// and an optional second list zbar of possibly non-valid instruments.
/// Immutable after construction; all operations are pure.
struct Dataset {
    VectorXd y;   // n
    MatrixXd x;   // n x K
    MatrixXd z;   // n x L
    MatrixXd zbar; // n x L1 (may be empty)

    /// Column of z that is identically one; required for the conic part of
    /// the estimator. May be absent for derived instrument sets where the
    /// plain residual cone is used instead.
    std::optional<Eigen::Index> const_instr_idx;

    /// Regressors known to be exogenous; each must reappear verbatim as an
    /// instrument column.
    std::vector<Eigen::Index> exo_idx;

    Eigen::Index n() const { return y.size(); }
    Eigen::Index num_regressors() const { return x.cols(); }
    Eigen::Index num_instruments() const { return z.cols(); }
    Eigen::Index num_nv_instruments() const { return zbar.cols(); }

    void validate() const
    {
        const Eigen::Index nobs = n();
        if (nobs < 2) fail(ErrorCode::InvalidParams, "need at least two observations");
        if (x.rows() != nobs || z.rows() != nobs || (zbar.size() > 0 && zbar.rows() != nobs))
            fail(ErrorCode::DimensionMismatch, "row counts differ across y, x, z");
        if (x.cols() < 1 || z.cols() < 1) fail(ErrorCode::InvalidParams, "empty regressor or instrument set");
        for (Eigen::Index k = 0; k < x.cols(); ++k)
            if (x.col(k).cwiseAbs().maxCoeff() == 0.0)
                fail(ErrorCode::DegenerateColumn, "regressor column " + std::to_string(k) + " is zero");
        for (Eigen::Index l = 0; l < z.cols(); ++l)
            if (z.col(l).cwiseAbs().maxCoeff() == 0.0)
                fail(ErrorCode::DegenerateColumn, "instrument column " + std::to_string(l) + " is zero");
        if (const_instr_idx) {
            const Eigen::Index c = *const_instr_idx;
            if (c < 0 || c >= z.cols()) fail(ErrorCode::InvalidParams, "constant instrument index out of range");
            if ((z.col(c).array() - 1.0).abs().maxCoeff() > 1e-12)
                fail(ErrorCode::ConstantMissing, "declared constant instrument column is not one");
        }
        for (Eigen::Index k : exo_idx) {
            if (k < 0 || k >= x.cols()) fail(ErrorCode::InvalidParams, "exogenous index out of range");
            bool found = false;
            for (Eigen::Index l = 0; l < z.cols() && !found; ++l)
                found = (z.col(l) - x.col(k)).cwiseAbs().maxCoeff() == 0.0;
            if (!found)
                fail(ErrorCode::SpecInvalid,
                     "exogenous regressor " + std::to_string(k) + " has no matching instrument column");
        }
    }

    /// Detect an all-ones instrument column; a declared index wins.
    std::optional<Eigen::Index> find_constant_instrument() const
    {
        if (const_instr_idx) return const_instr_idx;
        for (Eigen::Index l = 0; l < z.cols(); ++l)
            if ((z.col(l).array() - 1.0).abs().maxCoeff() <= 1e-12) return l;
        return std::nullopt;
    }
};

enum class ScaleMode { rms, maxabs, mixed };

/// Positive diagonal normalization (entries of D_X or D_Z).
struct DiagScale {
    VectorXd entries;
    ScaleMode mode = ScaleMode::rms;

    void validate() const
    {
        for (Eigen::Index i = 0; i < entries.size(); ++i)
            if (!(entries[i] > 0.0) || !std::isfinite(entries[i]))
                fail(ErrorCode::DegenerateColumn, "nonpositive or nonfinite scale entry " + std::to_string(i));
    }
};

/// Normalized instrument-regressor cross-moment matrix
///   Psi = (1/n) D_Z Z' X D_X   (L x K, rectangular in general).
struct PsiMatrix {
    MatrixXd values;
    DiagScale dx;
    DiagScale dz;
    std::set<Eigen::Index> cone_index_set; // instruments on the conic normalization

    void validate() const
    {
        if (!values.allFinite()) fail(ErrorCode::InvalidParams, "psi has nonfinite entries");
    }
};

namespace detail {
constexpr double kDegenerateMoment = 1e-12;
}

/// D_X diagonal: E_n[X_k^2]^{-1/2} (rms) or (max_i |x_ki|)^{-1} (maxabs).
inline DiagScale compute_dx(const Dataset& ds, ScaleMode mode = ScaleMode::rms)
{
    if (mode == ScaleMode::mixed) fail(ErrorCode::InvalidParams, "mixed mode is for instruments");
    const Eigen::Index bigk = ds.num_regressors();
    DiagScale out;
    out.mode = mode;
    out.entries.resize(bigk);
    for (Eigen::Index k = 0; k < bigk; ++k) {
        double scale;
        if (mode == ScaleMode::rms) {
            const double m2 = sample_second_moment(ds.x.col(k));
            if (m2 < detail::kDegenerateMoment)
                fail(ErrorCode::DegenerateColumn, "regressor " + std::to_string(k) + " has near-zero variance");
            scale = 1.0 / std::sqrt(m2);
        } else {
            const double mx = ds.x.col(k).cwiseAbs().maxCoeff();
            if (mx < detail::kDegenerateMoment)
                fail(ErrorCode::DegenerateColumn, "regressor " + std::to_string(k) + " is near zero");
            scale = 1.0 / mx;
        }
        out.entries[k] = scale;
    }
    out.validate();
    return out;
}

/// The cross-moment scale (x o z)_l = max_k E_n[(X_k Z_l / E_n[X_k^2]^{1/2})^2]^{1/2}.
inline double cross_scale(const Dataset& ds, Eigen::Index l)
{
    double best = 0.0;
    for (Eigen::Index k = 0; k < ds.num_regressors(); ++k) {
        const double m2 = sample_second_moment(ds.x.col(k));
        if (m2 < detail::kDegenerateMoment)
            fail(ErrorCode::DegenerateColumn, "regressor " + std::to_string(k) + " has near-zero variance");
        const VectorXd prod = ds.x.col(k).cwiseProduct(ds.z.col(l));
        best = std::max(best, sample_second_moment(prod) / m2);
    }
    return std::sqrt(best);
}

/// D_Z diagonal for a cone index set I: (x o z)_l^{-1} on I, (max_i |z_li|)^{-1}
/// elsewhere. The constant instrument must be part of I.
inline DiagScale compute_dz(const Dataset& ds, const std::set<Eigen::Index>& cone_set)
{
    const auto cidx = ds.find_constant_instrument();
    if (cidx && cone_set.find(*cidx) == cone_set.end())
        fail(ErrorCode::ConstantMissing, "cone index set must contain the constant instrument");
    DiagScale out;
    out.mode = ScaleMode::mixed;
    out.entries.resize(ds.num_instruments());
    for (Eigen::Index l = 0; l < ds.num_instruments(); ++l) {
        double scale;
        if (cone_set.count(l)) {
            const double xz = cross_scale(ds, l);
            if (xz < detail::kDegenerateMoment)
                fail(ErrorCode::DegenerateColumn, "instrument " + std::to_string(l) + " cross-moment near zero");
            scale = 1.0 / xz;
        } else {
            const double mx = ds.z.col(l).cwiseAbs().maxCoeff();
            if (mx < detail::kDegenerateMoment)
                fail(ErrorCode::DegenerateColumn, "instrument " + std::to_string(l) + " is near zero");
            scale = 1.0 / mx;
        }
        out.entries[l] = scale;
    }
    out.validate();
    return out;
}

/// Psi = (1/n) D_Z Z' X D_X.
inline PsiMatrix compute_psi(const Dataset& ds, const DiagScale& dx, const DiagScale& dz,
                             std::set<Eigen::Index> cone_set = {})
{
    if (dx.entries.size() != ds.num_regressors() || dz.entries.size() != ds.num_instruments())
        fail(ErrorCode::DimensionMismatch, "scale dimensions do not match the dataset");
    PsiMatrix psi;
    psi.values.resize(ds.num_instruments(), ds.num_regressors());
    const double inv_n = 1.0 / static_cast<double>(ds.n());
    for (Eigen::Index l = 0; l < ds.num_instruments(); ++l)
        for (Eigen::Index k = 0; k < ds.num_regressors(); ++k) {
            const VectorXd prod = ds.z.col(l).cwiseProduct(ds.x.col(k));
            psi.values(l, k) = dz.entries[l] * dx.entries[k] * pairwise_sum(
                                   std::span<const double>(prod.data(), static_cast<std::size_t>(prod.size()))) *
                               inv_n;
        }
    psi.dx = dx;
    psi.dz = dz;
    psi.cone_index_set = std::move(cone_set);
    psi.validate();
    return psi;
}

/// Qhat_l(beta) = E_n[ z_l^2 (y - x'beta)^2 ].
inline double qhat(const Dataset& ds, const VectorXd& beta, Eigen::Index l)
{
    if (beta.size() != ds.num_regressors()) fail(ErrorCode::DimensionMismatch, "beta length");
    if (l < 0 || l >= ds.num_instruments()) fail(ErrorCode::InvalidParams, "instrument index");
    const VectorXd resid = ds.y - ds.x * beta;
    const VectorXd weighted = ds.z.col(l).cwiseProduct(resid);
    return sample_second_moment(weighted);
}

} // namespace stiv
