#pragma once

#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "stiv/cone_program.hpp"
#include "stiv/dataset.hpp"
#include "stiv/ipm.hpp"
#include "stiv/solver.hpp"

namespace stiv {

/// Tuning of one self-tuning IV fit: the l1/sigma trade-off c, the moment
/// band radius r, the set I of instruments carrying conic constraints, and
/// the regressor normalization.
struct StivSpec {
    std::optional<double> c = 0.1; // absent: minimize sigma only
    double r = 0.0;
    std::set<Eigen::Index> cone_set; // instruments with conic constraints
    ScaleMode dx_mode = ScaleMode::rms;
    bool dz_mirror = false;          // all-exogenous case: D_Z taken equal to D_X
    bool virtual_const_cone = false; // conic constraint on plain residuals, no z column
    std::optional<DiagScale> dz_override; // externally supplied instrument scales

    /// Coefficient of sigma in the objective. Defaults to c. The cone constant
    /// c must stay in (0,1), but a useful selection regime often needs a much
    /// heavier sigma weight (of order sqrt(n)); keeping the two apart lets the
    /// inference formulas use c while the program uses the practical weight.
    std::optional<double> sigma_weight;

    double sigma_weight_value() const { return sigma_weight.value_or(c.value_or(1.0)); }

    void validate(const Dataset& ds) const
    {
        if (c && !(*c > 0.0 && *c < 1.0)) fail(ErrorCode::SpecInvalid, "c must lie in (0,1)");
        if (sigma_weight && !(*sigma_weight > 0.0))
            fail(ErrorCode::SpecInvalid, "sigma weight must be positive");
        if (!(r > 0.0)) fail(ErrorCode::SpecInvalid, "r must be positive");
        for (Eigen::Index l : cone_set)
            if (l < 0 || l >= ds.num_instruments()) fail(ErrorCode::SpecInvalid, "cone index out of range");
        if (cone_set.empty() && !virtual_const_cone)
            fail(ErrorCode::SpecInvalid, "need at least one conic constraint");
    }
};

struct FitOptions {
    SolverConfig solver;
    double zero_clip = 1e-6;        // |beta_k| E_n[X_k^2]^{1/2} below this reports as zero
    bool with_standard_form = false; // also assemble + attach the standard-form program
};

/// Fit result. beta_hat carries the zero-clipped coefficients; the raw solver
/// vector stays inside `solution.primal` (variables ordered beta, t, w).
struct StivFit {
    VectorXd beta_hat;
    double sigma_hat = 0.0;
    StivSpec spec;
    Solution solution;
    std::vector<Eigen::Index> support;
    double objective = 0.0;
    DiagScale dx;
    DiagScale dz;
    VectorXd rms_scale; // E_n[X_k^2]^{1/2}, used by clipping and reports
    double zero_clip = 1e-6;
};

namespace detail {

/// Structured engine model for the estimation programs:
///   min sum_k w_k + (c/sqrt(n)) t   over (beta, t, w)
///   s.t. |(1/sqrt(n)) D_Z Z'(Y - X beta)|_inf <= r t       (2L rows)
///        |beta_k| / dx_k <= w_k,  w_k >= 0                 (3K rows)
///        || wvec_l o (Y - X beta) ||_2 <= t   per cone l   (SOC blocks)
/// The SOC blocks share the design matrix, so the scaled normal matrix is
/// accumulated from one weighted Gram plus per-cone rank corrections.
class StivModel final : public ipm::Model {
  public:
    StivModel(const Dataset& ds, const DiagScale& dx, const DiagScale& dz,
              const std::set<Eigen::Index>& cone_set, bool virtual_const_cone, double r,
              std::optional<double> sigma_weight)
        : x_(ds.x), y_(ds.y), l1_penalty_(sigma_weight.has_value())
    {
        const Eigen::Index n = ds.n();
        const Eigen::Index bigk = ds.num_regressors();
        const Eigen::Index bigl = ds.num_instruments();
        const double sqn = std::sqrt(static_cast<double>(n));

        nx_ = l1_penalty_ ? 2 * bigk + 1 : bigk + 1;
        t_col_ = bigk;

        // cone weight vectors
        for (Eigen::Index l : cone_set) cone_w_.push_back(dz.entries[l] * ds.z.col(l));
        if (virtual_const_cone) cone_w_.push_back(VectorXd::Ones(n));
        if (cone_w_.empty()) fail(ErrorCode::SpecInvalid, "no conic constraint");

        // nonnegative block
        const Eigen::Index n_band = l1_penalty_ ? 3 * bigk : 0;
        g_nn_ = MatrixXd::Zero(2 * bigl + n_band, nx_);
        h_nn_ = VectorXd::Zero(2 * bigl + n_band);
        MatrixXd band = dz.entries.asDiagonal() * (ds.z.transpose() * ds.x) / sqn; // L x K
        VectorXd band_rhs = dz.entries.asDiagonal() * (ds.z.transpose() * ds.y) / sqn;
        for (Eigen::Index l = 0; l < bigl; ++l) {
            g_nn_.row(2 * l).head(bigk) = -band.row(l);
            g_nn_(2 * l, t_col_) = -r;
            h_nn_[2 * l] = -band_rhs[l];
            g_nn_.row(2 * l + 1).head(bigk) = band.row(l);
            g_nn_(2 * l + 1, t_col_) = -r;
            h_nn_[2 * l + 1] = band_rhs[l];
        }
        if (l1_penalty_) {
            for (Eigen::Index k = 0; k < bigk; ++k) {
                const double invd = 1.0 / dx.entries[k];
                g_nn_(2 * bigl + 3 * k, k) = invd;
                g_nn_(2 * bigl + 3 * k, bigk + 1 + k) = -1.0;
                g_nn_(2 * bigl + 3 * k + 1, k) = -invd;
                g_nn_(2 * bigl + 3 * k + 1, bigk + 1 + k) = -1.0;
                g_nn_(2 * bigl + 3 * k + 2, bigk + 1 + k) = -1.0;
            }
        }

        spec_.nonneg = g_nn_.rows();
        for (std::size_t l = 0; l < cone_w_.size(); ++l) spec_.soc.push_back(n + 1);

        h_ = VectorXd::Zero(spec_.total());
        h_.head(spec_.nonneg) = h_nn_;
        Eigen::Index at = spec_.nonneg;
        for (const auto& w : cone_w_) {
            h_[at] = 0.0;
            h_.segment(at + 1, n) = w.cwiseProduct(y_);
            at += n + 1;
        }

        c_ = VectorXd::Zero(nx_);
        if (l1_penalty_) {
            c_.segment(bigk + 1, bigk).setOnes();
            c_[t_col_] = *sigma_weight / sqn;
        } else {
            c_[t_col_] = 1.0 / sqn;
        }
        b_.resize(0);
    }

    Eigen::Index num_vars() const override { return nx_; }
    Eigen::Index num_eq() const override { return 0; }
    const ipm::ConeSpec& cones() const override { return spec_; }
    const VectorXd& cost() const override { return c_; }
    const VectorXd& eq_rhs() const override { return b_; }
    const VectorXd& cone_rhs() const override { return h_; }

    void mul_g(const VectorXd& v, VectorXd& out) const override
    {
        out.resize(spec_.total());
        out.head(spec_.nonneg).noalias() = g_nn_ * v;
        const VectorXd xb = x_ * v.head(x_.cols());
        Eigen::Index at = spec_.nonneg;
        for (const auto& w : cone_w_) {
            out[at] = -v[t_col_];
            out.segment(at + 1, x_.rows()).noalias() = w.cwiseProduct(xb);
            at += x_.rows() + 1;
        }
    }

    void mul_gt(const VectorXd& zvec, VectorXd& out) const override
    {
        out.resize(nx_);
        out.noalias() = g_nn_.transpose() * zvec.head(spec_.nonneg);
        VectorXd acc = VectorXd::Zero(x_.rows());
        Eigen::Index at = spec_.nonneg;
        for (const auto& w : cone_w_) {
            out[t_col_] -= zvec[at];
            acc += w.cwiseProduct(zvec.segment(at + 1, x_.rows()));
            at += x_.rows() + 1;
        }
        out.head(x_.cols()).noalias() += x_.transpose() * acc;
    }

    void mul_a(const VectorXd&, VectorXd& out) const override { out.resize(0); }
    void mul_at(const VectorXd&, VectorXd& out) const override { out.setZero(nx_); }

    void add_normal_matrix(const ipm::NtScaling& nt, MatrixXd& m) const override
    {
        // nonnegative block
        MatrixXd ghat = g_nn_.array().colwise() / nt.w_nn.array();
        m.selfadjointView<Eigen::Lower>().rankUpdate(ghat.transpose(), 1.0);

        // second-order blocks: eta^-2 [ e0 g0 g0' + chat (g0 u' + u g0') + B'B + dhat u u' ]
        // with g0 = -e_t and B = diag(w_l) X on the beta columns.
        const Eigen::Index bigk = x_.cols();
        VectorXd comb_weight = VectorXd::Zero(x_.rows());
        for (std::size_t l = 0; l < cone_w_.size(); ++l) {
            const auto& sc = nt.socs[l];
            const double inv_eta2 = 1.0 / (sc.eta * sc.eta);
            comb_weight += inv_eta2 * cone_w_[l].cwiseAbs2();
        }
        MatrixXd gram = MatrixXd::Zero(bigk, bigk);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(
            (comb_weight.cwiseSqrt().asDiagonal() * x_).transpose(), 1.0);
        m.topLeftCorner(bigk, bigk).triangularView<Eigen::Lower>() += gram;

        for (std::size_t l = 0; l < cone_w_.size(); ++l) {
            const auto& sc = nt.socs[l];
            const double w2 = sc.q.squaredNorm();
            const double e0 = sc.a * sc.a + w2;
            const double chat = sc.a + 1.0 + w2 / (1.0 + sc.a);
            const double dhat = 1.0 + 2.0 / (1.0 + sc.a) + w2 / ((1.0 + sc.a) * (1.0 + sc.a));
            const double inv_eta2 = 1.0 / (sc.eta * sc.eta);
            VectorXd u = x_.transpose() * cone_w_[l].cwiseProduct(sc.q);
            m(t_col_, t_col_) += inv_eta2 * e0;
            // g0 u' + u g0' contributes to the t row/column (lower triangle only)
            m.block(t_col_, 0, 1, bigk) += inv_eta2 * chat * u.transpose();
            m.topLeftCorner(bigk, bigk).selfadjointView<Eigen::Lower>().rankUpdate(u, inv_eta2 * dhat);
        }
    }

  private:
    const MatrixXd& x_;
    const VectorXd& y_;
    bool l1_penalty_;
    Eigen::Index nx_ = 0;
    Eigen::Index t_col_ = 0;
    MatrixXd g_nn_;
    VectorXd h_nn_;
    std::vector<VectorXd> cone_w_;
    ipm::ConeSpec spec_;
    VectorXd c_, h_, b_;
};

inline VectorXd rms_scale_of(const Dataset& ds)
{
    VectorXd out(ds.num_regressors());
    for (Eigen::Index k = 0; k < ds.num_regressors(); ++k)
        out[k] = std::sqrt(sample_second_moment(ds.x.col(k)));
    return out;
}

inline DiagScale scales_for_instruments(const Dataset& ds, const StivSpec& spec, const DiagScale& dx)
{
    if (spec.dz_override) {
        if (spec.dz_override->entries.size() != ds.num_instruments())
            fail(ErrorCode::DimensionMismatch, "override scale length");
        return *spec.dz_override;
    }
    if (spec.dz_mirror) {
        if (ds.z.cols() != ds.x.cols()) fail(ErrorCode::DimensionMismatch, "mirrored scales need Z = X");
        return dx;
    }
    return compute_dz(ds, spec.cone_set);
}

} // namespace detail

/// Standard-form cone program for the estimator:
/// variables [beta | w | band slacks d+, d- | band slacks e+, e- | per cone (t_l, v_l)],
/// one slack-definition equality per inequality row, one equality per cone tail
/// coordinate, and head-sharing rows tying the cone heads together.
/// Counts: vars = 4K + 2L + |I| (n+1), eqs = 2L + 2K + |I| n + (|I| - 1).
inline ConeProgram assemble_stiv_program(const Dataset& ds, const StivSpec& spec)
{
    ds.validate();
    spec.validate(ds);
    if (!spec.c) fail(ErrorCode::SpecInvalid, "standard-form assembly needs the l1 objective");
    const DiagScale dx = compute_dx(ds, spec.dx_mode);
    const DiagScale dz = detail::scales_for_instruments(ds, spec, dx);

    const Eigen::Index n = ds.n();
    const Eigen::Index bigk = ds.num_regressors();
    const Eigen::Index bigl = ds.num_instruments();
    const double sqn = std::sqrt(static_cast<double>(n));
    std::vector<VectorXd> cone_w;
    for (Eigen::Index l : spec.cone_set) cone_w.push_back(dz.entries[l] * ds.z.col(l));
    if (spec.virtual_const_cone) cone_w.push_back(VectorXd::Ones(n));
    const Eigen::Index ncones = static_cast<Eigen::Index>(cone_w.size());

    const Eigen::Index v_beta = 0, v_w = bigk, v_dp = 2 * bigk, v_dm = 2 * bigk + bigl,
                       v_ep = 2 * bigk + 2 * bigl, v_em = 3 * bigk + 2 * bigl,
                       v_cone = 4 * bigk + 2 * bigl;
    const Eigen::Index nvars = v_cone + ncones * (n + 1);
    const Eigen::Index neq = 2 * bigl + 2 * bigk + ncones * n + (ncones - 1);

    ConeProgram p;
    p.objective = VectorXd::Zero(nvars);
    p.objective.segment(v_w, bigk).setOnes();
    p.objective[v_cone] = spec.sigma_weight_value() / sqn; // first cone head
    p.eq_rhs = VectorXd::Zero(neq);
    std::vector<Triplet> trips;
    MatrixXd band = dz.entries.asDiagonal() * (ds.z.transpose() * ds.x) / sqn;
    VectorXd band_rhs = dz.entries.asDiagonal() * (ds.z.transpose() * ds.y) / sqn;

    Eigen::Index row = 0;
    for (Eigen::Index l = 0; l < bigl; ++l) { // band_rhs - band beta <= r t
        for (Eigen::Index k = 0; k < bigk; ++k) trips.emplace_back(row, v_beta + k, -band(l, k));
        trips.emplace_back(row, v_cone, -spec.r);
        trips.emplace_back(row, v_dp + l, 1.0);
        p.eq_rhs[row] = -band_rhs[l];
        ++row;
        for (Eigen::Index k = 0; k < bigk; ++k) trips.emplace_back(row, v_beta + k, band(l, k));
        trips.emplace_back(row, v_cone, -spec.r);
        trips.emplace_back(row, v_dm + l, 1.0);
        p.eq_rhs[row] = band_rhs[l];
        ++row;
    }
    for (Eigen::Index k = 0; k < bigk; ++k) { // |beta_k| / dx_k <= w_k
        const double invd = 1.0 / dx.entries[k];
        trips.emplace_back(row, v_beta + k, invd);
        trips.emplace_back(row, v_w + k, -1.0);
        trips.emplace_back(row, v_ep + k, 1.0);
        ++row;
        trips.emplace_back(row, v_beta + k, -invd);
        trips.emplace_back(row, v_w + k, -1.0);
        trips.emplace_back(row, v_em + k, 1.0);
        ++row;
    }
    for (Eigen::Index l = 0; l < ncones; ++l) { // v_l = w_l o (Y - X beta)
        const Eigen::Index head = v_cone + l * (n + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            trips.emplace_back(row, head + 1 + i, 1.0);
            for (Eigen::Index k = 0; k < bigk; ++k)
                trips.emplace_back(row, v_beta + k, cone_w[static_cast<std::size_t>(l)][i] * ds.x(i, k));
            p.eq_rhs[row] = cone_w[static_cast<std::size_t>(l)][i] * ds.y[i];
            ++row;
        }
    }
    for (Eigen::Index l = 1; l < ncones; ++l) { // shared head
        trips.emplace_back(row, v_cone + l * (n + 1), 1.0);
        trips.emplace_back(row, v_cone, -1.0);
        ++row;
    }

    p.eq_matrix.resize(neq, nvars);
    p.eq_matrix.setFromTriplets(trips.begin(), trips.end());
    p.cones.push_back({ConeKind::free_cone, v_beta, bigk});
    p.cones.push_back({ConeKind::nonneg, v_w, bigk});
    p.cones.push_back({ConeKind::nonneg, v_dp, 2 * bigl});
    p.cones.push_back({ConeKind::nonneg, v_ep, 2 * bigk});
    for (Eigen::Index l = 0; l < ncones; ++l)
        p.cones.push_back({ConeKind::soc, v_cone + l * (n + 1), n + 1});
    p.validate();
    return p;
}

/// Lift an engine-form fit onto the standard-form variable layout, duals
/// included, so the full certificate can be recomputed against the assembled
/// program.
inline Solution lift_to_standard_form(const ConeProgram& prog, const ipm::IpmResult& r,
                                      Eigen::Index bigk, Eigen::Index bigl, Eigen::Index n,
                                      Eigen::Index ncones)
{
    Solution sol;
    sol.status = r.status;
    sol.iterations = r.iterations;
    sol.gap = r.gap;
    sol.primal_residual = r.primal_residual;
    sol.dual_residual = r.dual_residual;
    sol.objective = r.primal_obj;
    sol.dual_objective = r.dual_obj;
    if (r.status != SolveStatus::optimal) return sol;

    const Eigen::Index v_w = bigk, v_dp = 2 * bigk, v_ep = 2 * bigk + 2 * bigl,
                       v_cone = 4 * bigk + 2 * bigl;
    const Eigen::Index nn = 2 * bigl + 3 * bigk; // engine nonneg rows
    sol.primal = VectorXd::Zero(prog.num_vars());
    sol.primal.head(bigk) = r.x.head(bigk);
    sol.primal.segment(v_w, bigk) = r.x.segment(bigk + 1, bigk);
    for (Eigen::Index l = 0; l < bigl; ++l) {
        sol.primal[v_dp + l] = r.s[2 * l];
        sol.primal[v_dp + bigl + l] = r.s[2 * l + 1];
    }
    for (Eigen::Index k = 0; k < bigk; ++k) {
        sol.primal[v_ep + k] = r.s[2 * bigl + 3 * k];
        sol.primal[v_ep + bigk + k] = r.s[2 * bigl + 3 * k + 1];
    }
    for (Eigen::Index l = 0; l < ncones; ++l)
        sol.primal.segment(v_cone + l * (n + 1), n + 1) = r.s.segment(nn + l * (n + 1), n + 1);

    // equality duals: slack-definition rows carry -z, head-sharing rows -z_head
    sol.dual = VectorXd::Zero(prog.num_eq());
    Eigen::Index row = 0;
    for (Eigen::Index l = 0; l < 2 * bigl; ++l) sol.dual[row++] = -r.z[l];
    for (Eigen::Index k = 0; k < bigk; ++k) {
        sol.dual[row++] = -r.z[2 * bigl + 3 * k];
        sol.dual[row++] = -r.z[2 * bigl + 3 * k + 1];
    }
    for (Eigen::Index l = 0; l < ncones; ++l)
        for (Eigen::Index i = 0; i < n; ++i) sol.dual[row++] = -r.z[nn + l * (n + 1) + 1 + i];
    for (Eigen::Index l = 1; l < ncones; ++l) sol.dual[row++] = -r.z[nn + l * (n + 1)];

    // dual cone values
    sol.dual_cone = VectorXd::Zero(prog.num_vars());
    for (Eigen::Index k = 0; k < bigk; ++k) sol.dual_cone[v_w + k] = r.z[2 * bigl + 3 * k + 2];
    for (Eigen::Index l = 0; l < bigl; ++l) {
        sol.dual_cone[v_dp + l] = r.z[2 * l];
        sol.dual_cone[v_dp + bigl + l] = r.z[2 * l + 1];
    }
    for (Eigen::Index k = 0; k < bigk; ++k) {
        sol.dual_cone[v_ep + k] = r.z[2 * bigl + 3 * k];
        sol.dual_cone[v_ep + bigk + k] = r.z[2 * bigl + 3 * k + 1];
    }
    for (Eigen::Index l = 0; l < ncones; ++l)
        sol.dual_cone.segment(v_cone + l * (n + 1), n + 1) = r.z.segment(nn + l * (n + 1), n + 1);
    return sol;
}

namespace detail {

inline StivFit finish_fit(const Dataset& ds, const StivSpec& spec, const DiagScale& dx,
                          const DiagScale& dz, const ipm::IpmResult& res, const FitOptions& opt)
{
    if (res.status != SolveStatus::optimal) {
        fail(ErrorCode::SolverFailure,
             std::string("estimation program did not reach optimality (status ") +
                 status_name(res.status) + ", " + std::to_string(res.iterations) +
                 " iterations); use the standard-form dump to cross-check");
    }
    const Eigen::Index bigk = ds.num_regressors();
    StivFit fit;
    fit.spec = spec;
    fit.dx = dx;
    fit.dz = dz;
    fit.rms_scale = rms_scale_of(ds);
    fit.zero_clip = opt.zero_clip;
    fit.sigma_hat = positive_part(res.x[bigk]) / std::sqrt(static_cast<double>(ds.n()));
    // interior-point zeros are only approximate; snap the noise level like beta
    if (fit.sigma_hat <= 1e-8 * std::max(1.0, std::abs(res.primal_obj))) fit.sigma_hat = 0.0;
    fit.objective = res.primal_obj;
    fit.beta_hat = res.x.head(bigk);
    for (Eigen::Index k = 0; k < bigk; ++k) {
        if (std::abs(fit.beta_hat[k]) * fit.rms_scale[k] < opt.zero_clip)
            fit.beta_hat[k] = 0.0;
        else
            fit.support.push_back(k);
    }
    fit.solution.status = res.status;
    fit.solution.primal = res.x;
    fit.solution.objective = res.primal_obj;
    fit.solution.dual_objective = res.dual_obj;
    fit.solution.gap = res.gap;
    fit.solution.primal_residual = res.primal_residual;
    fit.solution.dual_residual = res.dual_residual;
    fit.solution.iterations = res.iterations;
    return fit;
}

} // namespace detail

/// Self-tuning IV estimator: minimize |D_X^-1 beta|_1 + c sigma over the
/// moment band and the conic constraints.
inline StivFit fit_stiv(const Dataset& ds, const StivSpec& spec, const FitOptions& opt = {})
{
    ds.validate();
    spec.validate(ds);
    if (!spec.c) fail(ErrorCode::SpecInvalid, "fit_stiv needs c; use fit_stiv_r for the plain variant");
    const DiagScale dx = compute_dx(ds, spec.dx_mode);
    const DiagScale dz = detail::scales_for_instruments(ds, spec, dx);
    detail::StivModel model(ds, dx, dz, spec.cone_set, spec.virtual_const_cone, spec.r,
                            spec.sigma_weight_value());
    ipm::IpmResult res = ipm::solve_model(model, opt.solver);
    StivFit fit = detail::finish_fit(ds, spec, dx, dz, res, opt);
    if (opt.with_standard_form) {
        ConeProgram prog = assemble_stiv_program(ds, spec);
        const Eigen::Index ncones =
            static_cast<Eigen::Index>(spec.cone_set.size()) + (spec.virtual_const_cone ? 1 : 0);
        fit.solution = lift_to_standard_form(prog, res, ds.num_regressors(), ds.num_instruments(),
                                             ds.n(), ncones);
    }
    return fit;
}

/// Variant without the l1 term: minimize sigma over the same feasible set.
/// Intended for low-dimensional, non-sparse problems.
inline StivFit fit_stiv_r(const Dataset& ds, StivSpec spec, const FitOptions& opt = {})
{
    ds.validate();
    spec.c.reset();
    spec.validate(ds);
    const DiagScale dx = compute_dx(ds, spec.dx_mode);
    const DiagScale dz = detail::scales_for_instruments(ds, spec, dx);
    detail::StivModel model(ds, dx, dz, spec.cone_set, spec.virtual_const_cone, spec.r, std::nullopt);
    ipm::IpmResult res = ipm::solve_model(model, opt.solver);
    return detail::finish_fit(ds, spec, dx, dz, res, opt);
}

/// Mirror the regressors as their own instruments: the all-exogenous special
/// case (pivotal sqrt-lasso-type fit). D_Z is taken equal to D_X.
inline Dataset mirror_dataset(const Dataset& ds)
{
    Dataset m;
    m.y = ds.y;
    m.x = ds.x;
    m.z = ds.x;
    m.zbar = MatrixXd();
    for (Eigen::Index k = 0; k < m.z.cols(); ++k)
        if ((m.z.col(k).array() - 1.0).abs().maxCoeff() <= 1e-12) {
            m.const_instr_idx = k;
            break;
        }
    for (Eigen::Index k = 0; k < m.x.cols(); ++k) m.exo_idx.push_back(k);
    return m;
}

inline StivFit fit_sqrt_lasso(const Dataset& ds, StivSpec spec, const FitOptions& opt = {})
{
    Dataset m = (ds.z.rows() == ds.x.rows() && ds.z.cols() == ds.x.cols() &&
                 (ds.z - ds.x).cwiseAbs().maxCoeff() == 0.0)
                    ? ds
                    : mirror_dataset(ds);
    spec.dz_mirror = true;
    spec.cone_set.clear();
    if (m.const_instr_idx)
        spec.cone_set.insert(*m.const_instr_idx);
    else
        spec.virtual_const_cone = true;
    return fit_stiv(m, spec, opt);
}

/// Worst violation of the feasibility conditions at (beta, sigma); the fit
/// invariant is that this stays within solver tolerance.
inline double iv_constraint_violation(const Dataset& ds, const StivFit& fit)
{
    const VectorXd resid = ds.y - ds.x * fit.solution.primal.head(ds.num_regressors());
    const VectorXd moments =
        fit.dz.entries.asDiagonal() * (ds.z.transpose() * resid) / static_cast<double>(ds.n());
    double viol = linf_norm(moments) - fit.sigma_hat * fit.spec.r;
    for (Eigen::Index l : fit.spec.cone_set) {
        const double q = qhat(ds, fit.solution.primal.head(ds.num_regressors()), l);
        viol = std::max(viol, fit.dz.entries[l] * fit.dz.entries[l] * q -
                                  fit.sigma_hat * fit.sigma_hat);
    }
    if (fit.spec.virtual_const_cone) {
        const double q = sample_second_moment(resid);
        viol = std::max(viol, q - fit.sigma_hat * fit.sigma_hat);
    }
    return viol;
}

} // namespace stiv
