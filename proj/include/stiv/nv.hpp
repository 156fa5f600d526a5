#pragma once

#include <optional>

#include "stiv/inference.hpp"
#include "stiv/stiv.hpp"

namespace stiv {

/// max_l sqrt( E_n[ (zbar_l (y - x'beta) - theta_l)^2 ] ): the conic part of
/// the non-validity program. 1-Lipschitz in theta for the l1 norm; Lipschitz
/// with constant zbar_* in D_X^-1 beta.
inline double nv_objective_f(const Dataset& ds, const VectorXd& theta, const VectorXd& beta)
{
    if (ds.zbar.cols() != theta.size()) fail(ErrorCode::DimensionMismatch, "theta length");
    const VectorXd resid = ds.y - ds.x * beta;
    double worst = 0.0;
    for (Eigen::Index l = 0; l < ds.zbar.cols(); ++l) {
        const VectorXd dev = ds.zbar.col(l).cwiseProduct(resid).array() - theta[l];
        worst = std::max(worst, std::sqrt(sample_second_moment(dev)));
    }
    return worst;
}

/// zbar_* = max_l E_n[zbar_l^2]^{1/2}
inline double zbar_star(const Dataset& ds)
{
    double worst = 0.0;
    for (Eigen::Index l = 0; l < ds.zbar.cols(); ++l)
        worst = std::max(worst, std::sqrt(sample_second_moment(ds.zbar.col(l))));
    return worst;
}

struct NvFit {
    VectorXd theta_hat; // clipped
    double sigma1_hat = 0.0;
    double b_hat = 0.0;
    double r1 = 0.0;
    double c = 0.0;
    double zbar_star = 0.0;
    VectorXd moments; // (1/n) Zbar' (Y - X beta_pilot)
    Solution solution;
    std::vector<Eigen::Index> support;
    double objective = 0.0;
};

namespace detail {

/// Engine model for the non-validity program: variables (theta, sigma1, w),
///   min sum w + W sigma1
///   s.t. |moments_l - theta_l| <= sigma1 r1 + bz,   |theta| <= w, w >= 0,
///        sqrt(E_n[(zbar_l u - theta_l)^2]) <= sigma1 + bz   per l.
class NvModel final : public ipm::Model {
  public:
    NvModel(const Dataset& ds, const VectorXd& pilot_beta, double b_hat, double r1, double weight)
    {
        const Eigen::Index n = ds.n();
        const Eigen::Index l1 = ds.zbar.cols();
        const double sqn = std::sqrt(static_cast<double>(n));
        nx_ = 2 * l1 + 1;
        sigma_col_ = l1;
        resid_ = ds.y - ds.x * pilot_beta;
        zu_.resize(n, l1);
        for (Eigen::Index l = 0; l < l1; ++l) zu_.col(l) = ds.zbar.col(l).cwiseProduct(resid_);
        moments_ = zu_.colwise().mean();
        bz_ = b_hat * stiv::zbar_star(ds);
        inv_sqn_ = 1.0 / sqn;

        g_nn_ = MatrixXd::Zero(5 * l1, nx_);
        h_nn_ = VectorXd::Zero(5 * l1);
        for (Eigen::Index l = 0; l < l1; ++l) {
            g_nn_(5 * l, l) = -1.0;
            g_nn_(5 * l, sigma_col_) = -r1;
            h_nn_[5 * l] = bz_ - moments_[l];
            g_nn_(5 * l + 1, l) = 1.0;
            g_nn_(5 * l + 1, sigma_col_) = -r1;
            h_nn_[5 * l + 1] = bz_ + moments_[l];
            g_nn_(5 * l + 2, l) = 1.0;
            g_nn_(5 * l + 2, l1 + 1 + l) = -1.0;
            g_nn_(5 * l + 3, l) = -1.0;
            g_nn_(5 * l + 3, l1 + 1 + l) = -1.0;
            g_nn_(5 * l + 4, l1 + 1 + l) = -1.0;
        }
        spec_.nonneg = g_nn_.rows();
        for (Eigen::Index l = 0; l < l1; ++l) spec_.soc.push_back(n + 1);

        h_ = VectorXd::Zero(spec_.total());
        h_.head(spec_.nonneg) = h_nn_;
        Eigen::Index at = spec_.nonneg;
        for (Eigen::Index l = 0; l < l1; ++l) {
            h_[at] = bz_;
            h_.segment(at + 1, n) = zu_.col(l) * inv_sqn_;
            at += n + 1;
        }
        c_ = VectorXd::Zero(nx_);
        c_.segment(l1 + 1, l1).setOnes();
        c_[sigma_col_] = weight;
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
        const Eigen::Index n = zu_.rows(), l1 = zu_.cols();
        out.resize(spec_.total());
        out.head(spec_.nonneg).noalias() = g_nn_ * v;
        Eigen::Index at = spec_.nonneg;
        for (Eigen::Index l = 0; l < l1; ++l) {
            out[at] = -v[sigma_col_];
            out.segment(at + 1, n).setConstant(inv_sqn_ * v[l]);
            at += n + 1;
        }
    }

    void mul_gt(const VectorXd& z, VectorXd& out) const override
    {
        const Eigen::Index n = zu_.rows(), l1 = zu_.cols();
        out.resize(nx_);
        out.noalias() = g_nn_.transpose() * z.head(spec_.nonneg);
        Eigen::Index at = spec_.nonneg;
        for (Eigen::Index l = 0; l < l1; ++l) {
            out[sigma_col_] -= z[at];
            out[l] += inv_sqn_ * z.segment(at + 1, n).sum();
            at += n + 1;
        }
    }

    void mul_a(const VectorXd&, VectorXd& out) const override { out.resize(0); }
    void mul_at(const VectorXd&, VectorXd& out) const override { out.setZero(nx_); }

    void add_normal_matrix(const ipm::NtScaling& nt, MatrixXd& m) const override
    {
        MatrixXd ghat = g_nn_.array().colwise() / nt.w_nn.array();
        m.selfadjointView<Eigen::Lower>().rankUpdate(ghat.transpose(), 1.0);
        const Eigen::Index l1 = zu_.cols();
        for (Eigen::Index l = 0; l < l1; ++l) {
            const auto& sc = nt.socs[static_cast<std::size_t>(l)];
            const double w2 = sc.q.squaredNorm();
            const double e0 = sc.a * sc.a + w2;
            const double chat = sc.a + 1.0 + w2 / (1.0 + sc.a);
            const double dhat = 1.0 + 2.0 / (1.0 + sc.a) + w2 / ((1.0 + sc.a) * (1.0 + sc.a));
            const double inv_eta2 = 1.0 / (sc.eta * sc.eta);
            const double u_theta = inv_sqn_ * sc.q.sum(); // B' q has one nonzero entry
            m(sigma_col_, sigma_col_) += inv_eta2 * e0;
            m(sigma_col_, l) += inv_eta2 * chat * u_theta; // g0 u' + u g0' with g0 = -e_sigma
            m(l, l) += inv_eta2 * (1.0 + dhat * u_theta * u_theta); // B'B + dhat u u'
        }
    }

    const VectorXd& moments() const { return moments_; }
    double band_shift() const { return bz_; }

  private:
    Eigen::Index nx_ = 0;
    Eigen::Index sigma_col_ = 0;
    VectorXd resid_;
    MatrixXd zu_;
    VectorXd moments_;
    double bz_ = 0.0;
    double inv_sqn_ = 1.0;
    MatrixXd g_nn_;
    VectorXd h_nn_;
    ipm::ConeSpec spec_;
    VectorXd c_, h_, b_;
};

} // namespace detail

struct NvOptions {
    SolverConfig solver;
    double zero_clip = 1e-6;
    std::optional<double> sigma_weight; // objective weight on sigma1 (default c)
};

/// Non-validity indicator estimator: minimize |theta|_1 + c sigma1 over the
/// shifted band and conic constraints, given a pilot fit and its l1 error
/// bound b_hat.
inline NvFit fit_stiv_nv(const Dataset& ds, const VectorXd& pilot_beta, double b_hat, double r1,
                         double c, const NvOptions& opt = {})
{
    ds.validate();
    if (ds.zbar.cols() < 1) fail(ErrorCode::InvalidParams, "dataset has no second instrument list");
    if (!(c > 0.0 && c < 1.0)) fail(ErrorCode::SpecInvalid, "c must lie in (0,1)");
    if (!(r1 > 0.0)) fail(ErrorCode::SpecInvalid, "r1 must be positive");
    if (!std::isfinite(b_hat))
        fail(ErrorCode::InfinitePilotBound, "pilot l1 bound is infinite; no usable band shift");

    const double weight = opt.sigma_weight.value_or(c);
    detail::NvModel model(ds, pilot_beta, b_hat, r1, weight);
    ipm::IpmResult res = ipm::solve_model(model, opt.solver);
    if (res.status != SolveStatus::optimal)
        fail(ErrorCode::SolverFailure, std::string("non-validity program status ") +
                                           status_name(res.status));
    const Eigen::Index l1 = ds.zbar.cols();
    NvFit fit;
    fit.r1 = r1;
    fit.c = c;
    fit.b_hat = b_hat;
    fit.zbar_star = zbar_star(ds);
    fit.moments = model.moments();
    fit.sigma1_hat = positive_part(res.x[l1]);
    if (fit.sigma1_hat <= 1e-8 * std::max(1.0, std::abs(res.primal_obj))) fit.sigma1_hat = 0.0;
    fit.objective = res.primal_obj;
    fit.theta_hat = res.x.head(l1);
    const double clip_scale = std::max(1.0, linf_norm(fit.moments));
    for (Eigen::Index l = 0; l < l1; ++l) {
        if (std::abs(fit.theta_hat[l]) < opt.zero_clip * clip_scale)
            fit.theta_hat[l] = 0.0;
        else
            fit.support.push_back(l);
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

struct NvBounds {
    double linf = kInf;
    bool linf_infinite = true;
    double l1 = kInf;
    bool l1_infinite = true;
};

/// Confidence bounds around the non-validity indicators for a sparsity
/// certificate s1 on the number of invalid instruments:
///   |theta_hat - theta|_inf <= 2 [sigma1 r1 + (1 + r1/(1-c)) b zbar*]
///                              / (1 - 2 r1 s1 / (1-c))_+
///   |theta_hat - theta|_1   <= 2 [2 s1 (sigma1 r1 + (1+r1) b zbar*) + c b zbar*]
///                              / (1 - c - 2 r1 s1)_+
inline NvBounds nv_confidence(const NvFit& fit, double c, int s1)
{
    if (s1 < 0) fail(ErrorCode::InvalidParams, "s1 must be nonnegative");
    NvBounds out;
    const double bz = fit.b_hat * fit.zbar_star;
    const double s1d = static_cast<double>(s1);
    const double denom_inf = 1.0 - 2.0 * fit.r1 * s1d / (1.0 - c);
    if (denom_inf > 0.0) {
        out.linf = 2.0 * (fit.sigma1_hat * fit.r1 + (1.0 + fit.r1 / (1.0 - c)) * bz) / denom_inf;
        out.linf_infinite = false;
    }
    const double denom_l1 = 1.0 - c - 2.0 * fit.r1 * s1d;
    if (denom_l1 > 0.0) {
        out.l1 = 2.0 * (2.0 * s1d * (fit.sigma1_hat * fit.r1 + (1.0 + fit.r1) * bz) + c * bz) / denom_l1;
        out.l1_infinite = false;
    }
    return out;
}

struct NvSelection {
    std::vector<Eigen::Index> invalid;
    Eigen::VectorXi signs;
    double omega = kInf;
    bool infinite_threshold = false;
};

/// Select invalid instruments by thresholding the indicators at omega.
inline NvSelection nv_threshold(const NvFit& fit, double omega)
{
    if (omega < 0.0) fail(ErrorCode::InvalidParams, "omega must be nonnegative");
    NvSelection sel;
    sel.omega = omega;
    sel.signs = Eigen::VectorXi::Zero(fit.theta_hat.size());
    if (std::isinf(omega)) {
        sel.infinite_threshold = true;
        return sel;
    }
    for (Eigen::Index l = 0; l < fit.theta_hat.size(); ++l)
        if (std::abs(fit.theta_hat[l]) > omega) {
            sel.invalid.push_back(l);
            sel.signs[l] = sign_of(fit.theta_hat[l]);
        }
    return sel;
}

/// Worst violation of the feasibility conditions at (theta_hat, sigma1_hat).
inline double nv_constraint_violation(const Dataset& ds, const VectorXd& pilot_beta,
                                      const NvFit& fit)
{
    const double bz = fit.b_hat * fit.zbar_star;
    double viol = linf_norm(fit.moments - fit.theta_hat) - (fit.sigma1_hat * fit.r1 + bz);
    viol = std::max(viol, nv_objective_f(ds, fit.theta_hat, pilot_beta) - (fit.sigma1_hat + bz));
    return viol;
}

} // namespace stiv
