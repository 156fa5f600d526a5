#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "stiv/cone_program.hpp"
#include "stiv/cones.hpp"
#include "stiv/errors.hpp"
#include "stiv/math.hpp"

namespace stiv::ipm {

/// Cone layout of the slack vector: a leading nonnegative block followed by
/// second-order cone blocks.
struct ConeSpec {
    Eigen::Index nonneg = 0;
    std::vector<Eigen::Index> soc;

    Eigen::Index total() const
    {
        Eigen::Index m = nonneg;
        for (auto q : soc) m += q;
        return m;
    }
    Eigen::Index degree() const { return nonneg + static_cast<Eigen::Index>(soc.size()); }
};

/// Nesterov-Todd scaling point for the product cone. The SOC part is kept in
/// the (eta, a, q) arrow representation so W, W^-1 and W^-2 apply in O(dim).
struct NtScaling {
    struct SocScale {
        double eta = 1.0;
        double a = 1.0;
        VectorXd q; // zero vector => identity scaling
    };

    ConeSpec spec;
    VectorXd w_nn; // sqrt(s_i/z_i) on the nonnegative block
    std::vector<SocScale> socs;

    static NtScaling identity(const ConeSpec& spec)
    {
        NtScaling nt;
        nt.spec = spec;
        nt.w_nn = VectorXd::Ones(spec.nonneg);
        for (auto q : spec.soc) {
            SocScale s;
            s.q = VectorXd::Zero(q - 1);
            nt.socs.push_back(std::move(s));
        }
        return nt;
    }

    /// Recompute from a strictly feasible (s, z) pair; false if either left its cone.
    bool update(const VectorXd& s, const VectorXd& z)
    {
        for (Eigen::Index i = 0; i < spec.nonneg; ++i) {
            if (s[i] <= 0.0 || z[i] <= 0.0) return false;
            w_nn[i] = std::sqrt(s[i] / z[i]);
        }
        Eigen::Index at = spec.nonneg;
        for (std::size_t k = 0; k < spec.soc.size(); ++k) {
            const Eigen::Index dim = spec.soc[k];
            const auto sk = s.segment(at, dim);
            const auto zk = z.segment(at, dim);
            const double sres = sk[0] * sk[0] - sk.tail(dim - 1).squaredNorm();
            const double zres = zk[0] * zk[0] - zk.tail(dim - 1).squaredNorm();
            if (sres <= 0.0 || zres <= 0.0) return false;
            const double snorm = std::sqrt(sres);
            const double znorm = std::sqrt(zres);
            VectorXd sbar = sk / snorm;
            VectorXd zbar = zk / znorm;
            double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
            SocScale& sc = socs[k];
            sc.eta = std::sqrt(snorm / znorm);
            sc.a = (0.5 / gamma) * (sbar[0] + zbar[0]);
            sc.q = (0.5 / gamma) * (sbar.tail(dim - 1) - zbar.tail(dim - 1));
            at += dim;
        }
        return true;
    }

    /// out = W v
    void mul_w(const VectorXd& v, VectorXd& out) const
    {
        out.resize(spec.total());
        out.head(spec.nonneg) = w_nn.cwiseProduct(v.head(spec.nonneg));
        Eigen::Index at = spec.nonneg;
        for (std::size_t k = 0; k < spec.soc.size(); ++k) {
            const Eigen::Index dim = spec.soc[k];
            const SocScale& sc = socs[k];
            const auto vk = v.segment(at, dim);
            const double zeta = sc.q.dot(vk.tail(dim - 1));
            out[at] = sc.eta * (sc.a * vk[0] + zeta);
            out.segment(at + 1, dim - 1) =
                sc.eta * (vk.tail(dim - 1) + (vk[0] + zeta / (1.0 + sc.a)) * sc.q);
            at += dim;
        }
    }

    /// out = W^-1 v
    void mul_winv(const VectorXd& v, VectorXd& out) const
    {
        out.resize(spec.total());
        out.head(spec.nonneg) = v.head(spec.nonneg).cwiseQuotient(w_nn);
        Eigen::Index at = spec.nonneg;
        for (std::size_t k = 0; k < spec.soc.size(); ++k) {
            const Eigen::Index dim = spec.soc[k];
            const SocScale& sc = socs[k];
            const auto vk = v.segment(at, dim);
            const double zeta = sc.q.dot(vk.tail(dim - 1));
            out[at] = (sc.a * vk[0] - zeta) / sc.eta;
            out.segment(at + 1, dim - 1) =
                (vk.tail(dim - 1) + (-vk[0] + zeta / (1.0 + sc.a)) * sc.q) / sc.eta;
            at += dim;
        }
    }

    /// out = W^-2 v (two inverse applications, kept exact in the arrow form)
    void mul_winv2(const VectorXd& v, VectorXd& out) const
    {
        VectorXd tmp;
        mul_winv(v, tmp);
        mul_winv(tmp, out);
    }
};

/// Jordan-algebra product u o v over the product cone.
inline void conic_product(const ConeSpec& spec, const VectorXd& u, const VectorXd& v, VectorXd& out)
{
    out.resize(spec.total());
    out.head(spec.nonneg) = u.head(spec.nonneg).cwiseProduct(v.head(spec.nonneg));
    Eigen::Index at = spec.nonneg;
    for (auto dim : spec.soc) {
        const auto uk = u.segment(at, dim);
        const auto vk = v.segment(at, dim);
        out[at] = uk.dot(vk);
        out.segment(at + 1, dim - 1) = uk[0] * vk.tail(dim - 1) + vk[0] * uk.tail(dim - 1);
        at += dim;
    }
}

/// Jordan-algebra division out = u \ w.
inline void conic_division(const ConeSpec& spec, const VectorXd& u, const VectorXd& w, VectorXd& out)
{
    out.resize(spec.total());
    out.head(spec.nonneg) = w.head(spec.nonneg).cwiseQuotient(u.head(spec.nonneg));
    Eigen::Index at = spec.nonneg;
    for (auto dim : spec.soc) {
        const auto uk = u.segment(at, dim);
        const auto wk = w.segment(at, dim);
        const double rho = uk[0] * uk[0] - uk.tail(dim - 1).squaredNorm();
        const double zeta = uk.tail(dim - 1).dot(wk.tail(dim - 1));
        const double factor = (zeta / uk[0] - wk[0]) / rho;
        out[at] = (uk[0] * wk[0] - zeta) / rho;
        out.segment(at + 1, dim - 1) = factor * uk.tail(dim - 1) + wk.tail(dim - 1) / uk[0];
        at += dim;
    }
}

/// Shift r into the interior of the cone: r + (1+alpha) e with alpha the worst residual.
inline void bring_to_cone(const ConeSpec& spec, const VectorXd& r, VectorXd& out)
{
    double alpha = -0.99;
    for (Eigen::Index i = 0; i < spec.nonneg; ++i)
        if (r[i] <= 0.0 && -r[i] > alpha) alpha = -r[i];
    Eigen::Index at = spec.nonneg;
    for (auto dim : spec.soc) {
        const double res = r[at] - r.segment(at + 1, dim - 1).norm();
        if (res <= 0.0 && -res > alpha) alpha = -res;
        at += dim;
    }
    alpha += 1.0;
    out = r;
    out.head(spec.nonneg).array() += alpha;
    at = spec.nonneg;
    for (auto dim : spec.soc) {
        out[at] += alpha;
        at += dim;
    }
}

/// Largest step size in [0, stepmax] keeping (lambda + alpha ds, lambda + alpha dz)
/// in the scaled cone, plus the tau/kappa caps.
inline double line_search(const ConeSpec& spec, const VectorXd& lambda, const VectorXd& ds,
                          const VectorXd& dz, double tau, double dtau, double kap, double dkap,
                          double stepmin, double stepmax)
{
    double alpha = 2.0;
    if (spec.nonneg > 0) {
        const double rhomin = (ds.head(spec.nonneg).cwiseQuotient(lambda.head(spec.nonneg))).minCoeff();
        const double sigmin = (dz.head(spec.nonneg).cwiseQuotient(lambda.head(spec.nonneg))).minCoeff();
        const double eps = 1e-13;
        if (-sigmin > -rhomin)
            alpha = sigmin < 0.0 ? 1.0 / (-sigmin) : 1.0 / eps;
        else
            alpha = rhomin < 0.0 ? 1.0 / (-rhomin) : 1.0 / eps;
    }
    const double tau_cap = -tau / dtau;
    const double kap_cap = -kap / dkap;
    if (tau_cap > 0.0 && tau_cap < alpha) alpha = tau_cap;
    if (kap_cap > 0.0 && kap_cap < alpha) alpha = kap_cap;

    Eigen::Index at = spec.nonneg;
    for (auto dim : spec.soc) {
        const double lk2 = lambda[at] * lambda[at] - lambda.segment(at + 1, dim - 1).squaredNorm();
        if (lk2 <= 0.0) {
            at += dim;
            continue;
        }
        const double lknorm = std::sqrt(lk2);
        VectorXd lkbar = lambda.segment(at, dim) / lknorm;
        const double inv = 1.0 / lknorm;

        const auto step_bound = [&](const VectorXd& d) {
            const double prod = lkbar[0] * d[at] - lkbar.tail(dim - 1).dot(d.segment(at + 1, dim - 1));
            const double factor = (prod + d[at]) / (lkbar[0] + 1.0);
            const double head = inv * prod;
            const double tail =
                (inv * (d.segment(at + 1, dim - 1) - factor * lkbar.tail(dim - 1))).norm();
            return tail - head;
        };
        const double bound = std::max({0.0, step_bound(ds), step_bound(dz)});
        if (bound != 0.0) alpha = std::min(alpha, 1.0 / bound);
        at += dim;
    }
    return std::clamp(alpha, stepmin, stepmax);
}

/// Problem data in conic inequality form:
///   min c'x  s.t.  A x = b,  G x + s = h,  s in cone(spec).
/// Implementations provide matrix-vector products and the scaled normal matrix
/// so that structured models never materialize G.
class Model {
  public:
    virtual ~Model() = default;

    virtual Eigen::Index num_vars() const = 0;
    virtual Eigen::Index num_eq() const = 0;
    virtual const ConeSpec& cones() const = 0;
    virtual const VectorXd& cost() const = 0;
    virtual const VectorXd& eq_rhs() const = 0;
    virtual const VectorXd& cone_rhs() const = 0;

    virtual void mul_g(const VectorXd& x, VectorXd& out) const = 0;
    virtual void mul_gt(const VectorXd& z, VectorXd& out) const = 0;
    virtual void mul_a(const VectorXd& x, VectorXd& out) const = 0;
    virtual void mul_at(const VectorXd& y, VectorXd& out) const = 0;

    /// M += G' W^-2 G
    virtual void add_normal_matrix(const NtScaling& nt, MatrixXd& m) const = 0;
};

/// Model with explicit (dense G, sparse A) storage.
class DenseModel final : public Model {
  public:
    DenseModel(VectorXd c, SparseMat a, VectorXd b, MatrixXd g, VectorXd h, ConeSpec spec)
        : c_(std::move(c)), a_(std::move(a)), b_(std::move(b)), g_(std::move(g)), h_(std::move(h)),
          spec_(std::move(spec))
    {
        if (g_.rows() != spec_.total() || g_.cols() != c_.size())
            fail(ErrorCode::DimensionMismatch, "inequality block dimensions");
        if (a_.rows() != b_.size() || (a_.rows() > 0 && a_.cols() != c_.size()))
            fail(ErrorCode::DimensionMismatch, "equality block dimensions");
    }

    Eigen::Index num_vars() const override { return c_.size(); }
    Eigen::Index num_eq() const override { return b_.size(); }
    const ConeSpec& cones() const override { return spec_; }
    const VectorXd& cost() const override { return c_; }
    const VectorXd& eq_rhs() const override { return b_; }
    const VectorXd& cone_rhs() const override { return h_; }

    void mul_g(const VectorXd& x, VectorXd& out) const override { out.noalias() = g_ * x; }
    void mul_gt(const VectorXd& z, VectorXd& out) const override { out.noalias() = g_.transpose() * z; }
    void mul_a(const VectorXd& x, VectorXd& out) const override
    {
        out.resize(b_.size());
        if (b_.size() > 0) out.noalias() = a_ * x;
    }
    void mul_at(const VectorXd& y, VectorXd& out) const override
    {
        out.setZero(c_.size());
        if (b_.size() > 0) out.noalias() = a_.transpose() * y;
    }

    void add_normal_matrix(const NtScaling& nt, MatrixXd& m) const override
    {
        MatrixXd ghat(g_.rows(), g_.cols());
        ghat.topRows(spec_.nonneg) = g_.topRows(spec_.nonneg).array().colwise() /
                                     nt.w_nn.array();
        Eigen::Index at = spec_.nonneg;
        for (std::size_t k = 0; k < spec_.soc.size(); ++k) {
            const Eigen::Index dim = spec_.soc[k];
            const NtScaling::SocScale& sc = nt.socs[k];
            const auto rows = g_.middleRows(at, dim);
            Eigen::RowVectorXd t = sc.q.transpose() * rows.bottomRows(dim - 1);
            ghat.row(at) = (sc.a * rows.row(0) - t) / sc.eta;
            ghat.middleRows(at + 1, dim - 1) =
                (rows.bottomRows(dim - 1) + sc.q * (t / (1.0 + sc.a) - rows.row(0))) / sc.eta;
            at += dim;
        }
        m.selfadjointView<Eigen::Lower>().rankUpdate(ghat.transpose(), 1.0);
    }

    const MatrixXd& g() const { return g_; }

  private:
    VectorXd c_;
    SparseMat a_;
    VectorXd b_;
    MatrixXd g_;
    VectorXd h_;
    ConeSpec spec_;
};

namespace detail {

/// Factored reduced KKT system
///   [ G'W^-2G + dI   A' ] [dx]   [bx + G'W^-2 bz]
///   [ A            -dI  ] [dy] = [by]
/// solved by two Cholesky factorizations (Schur complement on the equalities),
/// followed by dz = W^-2 (G dx - bz). One refinement pass against the full
/// 3x3 KKT system keeps the static regularization harmless.
class KktSolver {
  public:
    KktSolver(const Model& model, double delta) : model_(model), delta_(delta) {}

    void set_delta(double delta) { delta_ = delta; }

    bool factor(const NtScaling& nt)
    {
        nt_ = &nt;
        const Eigen::Index nx = model_.num_vars();
        const Eigen::Index p = model_.num_eq();
        MatrixXd h = MatrixXd::Zero(nx, nx);
        model_.add_normal_matrix(nt, h);
        MatrixXd hsym = h.selfadjointView<Eigen::Lower>();
        const double diag_scale = std::max(1.0, hsym.diagonal().maxCoeff());

        // Ill-conditioning near convergence can defeat the Cholesky; bump the
        // static regularization until it goes through, refinement repairs it.
        double reg = delta_;
        for (int attempt = 0; attempt < 8; ++attempt) {
            MatrixXd hr = hsym;
            hr.diagonal().array() += reg;
            h_llt_.compute(hr);
            if (h_llt_.info() == Eigen::Success) break;
            reg = std::max(reg * 100.0, 1e-14 * diag_scale);
        }
        if (h_llt_.info() != Eigen::Success) return false;
        if (p > 0) {
            MatrixXd at(nx, p);
            VectorXd col(nx), e = VectorXd::Zero(p);
            for (Eigen::Index j = 0; j < p; ++j) {
                e[j] = 1.0;
                model_.mul_at(e, col);
                at.col(j) = col;
                e[j] = 0.0;
            }
            hinv_at_ = h_llt_.solve(at);
            MatrixXd s = at.transpose() * hinv_at_;
            double sreg = std::max(delta_, 1e-14 * std::max(1.0, s.diagonal().maxCoeff()));
            for (int attempt = 0; attempt < 8; ++attempt) {
                MatrixXd sr = s;
                sr.diagonal().array() += sreg;
                s_llt_.compute(sr);
                if (s_llt_.info() == Eigen::Success) break;
                sreg *= 100.0;
            }
            if (s_llt_.info() != Eigen::Success) return false;
            at_ = std::move(at);
        }
        return true;
    }

    /// Solve the 3x3 KKT system for rhs (bx, by, bz).
    void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& dx, VectorXd& dy,
               VectorXd& dz, int refine_steps = 2) const
    {
        solve_once(bx, by, bz, dx, dy, dz);
        VectorXd ex, ey, ez, cx, cy, cz;
        for (int it = 0; it < refine_steps; ++it) {
            residual(bx, by, bz, dx, dy, dz, ex, ey, ez);
            const double err = std::max({linf_norm(ex), linf_norm(ey), linf_norm(ez)});
            const double scale = 1.0 + std::max({linf_norm(bx), linf_norm(by), linf_norm(bz)});
            if (err <= 1e-14 * scale) break;
            solve_once(ex, ey, ez, cx, cy, cz);
            dx += cx;
            if (dy.size() > 0) dy += cy;
            dz += cz;
        }
    }

  private:
    void solve_once(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& dx,
                    VectorXd& dy, VectorXd& dz) const
    {
        VectorXd wz, gtwz, r1;
        nt_->mul_winv2(bz, wz);
        model_.mul_gt(wz, gtwz);
        r1 = bx + gtwz;
        const Eigen::Index p = model_.num_eq();
        if (p > 0) {
            VectorXd hr1 = h_llt_.solve(r1);
            VectorXd rhs_y = at_.transpose() * hr1 - by;
            dy = s_llt_.solve(rhs_y);
            dx = hr1 - hinv_at_ * dy;
        } else {
            dy.resize(0);
            dx = h_llt_.solve(r1);
        }
        VectorXd gx;
        model_.mul_g(dx, gx);
        nt_->mul_winv2(gx - bz, dz);
    }

    void residual(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, const VectorXd& dx,
                  const VectorXd& dy, const VectorXd& dz, VectorXd& ex, VectorXd& ey,
                  VectorXd& ez) const
    {
        VectorXd aty, gtz, ax, gx, w2dz, tmp;
        model_.mul_at(dy, aty);
        model_.mul_gt(dz, gtz);
        ex = bx - aty - gtz;
        if (model_.num_eq() > 0) {
            model_.mul_a(dx, ax);
            ey = by - ax;
        } else {
            ey.resize(0);
        }
        model_.mul_g(dx, gx);
        nt_->mul_w(dz, tmp);
        nt_->mul_w(tmp, w2dz);
        ez = bz - gx + w2dz;
    }

    const Model& model_;
    double delta_;
    const NtScaling* nt_ = nullptr;
    Eigen::LLT<MatrixXd> h_llt_;
    Eigen::LLT<MatrixXd> s_llt_;
    MatrixXd at_;
    MatrixXd hinv_at_;
};

} // namespace detail

/// Raw interior-point result in inequality form; x/y/z/s are the homogeneous
/// variables already divided by tau (or the certificate rays).
struct IpmResult {
    SolveStatus status = SolveStatus::numerical_failure;
    VectorXd x, y, z, s;
    double primal_obj = 0.0;
    double dual_obj = 0.0;
    double gap = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;
};

/// Homogeneous self-dual embedding with Nesterov-Todd scaled Mehrotra
/// predictor-corrector steps.
inline IpmResult solve_model(const Model& model, const SolverConfig& cfg)
{
    const Eigen::Index nx = model.num_vars();
    const Eigen::Index p = model.num_eq();
    const ConeSpec& spec = model.cones();
    const Eigen::Index m = spec.total();
    const VectorXd& c = model.cost();
    const VectorXd& b = model.eq_rhs();
    const VectorXd& h = model.cone_rhs();

    if (m == 0) fail(ErrorCode::SpecInvalid, "model without conic constraints");

    const double feastol = cfg.feas_tol;
    const double abstol = cfg.gap_tol;
    const double reltol = cfg.gap_tol;
    const double stepmin = 1e-6;
    const double stepmax = 0.999;
    const double gamma_step = 0.99;

    IpmResult res;
    VectorXd x(nx), y(p), z(m), s(m);
    double tau = 1.0, kap = 1.0;

    detail::KktSolver kkt(model, 1e-10);
    NtScaling nt = NtScaling::identity(spec);
    {
        double delta = 1e-10;
        bool ok = kkt.factor(nt);
        while (!ok && delta < 1e-3) {
            delta *= 100.0;
            kkt.set_delta(delta);
            ok = kkt.factor(nt);
        }
        if (!ok) return res;
    }

    // Initial point: least-squares primal/dual shifted into the cone.
    VectorXd dx1(nx), dy1(p), dz1(m), dx2(nx), dy2(p), dz2(m);
    kkt.solve(VectorXd::Zero(nx), b, h, dx1, dy1, dz1, 2);
    x = dx1;
    bring_to_cone(spec, -dz1, s);
    kkt.solve(-c, VectorXd::Zero(p), VectorXd::Zero(m), dx2, dy2, dz2, 2);
    y = dy2;
    bring_to_cone(spec, dz2, z);

    const double resx0 = std::max(1.0, c.norm());
    const double resy0 = std::max(1.0, b.norm());
    const double resz0 = std::max(1.0, h.norm());

    VectorXd rx(nx), ry(p), rz(m), lambda(m);
    VectorXd w_dz(m), ds_by_w(m), ds1(m), ds2(m), dsfin(m);

    const auto record = [&](double scale) {
        res.x = x / scale;
        res.y = y / scale;
        res.z = z / scale;
        res.s = s / scale;
    };

    double best_merit = kInf;
    IpmResult best;

    for (int iter = 0; iter <= cfg.max_iter; ++iter) {
        // Residuals of the homogeneous model.
        VectorXd aty(nx), gtz(nx), ax(p), gx(m);
        model.mul_at(y, aty);
        model.mul_gt(z, gtz);
        rx = -aty - gtz;
        const double hresx = rx.norm();
        rx -= tau * c;
        if (p > 0) {
            model.mul_a(x, ax);
            ry = ax;
        } else
            ry.resize(0);
        const double hresy = ry.size() ? ry.norm() : 0.0;
        if (p > 0) ry -= tau * b;
        model.mul_g(x, gx);
        rz = s + gx;
        const double hresz = rz.norm();
        rz -= tau * h;

        const double cx = c.dot(x);
        const double by = p > 0 ? b.dot(y) : 0.0;
        const double hz = h.dot(z);
        const double rt = kap + cx + by + hz;

        const double nx_norm = x.norm(), ny = y.size() ? y.norm() : 0.0, nz = z.norm(), ns = s.norm();
        const double gap = s.dot(z);
        const double mu = (gap + kap * tau) / static_cast<double>(spec.degree() + 1);
        const double pcost = cx / tau;
        const double dcost = -(hz + by) / tau;
        double relgap = kInf;
        if (pcost < 0.0)
            relgap = gap / (-pcost * tau);
        else if (dcost > 0.0)
            relgap = gap / (dcost * tau);
        const double nry = p > 0 ? ry.norm() / std::max(resy0 + nx_norm, 1.0) : 0.0;
        const double nrz = rz.norm() / std::max(resz0 + nx_norm + ns, 1.0);
        const double pres = std::max(nry, nrz) / tau;
        const double dres = rx.norm() / std::max(resx0 + ny + nz, 1.0) / tau;
        double pinfres = kInf, dinfres = kInf;
        if ((hz + by) / std::max(ny + nz, 1.0) < -1e-9)
            pinfres = hresx / std::max(ny + nz, 1.0);
        if (cx / std::max(nx_norm, 1.0) < -1e-9)
            dinfres = std::max(hresy / std::max(nx_norm, 1.0), hresz / std::max(nx_norm + ns, 1.0));

        if (cfg.verbose)
            std::fprintf(stderr, "it %3d pcost %+10.3e dcost %+10.3e gap %8.1e pres %8.1e dres %8.1e k/t %8.1e\n",
                         iter, pcost, dcost, gap, pres, dres, kap / tau);

        const auto check_exit = [&](double mult) -> SolveStatus {
            if ((-cx > 0.0 || -by - hz >= -abstol * mult) && pres < feastol * mult &&
                dres < feastol * mult && (gap / tau < abstol * mult || relgap < reltol * mult))
                return SolveStatus::optimal;
            // certificates are judged against their own tolerance: tightening
            // the optimality accuracy must not break infeasibility detection
            const double itol = cfg.infeas_tol * mult;
            if (dinfres < itol && tau < kap) return SolveStatus::dual_infeasible;
            if ((pinfres < itol && tau < kap) || (tau < itol && kap < itol && pinfres < itol))
                return SolveStatus::primal_infeasible;
            return SolveStatus::numerical_failure;
        };

        SolveStatus st = check_exit(1.0);
        const bool last = iter == cfg.max_iter;
        if (st == SolveStatus::numerical_failure && last) {
            // infeasibility certificates may still be usable at reduced
            // accuracy; "optimal" is never reported beyond the configured
            // tolerances (callers can inspect the residual fields instead)
            const SolveStatus relaxed = check_exit(cfg.reduced_factor);
            if (relaxed != SolveStatus::optimal) st = relaxed;
        }
        if (st != SolveStatus::numerical_failure || last) {
            res.status = st;
            res.iterations = iter;
            if (st == SolveStatus::optimal) {
                record(tau);
                res.primal_obj = pcost;
                res.dual_obj = dcost;
                res.gap = gap / tau;
                res.primal_residual = pres;
                res.dual_residual = dres;
            } else if (st == SolveStatus::primal_infeasible) {
                // improving dual ray: A'y + G'z ~ 0, b'y + h'z < 0
                const double scale = -(by + hz);
                record(scale > 0 ? scale : 1.0);
                res.primal_residual = pinfres;
                res.dual_residual = pinfres;
            } else if (st == SolveStatus::dual_infeasible) {
                // improving primal ray: Gx + s ~ 0, Ax ~ 0, c'x < 0
                const double scale = -cx;
                record(scale > 0 ? scale : 1.0);
                res.primal_residual = dinfres;
                res.dual_residual = dinfres;
            } else {
                if (best_merit < kInf) return best;
                record(tau);
                res.primal_residual = pres;
                res.dual_residual = dres;
                res.gap = gap / tau;
                res.primal_obj = pcost;
                res.dual_obj = dcost;
            }
            return res;
        }

        const double merit = std::max({pres, dres}) + std::max(gap, 0.0) / (1.0 + std::abs(pcost));
        if (merit < best_merit) {
            best_merit = merit;
            best.status = SolveStatus::numerical_failure;
            best.iterations = iter;
            best.x = x / tau;
            best.y = y / tau;
            best.z = z / tau;
            best.s = s / tau;
            best.primal_obj = pcost;
            best.dual_obj = dcost;
            best.gap = gap / tau;
            best.primal_residual = pres;
            best.dual_residual = dres;
        }

        if (!nt.update(s, z)) {
            if (cfg.verbose) std::fprintf(stderr, "it %3d scaling point left the cone\n", iter);
            res.status = SolveStatus::numerical_failure;
            res.iterations = iter;
            return best_merit < kInf ? best : res;
        }
        nt.mul_w(z, lambda);
        if (!kkt.factor(nt)) {
            if (cfg.verbose) std::fprintf(stderr, "it %3d kkt factorization failed\n", iter);
            res.status = SolveStatus::numerical_failure;
            res.iterations = iter;
            return best_merit < kInf ? best : res;
        }

        // Direction 1: right-hand side (-c, b, h).
        kkt.solve(-c, b, h, dx1, dy1, dz1);
        const double dtau_denom =
            kap / tau - c.dot(dx1) - (p > 0 ? b.dot(dy1) : 0.0) - h.dot(dz1);

        // Affine (predictor) direction.
        kkt.solve(rx, p > 0 ? VectorXd(-ry) : VectorXd(), VectorXd(s - rz), dx2, dy2, dz2);
        const double dtauaff =
            (rt - kap + c.dot(dx2) + (p > 0 ? b.dot(dy2) : 0.0) + h.dot(dz2)) / dtau_denom;
        dz2 += dtauaff * dz1;
        nt.mul_w(dz2, w_dz);
        ds_by_w = -w_dz - lambda;
        const double dkapaff = -kap - kap / tau * dtauaff;
        const double alpha_aff =
            line_search(spec, lambda, ds_by_w, w_dz, tau, dtauaff, kap, dkapaff, stepmin, stepmax);
        const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3.0), 1e-4, 1.0 - 1e-4);

        // Combined (corrector) direction.
        conic_product(spec, lambda, lambda, ds1);
        conic_product(spec, ds_by_w, w_dz, ds2);
        const double sigmamu = sigma * mu;
        ds1 += ds2;
        ds1.head(spec.nonneg).array() -= sigmamu;
        {
            Eigen::Index at = spec.nonneg;
            for (auto dim : spec.soc) {
                ds1[at] -= sigmamu;
                at += dim;
            }
        }
        conic_division(spec, lambda, ds1, ds_by_w);
        nt.mul_w(ds_by_w, ds2); // ds2 = W (lambda \ ds1)
        const double one_minus_sigma = 1.0 - sigma;
        kkt.solve(VectorXd(one_minus_sigma * rx), p > 0 ? VectorXd(-one_minus_sigma * ry) : VectorXd(),
                  VectorXd(-one_minus_sigma * rz + ds2), dx2, dy2, dz2);
        const double bkap = kap * tau + dkapaff * dtauaff - sigmamu;
        const double dtau = (one_minus_sigma * rt - bkap / tau + c.dot(dx2) +
                             (p > 0 ? b.dot(dy2) : 0.0) + h.dot(dz2)) /
                            dtau_denom;
        dx2 += dtau * dx1;
        if (p > 0) dy2 += dtau * dy1;
        dz2 += dtau * dz1;
        nt.mul_w(dz2, w_dz);
        ds_by_w = -(ds_by_w + w_dz);
        const double dkap = -(bkap + kap * dtau) / tau;
        const double alpha = gamma_step * line_search(spec, lambda, ds_by_w, w_dz, tau, dtau, kap,
                                                      dkap, stepmin, stepmax);
        nt.mul_w(ds_by_w, dsfin);

        x += alpha * dx2;
        if (p > 0) y += alpha * dy2;
        z += alpha * dz2;
        s += alpha * dsfin;
        kap += alpha * dkap;
        tau += alpha * dtau;
        if (!(tau > 0.0) || !std::isfinite(tau)) {
            res.status = SolveStatus::numerical_failure;
            res.iterations = iter;
            return best_merit < kInf ? best : res;
        }
    }
    return res;
}

} // namespace stiv::ipm
