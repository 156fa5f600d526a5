#pragma once

#include <atomic>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "stiv/dataset.hpp"
#include "stiv/ipm.hpp"
#include "stiv/solver.hpp"

namespace stiv {

/// Run f(0..n-1) on a small thread pool; the batteries are a pure
/// min-reduction so the schedule cannot change the result.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f)
{
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    const int use = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    for (int t = 0; t < use; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

/// Cone geometry constants: `ratio` bounds the off-support l1 mass relative to
/// the support, and a = (1 + ratio) s is the l1-vs-sup-norm budget used by the
/// certificate programs.
struct ConeFactor {
    double ratio = 0.0;
    double a = 0.0;

    static ConeFactor dominant(double c, int s)
    {
        ConeFactor cf;
        cf.ratio = (1.0 + c) / (1.0 - c);
        cf.a = (1.0 + cf.ratio) * static_cast<double>(s);
        return cf;
    }
    /// Enlarged cone used by the approximate-sparsity bounds.
    static ConeFactor enlarged(double c, int s)
    {
        ConeFactor cf;
        cf.ratio = (2.0 + c) / (1.0 - c);
        cf.a = (1.0 + cf.ratio) * static_cast<double>(s);
        return cf;
    }
};

struct LpTraceEntry {
    Eigen::Index k = -1;
    Eigen::Index j = -1;
    int eps = 0;
    double value = kInf; // +inf: infeasible piece
};

struct SensOptions {
    SolverConfig solver;
    int threads = 0;          // 0: hardware concurrency
    double zero_floor = 1e-10; // battery values below this report as exact zero
    int block_limit = 12;      // cap on 2^{|J|}-sized batteries
    std::vector<LpTraceEntry>* trace = nullptr; // optional per-program audit dump
};

/// Data-driven lower bounds on the sensitivities of one normalized
/// cross-moment matrix, for one sparsity certificate s and cone factor.
struct SensitivityReport {
    VectorXd kappa_coord; // kappa*_k(s), length K
    double kappa1 = 0.0;  // (1/a) min_k kappa*_k(s)
    int s = 0;
    double c = 0.0;
    ConeFactor cone;
    std::string method;
    std::map<std::vector<Eigen::Index>, double> block_bounds; // direct l1 block batteries
    std::map<std::pair<Eigen::Index, std::vector<Eigen::Index>>, double> exact_coord;
};

namespace detail {

struct LpPieces {
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    Eigen::Index nv = 0;

    void add(const Eigen::RowVectorXd& r, double h)
    {
        rows.push_back(r);
        rhs.push_back(h);
    }

    /// Solve min x[obj_col] subject to the collected rows (plus optional
    /// single equality); +inf when infeasible.
    double solve(Eigen::Index obj_col, const SolverConfig& cfg,
                 const Eigen::RowVectorXd* eq_row = nullptr, double eq_rhs_val = 0.0) const
    {
        MatrixXd g(static_cast<Eigen::Index>(rows.size()), nv);
        VectorXd h(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            g.row(static_cast<Eigen::Index>(i)) = rows[i];
            h[static_cast<Eigen::Index>(i)] = rhs[i];
        }
        VectorXd c = VectorXd::Zero(nv);
        c[obj_col] = 1.0;
        SparseMat a;
        VectorXd b;
        if (eq_row) {
            a.resize(1, nv);
            std::vector<Triplet> trips;
            for (Eigen::Index j = 0; j < nv; ++j)
                if ((*eq_row)[j] != 0.0) trips.emplace_back(0, j, (*eq_row)[j]);
            a.setFromTriplets(trips.begin(), trips.end());
            b.resize(1);
            b[0] = eq_rhs_val;
        } else {
            a.resize(0, nv);
            b.resize(0);
        }
        ipm::ConeSpec spec;
        spec.nonneg = g.rows();
        ipm::DenseModel model(c, a, b, std::move(g), h, spec);
        ipm::IpmResult res = ipm::solve_model(model, cfg);
        if (res.status == SolveStatus::optimal) return res.primal_obj;
        if (res.status == SolveStatus::primal_infeasible) return kInf;
        // Degenerate zero-optimum pieces can stall the dual while the primal
        // is settled: the objective variable is constrained nonnegative, so a
        // feasible iterate with a near-zero value pins the optimum at zero.
        if (res.status == SolveStatus::numerical_failure && res.primal_residual < 1e-8 &&
            res.primal_obj > -1e-12 && res.primal_obj < 1e-10)
            return positive_part(res.primal_obj);
        fail(ErrorCode::SolverFailure, "sensitivity program did not solve");
    }
};

/// Common part of every battery program: |psi delta|_inf <= v with delta_k = 1
/// substituted out, v >= 0, and |delta_i| <= w_i for i in `budgeted`.
/// Variable order: delta_{i != k} (K-1), v, w over `budgeted`.
inline LpPieces battery_base(const MatrixXd& psi, Eigen::Index k,
                             const std::vector<Eigen::Index>& budgeted)
{
    const Eigen::Index bigk = psi.cols();
    const Eigen::Index bigl = psi.rows();
    LpPieces lp;
    lp.nv = (bigk - 1) + 1 + static_cast<Eigen::Index>(budgeted.size());
    const auto var_of = [&](Eigen::Index i) { return i < k ? i : i - 1; };
    const Eigen::Index v_col = bigk - 1;

    for (Eigen::Index l = 0; l < bigl; ++l) {
        Eigen::RowVectorXd r1 = Eigen::RowVectorXd::Zero(lp.nv);
        Eigen::RowVectorXd r2 = Eigen::RowVectorXd::Zero(lp.nv);
        for (Eigen::Index i = 0; i < bigk; ++i) {
            if (i == k) continue;
            r1[var_of(i)] = psi(l, i);
            r2[var_of(i)] = -psi(l, i);
        }
        r1[v_col] = -1.0;
        r2[v_col] = -1.0;
        lp.add(r1, -psi(l, k));
        lp.add(r2, psi(l, k));
    }
    {
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(lp.nv);
        r[v_col] = -1.0;
        lp.add(r, 0.0);
    }
    for (std::size_t widx = 0; widx < budgeted.size(); ++widx) {
        const Eigen::Index i = budgeted[widx];
        const Eigen::Index w_col = bigk + static_cast<Eigen::Index>(widx);
        Eigen::RowVectorXd r1 = Eigen::RowVectorXd::Zero(lp.nv);
        Eigen::RowVectorXd r2 = Eigen::RowVectorXd::Zero(lp.nv);
        r1[var_of(i)] = 1.0;
        r1[w_col] = -1.0;
        r2[var_of(i)] = -1.0;
        r2[w_col] = -1.0;
        lp.add(r1, 0.0);
        lp.add(r2, 0.0);
    }
    return lp;
}

/// One certificate program: delta_k = 1, |delta|_1 <= a |delta_j|, sign of
/// delta_j fixed to eps.
inline double certif_piece(const MatrixXd& psi, Eigen::Index k, Eigen::Index j, int eps, double a,
                           const SolverConfig& cfg)
{
    const Eigen::Index bigk = psi.cols();
    if (j == k && eps < 0) return kInf; // delta_k = 1 contradicts a negative sign
    std::vector<Eigen::Index> budgeted;
    for (Eigen::Index i = 0; i < bigk; ++i)
        if (i != k && i != j) budgeted.push_back(i);
    LpPieces lp = battery_base(psi, k, budgeted);
    const auto var_of = [&](Eigen::Index i) { return i < k ? i : i - 1; };

    if (j != k) {
        Eigen::RowVectorXd sign_row = Eigen::RowVectorXd::Zero(lp.nv);
        sign_row[var_of(j)] = -static_cast<double>(eps);
        lp.add(sign_row, 0.0);
        Eigen::RowVectorXd budget = Eigen::RowVectorXd::Zero(lp.nv);
        for (std::size_t widx = 0; widx < budgeted.size(); ++widx)
            budget[bigk + static_cast<Eigen::Index>(widx)] = 1.0;
        budget[var_of(j)] = -(a - 1.0) * static_cast<double>(eps);
        lp.add(budget, -1.0);
    } else {
        Eigen::RowVectorXd budget = Eigen::RowVectorXd::Zero(lp.nv);
        for (std::size_t widx = 0; widx < budgeted.size(); ++widx)
            budget[bigk + static_cast<Eigen::Index>(widx)] = 1.0;
        lp.add(budget, a - 1.0);
        if (a < 1.0) return kInf;
    }
    return lp.solve(bigk - 1, cfg);
}

/// One exact-cone program: delta_k = 1, sign pattern eps over J,
/// |delta_{J^c}|_1 <= ratio |delta_J|_1.
inline double exact_piece(const MatrixXd& psi, Eigen::Index k, const std::vector<Eigen::Index>& j_set,
                          const std::vector<int>& eps, double ratio, const SolverConfig& cfg)
{
    const Eigen::Index bigk = psi.cols();
    std::vector<char> in_j(static_cast<std::size_t>(bigk), 0);
    for (Eigen::Index j : j_set) in_j[static_cast<std::size_t>(j)] = 1;
    const bool k_in_j = in_j[static_cast<std::size_t>(k)] != 0;

    std::vector<Eigen::Index> budgeted;
    for (Eigen::Index i = 0; i < bigk; ++i)
        if (i != k && !in_j[static_cast<std::size_t>(i)]) budgeted.push_back(i);
    LpPieces lp = battery_base(psi, k, budgeted);
    const auto var_of = [&](Eigen::Index i) { return i < k ? i : i - 1; };

    double rhs_shift = 0.0; // contribution of delta_k = 1 to the cone row
    Eigen::RowVectorXd cone_row = Eigen::RowVectorXd::Zero(lp.nv);
    for (std::size_t widx = 0; widx < budgeted.size(); ++widx)
        cone_row[bigk + static_cast<Eigen::Index>(widx)] = 1.0;
    for (std::size_t idx = 0; idx < j_set.size(); ++idx) {
        const Eigen::Index j = j_set[idx];
        const double coef = -ratio * static_cast<double>(eps[idx]);
        if (j == k) {
            if (eps[idx] < 0) return kInf;
            rhs_shift += coef;
        } else {
            cone_row[var_of(j)] += coef;
            Eigen::RowVectorXd sign_row = Eigen::RowVectorXd::Zero(lp.nv);
            sign_row[var_of(j)] = -static_cast<double>(eps[idx]);
            lp.add(sign_row, 0.0);
        }
    }
    const double g = k_in_j ? 0.0 : -1.0;
    lp.add(cone_row, g - rhs_shift);
    return lp.solve(bigk - 1, cfg);
}

/// One block-certificate program: |delta_{J0}|_1 = 1 under a sign pattern,
/// |delta|_1 <= a |delta_j| with the sign of delta_j fixed.
inline double block_piece(const MatrixXd& psi, const std::vector<Eigen::Index>& j0,
                          const std::vector<int>& eps, Eigen::Index j, int eps_j, double a,
                          const SolverConfig& cfg)
{
    const Eigen::Index bigk = psi.cols();
    const Eigen::Index bigl = psi.rows();
    std::vector<char> in_j0(static_cast<std::size_t>(bigk), 0);
    for (Eigen::Index i : j0) in_j0[static_cast<std::size_t>(i)] = 1;
    const bool j_in_block = in_j0[static_cast<std::size_t>(j)] != 0;

    std::vector<Eigen::Index> budgeted;
    for (Eigen::Index i = 0; i < bigk; ++i)
        if (!in_j0[static_cast<std::size_t>(i)] && i != j) budgeted.push_back(i);

    LpPieces lp;
    lp.nv = bigk + 1 + static_cast<Eigen::Index>(budgeted.size());
    const Eigen::Index v_col = bigk;
    for (Eigen::Index l = 0; l < bigl; ++l) {
        Eigen::RowVectorXd r1 = Eigen::RowVectorXd::Zero(lp.nv);
        Eigen::RowVectorXd r2 = Eigen::RowVectorXd::Zero(lp.nv);
        r1.head(bigk) = psi.row(l);
        r2.head(bigk) = -psi.row(l);
        r1[v_col] = -1.0;
        r2[v_col] = -1.0;
        lp.add(r1, 0.0);
        lp.add(r2, 0.0);
    }
    {
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(lp.nv);
        r[v_col] = -1.0;
        lp.add(r, 0.0);
    }
    for (std::size_t widx = 0; widx < budgeted.size(); ++widx) {
        const Eigen::Index i = budgeted[widx];
        const Eigen::Index w_col = bigk + 1 + static_cast<Eigen::Index>(widx);
        Eigen::RowVectorXd r1 = Eigen::RowVectorXd::Zero(lp.nv);
        Eigen::RowVectorXd r2 = Eigen::RowVectorXd::Zero(lp.nv);
        r1[i] = 1.0;
        r1[w_col] = -1.0;
        r2[i] = -1.0;
        r2[w_col] = -1.0;
        lp.add(r1, 0.0);
        lp.add(r2, 0.0);
    }
    for (std::size_t idx = 0; idx < j0.size(); ++idx) {
        Eigen::RowVectorXd sign_row = Eigen::RowVectorXd::Zero(lp.nv);
        sign_row[j0[idx]] = -static_cast<double>(eps[idx]);
        lp.add(sign_row, 0.0);
    }
    if (!j_in_block) {
        Eigen::RowVectorXd sign_row = Eigen::RowVectorXd::Zero(lp.nv);
        sign_row[j] = -static_cast<double>(eps_j);
        lp.add(sign_row, 0.0);
    }
    // budget: sum w + 1 <= a |delta_j|  (the 1 is the block l1 mass)
    Eigen::RowVectorXd budget = Eigen::RowVectorXd::Zero(lp.nv);
    for (std::size_t widx = 0; widx < budgeted.size(); ++widx)
        budget[bigk + 1 + static_cast<Eigen::Index>(widx)] = 1.0;
    if (j_in_block)
        budget[j] = -a * static_cast<double>(eps_j);
    else
        budget[j] = -(a - 1.0) * static_cast<double>(eps_j);
    lp.add(budget, -1.0);

    // equality: sum over J0 of eps_i delta_i = 1
    Eigen::RowVectorXd eq = Eigen::RowVectorXd::Zero(lp.nv);
    for (std::size_t idx = 0; idx < j0.size(); ++idx)
        eq[j0[idx]] = static_cast<double>(eps[idx]);
    return lp.solve(v_col, cfg, &eq, 1.0);
}

inline double floor_value(double v, double zero_floor)
{
    return (v < zero_floor) ? 0.0 : v;
}

} // namespace detail

/// Certificate lower bound kappa*_k(s): 2K linear programs over (j, sign).
inline double kappa_coord_cert(const PsiMatrix& psi, Eigen::Index k, int s, const ConeFactor& cf,
                               const SensOptions& opt = {})
{
    const Eigen::Index bigk = psi.values.cols();
    if (s < 1 || s > bigk) fail(ErrorCode::InvalidParams, "sparsity certificate out of range");
    if (k < 0 || k >= bigk) fail(ErrorCode::InvalidParams, "coordinate out of range");
    double best = kInf;
    for (Eigen::Index j = 0; j < bigk; ++j)
        for (int eps : {+1, -1}) {
            const double v = detail::certif_piece(psi.values, k, j, eps, cf.a, opt.solver);
            best = std::min(best, v);
        }
    if (best == kInf) fail(ErrorCode::SolverFailure, "all certificate pieces infeasible");
    return detail::floor_value(best, opt.zero_floor);
}

/// Full coordinate battery (2K^2 programs), parallel over (k, j, sign).
inline VectorXd kappa_coord_cert_all(const PsiMatrix& psi, int s, const ConeFactor& cf,
                                     const SensOptions& opt = {})
{
    const Eigen::Index bigk = psi.values.cols();
    if (s < 1 || s > bigk) fail(ErrorCode::InvalidParams, "sparsity certificate out of range");
    std::vector<double> values(static_cast<std::size_t>(2 * bigk * bigk), kInf);
    parallel_for(values.size(), opt.threads, [&](std::size_t idx) {
        const Eigen::Index k = static_cast<Eigen::Index>(idx) / (2 * bigk);
        const Eigen::Index rem = static_cast<Eigen::Index>(idx) % (2 * bigk);
        const Eigen::Index j = rem / 2;
        const int eps = (rem % 2 == 0) ? +1 : -1;
        values[idx] = detail::certif_piece(psi.values, k, j, eps, cf.a, opt.solver);
    });
    if (opt.trace) {
        for (std::size_t idx = 0; idx < values.size(); ++idx) {
            const Eigen::Index k = static_cast<Eigen::Index>(idx) / (2 * bigk);
            const Eigen::Index rem = static_cast<Eigen::Index>(idx) % (2 * bigk);
            opt.trace->push_back({k, rem / 2, (rem % 2 == 0) ? +1 : -1, values[idx]});
        }
    }
    VectorXd out(bigk);
    for (Eigen::Index k = 0; k < bigk; ++k) {
        double best = kInf;
        for (Eigen::Index r = 0; r < 2 * bigk; ++r)
            best = std::min(best, values[static_cast<std::size_t>(k * 2 * bigk + r)]);
        if (best == kInf) fail(ErrorCode::SolverFailure, "all certificate pieces infeasible");
        out[k] = detail::floor_value(best, opt.zero_floor);
    }
    return out;
}

/// kappa_1(s) = (1/a) min_k kappa*_k(s); for the dominant-coordinate cone the
/// prefactor is (1-c)/(2s).
inline double kappa1_cert(const PsiMatrix& psi, int s, double c, const SensOptions& opt = {})
{
    const ConeFactor cf = ConeFactor::dominant(c, s);
    const VectorXd coords = kappa_coord_cert_all(psi, s, cf, opt);
    return coords.minCoeff() / cf.a;
}

/// Direct l1 block battery for kappa_{1,J0}(s); sizes are guarded because the
/// program count grows as 2^{|J0|}.
inline double kappa_block_cert(const PsiMatrix& psi, const std::vector<Eigen::Index>& j0, int s,
                               double c, const SensOptions& opt = {})
{
    if (j0.empty()) return kInf; // empty-block convention
    if (static_cast<int>(j0.size()) > opt.block_limit)
        fail(ErrorCode::BlockTooLarge, "block battery limited to " + std::to_string(opt.block_limit));
    const ConeFactor cf = ConeFactor::dominant(c, s);
    const Eigen::Index bigk = psi.values.cols();
    const std::size_t patterns = std::size_t{1} << j0.size();
    std::vector<char> in_j0(static_cast<std::size_t>(bigk), 0);
    for (Eigen::Index i : j0) in_j0[static_cast<std::size_t>(i)] = 1;

    struct Piece {
        std::vector<int> eps;
        Eigen::Index j;
        int eps_j;
    };
    std::vector<Piece> pieces;
    for (std::size_t mask = 0; mask < patterns; ++mask) {
        std::vector<int> eps(j0.size());
        for (std::size_t idx = 0; idx < j0.size(); ++idx) eps[idx] = (mask >> idx) & 1 ? 1 : -1;
        for (Eigen::Index j = 0; j < bigk; ++j) {
            if (in_j0[static_cast<std::size_t>(j)]) {
                pieces.push_back({eps, j, 0});
            } else {
                pieces.push_back({eps, j, +1});
                pieces.push_back({eps, j, -1});
            }
        }
    }
    std::vector<double> values(pieces.size(), kInf);
    parallel_for(pieces.size(), opt.threads, [&](std::size_t idx) {
        const Piece& pc = pieces[idx];
        int eps_j = pc.eps_j;
        if (eps_j == 0) { // sign of delta_j comes from the block pattern
            for (std::size_t t = 0; t < j0.size(); ++t)
                if (j0[t] == pc.j) eps_j = pc.eps[t];
        }
        values[idx] = detail::block_piece(psi.values, j0, pc.eps, pc.j, eps_j, cf.a, opt.solver);
    });
    double best = kInf;
    for (double v : values) best = std::min(best, v);
    if (best == kInf) fail(ErrorCode::SolverFailure, "all block pieces infeasible");
    return detail::floor_value(best, opt.zero_floor);
}

/// Exact coordinate-wise sensitivity kappa*_{k,J} on the cone with support J:
/// 2^{|J|} sign-pattern programs.
inline double kappa_coord_exact(const PsiMatrix& psi, Eigen::Index k,
                                const std::vector<Eigen::Index>& j_set, const ConeFactor& cf,
                                const SensOptions& opt = {})
{
    if (static_cast<int>(j_set.size()) > opt.block_limit)
        fail(ErrorCode::BlockTooLarge, "exact battery limited to " + std::to_string(opt.block_limit));
    const std::size_t patterns = std::size_t{1} << j_set.size();
    std::vector<double> values(patterns, kInf);
    parallel_for(patterns, opt.threads, [&](std::size_t mask) {
        std::vector<int> eps(j_set.size());
        for (std::size_t idx = 0; idx < j_set.size(); ++idx) eps[idx] = (mask >> idx) & 1 ? 1 : -1;
        values[mask] = detail::exact_piece(psi.values, k, j_set, eps, cf.ratio, opt.solver);
    });
    double best = kInf;
    for (double v : values) best = std::min(best, v);
    if (best == kInf) fail(ErrorCode::SolverFailure, "all sign patterns infeasible");
    return detail::floor_value(best, opt.zero_floor);
}

/// Closed-form block lower bound assembled from the coordinate certificates:
///   kappa_{p,J0,J} >= max( |J0|^{-1/p} min_{k in J0} kappa*_k(s),
///                          (1/a)      min_k        kappa*_k(s) ).
/// For p = inf the first term is the min-over-block rule.
inline double kappa_general(const VectorXd& kappa_coords, const std::vector<Eigen::Index>& j0,
                            double p, int /*s*/, const ConeFactor& cf)
{
    if (j0.empty()) return kInf;
    double min_block = kInf;
    for (Eigen::Index k : j0) min_block = std::min(min_block, kappa_coords[k]);
    const double term1 =
        std::pow(static_cast<double>(j0.size()), -1.0 / p) * min_block; // |J0|^{-1/p} with 1/inf = 0
    const double term2 = kappa_coords.minCoeff() / cf.a;
    return std::max(std::isinf(p) ? min_block : term1, term2);
}

struct CoherenceBound {
    bool applicable = false;
    double eta1 = 0.0;
    double eta2 = 0.0;
    double bound = 0.0; // lower bound on kappa_{1,J}
};

/// Row-coherence lower bound: for every k in J find a row whose k entry is
/// large and whose other entries are comparatively small; the best common
/// (eta1, eta2) pair gives kappa_{p,J} >= (2|J|)^{-1/p} (1-c)^{-1+1/p} eta1 eta2.
inline CoherenceBound coherence_bound(const PsiMatrix& psi, const std::vector<Eigen::Index>& j_set,
                                      double c, double p = 1.0)
{
    CoherenceBound out;
    if (j_set.empty()) return out;
    const MatrixXd& m = psi.values;
    const Eigen::Index bigl = m.rows();
    const double jsz = static_cast<double>(j_set.size());

    // candidate eta1 values come from the finite set (1-c)|psi_lk|
    std::vector<double> candidates;
    for (Eigen::Index k : j_set)
        for (Eigen::Index l = 0; l < bigl; ++l)
            if (std::abs(m(l, k)) > 0.0) candidates.push_back((1.0 - c) * std::abs(m(l, k)));
    for (double eta1 : candidates) {
        double eta2 = kInf;
        bool ok = true;
        for (Eigen::Index k : j_set) {
            double best_eta2 = -kInf;
            for (Eigen::Index l = 0; l < bigl; ++l) {
                const double pivot = std::abs(m(l, k));
                if (pivot < eta1 / (1.0 - c)) continue;
                double off = 0.0;
                for (Eigen::Index kk = 0; kk < m.cols(); ++kk)
                    if (kk != k) off = std::max(off, std::abs(m(l, kk)));
                const double e2 = 1.0 - off / pivot * 2.0 * jsz / (1.0 - c);
                best_eta2 = std::max(best_eta2, e2);
            }
            if (best_eta2 <= 0.0) {
                ok = false;
                break;
            }
            eta2 = std::min(eta2, std::min(best_eta2, 1.0));
        }
        if (!ok) continue;
        const double bound =
            std::pow(2.0 * jsz, -1.0 / p) * std::pow(1.0 - c, -1.0 + 1.0 / p) * eta1 * eta2;
        if (!out.applicable || bound > out.bound) {
            out.applicable = true;
            out.eta1 = eta1;
            out.eta2 = eta2;
            out.bound = bound;
        }
    }
    return out;
}

/// Assemble the certificate report for one (s, c) pair.
inline SensitivityReport compute_sensitivities(const PsiMatrix& psi, int s, double c,
                                               bool enlarged = false, const SensOptions& opt = {})
{
    SensitivityReport rep;
    rep.s = s;
    rep.c = c;
    rep.cone = enlarged ? ConeFactor::enlarged(c, s) : ConeFactor::dominant(c, s);
    rep.method = enlarged ? "certificate-enlarged" : "certificate";
    rep.kappa_coord = kappa_coord_cert_all(psi, s, rep.cone, opt);
    rep.kappa1 = rep.kappa_coord.minCoeff() / rep.cone.a;
    return rep;
}

} // namespace stiv
