#pragma once

#include <vector>

#include <Eigen/QR>

#include "stiv/cone_program.hpp"
#include "stiv/ipm.hpp"

namespace stiv {

namespace detail {

struct StdReduction {
    ipm::ConeSpec spec;
    std::vector<Eigen::Index> row_to_var; // cone row -> variable index
    SparseMat eq;                         // empty rows removed
    VectorXd eq_rhs;
    bool trivially_infeasible = false;
};

/// Map a standard-form program (cones on variable slices) onto inequality
/// form: every conic coordinate x_i gets a row  -x_i + s = 0.
inline StdReduction reduce_std(const ConeProgram& p)
{
    StdReduction red;
    for (const auto& s : p.cones) {
        if (s.kind == ConeKind::nonneg) red.spec.nonneg += s.size;
    }
    red.row_to_var.reserve(static_cast<std::size_t>(red.spec.nonneg));
    for (const auto& s : p.cones)
        if (s.kind == ConeKind::nonneg)
            for (Eigen::Index i = 0; i < s.size; ++i) red.row_to_var.push_back(s.start + i);
    for (const auto& s : p.cones) {
        if (s.kind == ConeKind::soc) {
            red.spec.soc.push_back(s.size);
            for (Eigen::Index i = 0; i < s.size; ++i) red.row_to_var.push_back(s.start + i);
        }
    }

    // Presolve: drop all-zero equality rows (infeasible if rhs is nonzero).
    std::vector<Triplet> trips;
    std::vector<Eigen::Index> keep;
    std::vector<char> nonzero(static_cast<std::size_t>(p.num_eq()), 0);
    for (int k = 0; k < p.eq_matrix.outerSize(); ++k)
        for (SparseMat::InnerIterator it(p.eq_matrix, k); it; ++it)
            if (it.value() != 0.0) nonzero[static_cast<std::size_t>(it.row())] = 1;
    for (Eigen::Index i = 0; i < p.num_eq(); ++i) {
        if (nonzero[static_cast<std::size_t>(i)])
            keep.push_back(i);
        else if (std::abs(p.eq_rhs[i]) > 1e-12)
            red.trivially_infeasible = true;
    }
    std::vector<Eigen::Index> new_row(static_cast<std::size_t>(p.num_eq()), -1);
    for (std::size_t r = 0; r < keep.size(); ++r) new_row[static_cast<std::size_t>(keep[r])] = static_cast<Eigen::Index>(r);
    red.eq.resize(static_cast<Eigen::Index>(keep.size()), p.num_vars());
    for (int k = 0; k < p.eq_matrix.outerSize(); ++k)
        for (SparseMat::InnerIterator it(p.eq_matrix, k); it; ++it)
            if (new_row[static_cast<std::size_t>(it.row())] >= 0)
                trips.emplace_back(new_row[static_cast<std::size_t>(it.row())], it.col(), it.value());
    red.eq.setFromTriplets(trips.begin(), trips.end());
    red.eq_rhs.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) red.eq_rhs[static_cast<Eigen::Index>(r)] = p.eq_rhs[keep[r]];
    return red;
}

} // namespace detail

/// Solve a standard-form cone program with the homogeneous self-dual
/// interior-point engine. Infeasibility is reported through the status with
/// the improving-ray certificate stored in the solution fields.
inline Solution solve_cone(const ConeProgram& p, const SolverConfig& cfg = {})
{
    p.validate();
    detail::StdReduction red = detail::reduce_std(p);
    Solution sol;
    if (red.trivially_infeasible) {
        sol.status = SolveStatus::primal_infeasible;
        sol.primal = VectorXd::Zero(p.num_vars());
        sol.dual = VectorXd::Zero(p.num_eq());
        sol.dual_cone = VectorXd::Zero(p.num_vars());
        return sol;
    }

    const Eigen::Index m = red.spec.total();
    if (m == 0) {
        // No conic coordinates: plain equality-constrained linear objective.
        const MatrixXd eq_dense = MatrixXd(red.eq);
        Eigen::ColPivHouseholderQR<MatrixXd> qr(eq_dense);
        VectorXd x = qr.solve(red.eq_rhs);
        const MatrixXd eq_t = eq_dense.transpose();
        Eigen::ColPivHouseholderQR<MatrixXd> qrt(eq_t);
        VectorXd y = qrt.solve(p.objective);
        sol.primal = x;
        sol.dual = y;
        sol.dual_cone = VectorXd::Zero(p.num_vars());
        sol.primal_residual = linf_norm(red.eq * x - red.eq_rhs);
        sol.dual_residual = linf_norm(red.eq.transpose() * y - p.objective);
        sol.objective = p.objective.dot(x);
        sol.dual_objective = red.eq_rhs.dot(y);
        sol.gap = std::abs(sol.objective - sol.dual_objective);
        if (sol.primal_residual > cfg.feas_tol)
            sol.status = SolveStatus::primal_infeasible;
        else if (sol.dual_residual > cfg.feas_tol)
            sol.status = SolveStatus::dual_infeasible;
        else
            sol.status = SolveStatus::optimal;
        return sol;
    }
    MatrixXd g = MatrixXd::Zero(m, p.num_vars());
    for (Eigen::Index r = 0; r < m; ++r) g(r, red.row_to_var[static_cast<std::size_t>(r)]) = -1.0;
    ipm::DenseModel model(p.objective, red.eq, red.eq_rhs, std::move(g), VectorXd::Zero(m), red.spec);
    ipm::IpmResult r = ipm::solve_model(model, cfg);

    sol.status = r.status;
    sol.iterations = r.iterations;
    sol.gap = r.gap;
    sol.primal_residual = r.primal_residual;
    sol.dual_residual = r.dual_residual;
    sol.primal = r.x;
    sol.dual = -r.y;
    sol.dual_cone = VectorXd::Zero(p.num_vars());
    for (Eigen::Index row = 0; row < m; ++row)
        sol.dual_cone[red.row_to_var[static_cast<std::size_t>(row)]] = r.z[row];
    sol.objective = r.primal_obj;
    sol.dual_objective = r.dual_obj;
    return sol;
}

/// Orthant-only special case; rejects programs with second-order cones.
inline Solution solve_lp(const ConeProgram& p, const SolverConfig& cfg = {})
{
    for (const auto& s : p.cones)
        if (s.kind == ConeKind::soc) fail(ErrorCode::SpecInvalid, "solve_lp given a second-order cone");
    return solve_cone(p, cfg);
}

struct CertificateReport {
    double primal_residual = 0.0;     // ||Ax - b||_inf
    double dual_residual = 0.0;       // ||c - A'y - nu||_inf
    double primal_cone_violation = 0.0;
    double dual_cone_violation = 0.0; // nu outside the dual cone / nonzero on free slices
    double gap = 0.0;                 // |c'x - b'y|
    bool ok = false;
};

/// Recompute optimality evidence from scratch; flags anything above ten times
/// the configured tolerance.
inline CertificateReport certify(const Solution& sol, const ConeProgram& p, const SolverConfig& cfg = {})
{
    CertificateReport rep;
    if (sol.status != SolveStatus::optimal) return rep;
    const VectorXd ax = p.eq_matrix * sol.primal;
    rep.primal_residual = linf_norm(ax - p.eq_rhs);
    const VectorXd stat = p.objective - p.eq_matrix.transpose() * sol.dual - sol.dual_cone;
    rep.dual_residual = linf_norm(stat);
    rep.primal_cone_violation = cone_violation(sol.primal, p.cones);
    double dual_viol = 0.0;
    for (const auto& s : p.cones) {
        const VectorXd seg = sol.dual_cone.segment(s.start, s.size);
        switch (s.kind) {
        case ConeKind::free_cone: dual_viol = std::max(dual_viol, linf_norm(seg)); break;
        case ConeKind::nonneg:
            if (s.size > 0) dual_viol = std::max(dual_viol, positive_part(-seg.minCoeff()));
            break;
        case ConeKind::soc: dual_viol = std::max(dual_viol, soc_violation(seg)); break;
        }
    }
    rep.dual_cone_violation = dual_viol;
    rep.gap = std::abs(p.objective.dot(sol.primal) - p.eq_rhs.dot(sol.dual));
    const double scale = 1.0 + std::abs(p.objective.dot(sol.primal));
    const double lim = 10.0 * std::max(cfg.feas_tol, cfg.gap_tol);
    rep.ok = rep.primal_residual <= lim * scale && rep.dual_residual <= lim * scale &&
             rep.primal_cone_violation <= lim * scale && rep.dual_cone_violation <= lim * scale &&
             rep.gap <= lim * scale;
    return rep;
}

} // namespace stiv
