#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "stiv/cones.hpp"
#include "stiv/errors.hpp"
#include "stiv/math.hpp"

namespace stiv {

using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Optimization problem in standard form:
///   min objective'x   s.t.  eq_matrix x = eq_rhs,  x in product of cone slices.
/// Slices must be disjoint and cover the variable vector exactly once.
struct ConeProgram {
    VectorXd objective;
    SparseMat eq_matrix; // m x n
    VectorXd eq_rhs;
    std::vector<ConeSlice> cones;

    Eigen::Index num_vars() const { return objective.size(); }
    Eigen::Index num_eq() const { return eq_rhs.size(); }

    void validate() const
    {
        const Eigen::Index n = num_vars();
        if (eq_matrix.rows() != eq_rhs.size() || eq_matrix.cols() != n)
            fail(ErrorCode::DimensionMismatch, "equality system dimensions");
        std::vector<char> covered(static_cast<std::size_t>(n), 0);
        for (const auto& s : cones) {
            if (s.size < 1 || s.start < 0 || s.start + s.size > n)
                fail(ErrorCode::SpecInvalid, "cone slice out of range");
            for (Eigen::Index i = s.start; i < s.start + s.size; ++i) {
                if (covered[static_cast<std::size_t>(i)]) fail(ErrorCode::SpecInvalid, "cone slices overlap");
                covered[static_cast<std::size_t>(i)] = 1;
            }
        }
        for (char c : covered)
            if (!c) fail(ErrorCode::SpecInvalid, "cone slices do not cover all variables");
    }
};

enum class SolveStatus { optimal, primal_infeasible, dual_infeasible, numerical_failure };

inline const char* status_name(SolveStatus s)
{
    switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::primal_infeasible: return "primal_infeasible";
    case SolveStatus::dual_infeasible: return "dual_infeasible";
    case SolveStatus::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

struct Solution {
    SolveStatus status = SolveStatus::numerical_failure;
    VectorXd primal;    // variable vector (or improving ray for dual_infeasible)
    VectorXd dual;      // equality multipliers (or infeasibility certificate)
    VectorXd dual_cone; // dual cone slack, 0 on free coordinates
    double objective = 0.0;
    double dual_objective = 0.0;
    double gap = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;
};

struct SolverConfig {
    double gap_tol = 1e-8;
    double feas_tol = 1e-8;
    int max_iter = 200;
    double infeas_tol = 1e-8;    // threshold on certificate residuals
    double reduced_factor = 1e4; // accept a "close to" answer within tol*factor
    bool verbose = false;
};

/// Plain-text dump for cross-checking against external solvers. Layout:
///   line 1: "vars <n> eq <m>"
///   line 2: "objective" followed by n coefficients
///   next m lines: "row <rhs> <c0> <c1> ... <c_{n-1}>" (dense equality rows)
///   remaining lines: "cone <free|nonneg|soc> <start> <size>"
inline void dump_cone_program(const ConeProgram& p, std::ostream& os)
{
    const Eigen::Index n = p.num_vars();
    os.precision(17);
    os << "vars " << n << " eq " << p.num_eq() << "\n";
    os << "objective";
    for (Eigen::Index j = 0; j < n; ++j) os << " " << p.objective[j];
    os << "\n";
    MatrixXd dense = MatrixXd(p.eq_matrix);
    for (Eigen::Index i = 0; i < p.num_eq(); ++i) {
        os << "row " << p.eq_rhs[i];
        for (Eigen::Index j = 0; j < n; ++j) os << " " << dense(i, j);
        os << "\n";
    }
    for (const auto& s : p.cones) {
        os << "cone "
           << (s.kind == ConeKind::free_cone ? "free" : (s.kind == ConeKind::nonneg ? "nonneg" : "soc")) << " "
           << s.start << " " << s.size << "\n";
    }
}

inline void dump_cone_program(const ConeProgram& p, const std::string& path)
{
    std::ofstream os(path);
    if (!os) fail(ErrorCode::IoError, "cannot open " + path);
    dump_cone_program(p, os);
}

} // namespace stiv
