#pragma once

#include <functional>
#include <optional>

#include "stiv/dataset.hpp"
#include "stiv/rng.hpp"
#include "stiv/sensitivity.hpp"

namespace stiv {

/// Simulation design: independent standard-normal instruments, one endogenous
/// regressor built from the first L-K+1 of them plus a correlated error, the
/// remaining regressors reusing instruments verbatim. An all-ones instrument
/// column is appended so the conic machinery has its constant.
struct DgpConfig {
    Eigen::Index n = 49;
    Eigen::Index num_regressors = 25; // K
    Eigen::Index num_instruments = 50; // L, excluding the appended constant
    double sigma_struct = 0.3;
    double sigma_end = 0.3;
    double rho = 0.3;
    VectorXd beta_star;  // default: five ones then zeros
    VectorXd zeta;       // default: 0.15 on l = 1..L-K+1
    std::uint64_t seed = 1;
    bool append_constant = true;

    void validate() const
    {
        if (n < 2 || num_regressors < 1 || num_instruments < num_regressors)
            fail(ErrorCode::InvalidParams, "need n >= 2 and L >= K >= 1");
        if (std::abs(rho) > 1.0) fail(ErrorCode::InvalidParams, "|rho| must be at most one");
        if (!(sigma_struct >= 0.0 && sigma_end >= 0.0))
            fail(ErrorCode::InvalidParams, "error scales must be nonnegative");
        if (beta_star.size() > 0 && beta_star.size() != num_regressors)
            fail(ErrorCode::InvalidParams, "beta length");
        if (zeta.size() > 0 && zeta.size() != num_instruments - num_regressors + 1)
            fail(ErrorCode::InvalidParams, "zeta length");
    }

    VectorXd beta_or_default() const
    {
        if (beta_star.size() > 0) return beta_star;
        VectorXd b = VectorXd::Zero(num_regressors);
        for (Eigen::Index k = 0; k < std::min<Eigen::Index>(5, num_regressors); ++k) b[k] = 1.0;
        return b;
    }

    VectorXd zeta_or_default() const
    {
        if (zeta.size() > 0) return zeta;
        return VectorXd::Constant(num_instruments - num_regressors + 1, 0.15);
    }
};

/// Fully reproducible draw of one dataset from the design.
inline Dataset gen_dgp(const DgpConfig& cfg)
{
    cfg.validate();
    const Eigen::Index n = cfg.n, bigk = cfg.num_regressors, bigl = cfg.num_instruments;
    const Eigen::Index nrel = bigl - bigk + 1; // instruments entering the endogenous regressor
    const VectorXd beta = cfg.beta_or_default();
    const VectorXd zeta = cfg.zeta_or_default();

    Rng rng = Rng::stream(cfg.seed, 0);
    MatrixXd z(n, bigl + (cfg.append_constant ? 1 : 0));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index l = 0; l < bigl; ++l) z(i, l) = rng.normal();
    if (cfg.append_constant) z.col(bigl).setOnes();

    Rng erng = Rng::stream(cfg.seed, 1);
    VectorXd u(n), v(n);
    const double cross = cfg.rho, orth = std::sqrt(std::max(0.0, 1.0 - cfg.rho * cfg.rho));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = erng.normal();
        const double b = erng.normal();
        u[i] = cfg.sigma_struct * a;
        v[i] = cfg.sigma_end * (cross * a + orth * b);
    }

    MatrixXd x(n, bigk);
    x.col(0) = z.leftCols(nrel) * zeta + v;
    for (Eigen::Index l = nrel + 1; l <= bigl; ++l) x.col(l - bigl + bigk - 1) = z.col(l - 1);

    Dataset ds;
    ds.x = std::move(x);
    ds.z = std::move(z);
    ds.y = ds.x * beta + u;
    if (cfg.append_constant) ds.const_instr_idx = bigl;
    for (Eigen::Index k = 1; k < bigk; ++k) ds.exo_idx.push_back(k);
    return ds;
}

/// Per-replication estimator outcome fed into the summary.
struct RepOutcome {
    VectorXd beta;
    double sigma = 0.0;
    std::optional<bool> support_recovered;
    std::optional<bool> covered;
    std::optional<bool> comparison; // free-form per-profile event
    bool failed = false;
    std::string note;
};

struct McSummary {
    Eigen::Index reps = 0;
    Eigen::Index failures = 0;
    MatrixXd beta_pct;   // K x 3: 5th, median, 95th
    VectorXd sigma_pct;  // 3
    double support_recovery_rate = -1.0;
    double coverage_rate = -1.0;
    double comparison_rate = -1.0;
    std::uint64_t seed = 0;
};

/// Seeded Monte-Carlo harness: replication seeds derive from the master seed,
/// replications run concurrently, and the reduction is by replication index,
/// so the outcome is bit-stable under any scheduling.
inline McSummary run_mc(const DgpConfig& cfg, Eigen::Index reps,
                        const std::function<RepOutcome(const Dataset&, std::uint64_t)>& estimator,
                        int threads = 0)
{
    if (reps < 1) fail(ErrorCode::InvalidParams, "need at least one replication");
    std::vector<RepOutcome> outcomes(static_cast<std::size_t>(reps));
    parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t rep) {
        DgpConfig rep_cfg = cfg;
        rep_cfg.seed = Rng::stream(cfg.seed, rep).next();
        const Dataset ds = gen_dgp(rep_cfg);
        try {
            outcomes[rep] = estimator(ds, rep_cfg.seed);
        } catch (const std::exception& e) {
            outcomes[rep].failed = true;
            outcomes[rep].note = e.what();
        }
    });

    McSummary out;
    out.seed = cfg.seed;
    out.reps = reps;
    std::vector<double> sigmas;
    std::vector<std::vector<double>> betas(static_cast<std::size_t>(cfg.num_regressors));
    Eigen::Index n_sup = 0, sup_ok = 0, n_cov = 0, cov_ok = 0, n_cmp = 0, cmp_ok = 0;
    for (const auto& rep : outcomes) {
        if (rep.failed) {
            ++out.failures;
            continue;
        }
        sigmas.push_back(rep.sigma);
        for (Eigen::Index k = 0; k < cfg.num_regressors; ++k)
            betas[static_cast<std::size_t>(k)].push_back(rep.beta[k]);
        if (rep.support_recovered) {
            ++n_sup;
            sup_ok += *rep.support_recovered ? 1 : 0;
        }
        if (rep.covered) {
            ++n_cov;
            cov_ok += *rep.covered ? 1 : 0;
        }
        if (rep.comparison) {
            ++n_cmp;
            cmp_ok += *rep.comparison ? 1 : 0;
        }
    }
    if (sigmas.empty()) fail(ErrorCode::SolverFailure, "every replication failed");
    out.beta_pct.resize(cfg.num_regressors, 3);
    for (Eigen::Index k = 0; k < cfg.num_regressors; ++k) {
        const auto& v = betas[static_cast<std::size_t>(k)];
        out.beta_pct(k, 0) = percentile(v, 0.05);
        out.beta_pct(k, 1) = percentile(v, 0.50);
        out.beta_pct(k, 2) = percentile(v, 0.95);
    }
    out.sigma_pct.resize(3);
    out.sigma_pct << percentile(sigmas, 0.05), percentile(sigmas, 0.50), percentile(sigmas, 0.95);
    if (n_sup > 0) out.support_recovery_rate = static_cast<double>(sup_ok) / static_cast<double>(n_sup);
    if (n_cov > 0) out.coverage_rate = static_cast<double>(cov_ok) / static_cast<double>(n_cov);
    if (n_cmp > 0) out.comparison_rate = static_cast<double>(cmp_ok) / static_cast<double>(n_cmp);
    return out;
}

} // namespace stiv
