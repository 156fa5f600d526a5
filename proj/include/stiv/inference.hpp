#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stiv/dataset.hpp"
#include "stiv/rng.hpp"
#include "stiv/sensitivity.hpp"
#include "stiv/stiv.hpp"

namespace stiv {

/// Distributional scenario for picking the self-normalized quantile r.
///   1: Monte-Carlo quantile conditional on the instruments (known error law)
///   2: symmetric errors            r = sqrt(2 log(L/(2 alpha)) / n)
///   3: i.i.d. symmetric errors     r = -Phi^-1(9 alpha / (4 L e^3)) / sqrt(n)
///   4: 2+delta moments             r = -Phi^-1(alpha / (2L)) / sqrt(n)
///   5: bounded fourth moment       r per the c4-corrected square-root rule
struct ScenarioSpec {
    int scenario = 4;
    double alpha = 0.05;
    // scenario 1 extras
    std::string error_dist = "normal"; // "normal" or "student_t"
    double t_df = 5.0;
    int mc_draws = 1000;
    std::uint64_t seed = 1;
    // scenario 4 extra (moment order tag; the rule itself does not need it)
    double delta = 1.0;
    // scenario 5 extra: known bound on the fourth-moment ratio
    std::optional<double> c4;

    void validate() const
    {
        if (scenario < 1 || scenario > 5) fail(ErrorCode::InvalidParams, "scenario must be 1..5");
        if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidParams, "alpha must lie in (0,1)");
        if (scenario == 1 && mc_draws < 1000)
            fail(ErrorCode::InvalidParams, "scenario 1 needs at least 1000 draws");
    }
};

struct RSelection {
    double r = 0.0;
    bool admissible = true;                // the scenario's own bound on L holds
    std::vector<std::string> validity_notes;
};

/// Closed-form quantile rules (scenarios 2..5). Violations of a scenario's
/// admissibility bound are reported, not fatal.
inline RSelection select_r(const ScenarioSpec& spec, Eigen::Index n, Eigen::Index bigl)
{
    spec.validate();
    if (n < 2) fail(ErrorCode::InvalidParams, "need n >= 2");
    if (bigl < 1) fail(ErrorCode::InvalidParams, "need at least one instrument");
    const double nn = static_cast<double>(n);
    const double ll = static_cast<double>(bigl);
    RSelection out;
    switch (spec.scenario) {
    case 1:
        fail(ErrorCode::InvalidParams, "scenario 1 is data-driven; use mc_quantile_r");
    case 2: {
        const double arg = ll / (2.0 * spec.alpha); // union-bound reading of L/2alpha
        if (arg <= 1.0) fail(ErrorCode::InfeasibleQuantile, "L/(2 alpha) must exceed one");
        out.r = std::sqrt(2.0 * std::log(arg) / nn);
        break;
    }
    case 3: {
        const double arg = 9.0 * spec.alpha / (4.0 * ll * std::exp(3.0));
        if (arg >= 0.5) fail(ErrorCode::InfeasibleQuantile, "quantile argument too large");
        out.r = -normal_quantile(arg) / std::sqrt(nn);
        const double cap = 9.0 * spec.alpha / (4.0 * std::exp(3.0) * normal_cdf(-std::sqrt(nn)));
        if (!(ll < cap)) {
            out.admissible = false;
            out.validity_notes.push_back("instrument count exceeds the i.i.d.-symmetric bound");
        }
        break;
    }
    case 4: {
        const double arg = spec.alpha / (2.0 * ll);
        out.r = -normal_quantile(arg) / std::sqrt(nn);
        out.validity_notes.push_back("asymptotic validity only (moderate-deviation regime)");
        break;
    }
    case 5: {
        const double q = std::log(ll * (2.0 * std::exp(1.0) + 1.0) / spec.alpha);
        if (spec.c4) {
            const double denom = nn - *spec.c4 * q;
            if (denom <= 0.0)
                fail(ErrorCode::InfeasibleQuantile,
                     "n <= c4 log(L(2e+1)/alpha): fourth-moment rule undefined");
            out.r = std::sqrt(2.0 * q / denom);
        } else {
            out.r = 2.0 * std::sqrt(q / nn);
            out.validity_notes.push_back("rough fourth-moment bound (c4 not supplied)");
            if (!(2.0 * q <= nn)) {
                out.admissible = false;
                out.validity_notes.push_back("simplified rule needs n large relative to log(L/alpha)");
            }
        }
        break;
    }
    default: break;
    }
    if (out.r >= 1.0)
        out.validity_notes.push_back("r >= 1: the self-normalized band is vacuous at this n");
    return out;
}

/// Scenario 1: empirical (1 - alpha) quantile, conditional on the observed
/// instruments, of the sup over the mixed self-normalized statistics.
/// Deterministic given the seed; draws use per-index derived streams.
inline double mc_quantile_r(const Dataset& ds, const ScenarioSpec& spec,
                            const std::set<Eigen::Index>& cone_set, int threads = 0)
{
    // alpha = 1 is allowed here (degenerate: the quantile collapses to the
    // smallest draw); everything else follows the common validation.
    if (!(spec.alpha > 0.0 && spec.alpha <= 1.0)) fail(ErrorCode::InvalidParams, "alpha in (0,1]");
    if (spec.mc_draws < 1000) fail(ErrorCode::InvalidParams, "scenario 1 needs at least 1000 draws");
    if (spec.scenario != 1) fail(ErrorCode::InvalidParams, "mc_quantile_r is the scenario-1 rule");
    const Eigen::Index n = ds.n();
    const Eigen::Index bigl = ds.num_instruments();
    const DiagScale dz = compute_dz(ds, cone_set);

    std::vector<double> draws(static_cast<std::size_t>(spec.mc_draws));
    parallel_for(draws.size(), threads, [&](std::size_t b) {
        Rng rng = Rng::stream(spec.seed, b);
        VectorXd u(n);
        for (Eigen::Index i = 0; i < n; ++i)
            u[i] = spec.error_dist == "student_t" ? rng.student_t(spec.t_df) : rng.normal();
        const double u2 = sample_second_moment(u);
        double stat = 0.0;
        for (Eigen::Index l = 0; l < bigl; ++l) {
            const double m = sample_cross_moment(ds.z.col(l), u);
            if (cone_set.count(l)) {
                const VectorXd zu = ds.z.col(l).cwiseProduct(u);
                stat = std::max(stat, std::abs(m) / std::sqrt(sample_second_moment(zu)));
            } else {
                stat = std::max(stat, dz.entries[l] * std::abs(m) / std::sqrt(u2));
            }
        }
        draws[b] = stat;
    });
    return percentile(draws, 1.0 - spec.alpha);
}

/// Plug-in estimate of the worst fourth-moment ratio of the instrument-error
/// products, used to re-run the scenario-5 rule once after a pilot fit.
inline double gamma4_plugin(const Dataset& ds, const VectorXd& beta_hat)
{
    const VectorXd resid = ds.y - ds.x * beta_hat;
    double worst = 0.0;
    for (Eigen::Index l = 0; l < ds.num_instruments(); ++l) {
        const VectorXd zu = ds.z.col(l).cwiseProduct(resid);
        const double m2 = sample_second_moment(zu);
        if (m2 <= 0.0) continue;
        const double m4 = sample_moment(zu, [](double v) { return v * v * v * v; });
        worst = std::max(worst, m4 / (m2 * m2));
    }
    return worst;
}

enum class DenomKind {
    band,  // (1 - r/kappa_1(s))_+
    split, // (1 - r/kappa_{1,B}(s) - r^2/kappa_{1,B^c}(s))_+ for a coordinate split B
};

struct GroupBound {
    std::vector<Eigen::Index> j0;
    double p = 2.0;
    double kappa_bar = 0.0;
    double bound = kInf;
    bool infinite = true;
};

struct ConfidenceReport {
    double r = 0.0;
    int s = 0;
    double c = 0.0;
    std::string method; // certificate / plugin / ...
    DenomKind denom_kind = DenomKind::band;
    double denominator = 0.0; // the (...)_+ term before inversion
    VectorXd center;
    VectorXd halfwidth; // kInf entries are flagged
    std::vector<bool> infinite;
    std::vector<GroupBound> groups;
    std::vector<std::string> validity_notes;
    VectorXd kappa_used;  // per-coordinate kappa entering the halfwidths
    VectorXd scale;       // per-coordinate normalization (E_n[X_k^2]^{1/2} or x_k*)
    VectorXd omega;       // matching selection thresholds (same formula)

    bool any_infinite() const
    {
        for (bool b : infinite)
            if (b) return true;
        return false;
    }
};

namespace detail {

inline ConfidenceReport build_report(const StivFit& fit, const VectorXd& kappa_coords,
                                     double kappa1_like, double denom, DenomKind kind, double r,
                                     int s, const std::string& method)
{
    (void)kappa1_like;
    const Eigen::Index bigk = fit.beta_hat.size();
    ConfidenceReport rep;
    rep.r = r;
    rep.s = s;
    rep.c = fit.spec.c.value_or(0.0);
    rep.method = method;
    rep.denom_kind = kind;
    rep.denominator = positive_part(denom);
    rep.center = fit.beta_hat;
    rep.halfwidth.resize(bigk);
    rep.infinite.assign(static_cast<std::size_t>(bigk), false);
    rep.kappa_used = kappa_coords;
    rep.scale.resize(bigk);
    rep.omega.resize(bigk);
    for (Eigen::Index k = 0; k < bigk; ++k) rep.scale[k] = 1.0 / fit.dx.entries[k];
    const double winv = inv_positive_part(denom);
    for (Eigen::Index k = 0; k < bigk; ++k) {
        if (fit.sigma_hat == 0.0) {
            rep.halfwidth[k] = 0.0; // 0 * inf convention: a perfect fit pins beta
        } else if (denom <= 0.0 || kappa_coords[k] <= 0.0) {
            rep.halfwidth[k] = kInf;
            rep.infinite[static_cast<std::size_t>(k)] = true;
        } else {
            rep.halfwidth[k] = 2.0 * fit.sigma_hat * r / (rep.scale[k] * kappa_coords[k]) * winv;
        }
        rep.omega[k] = rep.halfwidth[k];
    }
    return rep;
}

} // namespace detail

/// Certificate-path confidence intervals: halfwidths
///   2 sigma r / (scale_k kappa*_k(s)) * (1 - r/kappa_1(s))_+^{-1},
/// infinite exactly when r >= kappa_1(s). Group bounds for requested index
/// sets are assembled from the coordinate certificates.
inline ConfidenceReport confidence_intervals(
    const StivFit& fit, const SensitivityReport& sr, double r,
    const std::vector<std::pair<std::vector<Eigen::Index>, double>>& j0_list = {})
{
    if (fit.spec.c && std::abs(sr.c - *fit.spec.c) > 1e-12)
        fail(ErrorCode::MismatchedReport, "sensitivity report computed for a different c");
    const double denom = 1.0 - r / sr.kappa1;
    ConfidenceReport rep = detail::build_report(fit, sr.kappa_coord, sr.kappa1, denom,
                                                DenomKind::band, r, sr.s, sr.method);
    for (const auto& [j0, p] : j0_list) {
        GroupBound g;
        g.j0 = j0;
        g.p = p;
        g.kappa_bar = kappa_general(sr.kappa_coord, j0, p, sr.s, sr.cone);
        if (fit.sigma_hat == 0.0) {
            g.bound = 0.0;
            g.infinite = false;
        } else if (denom <= 0.0 || g.kappa_bar <= 0.0) {
            g.bound = kInf;
            g.infinite = true;
        } else if (std::isinf(g.kappa_bar)) {
            g.bound = 0.0; // empty-block convention
            g.infinite = false;
        } else {
            g.bound = 2.0 * fit.sigma_hat * r / g.kappa_bar * (1.0 / denom);
            g.infinite = false;
        }
        rep.groups.push_back(std::move(g));
    }
    return rep;
}

/// Split-denominator variant: the, typically small, block `split` (for
/// instance the regressors not identified as exogenous) enters at order r and
/// its complement at order r^2:
///   (1 - r/kappa_{1,split}(s) - r^2/kappa_{1,split^c}(s))_+^{-1}.
inline ConfidenceReport confidence_intervals_split(const StivFit& fit, const SensitivityReport& sr,
                                                   double r,
                                                   const std::vector<Eigen::Index>& split)
{
    if (fit.spec.c && std::abs(sr.c - *fit.spec.c) > 1e-12)
        fail(ErrorCode::MismatchedReport, "sensitivity report computed for a different c");
    const Eigen::Index bigk = fit.beta_hat.size();
    std::vector<char> in_split(static_cast<std::size_t>(bigk), 0);
    for (Eigen::Index k : split) in_split[static_cast<std::size_t>(k)] = 1;
    std::vector<Eigen::Index> complement;
    for (Eigen::Index k = 0; k < bigk; ++k)
        if (!in_split[static_cast<std::size_t>(k)]) complement.push_back(k);

    const double k_split = kappa_general(sr.kappa_coord, split, 1.0, sr.s, sr.cone);
    const double k_comp = kappa_general(sr.kappa_coord, complement, 1.0, sr.s, sr.cone);
    const double denom = 1.0 - (std::isinf(k_split) ? 0.0 : r / k_split) -
                         (std::isinf(k_comp) ? 0.0 : r * r / k_comp);
    ConfidenceReport rep = detail::build_report(fit, sr.kappa_coord, sr.kappa1, denom,
                                                DenomKind::split, r, sr.s, sr.method + "-split");
    return rep;
}

/// Heavy-tail-normalized variant: the same split denominator with the set of
/// regressors serving as their own instruments entering at order r^2.
inline ConfidenceReport confidence_intervals_ht(const StivFit& fit, const SensitivityReport& sr,
                                                double r, const std::vector<Eigen::Index>& j_exo)
{
    const Eigen::Index bigk = fit.beta_hat.size();
    std::vector<char> exo(static_cast<std::size_t>(bigk), 0);
    for (Eigen::Index k : j_exo) exo[static_cast<std::size_t>(k)] = 1;
    std::vector<Eigen::Index> j_exo_c;
    for (Eigen::Index k = 0; k < bigk; ++k)
        if (!exo[static_cast<std::size_t>(k)]) j_exo_c.push_back(k);
    return confidence_intervals_split(fit, sr, r, j_exo_c);
}

/// Plug-in confidence sets: the fitted support replaces the sparsity
/// certificate inside exact cone batteries. Approximate level by construction.
inline ConfidenceReport plugin_confidence(const StivFit& fit, const PsiMatrix& psi, double r,
                                          const SensOptions& opt = {},
                                          std::optional<std::vector<Eigen::Index>> split = {})
{
    const double c = fit.spec.c.value_or(0.0);
    const Eigen::Index bigk = fit.beta_hat.size();
    const std::vector<Eigen::Index> jhat = fit.support;
    ConeFactor cf = ConeFactor::dominant(c, std::max<int>(1, static_cast<int>(jhat.size())));

    if (jhat.empty()) {
        // kappa_{p,empty,J} = inf: all halfwidths collapse to zero
        ConfidenceReport rep = detail::build_report(fit, VectorXd::Constant(bigk, kInf), kInf, 1.0,
                                                    DenomKind::band, r, 0, "plugin-empty");
        for (Eigen::Index k = 0; k < bigk; ++k) rep.halfwidth[k] = rep.omega[k] = 0.0;
        rep.infinite.assign(static_cast<std::size_t>(bigk), false);
        return rep;
    }

    VectorXd coords(bigk);
    std::string method = "plugin";
    if (static_cast<int>(jhat.size()) <= opt.block_limit) {
        for (Eigen::Index k = 0; k < bigk; ++k) coords[k] = kappa_coord_exact(psi, k, jhat, cf, opt);
    } else {
        // documented fallback: certificate battery with s = |J(beta)|
        method = "plugin-fallback-certificate";
        coords = kappa_coord_cert_all(psi, static_cast<int>(jhat.size()), cf, opt);
    }
    const double kappa1_j =
        (1.0 - c) / (2.0 * static_cast<double>(jhat.size())) * coords.minCoeff();

    if (split) {
        std::vector<char> in_split(static_cast<std::size_t>(bigk), 0);
        for (Eigen::Index k : *split) in_split[static_cast<std::size_t>(k)] = 1;
        std::vector<Eigen::Index> complement;
        for (Eigen::Index k = 0; k < bigk; ++k)
            if (!in_split[static_cast<std::size_t>(k)]) complement.push_back(k);
        double k_split = kInf, k_comp = kInf;
        for (Eigen::Index k : *split) k_split = std::min(k_split, coords[k]);
        if (!complement.empty()) k_comp = kappa1_j; // block bound through the l1 rule
        const double denom = 1.0 - (std::isinf(k_split) ? 0.0 : r / k_split) -
                             (std::isinf(k_comp) ? 0.0 : r * r / k_comp);
        return detail::build_report(fit, coords, kappa1_j, denom, DenomKind::split, r,
                                    static_cast<int>(jhat.size()), method + "-split");
    }
    const double denom = 1.0 - r / kappa1_j;
    return detail::build_report(fit, coords, kappa1_j, denom, DenomKind::band, r,
                                static_cast<int>(jhat.size()), method);
}

/// Nested family over increasing sparsity certificates; widths are
/// nondecreasing in s by construction and asserted here.
inline std::vector<ConfidenceReport> nested_confsets(const StivFit& fit, const PsiMatrix& psi,
                                                     double r, std::vector<int> s_values,
                                                     const SensOptions& opt = {})
{
    std::vector<ConfidenceReport> out;
    if (s_values.empty()) return out;
    for (std::size_t i = 1; i < s_values.size(); ++i)
        if (s_values[i] < s_values[i - 1]) fail(ErrorCode::InvalidParams, "s grid must be ascending");
    const double c = fit.spec.c.value_or(0.0);
    for (int s : s_values) {
        SensitivityReport sr = compute_sensitivities(psi, s, c, false, opt);
        out.push_back(confidence_intervals(fit, sr, r));
    }
    for (std::size_t i = 1; i < out.size(); ++i)
        for (Eigen::Index k = 0; k < out[i].halfwidth.size(); ++k) {
            const double prev = out[i - 1].halfwidth[k];
            const double cur = out[i].halfwidth[k];
            if (!(cur >= prev - 1e-9 * (1.0 + std::abs(prev))))
                fail(ErrorCode::SolverFailure, "nested family lost monotonicity; solver tolerance?");
        }
    return out;
}

struct Selection {
    std::vector<Eigen::Index> support;
    Eigen::VectorXi signs;
    VectorXd omega;
    bool infinite_threshold = false;
    VectorXd thresholded; // beta after thresholding
};

/// Threshold the fit at the data-driven levels omega_k (same formula as the
/// matching confidence halfwidths). When the denominator collapses the
/// selection refuses and returns the flag instead.
inline Selection threshold_select(const StivFit& fit, const ConfidenceReport& rep)
{
    const Eigen::Index bigk = fit.beta_hat.size();
    Selection sel;
    sel.signs = Eigen::VectorXi::Zero(bigk);
    sel.omega = rep.omega;
    sel.thresholded = VectorXd::Zero(bigk);
    if (rep.denominator <= 0.0 && fit.sigma_hat > 0.0) {
        sel.infinite_threshold = true;
        return sel;
    }
    for (Eigen::Index k = 0; k < bigk; ++k) {
        if (std::isinf(rep.omega[k])) continue;
        if (std::abs(fit.beta_hat[k]) > rep.omega[k]) {
            sel.support.push_back(k);
            sel.signs[k] = sign_of(fit.beta_hat[k]);
            sel.thresholded[k] = fit.beta_hat[k];
        }
    }
    return sel;
}

inline Selection threshold_select(const StivFit& fit, const SensitivityReport& sr, double r)
{
    return threshold_select(fit, confidence_intervals(fit, sr, r));
}

struct ApproxSparseBound {
    std::vector<Eigen::Index> j0;
    double p = kInf;
    double bound = kInf;
    std::vector<Eigen::Index> best_j;
    double variance_term = kInf;
    double bias_term = kInf;
};

/// Oracle-style bias/variance bound over candidate supports using
/// enlarged-cone sensitivities; the bias term uses the fitted coefficients as
/// the reference (an estimate, not a certified bound, and labeled so).
inline std::vector<ApproxSparseBound> approx_sparse_bound(
    const StivFit& fit, const PsiMatrix& psi, double r,
    const std::vector<std::vector<Eigen::Index>>& j_candidates,
    const std::vector<std::pair<std::vector<Eigen::Index>, double>>& j0_list,
    const SensOptions& opt = {})
{
    const double c = fit.spec.c.value_or(0.0);
    const Eigen::Index bigk = fit.beta_hat.size();
    std::vector<ApproxSparseBound> out;
    for (const auto& [j0, p] : j0_list) {
        ApproxSparseBound best;
        best.j0 = j0;
        best.p = p;
        for (const auto& j : j_candidates) {
            if (static_cast<int>(j.size()) > opt.block_limit)
                fail(ErrorCode::BlockTooLarge, "candidate support too large for the exact battery");
            const ConeFactor cf = ConeFactor::enlarged(c, std::max<int>(1, static_cast<int>(j.size())));
            double bias = 0.0;
            std::vector<char> in_j(static_cast<std::size_t>(bigk), 0);
            for (Eigen::Index k : j) in_j[static_cast<std::size_t>(k)] = 1;
            for (Eigen::Index k = 0; k < bigk; ++k)
                if (!in_j[static_cast<std::size_t>(k)])
                    bias += std::abs(fit.beta_hat[k]) / fit.dx.entries[k];
            bias *= 6.0 / (1.0 - c);

            double variance = kInf;
            if (!j.empty()) {
                double min_block = kInf, min_all = kInf;
                VectorXd coords(bigk);
                for (Eigen::Index k = 0; k < bigk; ++k) {
                    coords[k] = kappa_coord_exact(psi, k, j, cf, opt);
                    min_all = std::min(min_all, coords[k]);
                }
                for (Eigen::Index k : j0) min_block = std::min(min_block, coords[k]);
                const double kappa_p =
                    std::isinf(p) ? min_block
                                  : std::pow(static_cast<double>(j0.size()), -1.0 / p) * min_block;
                const double kappa1_tilde =
                    min_all / ((1.0 + cf.ratio) * static_cast<double>(j.size()));
                const double denom = 1.0 - r / kappa1_tilde;
                variance = (fit.sigma_hat == 0.0)
                               ? 0.0
                               : (denom <= 0.0 || kappa_p <= 0.0
                                      ? kInf
                                      : 2.0 * fit.sigma_hat * r / kappa_p / denom);
            } else {
                variance = 0.0; // empty candidate: all mass in the bias term
            }
            const double total = std::max(variance, bias);
            if (total < best.bound) {
                best.bound = total;
                best.best_j = j;
                best.variance_term = variance;
                best.bias_term = bias;
            }
        }
        out.push_back(std::move(best));
    }
    return out;
}

/// Grid search over c: refit per grid point and report, per coordinate, the c
/// with the smallest certificate interval.
struct CGridResult {
    std::vector<double> c_grid;
    std::vector<ConfidenceReport> reports;
    std::vector<int> best_c_index; // per coordinate
};

inline CGridResult c_grid_confidence(const Dataset& ds, StivSpec spec, const PsiMatrix& psi,
                                     double r, int s, const std::vector<double>& c_grid,
                                     const FitOptions& fit_opt = {}, const SensOptions& sens_opt = {})
{
    CGridResult out;
    out.c_grid = c_grid;
    for (double c : c_grid) {
        spec.c = c;
        StivFit fit = fit_stiv(ds, spec, fit_opt);
        SensitivityReport sr = compute_sensitivities(psi, s, c, false, sens_opt);
        out.reports.push_back(confidence_intervals(fit, sr, r));
    }
    const Eigen::Index bigk = ds.num_regressors();
    out.best_c_index.assign(static_cast<std::size_t>(bigk), 0);
    for (Eigen::Index k = 0; k < bigk; ++k) {
        double best = kInf;
        for (std::size_t i = 0; i < out.reports.size(); ++i) {
            const double w = out.reports[i].halfwidth[k];
            if (w < best) {
                best = w;
                out.best_c_index[static_cast<std::size_t>(k)] = static_cast<int>(i);
            }
        }
    }
    return out;
}

} // namespace stiv
