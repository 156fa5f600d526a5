#pragma once

#include <filesystem>
#include <string>

#include "stiv/report.hpp"

namespace stiv {

/// Tuning shared by the bundled simulation-study profiles. The cone constant
/// c feeds every sensitivity and interval formula; the objective runs with a
/// heavier sigma weight (scaled with sqrt(n)) because that is the regime in
/// which the program actually selects rather than shrinking everything away.
struct StudyTuning {
    double c = 0.1;
    double alpha = 0.05;
    int s = 5;
    double sigma_weight_factor = 1.0 / 0.3;    // second stage / structural fits
    double sigma_weight_factor_rf = 1.0 / 1.1; // reduced-form fits
    int threads = 0;

    double sigma_weight(Eigen::Index n) const
    {
        return sigma_weight_factor * std::sqrt(static_cast<double>(n));
    }
    double sigma_weight_rf(Eigen::Index n) const
    {
        return sigma_weight_factor_rf * std::sqrt(static_cast<double>(n));
    }
};

inline double study_r(const StudyTuning& t, const Dataset& ds)
{
    ScenarioSpec s4;
    s4.scenario = 4;
    s4.alpha = t.alpha;
    return select_r(s4, ds.n(), ds.num_instruments()).r;
}

/// Small-sample fit: maxabs regressor normalization with the single
/// plain-residual cone (the fast variant).
inline StivFit study_fit_small(const Dataset& ds, const StudyTuning& t, double r)
{
    StivSpec spec;
    spec.c = t.c;
    spec.r = r;
    spec.dx_mode = ScaleMode::maxabs;
    spec.cone_set = {*ds.const_instr_idx};
    spec.sigma_weight = t.sigma_weight(ds.n());
    return fit_stiv(ds, spec);
}

struct StudyCi {
    double r = 0.0;
    StivFit fit;
    PsiMatrix psi;
    SensitivityReport sr;
    ConfidenceReport ci;  // certificate path, split denominator over J_exo
    Selection sel;        // thresholded at the matching omegas
};

/// Certificate pipeline used by the large-sample tables: rms normalization,
/// every instrument carrying a conic constraint, split-denominator intervals
/// with the exogenous block entering at order r^2, and threshold selection.
inline StudyCi study_pipeline(const Dataset& ds, const StudyTuning& t)
{
    StudyCi out;
    out.r = study_r(t, ds);
    StivSpec spec;
    spec.c = t.c;
    spec.r = out.r;
    spec.dx_mode = ScaleMode::rms;
    for (Eigen::Index l = 0; l < ds.num_instruments(); ++l) spec.cone_set.insert(l);
    spec.sigma_weight = t.sigma_weight(ds.n());
    out.fit = fit_stiv(ds, spec);
    out.psi = compute_psi(ds, out.fit.dx, out.fit.dz, spec.cone_set);
    SensOptions sopt;
    sopt.threads = t.threads;
    out.sr = compute_sensitivities(out.psi, t.s, t.c, false, sopt);
    out.ci = confidence_intervals_ht(out.fit, out.sr, out.r, ds.exo_idx);
    out.sel = threshold_select(out.fit, out.ci);
    return out;
}

/// Plug-in columns: exact cone batteries on a fitted support estimate, same
/// split denominator.
struct PluginColumns {
    std::vector<Eigen::Index> jhat;
    VectorXd kappa;     // kappa*_{k, Jhat}
    VectorXd halfwidth; // plug-in interval halfwidths
    VectorXd omega;     // plug-in thresholds
    double denominator = 0.0;
};

inline PluginColumns plugin_columns(const PsiMatrix& psi, const StivFit& fit, double r,
                                    const std::vector<Eigen::Index>& exo_idx,
                                    std::vector<Eigen::Index> jhat, const StudyTuning& t)
{
    PluginColumns out;
    out.jhat = std::move(jhat);
    const Eigen::Index bigk = psi.values.cols();
    out.kappa = VectorXd::Zero(bigk);
    out.halfwidth = VectorXd::Constant(bigk, kInf);
    out.omega = VectorXd::Constant(bigk, kInf);
    if (out.jhat.empty() || static_cast<int>(out.jhat.size()) > 12) return out;
    SensOptions sopt;
    sopt.threads = t.threads;
    const ConeFactor cf = ConeFactor::dominant(t.c, static_cast<int>(out.jhat.size()));
    for (Eigen::Index k = 0; k < bigk; ++k)
        out.kappa[k] = kappa_coord_exact(psi, k, out.jhat, cf, sopt);
    const double kappa1_j =
        (1.0 - t.c) / (2.0 * static_cast<double>(out.jhat.size())) * out.kappa.minCoeff();
    // endogenous block at order r, exogenous at order r^2
    std::vector<char> exo(static_cast<std::size_t>(bigk), 0);
    for (Eigen::Index k : exo_idx) exo[static_cast<std::size_t>(k)] = 1;
    double k_split = kInf;
    for (Eigen::Index k = 0; k < bigk; ++k)
        if (!exo[static_cast<std::size_t>(k)]) k_split = std::min(k_split, out.kappa[k]);
    const double denom = 1.0 - (std::isinf(k_split) ? 0.0 : r / k_split) - r * r / kappa1_j;
    out.denominator = positive_part(denom);
    for (Eigen::Index k = 0; k < bigk; ++k) {
        if (fit.sigma_hat == 0.0) {
            out.halfwidth[k] = 0.0;
        } else if (denom <= 0.0 || out.kappa[k] <= 0.0) {
            out.halfwidth[k] = kInf;
        } else {
            out.halfwidth[k] =
                2.0 * fit.sigma_hat * r / ((1.0 / fit.dx.entries[k]) * out.kappa[k]) / denom;
        }
        out.omega[k] = out.halfwidth[k];
    }
    return out;
}

inline PluginColumns plugin_columns(const Dataset& ds, const StudyCi& base,
                                    std::vector<Eigen::Index> jhat, const StudyTuning& t)
{
    return plugin_columns(base.psi, base.fit, base.r, ds.exo_idx, std::move(jhat), t);
}

/// Two-stage pipeline used by the comparative tables (rms scaling of the
/// estimated instrument; see the first-stage report for the propagation
/// constant under the enlarged-maxabs convention).
inline TwoStageResult study_two_stage(const Dataset& ds, const StudyTuning& t, double r,
                                      Eigen::Index k_end = 0)
{
    TwoStageConfig cfg;
    cfg.c = t.c;
    cfg.c_rf = t.c;
    cfg.r = r;
    cfg.s = t.s;
    cfg.scale = TwoStageScale::rms;
    cfg.sigma_weight = t.sigma_weight(ds.n());
    cfg.sigma_weight_rf = t.sigma_weight_rf(ds.n());
    SensOptions sopt;
    sopt.threads = t.threads;
    FirstStageFit fsf = fit_first_stage(ds, k_end, cfg, {}, sopt);
    return fit_stiv_2s(ds, fsf, k_end, cfg, {}, sopt);
}

struct ProfileOptions {
    std::string out_dir = ".";
    std::uint64_t seed = 1;
    Eigen::Index reps = 0; // 0: profile default
    StudyTuning tuning;
    DgpConfig dgp; // n/K/L may be overridden per profile
};

namespace detail {

inline Json profile_echo(const std::string& profile, const ProfileOptions& opt, const DgpConfig& dgp,
                         Eigen::Index reps)
{
    return Json{{"profile", profile},
                {"seed", opt.seed},
                {"reps", static_cast<long>(reps)},
                {"n", static_cast<long>(dgp.n)},
                {"K", static_cast<long>(dgp.num_regressors)},
                {"L", static_cast<long>(dgp.num_instruments)},
                {"alpha", opt.tuning.alpha},
                {"c", opt.tuning.c},
                {"s", opt.tuning.s},
                {"sigma_weight_factor", opt.tuning.sigma_weight_factor},
                {"sigma_weight_factor_rf", opt.tuning.sigma_weight_factor_rf},
                {"scenario", 4}};
}

inline std::string path_of(const ProfileOptions& opt, const std::string& name)
{
    std::filesystem::create_directories(opt.out_dir);
    return (std::filesystem::path(opt.out_dir) / name).string();
}

} // namespace detail

/// Small-sample single-dataset study: estimates, exact and certificate
/// sensitivity columns for the all-instruments and two-stage variants, and
/// the interval-availability diagnosis.
struct Table1Result {
    StudyCi all;
    PluginColumns all_plugin;
    bool intervals_infinite = true;
    double r_over_kappa = kInf;
    bool two_stage_degenerate = false;
    std::string two_stage_note;
    Json json;
};

inline Table1Result run_table1(const ProfileOptions& opt)
{
    DgpConfig dgp = opt.dgp;
    dgp.seed = opt.seed;
    const Dataset ds = gen_dgp(dgp);
    Table1Result out;
    out.all = study_pipeline(ds, opt.tuning);

    // plug-in support estimate: the coordinates with the largest scaled fits
    std::vector<Eigen::Index> jhat;
    {
        std::vector<std::pair<double, Eigen::Index>> ranked;
        for (Eigen::Index k = 0; k < ds.num_regressors(); ++k)
            ranked.emplace_back(-std::abs(out.all.fit.beta_hat[k]) * out.all.fit.rms_scale[k], k);
        std::sort(ranked.begin(), ranked.end());
        for (int k = 0; k < opt.tuning.s && k < static_cast<int>(ranked.size()); ++k)
            if (-ranked[static_cast<std::size_t>(k)].first > 0.0)
                jhat.push_back(ranked[static_cast<std::size_t>(k)].second);
        std::sort(jhat.begin(), jhat.end());
    }
    out.all_plugin = plugin_columns(ds, out.all, jhat, opt.tuning);
    out.intervals_infinite = out.all.ci.any_infinite();
    if (out.all_plugin.kappa.size() > 0 && !jhat.empty()) {
        double k_end_kappa = kInf;
        std::vector<char> exo(static_cast<std::size_t>(ds.num_regressors()), 0);
        for (Eigen::Index k : ds.exo_idx) exo[static_cast<std::size_t>(k)] = 1;
        for (Eigen::Index k = 0; k < ds.num_regressors(); ++k)
            if (!exo[static_cast<std::size_t>(k)]) k_end_kappa = std::min(k_end_kappa, out.all_plugin.kappa[k]);
        out.r_over_kappa = out.all.r / k_end_kappa;
    }

    TextTable t({"coef", "beta", "kappa_plugin", "kappa_cert"});
    Json coef_rows = Json::array();
    TwoStageResult ts;
    PluginColumns ts_plugin;
    try {
        ts = study_two_stage(ds, opt.tuning, out.all.r);
        ts_plugin = plugin_columns(ts.psi, ts.fit, out.all.r, ds.exo_idx, jhat, opt.tuning);
    } catch (const Error& e) {
        out.two_stage_degenerate = true;
        out.two_stage_note = e.what();
    }
    for (Eigen::Index k = 0; k < ds.num_regressors(); ++k) {
        t.add_row({"b" + std::to_string(k + 1), TextTable::num(out.all.fit.beta_hat[k], 3),
                   TextTable::num(out.all_plugin.kappa.size() ? out.all_plugin.kappa[k] : 0.0, 4),
                   TextTable::num(out.all.sr.kappa_coord[k], 4)});
        coef_rows.push_back(Json{{"beta", out.all.fit.beta_hat[k]},
                                 {"kappa_plugin", out.all_plugin.kappa.size() ? out.all_plugin.kappa[k] : 0.0},
                                 {"kappa_cert", out.all.sr.kappa_coord[k]}});
    }

    const Json echo = detail::profile_echo("table1", opt, dgp, 1);
    std::vector<std::string> notes{
        "intervals " + std::string(out.intervals_infinite ? "infinite" : "finite") +
        " (r over the weakest plug-in coordinate sensitivity: " + TextTable::num(out.r_over_kappa, 2) + ")"};
    std::vector<std::pair<std::string, TextTable>> sections{{"all instruments", t}};
    if (!out.two_stage_degenerate) {
        TextTable t2({"coef", "beta_2s", "kappa_plugin_2s", "kappa_cert_2s"});
        for (Eigen::Index k = 0; k < ds.num_regressors(); ++k)
            t2.add_row({"b" + std::to_string(k + 1), TextTable::num(ts.fit.beta_hat[k], 3),
                        TextTable::num(ts_plugin.kappa.size() ? ts_plugin.kappa[k] : 0.0, 4),
                        TextTable::num(ts.sr.kappa_coord[k], 4)});
        sections.emplace_back("estimated projection instrument", t2);
    } else {
        notes.push_back("two-stage variant unavailable: " + out.two_stage_note);
    }
    write_text_report(detail::path_of(opt, "table1.txt"), echo, sections, notes);

    out.json = Json{{"coefficients", coef_rows},
                    {"sigma", out.all.fit.sigma_hat},
                    {"r", out.all.r},
                    {"intervals_infinite", out.intervals_infinite},
                    {"r_over_kappa", std::isfinite(out.r_over_kappa) ? Json(out.r_over_kappa) : Json("inf")},
                    {"two_stage_degenerate", out.two_stage_degenerate}};
    write_json_report(detail::path_of(opt, "table1.json"), echo, out.json);
    return out;
}

/// Monte-Carlo percentile study of the small-sample fit.
inline McSummary run_table3(const ProfileOptions& opt)
{
    DgpConfig dgp = opt.dgp;
    dgp.seed = opt.seed;
    const Eigen::Index reps = opt.reps > 0 ? opt.reps : 1000;
    StudyTuning tuning = opt.tuning;
    McSummary s = run_mc(
        dgp, reps,
        [&](const Dataset& ds, std::uint64_t) {
            RepOutcome out;
            StivFit fit = study_fit_small(ds, tuning, study_r(tuning, ds));
            out.beta = fit.beta_hat;
            out.sigma = fit.sigma_hat;
            return out;
        },
        tuning.threads);

    const Json echo = detail::profile_echo("table3", opt, dgp, reps);
    TextTable t({"coef", "p05", "median", "p95"});
    for (Eigen::Index k = 0; k < dgp.num_regressors; ++k)
        t.add_row({"b" + std::to_string(k + 1), TextTable::num(s.beta_pct(k, 0), 3),
                   TextTable::num(s.beta_pct(k, 1), 3), TextTable::num(s.beta_pct(k, 2), 3)});
    t.add_row({"sigma", TextTable::num(s.sigma_pct[0], 3), TextTable::num(s.sigma_pct[1], 3),
               TextTable::num(s.sigma_pct[2], 3)});
    write_text_report(detail::path_of(opt, "table3.txt"), echo, {{"percentiles", t}});
    write_json_report(detail::path_of(opt, "table3.json"), echo, to_json(s));
    return s;
}

/// Large-sample interval/selection table: certificate and plug-in interval
/// limits, sensitivities, and thresholds per coordinate.
struct Table5Result {
    StudyCi base;
    PluginColumns plugin;
    Json json;
};

inline Table5Result run_table5(const ProfileOptions& opt)
{
    DgpConfig dgp = opt.dgp;
    if (dgp.n == 49) dgp.n = 8000;
    dgp.seed = opt.seed;
    const Dataset ds = gen_dgp(dgp);
    Table5Result out;
    out.base = study_pipeline(ds, opt.tuning);
    out.plugin = plugin_columns(ds, out.base, out.base.sel.support, opt.tuning);

    const Json echo = detail::profile_echo("table5", opt, dgp, 1);
    TextTable t({"coef", "lo_cert", "lo_plug", "beta", "hi_plug", "hi_cert", "kappa_plug",
                 "kappa_cert", "omega_plug", "omega_cert"});
    Json rows = Json::array();
    for (Eigen::Index k = 0; k < ds.num_regressors(); ++k) {
        const double b = out.base.fit.beta_hat[k];
        const double wc = out.base.ci.halfwidth[k];
        const double wp = out.plugin.halfwidth[k];
        t.add_row({"b" + std::to_string(k + 1), TextTable::num(b - wc, 3), TextTable::num(b - wp, 3),
                   TextTable::num(b, 3), TextTable::num(b + wp, 3), TextTable::num(b + wc, 3),
                   TextTable::num(out.plugin.kappa.size() ? out.plugin.kappa[k] : 0.0, 3),
                   TextTable::num(out.base.sr.kappa_coord[k], 3),
                   TextTable::num(out.plugin.omega[k], 3), TextTable::num(out.base.ci.omega[k], 3)});
        rows.push_back(Json{{"beta", b},
                            {"halfwidth_cert", std::isfinite(wc) ? Json(wc) : Json("inf")},
                            {"halfwidth_plugin", std::isfinite(wp) ? Json(wp) : Json("inf")},
                            {"kappa_cert", out.base.sr.kappa_coord[k]},
                            {"kappa_plugin", out.plugin.kappa.size() ? Json(out.plugin.kappa[k]) : Json()}});
    }
    std::vector<std::string> notes{
        "sigma " + TextTable::num(out.base.fit.sigma_hat, 4) + ", r " + TextTable::num(out.base.r, 4),
        "selected support size " + std::to_string(out.base.sel.support.size())};
    write_text_report(detail::path_of(opt, "table5.txt"), echo, {{"intervals and selection", t}}, notes);
    out.json = Json{{"rows", rows},
                    {"sigma", out.base.fit.sigma_hat},
                    {"r", out.base.r},
                    {"selected", to_json(out.base.sel.support)},
                    {"any_infinite", out.base.ci.any_infinite()}};
    write_json_report(detail::path_of(opt, "table5.json"), echo, out.json);
    return out;
}

/// Comparative table: all-instruments run against the two-stage run with the
/// estimated projection instrument.
struct Table7Result {
    StudyCi all;
    TwoStageResult two_stage;
    bool tighter_endogenous = false;
    Json json;
};

inline Table7Result run_table7(const ProfileOptions& opt)
{
    DgpConfig dgp = opt.dgp;
    if (dgp.n == 49) dgp.n = 8000;
    dgp.seed = opt.seed;
    const Dataset ds = gen_dgp(dgp);
    Table7Result out;
    out.all = study_pipeline(ds, opt.tuning);
    out.two_stage = study_two_stage(ds, opt.tuning, out.all.r);
    out.tighter_endogenous = out.two_stage.report.halfwidth[0] < out.all.ci.halfwidth[0];

    const Json echo = detail::profile_echo("table7", opt, dgp, 1);
    TextTable t({"coef", "beta_all", "hw_all", "kappa_all", "beta_2s", "hw_2s", "kappa_2s"});
    for (Eigen::Index k = 0; k < ds.num_regressors(); ++k)
        t.add_row({"b" + std::to_string(k + 1), TextTable::num(out.all.fit.beta_hat[k], 3),
                   TextTable::num(out.all.ci.halfwidth[k], 3),
                   TextTable::num(out.all.sr.kappa_coord[k], 3),
                   TextTable::num(out.two_stage.fit.beta_hat[k], 3),
                   TextTable::num(out.two_stage.report.halfwidth[k], 3),
                   TextTable::num(out.two_stage.sr.kappa_coord[k], 3)});
    std::vector<std::string> notes{
        std::string("endogenous interval ") +
        (out.tighter_endogenous ? "tighter" : "not tighter") + " with the estimated instrument"};
    write_text_report(detail::path_of(opt, "table7.txt"), echo, {{"comparison", t}}, notes);
    out.json = Json{{"halfwidth_all", to_json(out.all.ci.halfwidth)},
                    {"halfwidth_2s", to_json(out.two_stage.report.halfwidth)},
                    {"first_stage", to_json(out.two_stage.first_stage)},
                    {"tighter_endogenous", out.tighter_endogenous}};
    write_json_report(detail::path_of(opt, "table7.json"), echo, out.json);
    return out;
}

} // namespace stiv
