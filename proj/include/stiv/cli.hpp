#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "stiv/csv.hpp"
#include "stiv/profiles.hpp"

namespace stiv::cli {

/// Resolved run configuration. Flags override config-file keys; every report
/// echoes the resolved form.
struct RunConfig {
    std::string command;
    std::string data_path;
    // column roles
    std::string outcome;
    std::vector<std::string> regressors;
    std::vector<std::string> instruments;
    std::vector<std::string> zbar;
    std::string constant; // column name, or "add" to append a ones column
    std::vector<std::string> exogenous;
    // tuning
    ScenarioSpec scenario;
    double c = 0.1;
    std::vector<double> c_grid;
    int s = 1;
    std::vector<int> s_list;
    std::optional<double> r_override;
    std::string cone_set = "constant"; // "constant" | "all" | comma list of indices
    std::string normalization = "rms";
    std::optional<double> sigma_weight; // absent: c; "auto" resolves to sqrt(n)/0.3
    bool sigma_weight_auto = false;
    double zero_clip = 1e-6;
    int threads = 0;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    bool dump_program = false;
    // two-stage
    Eigen::Index k_end = 0;
    std::string two_stage_scale = "rms";
    // simulate
    std::string profile;
    Eigen::Index reps = 0;
    DgpConfig dgp;

    Json echo;

    static RunConfig from_json(const Json& j);
};

inline const std::vector<std::string> kCommands{"fit",      "sens", "ci",      "select",
                                                "twostage", "nv",   "simulate"};

inline RunConfig RunConfig::from_json(const Json& j)
{
    RunConfig cfg;
    cfg.echo = j;
    cfg.command = j.value("command", "");
    bool known = false;
    for (const auto& c : kCommands) known = known || c == cfg.command;
    if (!known) {
        std::string list;
        for (const auto& c : kCommands) list += (list.empty() ? "" : ", ") + c;
        fail(ErrorCode::ParseError, "unknown command '" + cfg.command + "' (expected one of " + list + ")");
    }
    cfg.data_path = j.value("data", "");
    if (j.contains("roles")) {
        const Json& r = j["roles"];
        cfg.outcome = r.value("outcome", "");
        cfg.regressors = r.value("regressors", std::vector<std::string>{});
        cfg.instruments = r.value("instruments", std::vector<std::string>{});
        cfg.zbar = r.value("zbar", std::vector<std::string>{});
        cfg.constant = r.value("constant", "");
        cfg.exogenous = r.value("exogenous", std::vector<std::string>{});
    }
    if (j.contains("scenario")) {
        const Json& s = j["scenario"];
        cfg.scenario.scenario = s.value("id", 4);
        cfg.scenario.alpha = s.value("alpha", 0.05);
        cfg.scenario.mc_draws = s.value("draws", 10000);
        cfg.scenario.seed = s.value("seed", std::uint64_t{1});
        cfg.scenario.error_dist = s.value("error_dist", "normal");
        cfg.scenario.t_df = s.value("t_df", 5.0);
        if (s.contains("c4") && !s["c4"].is_null()) cfg.scenario.c4 = s["c4"].get<double>();
        if (s.contains("delta")) cfg.scenario.delta = s["delta"].get<double>();
    }
    cfg.c = j.value("c", 0.1);
    cfg.c_grid = j.value("c_grid", std::vector<double>{});
    cfg.s = j.value("s", 1);
    cfg.s_list = j.value("s_list", std::vector<int>{});
    if (j.contains("r") && !j["r"].is_null()) cfg.r_override = j["r"].get<double>();
    if (j.contains("cone_set")) {
        if (j["cone_set"].is_string())
            cfg.cone_set = j["cone_set"].get<std::string>();
        else {
            cfg.cone_set.clear();
            for (const auto& v : j["cone_set"])
                cfg.cone_set += (cfg.cone_set.empty() ? "" : ",") + std::to_string(v.get<long>());
        }
    }
    cfg.normalization = j.value("normalization", "rms");
    if (cfg.normalization != "rms" && cfg.normalization != "maxabs")
        fail(ErrorCode::ParseError, "normalization must be rms or maxabs");
    if (j.contains("sigma_weight") && !j["sigma_weight"].is_null()) {
        if (j["sigma_weight"].is_string() && j["sigma_weight"] == "auto")
            cfg.sigma_weight_auto = true;
        else
            cfg.sigma_weight = j["sigma_weight"].get<double>();
    }
    cfg.zero_clip = j.value("zero_clip", 1e-6);
    cfg.threads = j.value("threads", 0);
    cfg.seed = j.value("seed", std::uint64_t{1});
    if (const char* env = std::getenv("STIV_OUTPUT_DIR")) cfg.out_dir = env;
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.dump_program = j.value("dump_program", false);
    cfg.k_end = j.value("k_end", 0);
    cfg.two_stage_scale = j.value("two_stage_scale", "rms");
    cfg.profile = j.value("profile", "");
    cfg.reps = j.value("reps", 0);
    if (j.contains("dgp")) {
        const Json& d = j["dgp"];
        cfg.dgp.n = d.value("n", 49);
        cfg.dgp.num_regressors = d.value("K", 25);
        cfg.dgp.num_instruments = d.value("L", 50);
        cfg.dgp.sigma_struct = d.value("sigma_struct", 0.3);
        cfg.dgp.sigma_end = d.value("sigma_end", 0.3);
        cfg.dgp.rho = d.value("rho", 0.3);
    }
    return cfg;
}

namespace detail {

struct Loaded {
    Dataset ds;
    std::vector<std::string> names;
};

inline Loaded load_dataset(const RunConfig& cfg)
{
    if (cfg.data_path.empty()) fail(ErrorCode::ParseError, "no input data file given");
    CsvTable t = read_csv_file(cfg.data_path);
    if (cfg.outcome.empty() || cfg.regressors.empty() || cfg.instruments.empty())
        fail(ErrorCode::ParseError, "roles must name the outcome, regressors and instruments");

    std::map<std::string, int> used;
    const auto claim = [&](const std::string& name, const char* role) {
        if (++used[name] > 1)
            fail(ErrorCode::ParseError, "column '" + name + "' assigned to more than one role (" + role + ")");
    };
    claim(cfg.outcome, "outcome");
    for (const auto& nm : cfg.regressors) claim(nm, "regressor");
    for (const auto& nm : cfg.instruments) claim(nm, "instrument");
    for (const auto& nm : cfg.zbar) claim(nm, "zbar");

    Loaded out;
    out.ds.y = t.values.col(t.column(cfg.outcome));
    out.ds.x.resize(t.values.rows(), static_cast<Eigen::Index>(cfg.regressors.size()));
    for (std::size_t k = 0; k < cfg.regressors.size(); ++k)
        out.ds.x.col(static_cast<Eigen::Index>(k)) = t.values.col(t.column(cfg.regressors[k]));
    const bool add_const = cfg.constant == "add";
    const Eigen::Index bigl = static_cast<Eigen::Index>(cfg.instruments.size()) + (add_const ? 1 : 0);
    out.ds.z.resize(t.values.rows(), bigl);
    for (std::size_t l = 0; l < cfg.instruments.size(); ++l)
        out.ds.z.col(static_cast<Eigen::Index>(l)) = t.values.col(t.column(cfg.instruments[l]));
    if (add_const) {
        out.ds.z.col(bigl - 1).setOnes();
        out.ds.const_instr_idx = bigl - 1;
    } else if (!cfg.constant.empty()) {
        for (std::size_t l = 0; l < cfg.instruments.size(); ++l)
            if (cfg.instruments[l] == cfg.constant)
                out.ds.const_instr_idx = static_cast<Eigen::Index>(l);
        if (!out.ds.const_instr_idx)
            fail(ErrorCode::ParseError, "constant column '" + cfg.constant + "' is not an instrument");
    } else {
        out.ds.const_instr_idx = out.ds.find_constant_instrument();
        if (!out.ds.const_instr_idx)
            fail(ErrorCode::ConstantMissing,
                 "no all-ones instrument column; name one under roles.constant or use \"add\"");
    }
    if (!cfg.zbar.empty()) {
        out.ds.zbar.resize(t.values.rows(), static_cast<Eigen::Index>(cfg.zbar.size()));
        for (std::size_t l = 0; l < cfg.zbar.size(); ++l)
            out.ds.zbar.col(static_cast<Eigen::Index>(l)) = t.values.col(t.column(cfg.zbar[l]));
    }
    for (const auto& nm : cfg.exogenous) {
        bool found = false;
        for (std::size_t k = 0; k < cfg.regressors.size(); ++k)
            if (cfg.regressors[k] == nm) {
                out.ds.exo_idx.push_back(static_cast<Eigen::Index>(k));
                found = true;
            }
        if (!found) fail(ErrorCode::ParseError, "exogenous name '" + nm + "' is not a regressor");
    }
    out.ds.validate();
    out.names = cfg.regressors;
    return out;
}

inline std::set<Eigen::Index> resolve_cone_set(const RunConfig& cfg, const Dataset& ds)
{
    std::set<Eigen::Index> cones;
    if (cfg.cone_set == "constant") {
        cones.insert(*ds.const_instr_idx);
    } else if (cfg.cone_set == "all") {
        for (Eigen::Index l = 0; l < ds.num_instruments(); ++l) cones.insert(l);
    } else {
        std::stringstream ss(cfg.cone_set);
        std::string cell;
        while (std::getline(ss, cell, ',')) cones.insert(static_cast<Eigen::Index>(std::stol(cell)));
        if (ds.const_instr_idx) cones.insert(*ds.const_instr_idx);
    }
    return cones;
}

inline double resolve_r(const RunConfig& cfg, const Dataset& ds, std::vector<std::string>* notes)
{
    if (cfg.r_override) return *cfg.r_override;
    if (cfg.scenario.scenario == 1) {
        ScenarioSpec s = cfg.scenario;
        return mc_quantile_r(ds, s, resolve_cone_set(cfg, ds), cfg.threads);
    }
    RSelection sel = select_r(cfg.scenario, ds.n(), ds.num_instruments());
    if (notes) notes->insert(notes->end(), sel.validity_notes.begin(), sel.validity_notes.end());
    return sel.r;
}

inline StivSpec spec_of(const RunConfig& cfg, const Dataset& ds, double r)
{
    StivSpec spec;
    spec.c = cfg.c;
    spec.r = r;
    spec.cone_set = resolve_cone_set(cfg, ds);
    spec.dx_mode = cfg.normalization == "maxabs" ? ScaleMode::maxabs : ScaleMode::rms;
    if (cfg.sigma_weight_auto)
        spec.sigma_weight = std::sqrt(static_cast<double>(ds.n())) / 0.3;
    else if (cfg.sigma_weight)
        spec.sigma_weight = cfg.sigma_weight;
    return spec;
}

inline std::string out_path(const RunConfig& cfg, const std::string& name)
{
    std::filesystem::create_directories(cfg.out_dir);
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

inline StivFit run_fit(const RunConfig& cfg, const Dataset& ds, double r)
{
    FitOptions opt;
    opt.zero_clip = cfg.zero_clip;
    const StivSpec spec = spec_of(cfg, ds, r);
    StivFit fit = fit_stiv(ds, spec, opt);
    if (cfg.dump_program) dump_cone_program(assemble_stiv_program(ds, spec), out_path(cfg, "program.txt"));
    return fit;
}

inline int cmd_fit(const RunConfig& cfg)
{
    Loaded data = load_dataset(cfg);
    std::vector<std::string> notes;
    const double r = resolve_r(cfg, data.ds, &notes);
    StivFit fit = run_fit(cfg, data.ds, r);
    Json body = to_json(fit);
    body["r"] = r;
    body["validity_notes"] = notes;
    write_json_report(out_path(cfg, "fit.json"), cfg.echo, body);
    TextTable t({"coef", "estimate"});
    for (Eigen::Index k = 0; k < fit.beta_hat.size(); ++k)
        t.add_row({data.names[static_cast<std::size_t>(k)], TextTable::num(fit.beta_hat[k], 6)});
    t.add_row({"sigma", TextTable::num(fit.sigma_hat, 6)});
    write_text_report(out_path(cfg, "fit.txt"), cfg.echo, {{"estimates", t}}, notes);
    return 0;
}

inline int cmd_sens(const RunConfig& cfg)
{
    Loaded data = load_dataset(cfg);
    const auto cones = resolve_cone_set(cfg, data.ds);
    const DiagScale dx = compute_dx(data.ds, cfg.normalization == "maxabs" ? ScaleMode::maxabs
                                                                           : ScaleMode::rms);
    const DiagScale dz = compute_dz(data.ds, cones);
    const PsiMatrix psi = compute_psi(data.ds, dx, dz, cones);
    SensOptions sopt;
    sopt.threads = cfg.threads;
    std::vector<LpTraceEntry> trace;
    if (cfg.echo.value("trace", false)) sopt.trace = &trace;
    SensitivityReport sr = compute_sensitivities(psi, cfg.s, cfg.c, false, sopt);
    Json body = to_json(sr);
    if (sopt.trace) {
        Json tr = Json::array();
        for (const auto& e : trace)
            tr.push_back(Json{{"k", static_cast<long>(e.k)},
                              {"j", static_cast<long>(e.j)},
                              {"sign", e.eps},
                              {"value", std::isfinite(e.value) ? Json(e.value) : Json("inf")}});
        body["battery_trace"] = tr;
    }
    write_json_report(out_path(cfg, "sens.json"), cfg.echo, body);
    return 0;
}

inline int cmd_ci(const RunConfig& cfg, bool with_selection)
{
    Loaded data = load_dataset(cfg);
    std::vector<std::string> notes;
    const double r = resolve_r(cfg, data.ds, &notes);
    StivFit fit = run_fit(cfg, data.ds, r);
    const PsiMatrix psi = compute_psi(data.ds, fit.dx, fit.dz, fit.spec.cone_set);
    SensOptions sopt;
    sopt.threads = cfg.threads;

    Json body;
    std::vector<int> s_values = cfg.s_list.empty() ? std::vector<int>{cfg.s} : cfg.s_list;
    std::vector<ConfidenceReport> family = nested_confsets(fit, psi, r, s_values, sopt);
    Json fam = Json::array();
    for (const auto& repn : family) fam.push_back(to_json(repn));
    body["reports"] = fam;
    body["r"] = r;
    body["validity_notes"] = notes;

    if (!cfg.c_grid.empty()) {
        // width-minimizing c per coordinate over the requested grid
        FitOptions fopt;
        fopt.zero_clip = cfg.zero_clip;
        CGridResult grid =
            c_grid_confidence(data.ds, spec_of(cfg, data.ds, r), psi, r, cfg.s, cfg.c_grid, fopt, sopt);
        Json gj = Json::array();
        for (std::size_t i = 0; i < grid.reports.size(); ++i)
            gj.push_back(Json{{"c", grid.c_grid[i]}, {"report", to_json(grid.reports[i])}});
        body["c_grid"] = gj;
        body["best_c_index"] = grid.best_c_index;
    }

    const ConfidenceReport& rep = family.back();
    if (with_selection) {
        Selection sel = threshold_select(fit, rep);
        body["selection"] = to_json(sel);
    }
    write_json_report(out_path(cfg, with_selection ? "select.json" : "ci.json"), cfg.echo, body);

    TextTable t({"coef", "lower", "estimate", "upper", "omega"});
    for (Eigen::Index k = 0; k < fit.beta_hat.size(); ++k) {
        const double b = fit.beta_hat[k], w = rep.halfwidth[k];
        t.add_row({data.names[static_cast<std::size_t>(k)], TextTable::num(b - w, 5),
                   TextTable::num(b, 5), TextTable::num(b + w, 5), TextTable::num(rep.omega[k], 5)});
    }
    notes.push_back(rep.any_infinite() ? "some intervals are infinite (weak identification at this s)"
                                       : "all intervals finite");
    write_text_report(out_path(cfg, with_selection ? "select.txt" : "ci.txt"), cfg.echo,
                      {{"intervals", t}}, notes);
    return 0;
}

inline int cmd_twostage(const RunConfig& cfg)
{
    Loaded data = load_dataset(cfg);
    std::vector<std::string> notes;
    const double r = resolve_r(cfg, data.ds, &notes);
    TwoStageConfig tc;
    tc.c = cfg.c;
    tc.c_rf = cfg.c;
    tc.r = r;
    tc.s = cfg.s;
    tc.scale = cfg.two_stage_scale == "rms" ? TwoStageScale::rms : TwoStageScale::enlarged_maxabs;
    if (cfg.sigma_weight_auto) {
        tc.sigma_weight = std::sqrt(static_cast<double>(data.ds.n())) / 0.3;
        tc.sigma_weight_rf = std::sqrt(static_cast<double>(data.ds.n())) / 1.1;
    } else if (cfg.sigma_weight) {
        tc.sigma_weight = cfg.sigma_weight;
        tc.sigma_weight_rf = cfg.sigma_weight;
    }
    SensOptions sopt;
    sopt.threads = cfg.threads;
    FirstStageFit fsf = fit_first_stage(data.ds, cfg.k_end, tc, {}, sopt);
    TwoStageResult res = fit_stiv_2s(data.ds, fsf, cfg.k_end, tc, {}, sopt);
    Json body{{"first_stage", to_json(res.first_stage)},
              {"fit", to_json(res.fit)},
              {"report", to_json(res.report)},
              {"r", r}};
    write_json_report(out_path(cfg, "twostage.json"), cfg.echo, body);
    TextTable t({"coef", "estimate", "halfwidth"});
    for (Eigen::Index k = 0; k < res.fit.beta_hat.size(); ++k)
        t.add_row({data.names[static_cast<std::size_t>(k)], TextTable::num(res.fit.beta_hat[k], 5),
                   TextTable::num(res.report.halfwidth[k], 5)});
    write_text_report(out_path(cfg, "twostage.txt"), cfg.echo, {{"second stage", t}}, notes);
    return 0;
}

inline int cmd_nv(const RunConfig& cfg)
{
    Loaded data = load_dataset(cfg);
    if (data.ds.zbar.cols() < 1) fail(ErrorCode::ParseError, "nv needs zbar columns");
    std::vector<std::string> notes;
    const double r = resolve_r(cfg, data.ds, &notes);
    StivFit pilot = run_fit(cfg, data.ds, r);
    const PsiMatrix psi = compute_psi(data.ds, pilot.dx, pilot.dz, pilot.spec.cone_set);
    SensOptions sopt;
    sopt.threads = cfg.threads;
    SensitivityReport sr = compute_sensitivities(psi, cfg.s, cfg.c, false, sopt);
    std::vector<Eigen::Index> full;
    for (Eigen::Index k = 0; k < data.ds.num_regressors(); ++k) full.push_back(k);
    ConfidenceReport rep = confidence_intervals(pilot, sr, r, {{full, 1.0}});
    const GroupBound& l1 = rep.groups.front();
    if (l1.infinite)
        fail(ErrorCode::InfinitePilotBound, "pilot l1 confidence bound is infinite at this s");

    ScenarioSpec s1 = cfg.scenario;
    const double r1 = cfg.r_override ? *cfg.r_override
                                     : select_r(s1, data.ds.n(), data.ds.num_nv_instruments()).r;
    NvOptions nopt;
    if (cfg.sigma_weight_auto)
        nopt.sigma_weight = std::sqrt(static_cast<double>(data.ds.n())) / 0.3;
    else if (cfg.sigma_weight)
        nopt.sigma_weight = cfg.sigma_weight;
    NvFit nv = fit_stiv_nv(data.ds, pilot.beta_hat, l1.bound, r1, cfg.c, nopt);
    const int s1_plug = static_cast<int>(nv.support.size());
    NvBounds bounds = nv_confidence(nv, cfg.c, s1_plug);
    NvSelection sel = nv_threshold(nv, bounds.linf);

    Json body{{"pilot", to_json(pilot)},
              {"pilot_l1_bound", l1.bound},
              {"nv", to_json(nv)},
              {"bounds", to_json(bounds)},
              {"invalid", to_json(sel.invalid)},
              {"omega", bounds.linf_infinite ? Json("inf") : Json(bounds.linf)},
              {"r1", r1}};
    write_json_report(out_path(cfg, "nv.json"), cfg.echo, body);
    return 0;
}

inline int cmd_simulate(const RunConfig& cfg)
{
    ProfileOptions opt;
    opt.out_dir = cfg.out_dir;
    opt.seed = cfg.seed;
    opt.reps = cfg.reps;
    opt.tuning.threads = cfg.threads;
    opt.tuning.alpha = cfg.scenario.alpha;
    opt.tuning.c = cfg.c;
    opt.tuning.s = cfg.s > 1 ? cfg.s : 5;
    opt.dgp = cfg.dgp;
    opt.dgp.seed = cfg.seed;
    if (cfg.profile == "table1")
        run_table1(opt);
    else if (cfg.profile == "table3")
        run_table3(opt);
    else if (cfg.profile == "table5")
        run_table5(opt);
    else if (cfg.profile == "table7")
        run_table7(opt);
    else if (cfg.profile.empty())
        fail(ErrorCode::ParseError, "simulate needs a profile (table1, table3, table5, table7)");
    else
        fail(ErrorCode::ParseError, "unknown profile '" + cfg.profile + "'");
    return 0;
}

} // namespace detail

/// Route a resolved configuration. Exit codes: 0 success, 1 user error,
/// 2 solver failure.
inline int run(const RunConfig& cfg)
{
    try {
        if (cfg.command == "fit") return detail::cmd_fit(cfg);
        if (cfg.command == "sens") return detail::cmd_sens(cfg);
        if (cfg.command == "ci") return detail::cmd_ci(cfg, false);
        if (cfg.command == "select") return detail::cmd_ci(cfg, true);
        if (cfg.command == "twostage") return detail::cmd_twostage(cfg);
        if (cfg.command == "nv") return detail::cmd_nv(cfg);
        if (cfg.command == "simulate") return detail::cmd_simulate(cfg);
        fail(ErrorCode::ParseError, "unknown command '" + cfg.command + "'");
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::SolverFailure ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

inline int run(const Json& config)
{
    try {
        return run(RunConfig::from_json(config));
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::SolverFailure ? 2 : 1;
    }
}

} // namespace stiv::cli
