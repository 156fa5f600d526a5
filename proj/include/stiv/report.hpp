#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stiv/inference.hpp"
#include "stiv/nv.hpp"
#include "stiv/sim.hpp"
#include "stiv/stiv.hpp"
#include "stiv/two_stage.hpp"

namespace stiv {

using Json = nlohmann::json;

inline Json to_json(const VectorXd& v)
{
    Json arr = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        arr.push_back(std::isfinite(v[i]) ? Json(v[i]) : Json(v[i] > 0 ? "inf" : "-inf"));
    return arr;
}

inline Json to_json(const std::vector<Eigen::Index>& v)
{
    Json arr = Json::array();
    for (auto i : v) arr.push_back(static_cast<long>(i));
    return arr;
}

inline Json to_json(const Solution& s)
{
    return Json{{"status", status_name(s.status)},
                {"objective", s.objective},
                {"dual_objective", s.dual_objective},
                {"gap", s.gap},
                {"primal_residual", s.primal_residual},
                {"dual_residual", s.dual_residual},
                {"iterations", s.iterations}};
}

inline Json to_json(const StivFit& fit)
{
    Json j{{"beta", to_json(fit.beta_hat)},
           {"sigma", fit.sigma_hat},
           {"support", to_json(fit.support)},
           {"objective", fit.objective},
           {"zero_clip", fit.zero_clip},
           {"certificate", to_json(fit.solution)}};
    j["tuning"] = Json{{"c", fit.spec.c ? Json(*fit.spec.c) : Json()},
                       {"r", fit.spec.r},
                       {"sigma_weight", fit.spec.sigma_weight_value()},
                       {"normalization", fit.dx.mode == ScaleMode::rms ? "rms" : "maxabs"}};
    return j;
}

inline Json to_json(const SensitivityReport& sr)
{
    return Json{{"kappa_coord", to_json(sr.kappa_coord)},
                {"kappa1", sr.kappa1},
                {"s", sr.s},
                {"c", sr.c},
                {"cone_ratio", sr.cone.ratio},
                {"cone_budget", sr.cone.a},
                {"method", sr.method}};
}

inline Json to_json(const ConfidenceReport& rep)
{
    Json j{{"r", rep.r},
           {"s", rep.s},
           {"c", rep.c},
           {"method", rep.method},
           {"denominator", rep.denominator},
           {"denominator_kind", rep.denom_kind == DenomKind::band ? "band" : "split"},
           {"center", to_json(rep.center)},
           {"halfwidth", to_json(rep.halfwidth)},
           {"omega", to_json(rep.omega)},
           {"kappa", to_json(rep.kappa_used)},
           {"any_infinite", rep.any_infinite()}};
    Json inf = Json::array();
    for (bool b : rep.infinite) inf.push_back(b);
    j["infinite"] = inf;
    Json groups = Json::array();
    for (const auto& g : rep.groups)
        groups.push_back(Json{{"j0", to_json(g.j0)},
                              {"p", std::isinf(g.p) ? Json("inf") : Json(g.p)},
                              {"kappa_bar", g.kappa_bar},
                              {"bound", g.infinite ? Json("inf") : Json(g.bound)}});
    j["groups"] = groups;
    j["validity_notes"] = rep.validity_notes;
    return j;
}

inline Json to_json(const Selection& sel)
{
    Json j{{"support", to_json(sel.support)},
           {"omega", to_json(sel.omega)},
           {"infinite_threshold", sel.infinite_threshold}};
    Json signs = Json::array();
    for (Eigen::Index i = 0; i < sel.signs.size(); ++i) signs.push_back(sel.signs[i]);
    j["signs"] = signs;
    return j;
}

inline Json to_json(const FirstStageFit& fsf)
{
    return Json{{"zeta", to_json(fsf.zeta_hat)},
                {"sigma_rf", fsf.sigma_rf},
                {"c_rf", fsf.c_rf},
                {"s_rf", fsf.s_rf},
                {"r", fsf.r},
                {"kappa1_rf", fsf.kappa1_rf},
                {"c1", fsf.c1_infinite ? Json("inf") : Json(fsf.c1)},
                {"support", to_json(fsf.fit.support)}};
}

inline Json to_json(const NvFit& fit)
{
    return Json{{"theta", to_json(fit.theta_hat)},
                {"sigma1", fit.sigma1_hat},
                {"b_hat", fit.b_hat},
                {"r1", fit.r1},
                {"zbar_star", fit.zbar_star},
                {"support", to_json(fit.support)},
                {"objective", fit.objective},
                {"certificate", to_json(fit.solution)}};
}

inline Json to_json(const NvBounds& b)
{
    return Json{{"linf", b.linf_infinite ? Json("inf") : Json(b.linf)},
                {"l1", b.l1_infinite ? Json("inf") : Json(b.l1)}};
}

inline Json to_json(const McSummary& s)
{
    Json rows = Json::array();
    for (Eigen::Index k = 0; k < s.beta_pct.rows(); ++k)
        rows.push_back(Json{{"p05", s.beta_pct(k, 0)}, {"p50", s.beta_pct(k, 1)}, {"p95", s.beta_pct(k, 2)}});
    Json j{{"reps", static_cast<long>(s.reps)},
           {"failures", static_cast<long>(s.failures)},
           {"seed", s.seed},
           {"beta_percentiles", rows},
           {"sigma_percentiles", Json{{"p05", s.sigma_pct[0]}, {"p50", s.sigma_pct[1]}, {"p95", s.sigma_pct[2]}}}};
    if (s.support_recovery_rate >= 0.0) j["support_recovery_rate"] = s.support_recovery_rate;
    if (s.coverage_rate >= 0.0) j["coverage_rate"] = s.coverage_rate;
    if (s.comparison_rate >= 0.0) j["comparison_rate"] = s.comparison_rate;
    return j;
}

/// Fixed-width text table with a config echo header.
class TextTable {
  public:
    explicit TextTable(std::vector<std::string> headers) : headers_(std::move(headers)) {}

    void add_row(const std::vector<std::string>& cells) { rows_.push_back(cells); }

    static std::string num(double v, int prec = 4)
    {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        std::ostringstream os;
        os << std::fixed << std::setprecision(prec) << v;
        return os.str();
    }

    void write(std::ostream& os) const
    {
        std::vector<std::size_t> width(headers_.size());
        for (std::size_t j = 0; j < headers_.size(); ++j) width[j] = headers_[j].size();
        for (const auto& row : rows_)
            for (std::size_t j = 0; j < row.size() && j < width.size(); ++j)
                width[j] = std::max(width[j], row[j].size());
        const auto emit = [&](const std::vector<std::string>& cells) {
            for (std::size_t j = 0; j < cells.size(); ++j)
                os << (j ? "  " : "") << std::setw(static_cast<int>(width[j])) << cells[j];
            os << "\n";
        };
        emit(headers_);
        for (const auto& row : rows_) emit(row);
    }

  private:
    std::vector<std::string> headers_;
    std::vector<std::vector<std::string>> rows_;
};

/// Every report begins with an echo of the resolved configuration, enough to
/// reproduce the run exactly.
inline void write_text_report(const std::string& path, const Json& config_echo,
                              const std::vector<std::pair<std::string, TextTable>>& sections,
                              const std::vector<std::string>& notes = {})
{
    std::ofstream os(path);
    if (!os) fail(ErrorCode::IoError, "cannot open " + path);
    os << "# config " << config_echo.dump() << "\n";
    for (const auto& note : notes) os << "# " << note << "\n";
    for (const auto& [title, table] : sections) {
        os << "\n== " << title << "\n";
        table.write(os);
    }
}

inline void write_json_report(const std::string& path, const Json& config_echo, Json body)
{
    body["config"] = config_echo;
    std::ofstream os(path);
    if (!os) fail(ErrorCode::IoError, "cannot open " + path);
    os << body.dump(2) << "\n";
}

} // namespace stiv
