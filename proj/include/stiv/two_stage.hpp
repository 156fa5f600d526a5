#pragma once

#include <optional>

#include "stiv/inference.hpp"
#include "stiv/sensitivity.hpp"
#include "stiv/stiv.hpp"

namespace stiv {

enum class TwoStageScale {
    enlarged_maxabs, // (max_i |z_i' zeta| + 2 C1)^-1 and x_k* elsewhere
    rms,             // E_n[zhat^2]^{-1/2} and rms elsewhere; no enlargement
};

struct TwoStageConfig {
    double c = 0.1;    // cone constant, second stage
    double c_rf = 0.1; // cone constant, first stage
    double r = 0.0;
    int s = 5;
    std::optional<int> s_rf;                  // default: fitted first-stage support size
    TwoStageScale scale = TwoStageScale::enlarged_maxabs;
    std::optional<double> sigma_weight;       // second-stage objective weight on sigma
    std::optional<double> sigma_weight_rf;    // first-stage objective weight on sigma

    ScaleMode mode() const
    {
        return scale == TwoStageScale::rms ? ScaleMode::rms : ScaleMode::maxabs;
    }
};

/// First-stage fit of the reduced form x_kend = z'zeta + v together with the
/// propagation constant that enlarges the second-stage instrument scale:
///   C1 = 2 sigma_rf r / kappa_1(s_rf) * (1 - r^2 / kappa_1(s_rf))_+^{-1}.
struct FirstStageFit {
    VectorXd zeta_hat;
    double sigma_rf = 0.0;
    double c_rf = 0.0;
    int s_rf = 0;
    double r = 0.0;
    double kappa1_rf = 0.0;
    double c1 = kInf;
    bool c1_infinite = true;
    StivFit fit;
    Dataset rf_data;
};

inline Dataset reduced_form_dataset(const Dataset& ds, Eigen::Index k_end)
{
    if (k_end < 0 || k_end >= ds.num_regressors())
        fail(ErrorCode::InvalidParams, "endogenous index out of range");
    Dataset rf;
    rf.y = ds.x.col(k_end);
    rf.x = ds.z;
    rf.z = ds.z;
    rf.const_instr_idx = ds.find_constant_instrument();
    for (Eigen::Index l = 0; l < ds.z.cols(); ++l) rf.exo_idx.push_back(l);
    return rf;
}

/// First stage: the all-exogenous fit of the reduced form, then the l1 error
/// bound C1 from the certificate battery on the first-stage cross moments.
inline FirstStageFit fit_first_stage(const Dataset& ds, Eigen::Index k_end,
                                     const TwoStageConfig& cfg, const FitOptions& fit_opt = {},
                                     const SensOptions& sens_opt = {})
{
    FirstStageFit out;
    out.c_rf = cfg.c_rf;
    out.r = cfg.r;
    out.rf_data = reduced_form_dataset(ds, k_end);

    StivSpec spec;
    spec.c = cfg.c_rf;
    spec.r = cfg.r;
    spec.dx_mode = cfg.mode();
    spec.sigma_weight = cfg.sigma_weight_rf;
    out.fit = fit_sqrt_lasso(out.rf_data, spec, fit_opt);
    out.zeta_hat = out.fit.beta_hat;
    out.sigma_rf = out.fit.sigma_hat;
    out.s_rf = cfg.s_rf.value_or(std::max<int>(1, static_cast<int>(out.fit.support.size())));

    const PsiMatrix psi_rf = compute_psi(out.rf_data, out.fit.dx, out.fit.dz, out.fit.spec.cone_set);
    out.kappa1_rf = kappa1_cert(psi_rf, out.s_rf, cfg.c_rf, sens_opt);
    if (out.kappa1_rf > cfg.r * cfg.r && out.kappa1_rf > 0.0) {
        out.c1 = 2.0 * out.sigma_rf * cfg.r / out.kappa1_rf / (1.0 - cfg.r * cfg.r / out.kappa1_rf);
        out.c1_infinite = false;
    } else {
        out.c1 = kInf;
        out.c1_infinite = true;
    }
    return out;
}

/// Instrument set for the second stage: the exogenous regressors plus the
/// estimated projection instrument zhat = Z zeta_hat, with the matching
/// diagonal scale.
inline std::pair<Dataset, DiagScale> build_2s_dataset(const Dataset& ds, const FirstStageFit& fsf,
                                                      Eigen::Index k_end,
                                                      TwoStageScale scale = TwoStageScale::enlarged_maxabs)
{
    if (fsf.c1_infinite && scale == TwoStageScale::enlarged_maxabs)
        fail(ErrorCode::InfiniteC1, "first-stage error bound is infinite");
    const VectorXd zhat = ds.z * fsf.zeta_hat;
    if (zhat.cwiseAbs().maxCoeff() <= 1e-12)
        fail(ErrorCode::DegenerateInstrument, "estimated projection instrument is identically zero");

    const Eigen::Index bigk = ds.num_regressors();
    Dataset out;
    out.y = ds.y;
    out.x = ds.x;
    out.z.resize(ds.n(), bigk);
    DiagScale dz;
    dz.mode = scale == TwoStageScale::rms ? ScaleMode::rms : ScaleMode::maxabs;
    dz.entries.resize(bigk);
    for (Eigen::Index k = 0; k < bigk; ++k) {
        if (k == k_end) {
            out.z.col(k) = zhat;
            dz.entries[k] = scale == TwoStageScale::enlarged_maxabs
                                ? 1.0 / (zhat.cwiseAbs().maxCoeff() + 2.0 * fsf.c1)
                                : 1.0 / std::sqrt(sample_second_moment(zhat));
        } else {
            out.z.col(k) = ds.x.col(k);
            dz.entries[k] = scale == TwoStageScale::enlarged_maxabs
                                ? 1.0 / ds.x.col(k).cwiseAbs().maxCoeff()
                                : 1.0 / std::sqrt(sample_second_moment(ds.x.col(k)));
        }
    }
    dz.validate();
    return {std::move(out), std::move(dz)};
}

struct TwoStageResult {
    FirstStageFit first_stage;
    StivFit fit;
    PsiMatrix psi;
    SensitivityReport sr;
    ConfidenceReport report;
    Dataset data_2s;
    DiagScale dz_2s;
};

/// Second stage: the estimator on the enlarged instrument set, and confidence
/// intervals with the endogenous coordinate entering the denominator at order
/// r and the rest at order r^2.
inline TwoStageResult fit_stiv_2s(const Dataset& ds, const FirstStageFit& fsf, Eigen::Index k_end,
                                  const TwoStageConfig& cfg, const FitOptions& fit_opt = {},
                                  const SensOptions& sens_opt = {})
{
    TwoStageResult out;
    out.first_stage = fsf;
    auto [ds2, dz2] = build_2s_dataset(ds, fsf, k_end, cfg.scale);
    out.data_2s = std::move(ds2);
    out.dz_2s = dz2;

    StivSpec spec;
    spec.c = cfg.c;
    spec.r = cfg.r;
    spec.dx_mode = cfg.mode();
    spec.virtual_const_cone = true; // the conic constraint is on plain residuals
    spec.dz_override = dz2;
    spec.sigma_weight = cfg.sigma_weight;
    out.fit = fit_stiv(out.data_2s, spec, fit_opt);

    out.psi = compute_psi(out.data_2s, out.fit.dx, out.fit.dz);
    out.sr = compute_sensitivities(out.psi, cfg.s, cfg.c, false, sens_opt);
    out.report = confidence_intervals_split(out.fit, out.sr, cfg.r, {k_end});
    return out;
}

} // namespace stiv
