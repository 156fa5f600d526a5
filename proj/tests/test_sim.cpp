#include <doctest.h>

#include <filesystem>

#include "stiv/profiles.hpp"
#include "stiv/rng.hpp"

using namespace stiv;

TEST_CASE("dgp structure follows the design")
{
    DgpConfig cfg;
    cfg.seed = 3;
    Dataset ds = gen_dgp(cfg);
    CHECK(ds.n() == 49);
    CHECK(ds.num_regressors() == 25);
    CHECK(ds.num_instruments() == 51); // appended constant
    CHECK(*ds.const_instr_idx == 50);
    CHECK_NOTHROW(ds.validate());

    // exogenous regressors are verbatim instrument columns z_{L-K+2..L}
    for (Eigen::Index k = 1; k < 25; ++k)
        CHECK((ds.x.col(k) - ds.z.col(k + 25)).cwiseAbs().maxCoeff() == 0.0);

    SUBCASE("zero beta means y equals the structural error")
    {
        DgpConfig c0 = cfg;
        c0.beta_star = VectorXd::Zero(25);
        c0.rho = 0.0;
        c0.sigma_end = 0.0;
        Dataset d0 = gen_dgp(c0);
        // y = u: independent of the instruments up to sampling noise
        CHECK(d0.y.size() == 49);
        CHECK((d0.y - (d0.x * c0.beta_star)).cwiseAbs().maxCoeff() ==
              doctest::Approx(d0.y.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("independent errors when rho is zero")
{
    DgpConfig cfg;
    cfg.n = 10000;
    cfg.rho = 0.0;
    cfg.seed = 4;
    Dataset ds = gen_dgp(cfg);
    // recover u and v: u = y - x beta*, v = x1 - z zeta
    const VectorXd u = ds.y - ds.x * cfg.beta_or_default();
    VectorXd zeta = cfg.zeta_or_default();
    const VectorXd v = ds.x.col(0) - ds.z.leftCols(zeta.size()) * zeta;
    const double corr = sample_cross_moment(u, v) /
                        std::sqrt(sample_second_moment(u) * sample_second_moment(v));
    CHECK(std::abs(corr) < 0.1);
}

TEST_CASE("reproducibility: identical seeds give identical data and summaries")
{
    DgpConfig cfg;
    cfg.seed = 5;
    Dataset a = gen_dgp(cfg);
    Dataset b = gen_dgp(cfg);
    CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.z - b.z).cwiseAbs().maxCoeff() == 0.0);

    StudyTuning t;
    t.threads = 1;
    auto est = [&](const Dataset& ds, std::uint64_t) {
        RepOutcome out;
        StivFit fit = study_fit_small(ds, t, study_r(t, ds));
        out.beta = fit.beta_hat;
        out.sigma = fit.sigma_hat;
        return out;
    };
    McSummary s1 = run_mc(cfg, 5, est, 1);
    McSummary s2 = run_mc(cfg, 5, est, 3); // different parallelism, same result
    CHECK((s1.beta_pct - s2.beta_pct).cwiseAbs().maxCoeff() == 0.0);
    CHECK((s1.sigma_pct - s2.sigma_pct).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-replication percentiles collapse to the fit")
{
    DgpConfig cfg;
    cfg.seed = 6;
    StudyTuning t;
    t.threads = 1;
    auto est = [&](const Dataset& ds, std::uint64_t) {
        RepOutcome out;
        StivFit fit = study_fit_small(ds, t, study_r(t, ds));
        out.beta = fit.beta_hat;
        out.sigma = fit.sigma_hat;
        return out;
    };
    McSummary s = run_mc(cfg, 1, est, 1);
    for (Eigen::Index k = 0; k < 25; ++k) {
        CHECK(s.beta_pct(k, 0) == s.beta_pct(k, 1));
        CHECK(s.beta_pct(k, 1) == s.beta_pct(k, 2));
    }
}

TEST_CASE("failures are counted, never silently dropped")
{
    DgpConfig cfg;
    cfg.seed = 7;
    int called = 0;
    auto est = [&](const Dataset& ds, std::uint64_t) -> RepOutcome {
        ++called;
        if (called % 2 == 0) throw Error(ErrorCode::SolverFailure, "synthetic failure");
        RepOutcome out;
        out.beta = VectorXd::Zero(ds.num_regressors());
        out.sigma = 1.0;
        return out;
    };
    McSummary s = run_mc(cfg, 4, est, 1);
    CHECK(s.reps == 4);
    CHECK(s.failures == 2);
}

TEST_CASE("profile reports land on disk with a config echo")
{
    const std::string dir = "test_profile_out";
    std::filesystem::remove_all(dir);
    ProfileOptions opt;
    opt.out_dir = dir;
    opt.seed = 9;
    opt.reps = 3;
    opt.tuning.threads = 2;
    McSummary s = run_table3(opt);
    CHECK(s.reps == 3);
    REQUIRE(std::filesystem::exists(dir + "/table3.txt"));
    REQUIRE(std::filesystem::exists(dir + "/table3.json"));
    std::ifstream is(dir + "/table3.txt");
    std::string first;
    std::getline(is, first);
    CHECK(first.find("# config") == 0);
    CHECK(first.find("\"seed\":9") != std::string::npos);
    std::filesystem::remove_all(dir);
}
