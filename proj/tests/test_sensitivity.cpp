#include <doctest.h>

#include "oracles.hpp"
#include "stiv/rng.hpp"
#include "stiv/sensitivity.hpp"

using namespace stiv;

namespace {

PsiMatrix wrap(const MatrixXd& m)
{
    PsiMatrix psi;
    psi.values = m;
    return psi;
}

MatrixXd random_psi(Rng& rng, Eigen::Index l, Eigen::Index k, double offdiag = 0.35)
{
    MatrixXd m = MatrixXd::Zero(l, k);
    for (Eigen::Index i = 0; i < l; ++i)
        for (Eigen::Index j = 0; j < k; ++j)
            m(i, j) = (i == j ? 1.0 : offdiag * rng.normal());
    return m;
}

SensOptions tight_opts()
{
    SensOptions opt;
    opt.solver.gap_tol = 1e-11;
    opt.solver.feas_tol = 1e-11;
    opt.threads = 1;
    return opt;
}

/// Independent evaluation of the block-certificate infimum
///   inf { |psi d|_inf : |d_{J0}|_1 = 1, |d|_1 <= a |d|_inf }
/// by (full sign pattern, argmax piece) vertex enumeration.
double block_budget_oracle(const MatrixXd& psi, const std::vector<Eigen::Index>& j0, double a)
{
    const int bigk = static_cast<int>(psi.cols());
    const int bigl = static_cast<int>(psi.rows());
    const int nv = bigk + 1;
    double best = kInf;
    for (int mask = 0; mask < (1 << bigk); ++mask) {
        std::vector<int> sgn(bigk);
        for (int i = 0; i < bigk; ++i) sgn[i] = (mask >> i) & 1 ? 1 : -1;
        for (int jmax = 0; jmax < bigk; ++jmax) {
            std::vector<Eigen::RowVectorXd> rows;
            std::vector<double> rhs;
            for (int l = 0; l < bigl; ++l) {
                Eigen::RowVectorXd r1 = Eigen::RowVectorXd::Zero(nv), r2 = Eigen::RowVectorXd::Zero(nv);
                r1.head(bigk) = psi.row(l);
                r2.head(bigk) = -psi.row(l);
                r1[bigk] = -1.0;
                r2[bigk] = -1.0;
                rows.push_back(r1);
                rhs.push_back(0.0);
                rows.push_back(r2);
                rhs.push_back(0.0);
            }
            Eigen::RowVectorXd vr = Eigen::RowVectorXd::Zero(nv);
            vr[bigk] = -1.0;
            rows.push_back(vr);
            rhs.push_back(0.0);
            for (int i = 0; i < bigk; ++i) {
                Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nv);
                r[i] = -static_cast<double>(sgn[i]);
                rows.push_back(r);
                rhs.push_back(0.0);
            }
            Eigen::RowVectorXd budget = Eigen::RowVectorXd::Zero(nv);
            for (int i = 0; i < bigk; ++i) budget[i] = sgn[i];
            budget[jmax] -= a * sgn[jmax];
            rows.push_back(budget);
            rhs.push_back(0.0);
            MatrixXd g(static_cast<int>(rows.size()), nv);
            VectorXd hh(static_cast<int>(rows.size()));
            for (std::size_t i = 0; i < rows.size(); ++i) {
                g.row(static_cast<int>(i)) = rows[i];
                hh[static_cast<int>(i)] = rhs[i];
            }
            MatrixXd aeq = MatrixXd::Zero(1, nv);
            for (Eigen::Index i : j0) aeq(0, i) = sgn[i];
            VectorXd beq(1);
            beq << 1.0;
            VectorXd c = VectorXd::Zero(nv);
            c[bigk] = 1.0;
            oracle::LpResult res = oracle::lp_vertex_enumeration(c, g, hh, aeq, beq);
            if (res.feasible) best = std::min(best, res.value);
        }
    }
    return best;
}

} // namespace

TEST_CASE("identity psi: certificate coordinate bound and kappa1")
{
    PsiMatrix psi = wrap(MatrixXd::Identity(2, 2));
    const double c = 0.5;
    const ConeFactor cf = ConeFactor::dominant(c, 1);
    SensOptions opt = tight_opts();
    const double k1 = kappa_coord_cert(psi, 0, 1, cf, opt);
    CHECK(std::abs(k1 - 1.0) <= 1e-9);
    // independent oracle over the defining budgeted infimum
    CHECK(std::abs(k1 - oracle::kappa_budget_infimum(psi.values, 0, cf.a)) <= 1e-9);
    CHECK(std::abs(kappa1_cert(psi, 1, c, opt) - 0.25) <= 1e-9);
}

TEST_CASE("zero column gives an exact zero sensitivity")
{
    MatrixXd m = MatrixXd::Identity(3, 3);
    m.col(2).setZero();
    PsiMatrix psi = wrap(m);
    const ConeFactor cf = ConeFactor::dominant(0.3, 2);
    SensOptions opt = tight_opts();
    CHECK(kappa_coord_cert(psi, 2, 2, cf, opt) == 0.0);
    CHECK(kappa1_cert(psi, 2, 0.3, opt) == 0.0);
}

TEST_CASE("certificate battery matches the vertex-enumeration infimum")
{
    Rng rng(21);
    SensOptions opt = tight_opts();
    for (int inst = 0; inst < 6; ++inst) {
        const Eigen::Index bigk = 2 + static_cast<Eigen::Index>(rng.below(2)); // K in {2,3}
        const Eigen::Index bigl = bigk + static_cast<Eigen::Index>(rng.below(2));
        PsiMatrix psi = wrap(random_psi(rng, bigl, bigk));
        const double c = 0.1 + 0.3 * rng.uniform01();
        const int s = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(bigk)));
        const ConeFactor cf = ConeFactor::dominant(c, s);
        for (Eigen::Index k = 0; k < bigk; ++k) {
            const double mine = kappa_coord_cert(psi, k, s, cf, opt);
            const double ref = oracle::kappa_budget_infimum(psi.values, k, cf.a);
            CHECK(std::abs(mine - ref) <= 1e-9 * (1.0 + std::abs(ref)));
        }
    }
}

TEST_CASE("exact cone battery matches the sign-pattern vertex infimum")
{
    Rng rng(22);
    SensOptions opt = tight_opts();
    for (int inst = 0; inst < 6; ++inst) {
        const Eigen::Index bigk = 2 + static_cast<Eigen::Index>(rng.below(3)); // K in {2,3,4}
        const Eigen::Index bigl = 2 + static_cast<Eigen::Index>(rng.below(3));
        PsiMatrix psi = wrap(random_psi(rng, bigl, bigk));
        const double c = 0.1 + 0.5 * rng.uniform01();
        const ConeFactor cf = ConeFactor::dominant(c, 1);
        std::vector<Eigen::Index> j_set{0};
        if (bigk > 2 && rng.below(2)) j_set.push_back(1);
        for (Eigen::Index k = 0; k < bigk; ++k) {
            const double mine = kappa_coord_exact(psi, k, j_set, cf, opt);
            const double ref = oracle::kappa_coord_infimum(
                psi.values, static_cast<int>(k), std::vector<int>(j_set.begin(), j_set.end()),
                cf.ratio);
            CHECK(std::abs(mine - ref) <= 1e-9 * (1.0 + std::abs(ref)));
        }
    }
}

TEST_CASE("identity exact coordinate sensitivity is one")
{
    PsiMatrix psi = wrap(MatrixXd::Identity(2, 2));
    const ConeFactor cf = ConeFactor::dominant(0.5, 1);
    CHECK(std::abs(kappa_coord_exact(psi, 0, {0}, cf, tight_opts()) - 1.0) <= 1e-9);
}

TEST_CASE("fewer instrument rows than support forces a zero sensitivity")
{
    // L < |J|: a feasible direction in the kernel kills the infimum
    MatrixXd m(1, 3);
    m << 1.0, 0.4, -0.2;
    PsiMatrix psi = wrap(m);
    const ConeFactor cf = ConeFactor::dominant(0.2, 2);
    const double v = kappa_coord_exact(psi, 0, {0, 1, 2}, cf, tight_opts());
    CHECK(v == 0.0);
}

TEST_CASE("monotonicity: certificate bounds do not increase with s")
{
    Rng rng(23);
    SensOptions opt = tight_opts();
    PsiMatrix psi = wrap(random_psi(rng, 4, 3));
    const double c = 0.2;
    for (Eigen::Index k = 0; k < 3; ++k) {
        double prev = kInf;
        for (int s = 1; s <= 3; ++s) {
            const double v = kappa_coord_cert(psi, k, s, ConeFactor::dominant(c, s), opt);
            CHECK(v <= prev + 1e-10);
            prev = v;
        }
    }
    CHECK(kappa1_cert(psi, 1, c, opt) + 1e-10 >= kappa1_cert(psi, 2, c, opt));
}

TEST_CASE("support monotonicity of the exact battery")
{
    Rng rng(24);
    SensOptions opt = tight_opts();
    PsiMatrix psi = wrap(random_psi(rng, 4, 4));
    const ConeFactor cf = ConeFactor::dominant(0.25, 1);
    for (Eigen::Index k = 0; k < 4; ++k) {
        const double small = kappa_coord_exact(psi, k, {0}, cf, opt);
        const double large = kappa_coord_exact(psi, k, {0, 1}, cf, opt);
        const double larger = kappa_coord_exact(psi, k, {0, 1, 3}, cf, opt);
        CHECK(large <= small + 1e-9);
        CHECK(larger <= large + 1e-9);
    }
}

TEST_CASE("block certificate: singleton collapse and vertex oracle")
{
    SensOptions opt = tight_opts();
    PsiMatrix psi = wrap(MatrixXd::Identity(2, 2));
    const double c = 0.3;
    const int s = 1;
    SUBCASE("singleton block equals the coordinate bound")
    {
        const double blk = kappa_block_cert(psi, {0}, s, c, opt);
        const double coord = kappa_coord_cert(psi, 0, s, ConeFactor::dominant(c, s), opt);
        CHECK(std::abs(blk - coord) <= 1e-9);
    }
    SUBCASE("two-coordinate block matches the oracle")
    {
        const double blk = kappa_block_cert(psi, {0, 1}, s, c, opt);
        const double ref = block_budget_oracle(psi.values, {0, 1}, ConeFactor::dominant(c, s).a);
        CHECK(std::abs(blk - ref) <= 1e-9);
    }
    SUBCASE("random instance matches the oracle")
    {
        Rng rng(25);
        PsiMatrix r = wrap(random_psi(rng, 3, 3));
        const double blk = kappa_block_cert(r, {0, 2}, 1, c, opt);
        const double ref = block_budget_oracle(r.values, {0, 2}, ConeFactor::dominant(c, 1).a);
        CHECK(std::abs(blk - ref) <= 1e-9);
        // the assembled closed-form bound never beats the direct battery
        const VectorXd coords = kappa_coord_cert_all(r, 1, ConeFactor::dominant(c, 1), opt);
        const double assembled = kappa_general(coords, {0, 2}, 1.0, 1, ConeFactor::dominant(c, 1));
        CHECK(assembled <= blk + 1e-9);
    }
}

TEST_CASE("closed-form block bound: collapses and sandwich")
{
    Rng rng(26);
    SensOptions opt = tight_opts();
    PsiMatrix psi = wrap(random_psi(rng, 3, 3));
    const double c = 0.2;
    const int s = 1;
    const ConeFactor cf = ConeFactor::dominant(c, s);
    const VectorXd coords = kappa_coord_cert_all(psi, s, cf, opt);

    // p = inf singleton is the coordinate bound itself
    CHECK(kappa_general(coords, {1}, kInf, s, cf) == doctest::Approx(coords[1]));

    // p = 1 over the full set gives kappa_1(s) when the certificate term wins
    std::vector<Eigen::Index> full{0, 1, 2};
    const double k1 = coords.minCoeff() / cf.a;
    CHECK(kappa_general(coords, full, 1.0, s, cf) ==
          doctest::Approx(std::max(k1, coords.minCoeff() / 3.0)));

    // sampled sandwich: (2|J|/(1-c))^{-1/p} kappa_inf <= kappa_p <= (2/(1-c)) |J|^{1-1/p} kappa_1
    const std::vector<Eigen::Index> j_set{0};
    const double ratio = cf.ratio;
    Rng sampler(27);
    double k_inf_hat = kInf, k_one_hat = kInf, k_two_hat = kInf;
    for (int it = 0; it < 20000; ++it) {
        VectorXd d(3);
        d[0] = sampler.normal();
        // stay inside the dominant-coordinate cone around J = {0}
        const double budget = ratio * std::abs(d[0]);
        const double u = sampler.uniform01();
        d[1] = (2.0 * sampler.uniform01() - 1.0) * budget * u;
        d[2] = (2.0 * sampler.uniform01() - 1.0) * (budget * u - std::abs(d[1]));
        if (std::abs(d[1]) + std::abs(d[2]) > budget) continue;
        const double q = linf_norm(psi.values * d);
        k_inf_hat = std::min(k_inf_hat, q / linf_norm(d));
        k_one_hat = std::min(k_one_hat, q / d.lpNorm<1>());
        k_two_hat = std::min(k_two_hat, q / d.norm());
    }
    const double lhs = std::pow(2.0 * 1.0 / (1.0 - c), -0.5) * k_inf_hat;
    const double rhs = 2.0 / (1.0 - c) * std::pow(1.0, 0.5) * k_one_hat;
    CHECK(lhs <= k_two_hat * (1.0 + 1e-6) + 1e-12);
    CHECK(k_two_hat <= rhs * (1.0 + 1e-2) + 1e-12);
}

TEST_CASE("coherence bound: identity case, failure case, and domination")
{
    SensOptions opt = tight_opts();
    SUBCASE("identity with c = 0")
    {
        PsiMatrix psi = wrap(MatrixXd::Identity(2, 2));
        CoherenceBound cb = coherence_bound(psi, {0}, 0.0, 1.0);
        REQUIRE(cb.applicable);
        CHECK(cb.eta1 == doctest::Approx(1.0));
        CHECK(cb.eta2 == doctest::Approx(1.0));
        CHECK(cb.bound == doctest::Approx(0.5));
    }
    SUBCASE("fully correlated columns are rejected")
    {
        MatrixXd m(2, 2);
        m << 1, 1, 1, 1;
        CoherenceBound cb = coherence_bound(wrap(m), {0, 1}, 0.1, 1.0);
        CHECK_FALSE(cb.applicable);
    }
    SUBCASE("bound never exceeds the exact coordinate sensitivity")
    {
        Rng rng(28);
        for (int inst = 0; inst < 5; ++inst) {
            PsiMatrix psi = wrap(random_psi(rng, 3, 3, 0.05));
            const double c = 0.15;
            CoherenceBound cb = coherence_bound(psi, {0}, c, 1.0);
            if (!cb.applicable) continue;
            // kappa_{1,J} <= kappa*_{k,J} for k in J
            const double exact =
                kappa_coord_exact(psi, 0, {0}, ConeFactor::dominant(c, 1), opt);
            CHECK(cb.bound <= exact + 1e-9);
        }
    }
}

TEST_CASE("row addition never decreases the computed bounds")
{
    Rng rng(29);
    SensOptions opt = tight_opts();
    for (int inst = 0; inst < 4; ++inst) {
        PsiMatrix psi = wrap(random_psi(rng, 3, 3));
        MatrixXd extended(4, 3);
        extended.topRows(3) = psi.values;
        for (Eigen::Index j = 0; j < 3; ++j) extended(3, j) = rng.normal();
        PsiMatrix bigger = wrap(extended);
        const double c = 0.2;
        const int s = 2;
        const ConeFactor cf = ConeFactor::dominant(c, s);
        for (Eigen::Index k = 0; k < 3; ++k) {
            CHECK(kappa_coord_cert(bigger, k, s, cf, opt) + 1e-9 >=
                  kappa_coord_cert(psi, k, s, cf, opt));
        }
        CHECK(kappa1_cert(bigger, s, c, opt) + 1e-9 >= kappa1_cert(psi, s, c, opt));
    }
}

TEST_CASE("enlarged cone uses the wider budget")
{
    const double c = 0.4;
    const ConeFactor base = ConeFactor::dominant(c, 2);
    const ConeFactor wide = ConeFactor::enlarged(c, 2);
    CHECK(base.a == doctest::Approx(2.0 * 2 / (1.0 - c)));
    CHECK(wide.a == doctest::Approx(3.0 * 2 / (1.0 - c)));
    Rng rng(30);
    PsiMatrix psi = wrap(random_psi(rng, 3, 3));
    SensOptions opt = tight_opts();
    // a larger budget can only lower the infimum
    for (Eigen::Index k = 0; k < 3; ++k)
        CHECK(kappa_coord_cert(psi, k, 2, wide, opt) <=
              kappa_coord_cert(psi, k, 2, base, opt) + 1e-10);
}

TEST_CASE("report assembly and battery parallelism determinism")
{
    Rng rng(31);
    PsiMatrix psi = wrap(random_psi(rng, 4, 4));
    SensOptions serial = tight_opts();
    SensOptions threaded = tight_opts();
    threaded.threads = 4;
    SensitivityReport a = compute_sensitivities(psi, 2, 0.1, false, serial);
    SensitivityReport b = compute_sensitivities(psi, 2, 0.1, false, threaded);
    REQUIRE(a.kappa_coord.size() == b.kappa_coord.size());
    CHECK((a.kappa_coord - b.kappa_coord).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.kappa1 == b.kappa1);
    CHECK(a.kappa1 == doctest::Approx(a.kappa_coord.minCoeff() * (1.0 - 0.1) / (2.0 * 2)));
}

TEST_CASE("block battery guards its size")
{
    PsiMatrix psi = wrap(MatrixXd::Identity(3, 3));
    SensOptions opt = tight_opts();
    opt.block_limit = 2;
    CHECK_THROWS_AS(kappa_block_cert(psi, {0, 1, 2}, 1, 0.1, opt), Error);
    CHECK_THROWS_AS(kappa_coord_exact(psi, 0, {0, 1, 2}, ConeFactor::dominant(0.1, 1), opt), Error);
}
