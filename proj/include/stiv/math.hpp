#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "stiv/errors.hpp"

namespace stiv {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Pairwise (cascade) summation; error grows like O(log n) instead of O(n).
/// Sample moments are computed through this so that n up to 1e5 stays accurate.
inline double pairwise_sum(std::span<const double> x)
{
    const std::size_t n = x.size();
    if (n <= 8) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline double pairwise_mean(std::span<const double> x)
{
    if (x.empty()) fail(ErrorCode::InvalidParams, "mean of empty range");
    return pairwise_sum(x) / static_cast<double>(x.size());
}

/// E_n[f(v)] with f applied elementwise before summation.
template <class F>
double sample_moment(const VectorXd& v, F&& f)
{
    std::vector<double> buf(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) buf[static_cast<std::size_t>(i)] = f(v[i]);
    return pairwise_mean(buf);
}

/// E_n[a*b]
inline double sample_cross_moment(const VectorXd& a, const VectorXd& b)
{
    if (a.size() != b.size()) fail(ErrorCode::DimensionMismatch, "cross moment sizes differ");
    std::vector<double> buf(static_cast<std::size_t>(a.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i) buf[static_cast<std::size_t>(i)] = a[i] * b[i];
    return pairwise_mean(buf);
}

inline double sample_second_moment(const VectorXd& a) { return sample_cross_moment(a, a); }

inline double positive_part(double x) { return x > 0.0 ? x : 0.0; }

/// 1/(x)_+ with the a/0 = inf convention.
inline double inv_positive_part(double x) { return x > 0.0 ? 1.0 / x : kInf; }

inline int sign_of(double x) { return x > 0.0 ? 1 : (x < 0.0 ? -1 : 0); }

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x)
{
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

/// Inverse standard normal CDF. Rational initial guess (Acklam) polished with
/// two Halley steps against erfc; relative error below 1e-13 across
/// (1e-300, 1-1e-16), which the deep-tail quantile rules require.
inline double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::InvalidParams, "normal_quantile needs p in (0,1)");

    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};

    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    for (int it = 0; it < 2; ++it) {
        const double e = normal_cdf(x) - p;
        const double u = e / normal_pdf(x);
        x = x - u / (1.0 + 0.5 * x * u); // Halley
    }
    return x;
}

/// Linear-interpolation percentile on order statistics (type 7), q in [0,1].
inline double percentile(std::vector<double> v, double q)
{
    if (v.empty()) fail(ErrorCode::InvalidParams, "percentile of empty sample");
    if (!(q >= 0.0 && q <= 1.0)) fail(ErrorCode::InvalidParams, "percentile level outside [0,1]");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

inline double linf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

inline double lp_norm(const VectorXd& v, double p)
{
    if (p == 1.0) return v.lpNorm<1>();
    if (p == 2.0) return v.norm();
    if (std::isinf(p)) return linf_norm(v);
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::pow(std::abs(v[i]), p);
    return std::pow(s, 1.0 / p);
}

} // namespace stiv
