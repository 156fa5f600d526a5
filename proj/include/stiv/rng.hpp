#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "stiv/math.hpp"

namespace stiv {

/// Counter-style generator built on splitmix64. Streams are derived by mixing
/// a master seed with a stream index, so parallel replications draw from
/// disjoint, reproducible sequences regardless of scheduling.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) { next(); }

    static Rng stream(std::uint64_t master_seed, std::uint64_t stream_index)
    {
        return Rng(mix(master_seed, 0x393fe63aa9e5b56dULL ^ mix(stream_index, 0x2545f4914f6cdd1dULL)));
    }

    std::uint64_t next()
    {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on (0,1), 53-bit mantissa, never exactly 0 or 1.
    double uniform01()
    {
        const std::uint64_t bits = next() >> 11;
        double u = (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
        return u;
    }

    /// Standard normal via inverse CDF (deterministic, no rejection state).
    double normal() { return normal_quantile(uniform01()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next() % n; }

    /// Student-t with df degrees of freedom (ratio of normal and chi draws).
    double student_t(double df)
    {
        double z = normal();
        double chi2 = 0.0;
        int whole = static_cast<int>(df);
        for (int i = 0; i < whole; ++i) {
            const double g = normal();
            chi2 += g * g;
        }
        const double frac = df - whole;
        if (frac > 0.0) {
            const double g = normal();
            chi2 += frac * g * g;
        }
        return z / std::sqrt(chi2 / df);
    }

    VectorXd normal_vector(Eigen::Index n)
    {
        VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

  private:
    static std::uint64_t mix(std::uint64_t v, std::uint64_t salt)
    {
        v += salt;
        v = (v ^ (v >> 33)) * 0xff51afd7ed558ccdULL;
        v = (v ^ (v >> 33)) * 0xc4ceb9fe1a85ec53ULL;
        return v ^ (v >> 33);
    }

    std::uint64_t state_;
};

} // namespace stiv
