#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dycausal/tensor.hpp"

namespace dycausal {

/// Deterministic random source used for every stochastic choice in the
/// library (graph sampling, weights, noise, parameter init).
///
/// Generator: xoshiro256** with the state expanded from a 64-bit seed by
/// splitmix64. Gaussian draws use the polar Box-Muller transform (Marsaglia),
/// which consumes uniform pairs via rejection and touches libm only through
/// sqrt/log. A fixed seed therefore reproduces the exact draw sequence,
/// byte for byte, run after run.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
        has_spare_ = false;
        spare_ = 0.0;
    }

    /// Sub-stream derivation: child k of seed s is seeded with
    /// splitmix64(s ^ splitmix64(k + 1)), so distinct (seed, k) pairs give
    /// independent streams and child streams never alias the parent.
    static Rng split(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t k = stream + 1;
        return Rng(seed ^ splitmix64(k));
    }

    std::uint64_t next_u64() {
        std::uint64_t* s = state_;
        std::uint64_t result = rotl(s[1] * 5, 7) * 9;
        std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 significant bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // Rejection against the largest multiple of n keeps the draw unbiased.
        std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= lim);
        return v % n;
    }

    /// Standard normal via the polar method; the spare of each accepted pair
    /// is cached, so draws come in deterministic order.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    TensorF normal_tensor(std::vector<std::size_t> shape, double mean, double stddev) {
        TensorF t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(mean, stddev);
        return t;
    }

    /// Fisher-Yates shuffle of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4];
    bool has_spare_;
    double spare_;
};

}  // namespace dycausal
