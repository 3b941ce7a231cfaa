#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ppde {

using VecD = Eigen::VectorXd;
using MatD = Eigen::MatrixXd;

/// Thrown on malformed inputs and configuration errors (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when a solver fails to converge or a scheme precondition breaks
/// (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline VecD scalar_vec(double x) {
    VecD v(1);
    v[0] = x;
    return v;
}

inline MatD scalar_mat(double g) {
    MatD m(1, 1);
    m(0, 0) = g;
    return m;
}

/// splitmix64 step; used to derive independent per-path RNG streams from
/// (seed, index) so Monte Carlo results do not depend on thread count.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64(mix_seed(seed, stream));
}

/// Runs fn(i) for i in [0, n). With jobs > 1 the range is split into
/// contiguous chunks, one thread each; fn must only write state owned by
/// index i.
inline void parallel_for(int jobs, std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(jobs, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

/// FNV-1a over a string; stable across platforms, used for config hashes.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct MeanStdErr {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
};

/// Sequential mean/SE so results are bit-identical regardless of how the
/// samples were produced.
inline MeanStdErr mean_stderr(const std::vector<double>& xs) {
    MeanStdErr r;
    r.n = xs.size();
    if (xs.empty()) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / static_cast<double>(xs.size());
    double q = 0.0;
    for (double x : xs) q += (x - r.mean) * (x - r.mean);
    if (xs.size() > 1) {
        r.std_error = std::sqrt(q / (static_cast<double>(xs.size() - 1) * static_cast<double>(xs.size())));
    }
    return r;
}

}  // namespace ppde
