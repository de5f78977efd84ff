#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace hdm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when a configuration, file, or checkpoint cannot be used as given.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

/// Independent RNG stream `index` derived from a master seed.
inline Rng stream_rng(std::uint64_t master_seed, std::uint64_t index) {
    return Rng(splitmix64(splitmix64(master_seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

inline Vec standard_normal(Rng& rng, Eigen::Index n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

}  // namespace hdm
