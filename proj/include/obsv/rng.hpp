#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace obsv {

/// splitmix64: tiny seed mixer used to derive independent stream seeds from
/// a scenario seed plus context tags, keeping every run reproducible.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a) {
    return splitmix64(seed ^ splitmix64(a));
}
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

/// Uniform point in the closed Euclidean ball of the given radius.
inline Eigen::VectorXd uniform_in_ball(std::mt19937_64& rng, int dim, double radius) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
    double n = v.norm();
    if (n == 0.0) { v.setZero(); v[0] = 1.0; n = 1.0; }
    const double r = radius * std::pow(unif(rng), 1.0 / dim);
    return (r / n) * v;
}

}  // namespace obsv
