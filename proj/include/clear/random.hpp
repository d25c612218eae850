#pragma once

// Seeded draws that do not depend on the standard library's distribution
// implementations, so streams and batches are identical across toolchains.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

namespace clear::rnd {

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline std::size_t index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

// Box-Muller, one draw per call.
inline double normal(std::mt19937_64& rng, double mean = 0.0, double sd = 1.0) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[index(rng, i)]);
}

// k distinct indices from [0, n), in draw order; all of them when k >= n.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (k >= n) return order;
    for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + index(rng, n - i)]);
    order.resize(k);
    return order;
}

}  // namespace clear::rnd
