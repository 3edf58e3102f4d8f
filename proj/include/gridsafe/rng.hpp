#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace gridsafe {

// Counter-based seedable stream built on the splitmix64 finalizer.
// A stream is keyed by (seed, draw_index, tag); successive outputs walk the
// Weyl sequence state += GAMMA and finalize each state independently, so the
// k-th value of any stream is a pure function of (seed, draw_index, tag, k).
// This is what makes mutation draws reproducible across platforms and worker
// counts: workers never share generator state.
class SeededStream {
  public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

    SeededStream(std::uint64_t seed, std::uint64_t draw_index, std::uint64_t tag) {
        state_ = mix64(seed ^ mix64(draw_index + kGamma) ^ mix64(tag + 2 * kGamma));
    }

    std::uint64_t next_u64() {
        state_ += kGamma;
        return mix64(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [0, n). n must be >= 1.
    std::size_t uniform_index(std::size_t n) {
        auto k = static_cast<std::size_t>(next_double() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    /// Standard normal via Box-Muller (both draws consumed every call).
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// First k positions of a Fisher-Yates shuffle of [0, n): a uniformly
    /// distributed k-subset without replacement, in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        if (k > n) k = n;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + uniform_index(n - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

    static std::uint64_t mix64(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

  private:
    std::uint64_t state_;
};

// Stream tags, one per mutation purpose so draws never alias.
namespace rng_tag {
inline constexpr std::uint64_t load_subset = 1;
inline constexpr std::uint64_t load_multiplier = 2;
inline constexpr std::uint64_t price = 3;
inline constexpr std::uint64_t outage = 4;
inline constexpr std::uint64_t weights = 5;
}  // namespace rng_tag

}  // namespace gridsafe
