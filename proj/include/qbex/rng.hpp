#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace qbex {

/// splitmix64 step; used for seeding and counter-based stream derivation.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and up to three
/// counters (run index, variant index, ...). Pure function of its inputs, so
/// parallel workers can seed themselves without coordination.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = mix64(master ^ 0x6a09e667f3bcc909ULL);
    s = mix64(s ^ a);
    s = mix64(s ^ b);
    s = mix64(s ^ c);
    return s;
}

/// xoshiro256++ generator.
///
/// Hand-rolled rather than <random> because the standard distributions are
/// implementation-defined; experiment reruns must be byte-identical and
/// checkpoints must restore the exact stream position.
class Rng {
  public:
    Rng() : Rng(0) {}

    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) {
            sm += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = sm;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            word = z ^ (z >> 31);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    int uniform_int(int n) {
        const auto wide = static_cast<unsigned __int128>(next_u64()) *
                          static_cast<unsigned __int128>(static_cast<std::uint64_t>(n));
        return static_cast<int>(static_cast<std::uint64_t>(wide >> 64));
    }

    /// Samples an index proportionally to nonnegative weights; `total` must
    /// equal their sum. The final positive-weight entry absorbs any rounding
    /// slack so an index is always returned.
    int sample_weighted(std::span<const double> weights, double total) {
        const double u = uniform() * total;
        double acc = 0.0;
        int last_positive = -1;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) continue;
            acc += weights[i];
            last_positive = static_cast<int>(i);
            if (u < acc) return last_positive;
        }
        return last_positive;
    }

    std::array<std::uint64_t, 4> serialize() const { return state_; }
    void restore(const std::array<std::uint64_t, 4>& s) { state_ = s; }

  private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
};

} // namespace qbex
