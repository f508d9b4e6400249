#pragma once

#include <array>
#include <cstdint>
#include <limits>

#include <boost/random/normal_distribution.hpp>

namespace srflab {

/// SplitMix64 finalizer. Used to turn (seed, replica, index) keys into
/// well-separated generator states.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Key identifying one independent random stream.
///
/// Every draw in the library is made from a stream keyed by the global
/// seed, a replica id and a draw/step index, so results do not depend on
/// how replicas are scheduled across workers.
struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    std::uint64_t index = 0;
};

/// xoshiro256++ generator seeded from a StreamKey.
/// Satisfies UniformRandomBitGenerator.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(StreamKey key = {}) noexcept
    {
        std::uint64_t h = splitmix64(key.seed);
        h = splitmix64(h ^ (key.replica * 0xD1B54A32D192ED03ULL));
        h = splitmix64(h ^ (key.index * 0x8CB92BA72F3D8DD7ULL));
        for (auto& s : state_) {
            h = splitmix64(h);
            s = h;
        }
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
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

    /// Uniform on [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Standard normal variate (ziggurat).
    double normal() { return normal_(*this); }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
    {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
    boost::random::normal_distribution<double> normal_{};
};

} // namespace srflab
