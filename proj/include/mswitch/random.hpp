#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace mswitch {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A draw is a
/// pure function of (key, counter), so any path/step can be regenerated
/// without replaying the ones before it.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Independent sub-streams sharing one user seed.
enum class Stream : std::uint32_t {
    brownian = 0,
    bootstrap = 1,
    latin_hypercube = 2,
    probe = 3,
};

/// Draws keyed by (seed, stream, a, b, block). `a`/`b` are typically
/// (path, step); `block` indexes successive quadruples at the same site.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, Stream stream = Stream::brownian) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(static_cast<std::uint32_t>(stream)) {}

    Philox4x32::Counter raw(std::uint32_t a, std::uint32_t b, std::uint32_t block) const noexcept {
        return Philox4x32::generate({a, b, block, stream_}, key_);
    }

    /// Two uniforms in (0, 1) with 53-bit resolution.
    std::pair<double, double> uniform2(std::uint32_t a, std::uint32_t b,
                                       std::uint32_t block) const noexcept {
        const auto w = raw(a, b, block);
        return {to_unit(w[0], w[1]), to_unit(w[2], w[3])};
    }

    /// Two independent standard normals (Box-Muller).
    std::pair<double, double> normal2(std::uint32_t a, std::uint32_t b,
                                      std::uint32_t block) const noexcept {
        const auto [u1, u2] = uniform2(a, b, block);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

    /// Fills `out[0..n)` with standard normals for site (a, b).
    template <typename Span>
    void normals(std::uint32_t a, std::uint32_t b, Span&& out) const noexcept {
        const std::size_t n = out.size();
        for (std::size_t i = 0; i < n; i += 2) {
            const auto [z0, z1] = normal2(a, b, static_cast<std::uint32_t>(i / 2));
            out[i] = z0;
            if (i + 1 < n) out[i + 1] = z1;
        }
    }

private:
    static double to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
        const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
    std::uint32_t stream_;
};

} // namespace mswitch
