#ifndef HTGD_RNG_HPP
#define HTGD_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <string_view>

namespace htgd {

/// Random source used by every draw in the library. One engine per run.
using Rng = std::mt19937_64;

namespace detail {

/// SplitMix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

/// Combines a master seed with stream identifiers into a child seed.
/// Order matters: derive_seed(s, {a, b}) != derive_seed(s, {b, a}) in general.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> ids) noexcept
{
    std::uint64_t h = detail::mix64(master);
    for (std::uint64_t id : ids)
        h = detail::mix64(h ^ detail::mix64(id + 0x632be59bd9b4e019ULL));
    return h;
}

/// Seed for one (replication, method) pair of an experiment.
constexpr std::uint64_t replication_seed(std::uint64_t master, std::uint64_t replication, std::string_view method) noexcept
{
    return derive_seed(master, {replication, detail::fnv1a(method)});
}

inline Rng make_rng(std::uint64_t seed)
{
    return Rng{seed};
}

/// Uniform double in [0, 1) with 53 random bits. Unlike
/// std::uniform_real_distribution the mapping is fixed, so streams are
/// identical across standard library implementations.
inline double uniform01(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal draw by the Box-Muller transform on uniform01, for the
/// same cross-implementation stability. Uses two uniforms per draw.
inline double standard_normal(Rng& rng)
{
    const double u1 = 1.0 - uniform01(rng); // in (0, 1]
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace htgd

#endif // HTGD_RNG_HPP
