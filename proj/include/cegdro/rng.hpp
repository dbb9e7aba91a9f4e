#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cegdro {

// splitmix64 finalizer; used to derive independent seed streams from a root
// seed plus a list of tags (method id, grid point, run index, ...).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t root, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = splitmix64(root);
    for (std::uint64_t t : tags) {
        s = splitmix64(s ^ splitmix64(t));
    }
    return s;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

// Fixed stream tags so the derived streams (data splits, model init, warmup,
// samplers, sweep seeds) never collide.
namespace seed_tag {
inline constexpr std::uint64_t train_split   = 0x11;
inline constexpr std::uint64_t val_split     = 0x12;
inline constexpr std::uint64_t test_split    = 0x13;
inline constexpr std::uint64_t model_init    = 0x21;
inline constexpr std::uint64_t warmup_init   = 0x22;
inline constexpr std::uint64_t warmup_shuffle = 0x23;
inline constexpr std::uint64_t erm_shuffle   = 0x24;
inline constexpr std::uint64_t stage_sampler = 0x25;
inline constexpr std::uint64_t final_sampler = 0x26;
inline constexpr std::uint64_t selection_run = 0x31;
inline constexpr std::uint64_t report_run    = 0x32;
}  // namespace seed_tag

}  // namespace cegdro
