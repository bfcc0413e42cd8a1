#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace sreg {

using Rng = std::mt19937_64;

/// Tags that keep the random streams of one replication disjoint.
enum class Stream : std::uint64_t {
    population = 1,
    folds = 2,
    design = 3,
    fit = 4,
    inner = 5,
    synthetic = 6,
};

/// Deterministic substream keyed by a master seed and a path of tags.
inline Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::vector<std::uint32_t> words;
    words.reserve(2 * (path.size() + 1));
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(master);
    for (auto v : path) push(v);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

inline Rng substream(std::uint64_t master, Stream tag, std::uint64_t index = 0) {
    return substream(master, {static_cast<std::uint64_t>(tag), index});
}

/// Child stream drawn from a parent; advances the parent by one draw.
inline Rng spawn(Rng& parent) {
    return substream(parent(), {0x5eedu});
}

}  // namespace sreg
