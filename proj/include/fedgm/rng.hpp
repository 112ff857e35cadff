#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedgm {

using Rng = std::mt19937_64;

/// Stream tags keep substreams for different purposes disjoint.
enum class Stream : std::uint64_t {
    data = 1,
    partition = 2,
    materialize = 3,
    init = 4,
    local = 5,
    cohort = 6,
    staleness = 7,
    k_choice = 8,
    probe = 9,
    hessian = 10,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for the substream (seed, tag, keys...). Order of keys matters.
std::uint64_t derive_seed(std::uint64_t seed, Stream tag, std::initializer_list<std::uint64_t> keys = {});

inline Rng make_rng(std::uint64_t seed, Stream tag, std::initializer_list<std::uint64_t> keys = {}) {
    return Rng(derive_seed(seed, tag, keys));
}

}  // namespace fedgm
