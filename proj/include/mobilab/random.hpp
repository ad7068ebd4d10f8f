#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mobilab {

using Rng = std::mt19937_64;

// Named substreams. Every stochastic step draws from one of these so a
// sub-result can be regenerated from the run seed alone.
namespace streams {
inline constexpr std::string_view simulation = "simulation";
inline constexpr std::string_view fathers = "fathers";
inline constexpr std::string_view splitting = "splitting";
inline constexpr std::string_view thinning = "thinning";
inline constexpr std::string_view folds = "folds";
inline constexpr std::string_view bootstrap = "bootstrap";
inline constexpr std::string_view subsample = "subsample";
inline constexpr std::string_view parent_income = "parent_income";
inline constexpr std::string_view repetition = "repetition";
}  // namespace streams

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view s);

// Seed for element `index` of stream `stream` under run seed `base`.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t index = 0);

Rng make_rng(std::uint64_t base, std::string_view stream, std::uint64_t index = 0);

}  // namespace mobilab
