#pragma once

#include "otcs/common.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace otcs {

using Rng = std::mt19937_64;

/// Stable 64-bit hash of a stream name (FNV-1a), so named sub-streams do not
/// depend on std::hash.
constexpr std::uint64_t stream_tag(std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

/// Derives an independent seed from a base seed and up to three indices.
/// Used for the (seed, iteration, slot) and (seed, sample index) stream contracts.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

inline Rng make_rng(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return Rng(derive_seed(base, a, b, c));
}

inline Rng named_stream(std::uint64_t seed, std::string_view name) {
  return make_rng(seed, stream_tag(name));
}

/// Fills a D x n matrix with independent standard normals, column by column.
Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

double uniform(Rng& rng, double lo, double hi);

}  // namespace otcs
