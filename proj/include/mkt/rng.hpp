#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mkt {

using Rng = std::mt19937_64;

// Independent generator for a named purpose ("init", "shuffle",
// "generator", ...) derived from the run seed. Identical (seed, name, index)
// triples always yield identical streams.
inline Rng substream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  std::vector<std::uint32_t> material{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  for (char c : name) material.push_back(static_cast<unsigned char>(c));
  std::seed_seq seq(material.begin(), material.end());
  return Rng(seq);
}

}  // namespace mkt
