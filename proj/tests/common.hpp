#pragma once

#include <random>
#include <vector>

#include "mkt/rng.hpp"
#include "mkt/schema.hpp"
#include "mkt/tensor.hpp"

namespace mkt::test {

// Two user fields, two shared fields, two source-specific and three
// target-specific fields; small dims so finite differences stay cheap.
inline FeatureSchema tiny_schema() {
  FeatureSchema s;
  s.user_fields = {{"user_id", 6}, {"age", 3}};
  s.shared_fields = {{"category", 4}, {"creator", 5}};
  s.spec_fields[0] = {{"item_id", 7}, {"price", 3}};
  s.spec_fields[1] = {{"post_id", 6}, {"style", 3}, {"length", 2}};
  s.seq_len = 3;
  s.embed_dim = 3;
  s.attn_dim = 4;
  return s;
}

inline EncodedSample random_sample(const FeatureSchema& s, Entity e, Rng& rng, std::uint8_t label) {
  auto pick = [&](std::int32_t vocab) { return std::uniform_int_distribution<std::int32_t>(0, vocab - 1)(rng); };
  EncodedSample x;
  x.entity = e;
  for (const auto& f : s.user_fields) x.user_ids.push_back(pick(f.vocab));
  x.user = static_cast<std::uint32_t>(x.user_ids[0]);
  for (const auto& f : s.shared_fields) x.shared_ids.push_back(pick(f.vocab));
  for (const auto& f : s.spec(e)) x.spec_ids.push_back(pick(f.vocab));
  for (std::size_t w = 0; w < 2; ++w) {
    const std::size_t n = 1 + static_cast<std::size_t>(pick(static_cast<std::int32_t>(s.seq_len)));
    for (std::size_t k = 0; k < n; ++k)
      for (const auto& f : s.shared_fields) x.sequences[w].push_back(pick(f.vocab));
  }
  x.label = label;
  return x;
}

inline tg::Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  tg::Tensor t(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

}  // namespace mkt::test
