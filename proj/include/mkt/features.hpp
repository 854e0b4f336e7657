#pragma once

#include <span>
#include <string>
#include <vector>

#include "mkt/ops.hpp"
#include "mkt/parameter.hpp"
#include "mkt/rng.hpp"
#include "mkt/schema.hpp"

namespace mkt {

using Batch = std::span<const EncodedSample* const>;

// Row i of every member belongs to sample i of the batch.
struct EmbeddedBatch {
  tg::Var v_u;       // (B, n_u * d_e)
  tg::Var v_seq;     // (B, 2 * d_attn)
  tg::Var v_shared;  // (B, n_shared * d_e)
  tg::Var v_spec;    // (B, n_spec * d_e)
  tg::Var v_full;    // [v_u || v_seq || v_shared || v_spec]
};

inline constexpr double kEmbeddingInitScale = 0.05;

// Embedding tables for the four feature groups plus the attention sequence
// encoder. One encoder (W_q, W_k) is shared by both behavior sequences and by
// every entity this embedder serves. Parameter names:
//   <prefix>.emb.user.<field>, <prefix>.emb.shared.<field>,
//   <prefix>.emb.src.<field> / <prefix>.emb.tgt.<field>,
//   <prefix>.seq.wq, <prefix>.seq.wk
class FeatureEmbedder {
 public:
  FeatureEmbedder(tg::ParameterSet& ps, const FeatureSchema& schema, const std::string& prefix,
                  const std::vector<Entity>& spec_entities, Rng& rng);

  // Validates every sample (ids within vocab, entity served) before lookup.
  EmbeddedBatch embed(tg::Tape& t, Entity entity, Batch batch) const;

  // Pools behavior sequence `which` (0 = source clicks, 1 = target clicks)
  // with the candidate's shared embedding (B, n_shared * d_e) as query.
  tg::Var attention_pool(tg::Tape& t, tg::Var candidate_shared, Batch batch, std::size_t which,
                         std::vector<double>* weights = nullptr) const;

  const FeatureSchema& schema() const { return schema_; }
  bool serves(Entity e) const { return !spec_tables_[index_of(e)].empty(); }

 private:
  tg::Var lookup(tg::Tape& t, const std::vector<tg::Parameter*>& tables,
                 const std::vector<std::vector<std::int32_t>>& ids) const;

  FeatureSchema schema_;
  std::vector<tg::Parameter*> user_tables_;
  std::vector<tg::Parameter*> shared_tables_;
  std::array<std::vector<tg::Parameter*>, 2> spec_tables_;
  tg::Parameter* wq_ = nullptr;
  tg::Parameter* wk_ = nullptr;
};

}  // namespace mkt
