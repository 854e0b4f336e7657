#include "mkt/features.hpp"

#include "mkt/errors.hpp"
#include "mkt/layers.hpp"

namespace mkt {

FeatureEmbedder::FeatureEmbedder(tg::ParameterSet& ps, const FeatureSchema& schema, const std::string& prefix,
                                 const std::vector<Entity>& spec_entities, Rng& rng)
    : schema_(schema) {
  schema_.validate();
  const std::size_t d = schema_.embed_dim;
  const double a = kEmbeddingInitScale;
  for (const Field& f : schema_.user_fields)
    user_tables_.push_back(&ps.add(prefix + ".emb.user." + f.name, nn::uniform(f.vocab, d, -a, a, rng)));
  for (const Field& f : schema_.shared_fields)
    shared_tables_.push_back(&ps.add(prefix + ".emb.shared." + f.name, nn::uniform(f.vocab, d, -a, a, rng)));
  for (Entity e : spec_entities) {
    const std::string tag = e == Entity::source ? ".emb.src." : ".emb.tgt.";
    for (const Field& f : schema_.spec(e))
      spec_tables_[index_of(e)].push_back(&ps.add(prefix + tag + f.name, nn::uniform(f.vocab, d, -a, a, rng)));
  }
  const std::size_t in = schema_.shared_dim();
  wq_ = &ps.add(prefix + ".seq.wq", nn::uniform(schema_.attn_dim, in, -a, a, rng));
  wk_ = &ps.add(prefix + ".seq.wk", nn::uniform(schema_.attn_dim, in, -a, a, rng));
}

tg::Var FeatureEmbedder::lookup(tg::Tape& t, const std::vector<tg::Parameter*>& tables,
                                const std::vector<std::vector<std::int32_t>>& ids) const {
  std::vector<tg::Var> parts;
  parts.reserve(tables.size());
  for (std::size_t f = 0; f < tables.size(); ++f) parts.push_back(tg::gather(t.param(*tables[f]), ids[f]));
  return parts.size() == 1 ? parts.front() : tg::concat(parts);
}

EmbeddedBatch FeatureEmbedder::embed(tg::Tape& t, Entity entity, Batch batch) const {
  if (!serves(entity)) throw ValidationError("embedder has no specific-feature tables for entity " + to_string(entity));
  if (batch.empty()) throw ContractError("embed: empty batch");
  const std::size_t nu = schema_.n_user(), ns = schema_.n_shared(), np = schema_.n_spec(entity);
  std::vector<std::vector<std::int32_t>> uid(nu), sid(ns), pid(np);
  for (const EncodedSample* s : batch) {
    if (s->entity != entity)
      throw ValidationError("sample of entity " + to_string(s->entity) + " in a " + to_string(entity) + " batch");
    validate_sample(schema_, *s);
    for (std::size_t f = 0; f < nu; ++f) uid[f].push_back(s->user_ids[f]);
    for (std::size_t f = 0; f < ns; ++f) sid[f].push_back(s->shared_ids[f]);
    for (std::size_t f = 0; f < np; ++f) pid[f].push_back(s->spec_ids[f]);
  }
  EmbeddedBatch out;
  out.v_u = lookup(t, user_tables_, uid);
  out.v_shared = lookup(t, shared_tables_, sid);
  out.v_spec = lookup(t, spec_tables_[index_of(entity)], pid);
  out.v_seq = tg::concat({attention_pool(t, out.v_shared, batch, 0), attention_pool(t, out.v_shared, batch, 1)});
  out.v_full = tg::concat({out.v_u, out.v_seq, out.v_shared, out.v_spec});
  return out;
}

tg::Var FeatureEmbedder::attention_pool(tg::Tape& t, tg::Var candidate_shared, Batch batch, std::size_t which,
                                        std::vector<double>* weights) const {
  const std::size_t ns = schema_.n_shared();
  std::vector<std::size_t> offsets{0};
  std::vector<std::vector<std::int32_t>> ids(ns);
  for (const EncodedSample* s : batch) {
    const auto& seq = s->sequences[which];
    for (std::size_t k = 0; k < seq.size(); ++k) ids[k % ns].push_back(seq[k]);
    offsets.push_back(offsets.back() + seq.size() / ns);
  }
  if (offsets.back() == 0) {
    if (weights) weights->clear();
    return t.constant(tg::Tensor(batch.size(), schema_.attn_dim));
  }
  tg::Var items = lookup(t, shared_tables_, ids);
  tg::Var keys = tg::matmul_nt(items, t.param(*wk_));
  tg::Var queries = tg::matmul_nt(candidate_shared, t.param(*wq_));
  return tg::attention_pool(queries, keys, std::move(offsets), weights);
}

}  // namespace mkt
