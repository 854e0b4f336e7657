#include "mkt/joint.hpp"

#include "mkt/errors.hpp"
#include "mkt/mem.hpp"

namespace mkt {

JointSharedModel::JointSharedModel(const FeatureSchema& schema, const JointConfig& cfg, Rng& rng) : schema_(schema) {
  embedder_ = std::make_unique<FeatureEmbedder>(params_, schema_, "joint",
                                                std::vector<Entity>{Entity::source, Entity::target}, rng);
  const std::size_t in = schema_.user_dim() + schema_.seq_dim() + schema_.shared_dim() +
                         schema_.spec_dim(Entity::source) + schema_.spec_dim(Entity::target);
  bottom_ = nn::Mlp::create(params_, "joint.bottom", in, cfg.bottom, rng, /*relu_last=*/true);
  towers_[0] = nn::Mlp::create(params_, "joint.tower.src", bottom_.out(), {cfg.tower_hidden, 1}, rng);
  towers_[1] = nn::Mlp::create(params_, "joint.tower.tgt", bottom_.out(), {cfg.tower_hidden, 1}, rng);
}

tg::Var JointSharedModel::forward(tg::Tape& t, Entity e, Batch batch) const {
  const EmbeddedBatch emb = embedder_->embed(t, e, batch);
  const Entity other = e == Entity::source ? Entity::target : Entity::source;
  tg::Var pad = t.constant(tg::Tensor(batch.size(), schema_.spec_dim(other)));
  tg::Var spec_src = e == Entity::source ? emb.v_spec : pad;
  tg::Var spec_tgt = e == Entity::target ? emb.v_spec : pad;
  tg::Var h = bottom_(t, tg::concat({emb.v_u, emb.v_seq, emb.v_shared, spec_src, spec_tgt}));
  return towers_[index_of(e)](t, h);
}

tg::Var JointSharedModel::loss(tg::Tape& t, Batch batch) const {
  if (batch.empty()) throw ContractError("joint loss: empty batch");
  const auto groups = split_by_entity(batch);
  tg::Var total;
  for (Entity e : {Entity::source, Entity::target}) {
    const auto& g = groups[index_of(e)];
    if (g.empty()) continue;
    std::vector<double> labels;
    for (const EncodedSample* s : g) labels.push_back(s->label);
    tg::Var s = tg::sum(tg::bce_with_logits(forward(t, e, g), labels));
    total = total.valid() ? tg::add(total, s) : s;
  }
  return tg::scale(total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace mkt
