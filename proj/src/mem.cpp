#include "mkt/mem.hpp"

#include "mkt/errors.hpp"

namespace mkt {
namespace {

const char* tag(Entity e) { return e == Entity::source ? "src" : "tgt"; }

}  // namespace

CommonKnowledgeExtractor::CommonKnowledgeExtractor(tg::ParameterSet& ps, const std::string& prefix, std::size_t in,
                                                   const PleConfig& cfg, Rng& rng) {
  if (cfg.n_shared_experts + cfg.n_specific_experts == 0) throw ValidationError("PLE needs at least one expert");
  if (cfg.d_cke < 1) throw ValidationError("ple.d_cke must be >= 1");
  const std::vector<std::size_t> sizes{cfg.expert_hidden, cfg.d_cke};
  for (std::size_t k = 0; k < cfg.n_shared_experts; ++k)
    shared_experts.push_back(nn::Mlp::create(ps, prefix + ".shared." + std::to_string(k), in, sizes, rng));
  for (Entity e : {Entity::source, Entity::target}) {
    for (std::size_t k = 0; k < cfg.n_specific_experts; ++k)
      specific_experts[index_of(e)].push_back(
          nn::Mlp::create(ps, prefix + "." + tag(e) + "." + std::to_string(k), in, sizes, rng));
  }
  for (Entity e : {Entity::source, Entity::target})
    gates[index_of(e)] = nn::Linear::create(ps, prefix + ".gate." + tag(e), in,
                                            cfg.n_shared_experts + cfg.n_specific_experts, rng);
}

tg::Var CommonKnowledgeExtractor::forward(tg::Tape& t, tg::Var q, Entity e, tg::Var* gate_weights) const {
  tg::Var w = tg::softmax_rows(gates[index_of(e)](t, q));
  if (gate_weights) *gate_weights = w;
  std::vector<const nn::Mlp*> experts;
  for (const auto& m : shared_experts) experts.push_back(&m);
  for (const auto& m : specific_experts[index_of(e)]) experts.push_back(&m);
  tg::Var out;
  for (std::size_t k = 0; k < experts.size(); ++k) {
    tg::Var term = tg::mul_rows((*experts[k])(t, q), tg::slice_cols(w, k, 1));
    out = out.valid() ? tg::add(out, term) : term;
  }
  return out;
}

Mem::Mem(const FeatureSchema& schema, const MemConfig& cfg, Rng& rng) : schema_(schema), cfg_(cfg) {
  if (cfg_.gamma < 0.0) throw ValidationError("gamma must be >= 0");
  embedder_ = std::make_unique<FeatureEmbedder>(params_, schema_, "mem",
                                                std::vector<Entity>{Entity::source, Entity::target}, rng);
  hfa_ = std::make_unique<Hfa>(params_, "mem.hfa", schema_, cfg_.hfa, rng);
  cke_ = std::make_unique<CommonKnowledgeExtractor>(params_, "mem.cke", hfa_->output_dim(), cfg_.ple, rng);
  const std::size_t d_cke = cfg_.ple.d_cke;
  const std::size_t tower_in = schema_.user_dim() + schema_.seq_dim() + 2 * d_cke;
  for (Entity e : {Entity::source, Entity::target}) {
    const std::string name = e == Entity::source ? "mem.ske" : "mem.tke";
    ind_[index_of(e)] = nn::Mlp::create(params_, name, schema_.full_dim(e), {cfg_.ind_hidden, d_cke}, rng);
  }
  for (Entity e : {Entity::source, Entity::target})
    towers_[index_of(e)] =
        nn::Mlp::create(params_, std::string("mem.tower.") + tag(e), tower_in, {cfg_.tower_hidden, 1}, rng);
}

tg::Var Mem::independent(tg::Tape& t, tg::Var v_full, Entity e) const { return ind_[index_of(e)](t, v_full); }

KnowledgeBundle Mem::forward(tg::Tape& t, Entity e, Batch batch) const {
  KnowledgeBundle kb;
  kb.emb = embedder_->embed(t, e, batch);
  const auto aligned = hfa_->branch(e).forward(t, kb.emb.v_spec, kb.emb.v_shared);
  kb.p = aligned.p;
  kb.q = aligned.q;
  kb.g_com = cke_->forward(t, kb.q, e, &kb.gate);
  kb.g_ind = independent(t, kb.emb.v_full, e);
  kb.logit = towers_[index_of(e)](t, tg::concat({kb.emb.v_u, kb.emb.v_seq, kb.g_com, kb.g_ind}));
  return kb;
}

tg::Var polarized_distribution_loss(tg::Tape& t, const KnowledgeBundle* source, const KnowledgeBundle* target) {
  tg::Var total;
  for (const KnowledgeBundle* kb : {source, target}) {
    if (!kb) continue;
    tg::Var term = tg::mean(tg::cosine(kb->g_com, kb->g_ind));
    total = total.valid() ? tg::add(total, term) : term;
  }
  return total.valid() ? total : t.constant(tg::Tensor::scalar(0.0));
}

std::array<std::vector<const EncodedSample*>, 2> split_by_entity(Batch batch) {
  std::array<std::vector<const EncodedSample*>, 2> out;
  for (const EncodedSample* s : batch) out[index_of(s->entity)].push_back(s);
  return out;
}

tg::Var Mem::loss(tg::Tape& t, Batch batch, MemLossParts* parts) const {
  if (batch.empty()) throw ContractError("mem loss: empty batch");
  const auto groups = split_by_entity(batch);
  std::array<std::unique_ptr<KnowledgeBundle>, 2> kb;
  tg::Var bce_total;
  std::array<double, 2> bce_sums{0.0, 0.0};
  for (Entity e : {Entity::source, Entity::target}) {
    const auto& g = groups[index_of(e)];
    if (g.empty()) continue;
    kb[index_of(e)] = std::make_unique<KnowledgeBundle>(forward(t, e, g));
    std::vector<double> labels;
    labels.reserve(g.size());
    for (const EncodedSample* s : g) labels.push_back(s->label);
    tg::Var s = tg::sum(tg::bce_with_logits(kb[index_of(e)]->logit, labels));
    bce_sums[index_of(e)] = s.value().item();
    bce_total = bce_total.valid() ? tg::add(bce_total, s) : s;
  }
  tg::Var total = tg::scale(bce_total, 1.0 / static_cast<double>(batch.size()));
  double pdl_value = 0.0;
  if (cfg_.gamma != 0.0 || parts) {
    tg::Var pdl = polarized_distribution_loss(t, kb[0].get(), kb[1].get());
    pdl_value = pdl.value().item();
    if (cfg_.gamma != 0.0) total = tg::add(total, tg::scale(pdl, cfg_.gamma));
  }
  if (parts) {
    parts->bce_sum_source = bce_sums[0];
    parts->bce_sum_target = bce_sums[1];
    parts->pdl = pdl_value;
    parts->n_source = groups[0].size();
    parts->n_target = groups[1].size();
  }
  return total;
}

}  // namespace mkt
