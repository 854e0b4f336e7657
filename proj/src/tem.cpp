#include "mkt/tem.hpp"

#include "mkt/errors.hpp"

namespace mkt {

GateBlock GateBlock::create(tg::ParameterSet& ps, const std::string& name, std::size_t d_in, std::size_t d_out,
                            const TemConfig& cfg, Rng& rng) {
  const double n = cfg.gate_init_noise;
  GateBlock g;
  tg::Tensor a = d_in == d_out ? nn::uniform(d_out, d_in, -n, n, rng) : nn::glorot(d_out, d_in, rng);
  if (d_in == d_out)
    for (std::size_t i = 0; i < d_in; ++i) a(i, i) += 1.0;
  g.a.w = &ps.add(name + ".a.w", std::move(a));
  g.a.b = &ps.add(name + ".a.b", tg::Tensor(d_out, 1));
  g.b.w = &ps.add(name + ".b.w", nn::uniform(d_out, d_in, -n, n, rng));
  g.b.b = &ps.add(name + ".b.b", tg::Tensor(d_out, 1, cfg.gate_bias_init));
  return g;
}

tg::Var glu_gate(tg::Tape& t, tg::Var g, const GateBlock& gate) {
  if (g.cols() != gate.d_in())
    throw DimensionError("glu_gate: input width " + std::to_string(g.cols()) + ", gate expects " +
                         std::to_string(gate.d_in()));
  return tg::mul(gate.a(t, g), tg::sigmoid(gate.b(t, g)));
}

tg::Var fuse(tg::Var tem_vector, tg::Var gated) {
  if (!tem_vector.value().same_shape(gated.value()))
    throw DimensionError("fuse: TEM vector " + tem_vector.value().shape_str() + " vs gated MEM vector " +
                         gated.value().shape_str());
  return tg::add(tem_vector, gated);
}

TransferVectors extract_transfer(const Mem& mem, Batch batch) {
  tg::Tape t;
  const KnowledgeBundle kb = mem.forward(t, Entity::target, batch);
  TransferVectors tv;
  tv.slots = {kb.emb.v_u.value(), kb.emb.v_seq.value(), kb.emb.v_shared.value(), kb.g_com.value()};
  return tv;
}

std::array<std::size_t, 4> transfer_widths(const FeatureSchema& schema, const MemConfig& cfg) {
  return {schema.user_dim(), schema.seq_dim(), schema.shared_dim(), cfg.ple.d_cke};
}

Tem::Tem(const FeatureSchema& schema, Entity entity, const TemConfig& cfg, Rng& rng)
    : schema_(schema), entity_(entity), cfg_(cfg) {
  embedder_ = std::make_unique<FeatureEmbedder>(params_, schema_, "tem", std::vector<Entity>{entity}, rng);
  const std::size_t main_in = schema_.user_dim() + schema_.seq_dim() + schema_.shared_dim();
  const std::size_t spec_in = schema_.spec_dim(entity);
  cross_in_ = nn::SplitLinear::create(params_, "tem.cross.fc0", main_in, spec_in, cfg_.cross_hidden, rng);
  cross_out_ = nn::Linear::create(params_, "tem.cross.fc1", cfg_.cross_hidden, cfg_.d_cross, rng);
  tower_in_ = nn::SplitLinear::create(params_, "tem.tower.fc0", main_in + cfg_.d_cross, spec_in, cfg_.tower_hidden,
                                      rng);
  tower_out_ = nn::Linear::create(params_, "tem.tower.fc1", cfg_.tower_hidden, 1, rng);
}

void Tem::add_gates(const std::array<std::size_t, 4>& mem_widths, Rng& rng) {
  if (gates_) throw ContractError("TEM gates already built");
  const std::array<std::size_t, 4> own{schema_.user_dim(), schema_.seq_dim(), schema_.shared_dim(), cfg_.d_cross};
  std::array<GateBlock, 4> g;
  for (std::size_t s = 0; s < 4; ++s)
    g[s] = GateBlock::create(params_, std::string("tem.gate.") + kSlotNames[s], mem_widths[s], own[s], cfg_, rng);
  gates_ = g;
}

Tem::Output Tem::forward(tg::Tape& t, Batch batch, const TransferVectors* transfer, GateMode mode) const {
  if (transfer && !gates_) throw ContractError("TEM without gates cannot take MEM knowledge");
  if (!transfer && gates_) throw ContractError("TEM with gates needs MEM knowledge");
  for (const EncodedSample* s : batch)
    if (s->entity != entity_)
      throw ValidationError("TEM serves " + to_string(entity_) + " samples, got a " + to_string(s->entity) + " sample");

  Output out;
  out.emb = embedder_->embed(t, entity_, batch);
  tg::Var main = tg::concat({out.emb.v_u, out.emb.v_seq, out.emb.v_shared});
  out.g_cross = cross_out_(t, tg::relu(cross_in_(t, main, out.emb.v_spec)));
  out.fused = {out.emb.v_u, out.emb.v_seq, out.emb.v_shared, out.g_cross};
  if (transfer) {
    for (std::size_t s = 0; s < 4; ++s) {
      const tg::Tensor& mem_vec = transfer->slots[s];
      if (mem_vec.rows() != batch.size())
        throw DimensionError("transfer vector rows " + std::to_string(mem_vec.rows()) + " vs batch " +
                             std::to_string(batch.size()));
      tg::Var gated = mode == GateMode::forced_zero
                          ? t.constant(tg::Tensor(batch.size(), (*gates_)[s].d_out()))
                          : glu_gate(t, t.constant(mem_vec), (*gates_)[s]);
      out.fused[s] = fuse(out.fused[s], gated);
    }
  }
  out.logit = tower_out_(t, tg::relu(tower_in_(t, tg::concat(out.fused), out.emb.v_spec)));
  return out;
}

}  // namespace mkt
