#include <gtest/gtest.h>

#include <cmath>

#include "common.hpp"
#include "mkt/errors.hpp"
#include "mkt/gradcheck.hpp"
#include "mkt/mem.hpp"
#include "mkt/ops.hpp"

using namespace mkt;
using mkt::tg::Tensor;

namespace {

MemConfig small_config() {
  MemConfig c;
  c.hfa.d_align = 3;
  c.hfa.cross_layers = 2;
  c.ple.expert_hidden = 5;
  c.ple.d_cke = 4;
  c.ind_hidden = 5;
  c.tower_hidden = 5;
  c.gamma = 0.1;
  return c;
}

struct Fixture {
  FeatureSchema schema = test::tiny_schema();
  Rng rng = substream(11, "mem-test");
  Mem mem{schema, small_config(), rng};
  Rng data_rng = substream(12, "samples");
  EncodedSample src = test::random_sample(schema, Entity::source, data_rng, 1);
  EncodedSample tgt = test::random_sample(schema, Entity::target, data_rng, 0);
};

double bce(double z, double y) { return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))); }

double cosine_of(const Tensor& a, const Tensor& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / (std::sqrt(aa + tg::kCosineEps) * std::sqrt(bb + tg::kCosineEps));
}

}  // namespace

TEST(Cke, GateWeightsOnSimplex) {
  tg::ParameterSet ps;
  Rng rng = substream(1, "cke");
  PleConfig c;
  c.n_shared_experts = 2;
  c.n_specific_experts = 2;
  c.expert_hidden = 6;
  c.d_cke = 3;
  CommonKnowledgeExtractor cke(ps, "cke", 5, c, rng);
  for (auto* g : {&cke.gates[0], &cke.gates[1]}) g->w->value = test::random_tensor(4, 5, rng, -3, 3);
  Rng qr = substream(2, "q");
  for (int i = 0; i < 1000; ++i) {
    tg::Tape t;
    tg::Var w;
    const Entity e = i % 2 ? Entity::target : Entity::source;
    const auto out = cke.forward(t, t.constant(test::random_tensor(1, 5, qr, -2, 2)), e, &w);
    EXPECT_EQ(out.cols(), 3u);
    double s = 0;
    for (double v : w.value().values()) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Cke, SaturatedGateSelectsSharedExpert) {
  tg::ParameterSet ps;
  Rng rng = substream(1, "cke");
  CommonKnowledgeExtractor cke(ps, "cke", 4, PleConfig{1, 1, 6, 3}, rng);
  cke.gates[0].w->value.fill(0.0);
  cke.gates[0].b->value = Tensor::column({60, -60});
  Rng qr = substream(2, "q");
  tg::Tape t;
  tg::Var q = t.constant(test::random_tensor(3, 4, qr));
  const Tensor out = cke.forward(t, q, Entity::source).value();
  const Tensor shared = cke.shared_experts[0](t, q).value();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], shared[i], 1e-15);
}

TEST(Cke, IdenticalExpertsIgnoreGate) {
  tg::ParameterSet ps;
  Rng rng = substream(1, "cke");
  CommonKnowledgeExtractor cke(ps, "cke", 4, PleConfig{1, 1, 6, 3}, rng);
  auto& a = cke.shared_experts[0];
  auto& b = cke.specific_experts[1][0];
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    b.layers[l].w->value = a.layers[l].w->value;
    b.layers[l].b->value = a.layers[l].b->value;
  }
  Rng qr = substream(2, "q");
  const Tensor qv = test::random_tensor(3, 4, qr);
  tg::Tape t;
  cke.gates[1].b->value = Tensor::column({2, -1});
  const Tensor o1 = cke.forward(t, t.constant(qv), Entity::target).value();
  cke.gates[1].b->value = Tensor::column({-4, 3});
  const Tensor o2 = cke.forward(t, t.constant(qv), Entity::target).value();
  for (std::size_t i = 0; i < o1.size(); ++i) EXPECT_NEAR(o1[i], o2[i], 1e-14);
}

TEST(Mem, IndependentExtractorZeroFinalLayer) {
  Fixture f;
  auto& ske = f.mem.independent_extractor(Entity::source);
  ske.layers.back().w->value.fill(0.0);
  ske.layers.back().b->value = Tensor::column({0.1, -0.2, 0.3, 0.4});
  const EncodedSample* b[] = {&f.src, &f.src};
  tg::Tape t;
  const Tensor g = f.mem.forward(t, Entity::source, b).g_ind.value();
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(g(r, c), ske.layers.back().b->value[c]);
}

TEST(Mem, SourceBatchLeavesTargetExtractorAlone) {
  Fixture f;
  const EncodedSample* b[] = {&f.src};
  f.mem.params().zero_grad();
  tg::Tape t;
  t.backward(f.mem.loss(t, b));
  for (auto* p : f.mem.params().all()) {
    const bool tgt_only = p->name.rfind("mem.tke", 0) == 0 || p->name.rfind("mem.tower.tgt", 0) == 0 ||
                          p->name.rfind("mem.hfa.tgt", 0) == 0 || p->name.rfind("mem.emb.tgt", 0) == 0 ||
                          p->name.rfind("mem.cke.tgt", 0) == 0 || p->name.rfind("mem.cke.gate.tgt", 0) == 0;
    if (!tgt_only) continue;
    for (double g : p->grad.values()) EXPECT_EQ(g, 0.0) << p->name;
  }
}

TEST(Mem, SharedTablesAcrossEntities) {
  Fixture f;
  EncodedSample t2 = f.tgt;
  t2.user_ids = f.src.user_ids;
  t2.sequences = f.src.sequences;
  t2.shared_ids = f.src.shared_ids;
  const EncodedSample* bs[] = {&f.src};
  const EncodedSample* bt[] = {&t2};
  tg::Tape t;
  const auto ks = f.mem.forward(t, Entity::source, bs);
  const auto kt = f.mem.forward(t, Entity::target, bt);
  EXPECT_TRUE(ks.emb.v_u.value().identical(kt.emb.v_u.value()));
  EXPECT_TRUE(ks.emb.v_seq.value().identical(kt.emb.v_seq.value()));
  EXPECT_FALSE(ks.g_com.value().identical(kt.g_com.value()));
}

TEST(Mem, ZeroTowerGivesBiasLogit) {
  Fixture f;
  auto& tower = f.mem.tower(Entity::target);
  tower.layers.back().w->value.fill(0.0);
  tower.layers.back().b->value.fill(-0.8);
  const EncodedSample* b[] = {&f.tgt};
  tg::Tape t;
  const double z = f.mem.forward(t, Entity::target, b).logit.value().item();
  EXPECT_EQ(z, -0.8);
  EXPECT_NEAR(1.0 / (1.0 + std::exp(-z)), 0.31002551887238755, 1e-15);
}

TEST(Pdl, ClosedFormCases) {
  tg::Tape t;
  auto bundle = [&](const Tensor& com, const Tensor& ind) {
    KnowledgeBundle kb;
    kb.g_com = t.constant(com);
    kb.g_ind = t.constant(ind);
    return kb;
  };
  const Tensor g = Tensor::from_rows({{1, 2, -1}, {0.5, 0, 3}});
  Tensor neg = g;
  for (auto& v : neg.values()) v = -v;
  const Tensor perp = Tensor::from_rows({{2, -1, 0}, {0, 1, 0}});
  auto a = bundle(g, g), b = bundle(g, g);
  EXPECT_NEAR(polarized_distribution_loss(t, &a, &b).value().item(), 2.0, 1e-12);
  a = bundle(g, perp);
  b = bundle(g, perp);
  EXPECT_NEAR(polarized_distribution_loss(t, &a, &b).value().item(), 0.0, 1e-15);
  a = bundle(g, neg);
  b = bundle(g, neg);
  EXPECT_NEAR(polarized_distribution_loss(t, &a, &b).value().item(), -2.0, 1e-12);
  EXPECT_EQ(polarized_distribution_loss(t, nullptr, nullptr).value().item(), 0.0);
}

TEST(Pdl, BoundedOnRandomInputs) {
  Rng rng = substream(3, "pdl");
  for (int i = 0; i < 1000; ++i) {
    tg::Tape t;
    KnowledgeBundle a, b;
    a.g_com = t.constant(test::random_tensor(3, 4, rng, -5, 5));
    a.g_ind = t.constant(test::random_tensor(3, 4, rng, -5, 5));
    b.g_com = t.constant(test::random_tensor(2, 4, rng, -5, 5));
    b.g_ind = t.constant(test::random_tensor(2, 4, rng, -5, 5));
    const double v = polarized_distribution_loss(t, &a, &b).value().item();
    EXPECT_GE(v, -2.0);
    EXPECT_LE(v, 2.0);
  }
}

TEST(MemLoss, PureTargetBatchHasNoSourceTerm) {
  Fixture f;
  const EncodedSample* b[] = {&f.tgt, &f.tgt};
  MemLossParts parts;
  tg::Tape t;
  f.mem.loss(t, b, &parts);
  EXPECT_EQ(parts.bce_sum_source, 0.0);
  EXPECT_EQ(parts.n_source, 0u);
  EXPECT_EQ(parts.n_target, 2u);
}

TEST(MemLoss, MatchesHandArithmetic) {
  Fixture f;
  const EncodedSample* b[] = {&f.src, &f.tgt};
  tg::Tape t;
  const double loss = f.mem.loss(t, b).value().item();
  const EncodedSample* bs[] = {&f.src};
  const EncodedSample* bt[] = {&f.tgt};
  const auto ks = f.mem.forward(t, Entity::source, bs);
  const auto kt = f.mem.forward(t, Entity::target, bt);
  const double hand = (bce(ks.logit.value().item(), 1) + bce(kt.logit.value().item(), 0)) / 2 +
                      0.1 * (cosine_of(ks.g_com.value(), ks.g_ind.value()) +
                             cosine_of(kt.g_com.value(), kt.g_ind.value()));
  EXPECT_NEAR(loss, hand, 1e-14);
}

TEST(MemLoss, GammaZeroIsMeanBce) {
  auto cfg = small_config();
  cfg.gamma = 0.0;
  const auto schema = test::tiny_schema();
  Rng rng = substream(11, "mem-test");
  Mem mem(schema, cfg, rng);
  Rng dr = substream(12, "samples");
  const auto a = test::random_sample(schema, Entity::source, dr, 1);
  const auto c = test::random_sample(schema, Entity::target, dr, 0);
  const EncodedSample* b[] = {&a, &c};
  MemLossParts parts;
  tg::Tape t;
  const double loss = mem.loss(t, b, &parts).value().item();
  EXPECT_DOUBLE_EQ(loss, (parts.bce_sum_source + parts.bce_sum_target) / 2);
  EXPECT_NE(parts.pdl, 0.0);
}

TEST(MemLoss, EmptyBatchIsAnError) {
  Fixture f;
  tg::Tape t;
  EXPECT_THROW(f.mem.loss(t, Batch{}), ContractError);
}

TEST(MemGradients, FullForwardMatchesFiniteDifferences) {
  for (bool scoring : {true, false}) {
    auto cfg = small_config();
    cfg.hfa.scoring = scoring;
    const auto schema = test::tiny_schema();
    Rng rng = substream(21, "mem-grad");
    Mem mem(schema, cfg, rng);
    Rng dr = substream(22, "samples");
    const auto a = test::random_sample(schema, Entity::source, dr, 1);
    const auto c = test::random_sample(schema, Entity::target, dr, 0);
    const EncodedSample* b[] = {&a, &c};
    auto params = mem.params().all();
    const auto r = tg::check_gradients(params, [&](tg::Tape& t) { return mem.loss(t, b); });
    EXPECT_LT(r.max_rel_error, 1e-4) << "scoring=" << scoring << " worst " << r.worst;
    EXPECT_EQ(r.checked, mem.params().scalar_count());
  }
}
