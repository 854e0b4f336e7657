#include <gtest/gtest.h>

#include <cmath>

#include "common.hpp"
#include "mkt/errors.hpp"
#include "mkt/gradcheck.hpp"
#include "mkt/mem.hpp"
#include "mkt/ops.hpp"
#include "mkt/tem.hpp"

using namespace mkt;
using mkt::tg::Tensor;

namespace {

TemConfig small_tem() {
  TemConfig c;
  c.cross_hidden = 5;
  c.d_cross = 4;
  c.tower_hidden = 5;
  return c;
}

MemConfig small_mem() {
  MemConfig c;
  c.hfa.d_align = 3;
  c.ple.expert_hidden = 5;
  c.ple.d_cke = 4;
  c.ind_hidden = 5;
  c.tower_hidden = 5;
  return c;
}

GateBlock square_gate(tg::ParameterSet& ps, std::size_t d) {
  Rng rng = substream(1, "gate");
  return GateBlock::create(ps, "g", d, d, small_tem(), rng);
}

void set_identity(tg::Parameter* w) {
  w->value.fill(0.0);
  for (std::size_t i = 0; i < w->value.rows(); ++i) w->value(i, i) = 1.0;
}

struct TwoModels {
  double gate_bias;
  FeatureSchema schema = test::tiny_schema();
  Rng mem_rng = substream(1, "init.mem");
  Rng plain_rng = substream(2, "init.tem");
  Rng gated_rng = substream(2, "init.tem");
  Mem mem{schema, small_mem(), mem_rng};
  Tem plain{schema, Entity::target, small_tem(), plain_rng};
  Tem gated{schema, Entity::target, with_bias(gate_bias), gated_rng};

  explicit TwoModels(double bias) : gate_bias(bias) {
    Rng g = substream(3, "init.gates");
    gated.add_gates(transfer_widths(schema, mem.config()), g);
  }
  static TemConfig with_bias(double b) {
    auto c = small_tem();
    c.gate_bias_init = b;
    return c;
  }
};

}  // namespace

TEST(Glu, IdentityAWithZeroB) {
  tg::ParameterSet ps;
  auto g = square_gate(ps, 3);
  set_identity(g.a.w);
  g.b.w->value.fill(0.0);
  g.b.b->value.fill(0.0);
  tg::Tape t;
  const Tensor out = glu_gate(t, t.constant(Tensor::row({2, -4, 0.6})), g).value();
  EXPECT_TRUE(out.identical(Tensor::row({1, -2, 0.3})));
}

TEST(Glu, SaturatedGates) {
  tg::ParameterSet ps;
  auto g = square_gate(ps, 3);
  Rng rng = substream(2, "x");
  const Tensor x = test::random_tensor(2, 3, rng);
  g.b.w->value.fill(0.0);
  tg::Tape t;
  g.b.b->value.fill(-800.0);
  for (double v : glu_gate(t, t.constant(x), g).value().values()) EXPECT_EQ(v, 0.0);
  g.b.b->value.fill(800.0);
  const Tensor open = glu_gate(t, t.constant(x), g).value();
  const Tensor lin = g.a(t, t.constant(x)).value();
  EXPECT_TRUE(open.identical(lin));
}

TEST(Glu, WidthMismatch) {
  tg::ParameterSet ps;
  auto g = square_gate(ps, 3);
  tg::Tape t;
  EXPECT_THROW(glu_gate(t, t.constant(Tensor(1, 4)), g), DimensionError);
}

TEST(Fuse, ZeroAndCommutative) {
  tg::Tape t;
  Rng rng = substream(2, "x");
  tg::Var x = t.constant(test::random_tensor(2, 3, rng));
  tg::Var y = t.constant(test::random_tensor(2, 3, rng));
  tg::Var z = t.constant(Tensor(2, 3));
  EXPECT_TRUE(fuse(x, z).value().identical(x.value()));
  EXPECT_TRUE(fuse(z, y).value().identical(y.value()));
  EXPECT_TRUE(fuse(x, y).value().identical(fuse(y, x).value()));
  EXPECT_THROW(fuse(x, t.constant(Tensor(2, 4))), DimensionError);
}

TEST(Tem, ClosedGatesReduceToStandalone) {
  TwoModels m(-800.0);
  Rng dr = substream(4, "samples");
  Dataset data;
  for (int i = 0; i < 6; ++i) data.push_back(test::random_sample(m.schema, Entity::target, dr, i % 2));
  std::vector<const EncodedSample*> b;
  for (auto& s : data) b.push_back(&s);
  const TransferVectors tv = extract_transfer(m.mem, b);
  tg::Tape t;
  const Tensor plain = m.plain.forward(t, b).logit.value();
  EXPECT_TRUE(m.gated.forward(t, b, &tv).logit.value().identical(plain));
  EXPECT_TRUE(m.gated.forward(t, b, &tv, GateMode::forced_zero).logit.value().identical(plain));

  TwoModels open(0.0);
  EXPECT_TRUE(open.gated.forward(t, b, &tv, GateMode::forced_zero).logit.value().identical(plain));
  EXPECT_FALSE(open.gated.forward(t, b, &tv).logit.value().identical(plain));
}

TEST(Tem, NoGradientReachesMem) {
  TwoModels m(-2.0);
  Rng dr = substream(4, "samples");
  const auto a = test::random_sample(m.schema, Entity::target, dr, 1);
  const auto c = test::random_sample(m.schema, Entity::target, dr, 0);
  const EncodedSample* b[] = {&a, &c};
  m.mem.params().zero_grad();
  const TransferVectors tv = extract_transfer(m.mem, b);
  tg::Tape t;
  t.backward(tg::mean(tg::bce_with_logits(m.gated.forward(t, b, &tv).logit, std::vector<double>{1, 0})));
  for (auto* p : m.mem.params().all())
    for (double g : p->grad.values()) EXPECT_EQ(g, 0.0) << p->name;
  double touched = 0;
  for (auto* p : m.gated.params().all())
    for (double g : p->grad.values()) touched += std::abs(g);
  EXPECT_GT(touched, 0.0);
}

TEST(Tem, GatesAndTransferMustAgree) {
  TwoModels m(-2.0);
  Rng dr = substream(4, "samples");
  const auto a = test::random_sample(m.schema, Entity::target, dr, 1);
  const auto s = test::random_sample(m.schema, Entity::source, dr, 1);
  const EncodedSample* b[] = {&a};
  const EncodedSample* bs[] = {&s};
  const TransferVectors tv = extract_transfer(m.mem, b);
  tg::Tape t;
  EXPECT_THROW(m.gated.forward(t, b), ContractError);
  EXPECT_THROW(m.plain.forward(t, b, &tv), ContractError);
  EXPECT_THROW(m.plain.forward(t, bs), ValidationError);
}

TEST(Tem, ZeroMemGivesConstantGatedVectors) {
  TwoModels m(-2.0);
  for (auto* p : m.mem.params().all()) p->value.fill(0.0);
  Rng dr = substream(4, "samples");
  const auto a = test::random_sample(m.schema, Entity::target, dr, 1);
  const auto c = test::random_sample(m.schema, Entity::target, dr, 0);
  const EncodedSample* b[] = {&a, &c};
  const TransferVectors tv = extract_transfer(m.mem, b);
  tg::Tape t;
  for (std::size_t s = 0; s < 4; ++s) {
    const GateBlock& g = m.gated.gate(static_cast<Slot>(s));
    const Tensor out = glu_gate(t, t.constant(tv.slots[s]), g).value();
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t k = 0; k < out.cols(); ++k) {
        const double a_k = g.a.b->value[k], b_k = g.b.b->value[k];
        EXPECT_DOUBLE_EQ(out(r, k), a_k / (1.0 + std::exp(-b_k)));
      }
  }
}

TEST(TemGradients, FullForwardMatchesFiniteDifferences) {
  TwoModels m(-0.5);
  Rng dr = substream(5, "samples");
  const auto a = test::random_sample(m.schema, Entity::target, dr, 1);
  const auto c = test::random_sample(m.schema, Entity::target, dr, 0);
  const EncodedSample* b[] = {&a, &c};
  const TransferVectors tv = extract_transfer(m.mem, b);
  auto params = m.gated.params().all();
  const auto r = tg::check_gradients(params, [&](tg::Tape& t) {
    return tg::mean(tg::bce_with_logits(m.gated.forward(t, b, &tv).logit, std::vector<double>{1, 0}));
  });
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_EQ(r.checked, m.gated.params().scalar_count());
}
