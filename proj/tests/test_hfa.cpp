#include <gtest/gtest.h>

#include <cmath>

#include "common.hpp"
#include "mkt/errors.hpp"
#include "mkt/gradcheck.hpp"
#include "mkt/hfa.hpp"
#include "mkt/ops.hpp"

using namespace mkt;
using mkt::tg::Tensor;

namespace {

HfaConfig cfg_with(std::size_t layers, std::size_t d_align = 4, std::size_t h_im = 0) {
  HfaConfig c;
  c.cross_layers = layers;
  c.d_align = d_align;
  c.h_im = h_im;
  return c;
}

}  // namespace

TEST(ExplicitCross, OneLayerByHand) {
  tg::ParameterSet ps;
  Rng rng = substream(1, "hfa");
  HfaBranch br(ps, "h", 1, 2, cfg_with(1), rng);
  br.cross_w[0]->value = Tensor::column({1, 0});
  br.cross_b[0]->value = Tensor(2, 1);
  tg::Tape t;
  const Tensor v1 = br.explicit_cross(t, t.constant(Tensor::row({1, 0}))).value();
  EXPECT_TRUE(v1.identical(Tensor::row({2, 0})));
}

TEST(ExplicitCross, ZeroWeightsPassThrough) {
  for (auto form : {CrossForm::printed, CrossForm::dcn}) {
    tg::ParameterSet ps;
    Rng rng = substream(1, "hfa");
    auto c = cfg_with(2);
    c.cross_form = form;
    HfaBranch br(ps, "h", 2, 2, c, rng);
    for (auto* w : br.cross_w) w->value.fill(0.0);
    Rng r2 = substream(2, "x");
    const Tensor v0 = test::random_tensor(3, 4, r2);
    tg::Tape t;
    EXPECT_TRUE(br.explicit_cross(t, t.constant(v0)).value().identical(v0));
  }
}

TEST(ExplicitCross, GradientWrtWeight) {
  tg::ParameterSet ps;
  Rng rng = substream(1, "hfa");
  HfaBranch br(ps, "h", 2, 2, cfg_with(2), rng);
  Rng r2 = substream(2, "x");
  const Tensor v0 = test::random_tensor(2, 4, r2);
  Rng r3 = substream(3, "w");
  const Tensor proj = test::random_tensor(2, 4, r3);
  tg::Parameter* w[] = {br.cross_w[0], br.cross_w[1], br.cross_b[0]};
  const auto r = tg::check_gradients(w, [&](tg::Tape& t) {
    return tg::sum(tg::mul(br.explicit_cross(t, t.constant(v0)), t.constant(proj)));
  });
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(ImplicitCross, HandCases) {
  tg::ParameterSet ps;
  Rng rng = substream(1, "hfa");
  HfaBranch br(ps, "h", 1, 2, cfg_with(1), rng);
  br.implicit.w->value = Tensor::from_rows({{1, 0}, {0, 1}});
  br.implicit.b->value.fill(0.0);
  tg::Tape t;
  EXPECT_TRUE(br.implicit_cross(t, t.constant(Tensor::row({-1, 2}))).value().identical(Tensor::row({0, 2})));
  br.implicit.w->value.fill(0.0);
  EXPECT_TRUE(br.implicit_cross(t, t.constant(Tensor::row({-1, 2}))).value().identical(Tensor(1, 2)));

  for (std::size_t n_spec : {1u, 3u, 5u}) {
    tg::ParameterSet ps2;
    HfaBranch b2(ps2, "h", n_spec, 2, cfg_with(1, 4, 7), rng);
    tg::Tape t2;
    EXPECT_EQ(b2.implicit_cross(t2, t2.constant(Tensor(2, 2 * n_spec, 0.5))).cols(), 7u);
  }
}

TEST(ImportanceScore, ClosedForms) {
  tg::ParameterSet ps;
  Rng rng = substream(1, "hfa");
  HfaBranch br(ps, "h", 1, 2, cfg_with(1), rng);
  br.score.w->value.fill(0.0);
  tg::Tape t;
  tg::Var ex = t.constant(Tensor::row({0.3, -1}));
  tg::Var im = t.constant(Tensor::row({2, 0.1}));
  br.score.b->value.fill(std::log(3.0));
  EXPECT_NEAR(br.importance_score(t, ex, im).value().item(), 1.5, 1e-15);
  br.score.b->value.fill(0.0);
  EXPECT_EQ(br.importance_score(t, ex, im).value().item(), 1.0);
  br.score.b->value.fill(40.0);
  EXPECT_NEAR(br.importance_score(t, ex, im).value().item(), 2.0, 1e-11);
  EXPECT_LT(br.importance_score(t, ex, im).value().item(), 2.0);
  br.score.b->value.fill(-1e4);
  EXPECT_GT(br.importance_score(t, ex, im).value().item(), 0.0);
}

TEST(Align, NeutralScoreGivesSharedAndReluSpec) {
  tg::ParameterSet ps;
  Rng rng = substream(1, "hfa");
  HfaBranch br(ps, "h", 2, 2, cfg_with(1, 4), rng);
  br.align_fc.w->value = Tensor::from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
  br.align_fc.b->value.fill(0.0);
  tg::Tape t;
  tg::Var spec = t.constant(Tensor::row({-1, 2, 0.5, -3}));
  tg::Var shared = t.constant(Tensor::row({7, 8}));
  tg::Var p = t.constant(Tensor::row({1, 1}));
  EXPECT_TRUE(br.align(t, spec, p, shared).value().identical(Tensor::row({7, 8, 0, 2, 0.5, 0})));
}

TEST(Align, ZeroScoreAnnihilatesFeature) {
  tg::ParameterSet ps;
  Rng rng = substream(1, "hfa");
  HfaBranch br(ps, "h", 2, 2, cfg_with(1, 4), rng);
  tg::Tape t;
  tg::Var shared = t.constant(Tensor::row({1, 1}));
  tg::Var p = t.constant(Tensor::row({0, 1.3}));
  const Tensor a = br.align(t, t.constant(Tensor::row({5, -5, 0.2, 0.4})), p, shared).value();
  const Tensor b = br.align(t, t.constant(Tensor::row({-9, 3, 0.2, 0.4})), p, shared).value();
  EXPECT_TRUE(a.identical(b));
}

TEST(Hfa, EntitiesAlignToOneWidth) {
  auto s = test::tiny_schema();
  s.spec_fields[0] = {{"a", 3}, {"b", 3}, {"c", 3}};
  s.spec_fields[1] = {{"d", 3}, {"e", 3}, {"f", 3}, {"g", 3}, {"h", 3}};
  tg::ParameterSet ps;
  Rng rng = substream(1, "hfa");
  Hfa hfa(ps, "hfa", s, cfg_with(2, 6), rng);
  EXPECT_EQ(hfa.output_dim(), s.shared_dim() + 6);
  for (Entity e : {Entity::source, Entity::target}) {
    tg::Tape t;
    const auto out = hfa.branch(e).forward(t, t.constant(Tensor(2, s.spec_dim(e), 0.1)),
                                           t.constant(Tensor(2, s.shared_dim(), 0.2)));
    EXPECT_EQ(out.q.cols(), hfa.output_dim());
    EXPECT_EQ(out.p.cols(), s.n_spec(e));
  }
}

TEST(Hfa, ScoresStayInOpenInterval) {
  tg::ParameterSet ps;
  Rng rng = substream(4, "hfa");
  HfaBranch br(ps, "h", 3, 4, cfg_with(2), rng);
  Rng xr = substream(5, "inputs");
  for (int i = 0; i < 1000; ++i) {
    tg::Tape t;
    const Tensor p = br.forward(t, t.constant(test::random_tensor(1, 12, xr, -2, 2)),
                                t.constant(test::random_tensor(1, 2, xr))).p.value();
    for (double v : p.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 2.0);
    }
  }
}

TEST(Hfa, WithoutScoringHasNoCrossParameters) {
  tg::ParameterSet ps;
  Rng rng = substream(1, "hfa");
  auto c = cfg_with(2);
  c.scoring = false;
  HfaBranch br(ps, "h", 2, 2, c, rng);
  EXPECT_EQ(ps.find("h.cross.0.w"), nullptr);
  EXPECT_EQ(ps.find("h.score.w"), nullptr);
  tg::Tape t;
  const auto out = br.forward(t, t.constant(Tensor(1, 4, 0.5)), t.constant(Tensor(1, 3, 0.5)));
  EXPECT_FALSE(out.p.valid());
  EXPECT_EQ(out.q.cols(), 3u + c.d_align);
  EXPECT_THROW(br.explicit_cross(t, t.constant(Tensor(1, 4))), ContractError);
}

TEST(Hfa, RejectsNoSpecificFeature) {
  tg::ParameterSet ps;
  Rng rng = substream(1, "hfa");
  EXPECT_THROW(HfaBranch(ps, "h", 0, 2, cfg_with(1), rng), ValidationError);
}
