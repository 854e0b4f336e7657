#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "mkt/checkpoint.hpp"
#include "mkt/errors.hpp"
#include "mkt/experiment.hpp"

using namespace mkt;

namespace {

ExperimentConfig tiny_experiment(const std::vector<std::string>& extra = {}) {
  auto tree = ExperimentConfig{}.to_json();
  for (const char* s : {"generator.n_users=300", "generator.n_target_samples=1250", "generator.ratio=2",
                        "generator.source.n_items=200", "generator.target.n_items=150", "pretrain.epochs=1",
                        "finetune.epochs=1", "pretrain.batch=64", "finetune.batch=64"})
    apply_override(tree, s);
  for (const auto& s : extra) apply_override(tree, s);
  return ExperimentConfig::from_json(tree);
}

const PreparedData& tiny_data() {
  static const PreparedData d = prepare_data(tiny_experiment());
  return d;
}

std::vector<double> values_of(const tg::ParameterSet& ps) {
  std::vector<double> v;
  for (const auto* p : ps.all()) v.insert(v.end(), p->value.values().begin(), p->value.values().end());
  return v;
}

}  // namespace

TEST(Training, ZeroLearningRateKeepsParameters) {
  auto cfg = tiny_experiment();
  cfg.finetune.opt.lr = 0.0;
  cfg.finetune.log_metrics = false;
  const auto& data = tiny_data();
  Rng rng = substream(cfg.seed, "init.tem");
  Tem tem(data.schema, Entity::target, cfg.tem, rng);
  const auto before = values_of(tem.params());
  train_tem(tem, data.tgt_train, nullptr, data.tgt_test, nullptr, cfg.finetune);
  EXPECT_EQ(values_of(tem.params()), before);

  cfg.pretrain.opt.lr = 0.0;
  cfg.pretrain.log_metrics = false;
  Rng mrng = substream(cfg.seed, "init.mem");
  Mem mem(data.schema, cfg.mem, mrng);
  const auto mbefore = values_of(mem.params());
  pretrain_mem(mem, data.src_train, data.tgt_train, data.src_test, data.tgt_test, cfg.pretrain);
  EXPECT_EQ(values_of(mem.params()), mbefore);
}

TEST(Training, OneEpochBeatsConstantPredictor) {
  const auto cfg = tiny_experiment();
  const auto& data = tiny_data();
  ASSERT_EQ(data.tgt_train.size(), 1000u);
  const auto t = target_only_stage(cfg, data);
  ASSERT_EQ(t.log.size(), 2u);
  EXPECT_TRUE(t.log[0]["loss"].is_null());
  EXPECT_LT(t.log[1]["loss"].get<double>(), std::log(2.0));

  Dataset src_1k(data.src_train.begin(), data.src_train.begin() + 500);
  Dataset tgt_1k(data.tgt_train.begin(), data.tgt_train.begin() + 500);
  Rng rng = substream(cfg.seed, "init.mem");
  Mem mem(data.schema, cfg.mem, rng);
  const auto log = pretrain_mem(mem, src_1k, tgt_1k, data.src_test, data.tgt_test, cfg.pretrain);
  EXPECT_LT(log.back()["loss"].get<double>(), std::log(2.0));
}

TEST(Training, PdlPullsRepresentationsApart) {
  const auto cfg = tiny_experiment({"pretrain.epochs=3"});
  const auto r = pretrain_stage(cfg, cfg.mem, tiny_data());
  ASSERT_EQ(r.log.size(), 4u);
  for (const char* key : {"cos_src", "cos_tgt"})
    EXPECT_LT(r.log.back()[key].get<double>(), r.log.front()[key].get<double>()) << key;
}

TEST(Finetune, MemUntouchedAndClosedGatesWarmStart) {
  auto cfg = tiny_experiment({"finetune.epochs=0", "tem.gate_bias_init=-12"});
  const auto& data = tiny_data();
  const auto m = pretrain_stage(cfg, cfg.mem, data);
  const auto before = tg::content_hash(m.mem->params());
  const auto gated = finetune_stage(cfg, *m.mem, data);
  EXPECT_EQ(tg::content_hash(m.mem->params()), before);
  const auto plain = target_only_stage(cfg, data);
  EXPECT_NEAR(gated.log[0]["auc"].get<double>(), plain.log[0]["auc"].get<double>(), 1e-3);
}

TEST(Finetune, TrainsOnDegenerateMem) {
  const auto cfg = tiny_experiment();
  const auto& data = tiny_data();
  Rng rng = substream(cfg.seed, "init.mem");
  Mem mem(data.schema, cfg.mem, rng);
  for (auto* p : mem.params().all()) p->value.fill(0.0);
  const auto t = finetune_stage(cfg, mem, data);
  EXPECT_LT(t.log.back()["loss"].get<double>(), std::log(2.0));
  for (const auto* p : mem.params().all())
    for (double v : p->value.values()) ASSERT_EQ(v, 0.0);
}

TEST(VanillaFinetune, CopiesOnlyMatchingParameters) {
  const auto& data = tiny_data();
  Rng a = substream(1, "a"), b = substream(2, "b");
  Tem src(data.schema, Entity::source, TemConfig{}, a);
  Tem tgt(data.schema, Entity::target, TemConfig{}, b);
  const auto copied = copy_matching(tgt.params(), src.params());
  auto has = [&](const std::string& n) { return std::find(copied.begin(), copied.end(), n) != copied.end(); };
  EXPECT_TRUE(has("tem.emb.user.user_id"));
  EXPECT_TRUE(has("tem.cross.fc0.w_main"));
  EXPECT_FALSE(has("tem.cross.fc0.w_spec"));
  for (const auto* p : tgt.params().all())
    if (p->name.rfind("tem.emb.tgt.", 0) == 0) {
      EXPECT_FALSE(has(p->name));
    }
  EXPECT_TRUE(tgt.params().at("tem.emb.user.user_id").value.identical(src.params().at("tem.emb.user.user_id").value));
}

TEST(Variants, TableAndDeterminism) {
  const auto cfg = tiny_experiment();
  const auto& data = tiny_data();
  const std::vector<std::string> vs{"mkt", "target_only", "mkt_wo_pdl", "joint_shared"};
  const auto a = run_variants(cfg, data, vs);
  const auto b = run_variants(cfg, data, vs);
  ASSERT_EQ(a.size(), vs.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].report.gauc, b[i].report.gauc);
    EXPECT_EQ(a[i].hashes, b[i].hashes);
  }
  const auto csv = ablation_csv(a);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,auc,gauc,delta_auc_vs_mkt,delta_gauc_vs_mkt");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const auto table = ablation_table(a);
  for (const auto& v : vs) EXPECT_NE(table.find(v), std::string::npos);
  EXPECT_THROW(run_variants(cfg, data, {"nope"}), ValidationError);
}

TEST(ExperimentConfig, UnknownKeysListValidOnes) {
  auto tree = ExperimentConfig{}.to_json();
  try {
    apply_override(tree, "mem.gama=0.2");
    ExperimentConfig::from_json(tree);
    FAIL() << "unknown key accepted";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("gama"), std::string::npos);
    EXPECT_NE(msg.find("gamma"), std::string::npos);
  }
  auto t2 = ExperimentConfig{}.to_json();
  apply_override(t2, "tem.d_cross=16");
  EXPECT_THROW(ExperimentConfig::from_json(t2), ValidationError);
  auto t3 = ExperimentConfig{}.to_json();
  apply_override(t3, "variant=\"something\"");
  EXPECT_THROW(ExperimentConfig::from_json(t3), ValidationError);
}

TEST(ExperimentConfig, WoPdlDiffersOnlyInGamma) {
  const ExperimentConfig cfg;
  const auto a = variant_mem(cfg, "mkt");
  auto b = variant_mem(cfg, "mkt_wo_pdl");
  EXPECT_EQ(b.gamma, 0.0);
  EXPECT_NE(a.gamma, 0.0);
  b.gamma = a.gamma;
  ExperimentConfig x = cfg, y = cfg;
  x.mem = a;
  y.mem = b;
  EXPECT_EQ(x.to_json(), y.to_json());
}
