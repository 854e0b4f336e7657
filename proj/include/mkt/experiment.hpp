#pragma once

#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mkt/datasynth.hpp"
#include "mkt/joint.hpp"
#include "mkt/mem.hpp"
#include "mkt/metrics.hpp"
#include "mkt/tem.hpp"
#include "mkt/train.hpp"

namespace mkt {

inline const std::vector<std::string>& all_variants() {
  static const std::vector<std::string> v{"mkt",         "target_only",    "vanilla_finetune", "joint_shared",
                                          "mkt_wo_hfa",  "mkt_wo_pdl",     "mkt_wo_finetune"};
  return v;
}

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string variant = "mkt";
  double train_fraction = 0.8;
  GeneratorConfig generator;
  MemConfig mem;
  TemConfig tem;
  JointConfig joint;
  TrainConfig pretrain;
  TrainConfig finetune;

  // The full key tree with current values.
  nlohmann::ordered_json to_json() const;
  // Unknown keys throw ValidationError naming the key and the valid set.
  static ExperimentConfig from_json(const nlohmann::json& j);
  void validate() const;
};

// Applies a dotted `key=value` override; the value is parsed as JSON when
// possible and as a string otherwise.
void apply_override(nlohmann::ordered_json& tree, const std::string& assignment);

// Default config tree merged with `overlay`; unknown keys are rejected.
nlohmann::ordered_json merge_config(const nlohmann::ordered_json& base, const nlohmann::json& overlay,
                                    const std::string& path = "");

// MEM config of a variant: scoring off for mkt_wo_hfa, gamma 0 for mkt_wo_pdl.
MemConfig variant_mem(const ExperimentConfig& cfg, const std::string& variant);

struct PreparedData {
  FeatureSchema schema;
  Dataset src_train, src_test, tgt_train, tgt_test;
  std::unordered_map<std::uint32_t, std::size_t> activity;  // target training clicks per user
};

PreparedData prepare_data(const GeneratedData& g, double train_fraction, std::size_t n_users);
PreparedData prepare_data(const ExperimentConfig& cfg);

struct StageResult {
  std::unique_ptr<Mem> mem;
  std::vector<EpochLog> log;
};

// Builds and pretrains MEM; the model's config may differ from cfg.mem (ablations).
StageResult pretrain_stage(const ExperimentConfig& cfg, const MemConfig& memcfg, const PreparedData& data);

struct TemStage {
  std::unique_ptr<Tem> tem;
  std::vector<EpochLog> log;
  std::unique_ptr<TransferCache> test_cache;  // set for gated models

  std::vector<double> test_scores(const PreparedData& data, std::size_t batch) const;
};

// TEM with gates over a frozen MEM; the MEM hash is checked before and after.
TemStage finetune_stage(const ExperimentConfig& cfg, const Mem& mem, const PreparedData& data);
TemStage target_only_stage(const ExperimentConfig& cfg, const PreparedData& data);
TemStage vanilla_finetune_stage(const ExperimentConfig& cfg, const PreparedData& data,
                                std::vector<EpochLog>* source_log = nullptr);

struct VariantResult {
  std::string variant;
  MetricsReport report;
  nlohmann::ordered_json logs;
  std::map<std::string, std::string> hashes;  // model name -> content hash
};

// Runs the listed variants on identical data and seed. MEMs are shared
// between variants that need the same one.
std::vector<VariantResult> run_variants(const ExperimentConfig& cfg, const PreparedData& data,
                                        const std::vector<std::string>& variants);

// Text table and CSV with columns auc, gauc, delta vs mkt.
std::string ablation_table(const std::vector<VariantResult>& rows);
std::string ablation_csv(const std::vector<VariantResult>& rows);

}  // namespace mkt
