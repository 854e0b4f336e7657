#pragma once

#include <array>
#include <memory>
#include <vector>

#include "mkt/features.hpp"
#include "mkt/hfa.hpp"
#include "mkt/layers.hpp"

namespace mkt {

// Desk-scale PLE: one extraction layer of 2-layer experts. The reference
// production network used [1024, 512] shared layers; 64 -> 32 keeps the same
// shape at a size that trains on one core.
struct PleConfig {
  std::size_t n_shared_experts = 1;
  std::size_t n_specific_experts = 1;
  std::size_t expert_hidden = 64;
  std::size_t d_cke = 32;
};

struct MemConfig {
  HfaConfig hfa;
  PleConfig ple;
  std::size_t ind_hidden = 64;    // SKE / TKE hidden width
  std::size_t tower_hidden = 64;  // towers are [tower_hidden, 1]
  double gamma = 0.1;             // weight of the polarized distribution loss
};

// Shared/private experts mixed by a per-entity softmax gate over the aligned
// vector q. Names: <prefix>.shared.<k>, <prefix>.src.<k>, <prefix>.tgt.<k>,
// <prefix>.gate.src, <prefix>.gate.tgt.
class CommonKnowledgeExtractor {
 public:
  CommonKnowledgeExtractor(tg::ParameterSet& ps, const std::string& prefix, std::size_t in, const PleConfig& cfg,
                           Rng& rng);

  // g_com (B, d_cke). `gate_weights` receives the (B, K) simplex weights,
  // shared experts first.
  tg::Var forward(tg::Tape& t, tg::Var q, Entity e, tg::Var* gate_weights = nullptr) const;

  std::vector<nn::Mlp> shared_experts;
  std::array<std::vector<nn::Mlp>, 2> specific_experts;
  std::array<nn::Linear, 2> gates;
};

struct KnowledgeBundle {
  EmbeddedBatch emb;
  tg::Var p;  // HFA importance scores (invalid without scoring)
  tg::Var q;
  tg::Var gate;
  tg::Var g_com;
  tg::Var g_ind;
  tg::Var logit;  // (B, 1)
};

// Mean cosine(g_com, g_ind) over source rows plus the same over target rows;
// an absent entity contributes 0.
tg::Var polarized_distribution_loss(tg::Tape& t, const KnowledgeBundle* source, const KnowledgeBundle* target);

struct MemLossParts {
  double bce_sum_source = 0.0;
  double bce_sum_target = 0.0;
  double pdl = 0.0;
  std::size_t n_source = 0;
  std::size_t n_target = 0;
};

// Multi-entity model: shared embeddings, per-entity HFA, PLE common
// extractor, per-entity independent extractors (SKE/TKE) over the raw full
// embedding, and per-entity towers over [v_u || v_seq || g_com || g_ind].
// All parameter names start with "mem.".
class Mem {
 public:
  Mem(const FeatureSchema& schema, const MemConfig& cfg, Rng& rng);
  Mem(const Mem&) = delete;
  Mem& operator=(const Mem&) = delete;

  KnowledgeBundle forward(tg::Tape& t, Entity e, Batch batch) const;
  tg::Var independent(tg::Tape& t, tg::Var v_full, Entity e) const;

  // (sum of per-sample BCE over the batch) / |batch| + gamma * PDL. The batch
  // may mix entities; an empty batch is a contract error.
  tg::Var loss(tg::Tape& t, Batch batch, MemLossParts* parts = nullptr) const;

  tg::ParameterSet& params() { return params_; }
  const tg::ParameterSet& params() const { return params_; }
  const FeatureSchema& schema() const { return schema_; }
  const MemConfig& config() const { return cfg_; }

  FeatureEmbedder& embedder() { return *embedder_; }
  Hfa& hfa() { return *hfa_; }
  CommonKnowledgeExtractor& cke() { return *cke_; }
  nn::Mlp& independent_extractor(Entity e) { return ind_[index_of(e)]; }
  nn::Mlp& tower(Entity e) { return towers_[index_of(e)]; }

 private:
  FeatureSchema schema_;
  MemConfig cfg_;
  tg::ParameterSet params_;
  std::unique_ptr<FeatureEmbedder> embedder_;
  std::unique_ptr<Hfa> hfa_;
  std::unique_ptr<CommonKnowledgeExtractor> cke_;
  std::array<nn::Mlp, 2> ind_;
  std::array<nn::Mlp, 2> towers_;
};

// Splits a mixed batch by entity, preserving order.
std::array<std::vector<const EncodedSample*>, 2> split_by_entity(Batch batch);

}  // namespace mkt
