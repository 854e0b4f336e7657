#pragma once

#include <array>
#include <memory>

#include "mkt/features.hpp"
#include "mkt/layers.hpp"

namespace mkt {

struct JointConfig {
  std::vector<std::size_t> bottom = {64, 32};  // shared-bottom widths
  std::size_t tower_hidden = 64;
};

// One-stage shared-bottom baseline trained on mixed data. Both entities feed
// one bottom network over [v_u || v_seq || v_shared || spec_src || spec_tgt],
// with the absent entity's specific block zero-filled; each entity has its
// own [tower_hidden, 1] tower. Names start with "joint.".
class JointSharedModel {
 public:
  JointSharedModel(const FeatureSchema& schema, const JointConfig& cfg, Rng& rng);
  JointSharedModel(const JointSharedModel&) = delete;
  JointSharedModel& operator=(const JointSharedModel&) = delete;

  tg::Var forward(tg::Tape& t, Entity e, Batch batch) const;  // logits (B, 1)
  // Mean BCE over a possibly mixed batch.
  tg::Var loss(tg::Tape& t, Batch batch) const;

  tg::ParameterSet& params() { return params_; }
  const tg::ParameterSet& params() const { return params_; }

 private:
  FeatureSchema schema_;
  tg::ParameterSet params_;
  std::unique_ptr<FeatureEmbedder> embedder_;
  nn::Mlp bottom_;
  std::array<nn::Mlp, 2> towers_;
};

}  // namespace mkt
