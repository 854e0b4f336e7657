#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>

#include "mkt/features.hpp"
#include "mkt/layers.hpp"
#include "mkt/mem.hpp"

namespace mkt {

struct TemConfig {
  std::size_t cross_hidden = 64;
  std::size_t d_cross = 32;       // g_cross width; matches d_cke by default
  std::size_t tower_hidden = 64;  // tower is [tower_hidden, 1]
  double gate_bias_init = -2.0;   // sigmoid(-2) ~ 0.12: gates start mostly closed
  double gate_init_noise = 0.01;
};

// GLU filter: (A g + a) * sigmoid(B g + b).
struct GateBlock {
  nn::Linear a;
  nn::Linear b;

  static GateBlock create(tg::ParameterSet& ps, const std::string& name, std::size_t d_in, std::size_t d_out,
                          const TemConfig& cfg, Rng& rng);
  std::size_t d_in() const { return a.in(); }
  std::size_t d_out() const { return a.out(); }
};

tg::Var glu_gate(tg::Tape& t, tg::Var g, const GateBlock& gate);
// Additive knowledge fusion; throws DimensionError on a width mismatch.
tg::Var fuse(tg::Var tem_vector, tg::Var gated);

// The four transferred vectors, in fusion order.
enum class Slot : std::size_t { user = 0, seq = 1, shared = 2, cross = 3 };
inline constexpr std::array<const char*, 4> kSlotNames{"user", "seq", "shared", "cross"};

// MEM outputs for a target batch, as plain values: no gradient reaches MEM.
struct TransferVectors {
  std::array<tg::Tensor, 4> slots;  // v_u, v_seq, v_shared, g_com
};

TransferVectors extract_transfer(const Mem& mem, Batch batch);

enum class GateMode { learned, forced_zero };

// Target entity model. Without gates it is the standalone single-entity CTR
// model (target_only / vanilla finetune); with gates it receives MEM
// knowledge. Names start with "tem.".
class Tem {
 public:
  Tem(const FeatureSchema& schema, Entity entity, const TemConfig& cfg, Rng& rng);
  Tem(const Tem&) = delete;
  Tem& operator=(const Tem&) = delete;

  // Builds the four gate blocks for MEM vectors of the given widths. Gate
  // parameters come from `rng` so the remaining parameters do not depend on
  // whether gates exist.
  void add_gates(const std::array<std::size_t, 4>& mem_widths, Rng& rng);
  bool has_gates() const { return gates_.has_value(); }
  const GateBlock& gate(Slot s) const { return (*gates_)[static_cast<std::size_t>(s)]; }

  struct Output {
    EmbeddedBatch emb;
    tg::Var g_cross;
    std::array<tg::Var, 4> fused;
    tg::Var logit;  // (B, 1)
  };
  // `transfer` must be given exactly when the model has gates.
  Output forward(tg::Tape& t, Batch batch, const TransferVectors* transfer = nullptr,
                 GateMode mode = GateMode::learned) const;

  tg::ParameterSet& params() { return params_; }
  const tg::ParameterSet& params() const { return params_; }
  Entity entity() const { return entity_; }
  const FeatureSchema& schema() const { return schema_; }
  const TemConfig& config() const { return cfg_; }

 private:
  FeatureSchema schema_;
  Entity entity_;
  TemConfig cfg_;
  tg::ParameterSet params_;
  std::unique_ptr<FeatureEmbedder> embedder_;
  nn::SplitLinear cross_in_;
  nn::Linear cross_out_;
  nn::SplitLinear tower_in_;
  nn::Linear tower_out_;
  std::optional<std::array<GateBlock, 4>> gates_;
};

std::array<std::size_t, 4> transfer_widths(const FeatureSchema& schema, const MemConfig& cfg);

}  // namespace mkt
