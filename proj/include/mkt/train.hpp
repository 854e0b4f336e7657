#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mkt/joint.hpp"
#include "mkt/mem.hpp"
#include "mkt/metrics.hpp"
#include "mkt/optimizer.hpp"
#include "mkt/tem.hpp"

namespace mkt {

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch = 256;
  std::size_t eval_batch = 1024;
  tg::OptimizerConfig opt;
  std::uint64_t seed = 1;
  // Evaluate (and log an epoch-0 entry) before training and after every
  // epoch. Off for sweeps that only need the final model.
  bool log_metrics = true;
  std::size_t probe_size = 2000;  // samples per entity for the cosine probe
};

// One line of a training log. Fields besides epoch and loss depend on the
// stage; unavailable values are null.
using EpochLog = nlohmann::ordered_json;

std::vector<const EncodedSample*> pointers(const Dataset& data);

std::vector<PredictionRecord> to_records(const Dataset& data, const std::vector<double>& scores);
// AUC, or null when undefined.
nlohmann::ordered_json safe_auc(const Dataset& data, const std::vector<double>& scores);
nlohmann::ordered_json safe_gauc(const Dataset& data, const std::vector<double>& scores);

// Logits, one per sample.
std::vector<double> score_mem(const Mem& mem, Entity e, const Dataset& data, std::size_t batch = 1024);
std::vector<double> score_joint(const JointSharedModel& model, Entity e, const Dataset& data, std::size_t batch = 1024);

// MEM target-branch vectors for every sample of a dataset, computed once:
// MEM is frozen during fine-tuning, so they never change.
struct TransferCache {
  std::array<tg::Tensor, 4> table;

  TransferVectors rows(const std::vector<std::size_t>& idx) const;
};
TransferCache build_transfer_cache(const Mem& mem, const Dataset& data, std::size_t batch = 1024);

std::vector<double> score_tem(const Tem& tem, const Dataset& data, const TransferCache* cache,
                              GateMode mode = GateMode::learned, std::size_t batch = 1024);

// Mean cosine(g_com, g_ind) per entity over the first `limit` samples.
std::array<double, 2> mean_cosine(const Mem& mem, const Dataset& source, const Dataset& target, std::size_t limit);

// Mixed-entity MEM pretraining. Logs epoch, loss, auc_src, auc_tgt,
// cos_src, cos_tgt.
std::vector<EpochLog> pretrain_mem(Mem& mem, const Dataset& src_train, const Dataset& tgt_train,
                                   const Dataset& src_eval, const Dataset& tgt_eval, const TrainConfig& cfg);

// Single-entity training of a TEM, with MEM knowledge iff `train_cache`.
// Logs epoch, loss, auc, gauc.
std::vector<EpochLog> train_tem(Tem& tem, const Dataset& train, const TransferCache* train_cache, const Dataset& eval,
                                const TransferCache* eval_cache, const TrainConfig& cfg);

// One-stage training on mixed data. Logs epoch, loss, auc, gauc (target).
std::vector<EpochLog> train_joint(JointSharedModel& model, const Dataset& src_train, const Dataset& tgt_train,
                                  const Dataset& tgt_eval, const TrainConfig& cfg);

// Copies every parameter of `src` whose name and shape match one in `dst`;
// returns the copied names.
std::vector<std::string> copy_matching(tg::ParameterSet& dst, const tg::ParameterSet& src);

}  // namespace mkt
