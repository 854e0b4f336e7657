#include "mkt/train.hpp"

#include <algorithm>
#include <numeric>

#include "mkt/errors.hpp"
#include "mkt/rng.hpp"

namespace mkt {

namespace {

std::vector<double> labels_of(Batch batch) {
  std::vector<double> y;
  y.reserve(batch.size());
  for (const EncodedSample* s : batch) y.push_back(s->label);
  return y;
}

template <typename Fn>
void for_batches(std::size_t n, std::size_t batch, Fn fn) {
  for (std::size_t b = 0; b < n; b += batch) fn(b, std::min(n, b + batch));
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, const char* stage, std::size_t epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = substream(seed, std::string("shuffle.") + stage, epoch);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

void append_logits(std::vector<double>& out, const tg::Var& logit) {
  const auto& v = logit.value();
  for (std::size_t i = 0; i < v.rows(); ++i) out.push_back(v(i, 0));
}

}  // namespace

std::vector<const EncodedSample*> pointers(const Dataset& data) {
  std::vector<const EncodedSample*> p;
  p.reserve(data.size());
  for (const auto& s : data) p.push_back(&s);
  return p;
}

std::vector<PredictionRecord> to_records(const Dataset& data, const std::vector<double>& scores) {
  if (data.size() != scores.size()) throw DimensionError("scores do not match the dataset");
  std::vector<PredictionRecord> r(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) r[i] = {data[i].user, scores[i], data[i].label};
  return r;
}

nlohmann::ordered_json safe_auc(const Dataset& data, const std::vector<double>& scores) {
  try {
    return auc(to_records(data, scores));
  } catch (const UndefinedMetricError&) {
    return nullptr;
  }
}

nlohmann::ordered_json safe_gauc(const Dataset& data, const std::vector<double>& scores) {
  try {
    return gauc(to_records(data, scores)).gauc;
  } catch (const UndefinedMetricError&) {
    return nullptr;
  }
}

std::vector<double> score_mem(const Mem& mem, Entity e, const Dataset& data, std::size_t batch) {
  const auto ptrs = pointers(data);
  std::vector<double> out;
  out.reserve(data.size());
  for_batches(ptrs.size(), batch, [&](std::size_t b, std::size_t end) {
    tg::Tape t;
    append_logits(out, mem.forward(t, e, Batch(ptrs.data() + b, end - b)).logit);
  });
  return out;
}

std::vector<double> score_joint(const JointSharedModel& model, Entity e, const Dataset& data, std::size_t batch) {
  const auto ptrs = pointers(data);
  std::vector<double> out;
  out.reserve(data.size());
  for_batches(ptrs.size(), batch, [&](std::size_t b, std::size_t end) {
    tg::Tape t;
    append_logits(out, model.forward(t, e, Batch(ptrs.data() + b, end - b)));
  });
  return out;
}

TransferVectors TransferCache::rows(const std::vector<std::size_t>& idx) const {
  TransferVectors tv;
  for (std::size_t s = 0; s < 4; ++s) {
    const tg::Tensor& src = table[s];
    tg::Tensor dst(idx.size(), src.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto row = src.row_span(idx[i]);
      std::copy(row.begin(), row.end(), dst.row_span(i).begin());
    }
    tv.slots[s] = std::move(dst);
  }
  return tv;
}

TransferCache build_transfer_cache(const Mem& mem, const Dataset& data, std::size_t batch) {
  const auto widths = transfer_widths(mem.schema(), mem.config());
  TransferCache c;
  for (std::size_t s = 0; s < 4; ++s) c.table[s] = tg::Tensor(data.size(), widths[s]);
  const auto ptrs = pointers(data);
  for_batches(ptrs.size(), batch, [&](std::size_t b, std::size_t end) {
    const TransferVectors tv = extract_transfer(mem, Batch(ptrs.data() + b, end - b));
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t i = 0; i < end - b; ++i) {
        const auto row = tv.slots[s].row_span(i);
        std::copy(row.begin(), row.end(), c.table[s].row_span(b + i).begin());
      }
  });
  return c;
}

std::vector<double> score_tem(const Tem& tem, const Dataset& data, const TransferCache* cache, GateMode mode,
                              std::size_t batch) {
  const auto ptrs = pointers(data);
  std::vector<double> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for_batches(ptrs.size(), batch, [&](std::size_t b, std::size_t end) {
    tg::Tape t;
    if (cache) {
      idx.resize(end - b);
      std::iota(idx.begin(), idx.end(), b);
      const TransferVectors tv = cache->rows(idx);
      append_logits(out, tem.forward(t, Batch(ptrs.data() + b, end - b), &tv, mode).logit);
    } else {
      append_logits(out, tem.forward(t, Batch(ptrs.data() + b, end - b)).logit);
    }
  });
  return out;
}

std::array<double, 2> mean_cosine(const Mem& mem, const Dataset& source, const Dataset& target, std::size_t limit) {
  std::array<double, 2> out{0.0, 0.0};
  const std::array<const Dataset*, 2> sets{&source, &target};
  for (Entity e : {Entity::source, Entity::target}) {
    const Dataset& d = *sets[index_of(e)];
    const std::size_t n = std::min(limit, d.size());
    if (n == 0) continue;
    const auto ptrs = pointers(d);
    double sum = 0.0;
    for_batches(n, 1024, [&](std::size_t b, std::size_t end) {
      tg::Tape t;
      const KnowledgeBundle kb = mem.forward(t, e, Batch(ptrs.data() + b, end - b));
      const auto& c = tg::cosine(kb.g_com, kb.g_ind).value();
      for (std::size_t i = 0; i < c.rows(); ++i) sum += c(i, 0);
    });
    out[index_of(e)] = sum / static_cast<double>(n);
  }
  return out;
}

std::vector<EpochLog> pretrain_mem(Mem& mem, const Dataset& src_train, const Dataset& tgt_train,
                                   const Dataset& src_eval, const Dataset& tgt_eval, const TrainConfig& cfg) {
  std::vector<const EncodedSample*> all = pointers(src_train);
  for (const auto& s : tgt_train) all.push_back(&s);
  if (all.empty()) throw ValidationError("pretraining needs at least one sample");
  tg::Optimizer opt(cfg.opt);
  auto params = mem.params().all();
  std::vector<EpochLog> log;

  auto record = [&](std::size_t epoch, nlohmann::ordered_json loss) {
    EpochLog l;
    l["epoch"] = epoch;
    l["loss"] = loss;
    if (cfg.log_metrics) {
      l["auc_src"] = safe_auc(src_eval, score_mem(mem, Entity::source, src_eval, cfg.eval_batch));
      l["auc_tgt"] = safe_auc(tgt_eval, score_mem(mem, Entity::target, tgt_eval, cfg.eval_batch));
      const auto cos = mean_cosine(mem, src_train, tgt_train, cfg.probe_size);
      l["cos_src"] = cos[0];
      l["cos_tgt"] = cos[1];
    }
    log.push_back(std::move(l));
  };
  if (cfg.log_metrics) record(0, nullptr);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled(all.size(), cfg.seed, "mem", epoch);
    std::vector<const EncodedSample*> batch;
    double total = 0.0;
    for_batches(order.size(), cfg.batch, [&](std::size_t b, std::size_t end) {
      batch.clear();
      for (std::size_t i = b; i < end; ++i) batch.push_back(all[order[i]]);
      tg::Tape t;
      tg::Var loss = mem.loss(t, batch);
      t.backward(loss);
      opt.step(params);
      total += loss.value().item() * static_cast<double>(end - b);
    });
    record(epoch, total / static_cast<double>(all.size()));
  }
  return log;
}

std::vector<EpochLog> train_tem(Tem& tem, const Dataset& train, const TransferCache* train_cache, const Dataset& eval,
                                const TransferCache* eval_cache, const TrainConfig& cfg) {
  if (train.empty()) throw ValidationError("training needs at least one sample");
  const auto ptrs = pointers(train);
  tg::Optimizer opt(cfg.opt);
  auto params = tem.params().all();
  std::vector<EpochLog> log;

  auto record = [&](std::size_t epoch, nlohmann::ordered_json loss) {
    EpochLog l;
    l["epoch"] = epoch;
    l["loss"] = loss;
    if (cfg.log_metrics) {
      const auto scores = score_tem(tem, eval, eval_cache, GateMode::learned, cfg.eval_batch);
      l["auc"] = safe_auc(eval, scores);
      l["gauc"] = safe_gauc(eval, scores);
    }
    log.push_back(std::move(l));
  };
  if (cfg.log_metrics) record(0, nullptr);

  const char* stage = tem.entity() == Entity::source ? "tem.src" : "tem";
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled(ptrs.size(), cfg.seed, stage, epoch);
    std::vector<const EncodedSample*> batch;
    std::vector<std::size_t> idx;
    double total = 0.0;
    for_batches(order.size(), cfg.batch, [&](std::size_t b, std::size_t end) {
      batch.clear();
      idx.assign(order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(end));
      for (std::size_t i : idx) batch.push_back(ptrs[i]);
      tg::Tape t;
      tg::Var logit;
      if (train_cache) {
        const TransferVectors tv = train_cache->rows(idx);
        logit = tem.forward(t, batch, &tv).logit;
      } else {
        logit = tem.forward(t, batch).logit;
      }
      const auto y = labels_of(batch);
      tg::Var loss = tg::mean(tg::bce_with_logits(logit, y));
      t.backward(loss);
      opt.step(params);
      total += loss.value().item() * static_cast<double>(end - b);
    });
    record(epoch, total / static_cast<double>(ptrs.size()));
  }
  return log;
}

std::vector<EpochLog> train_joint(JointSharedModel& model, const Dataset& src_train, const Dataset& tgt_train,
                                  const Dataset& tgt_eval, const TrainConfig& cfg) {
  std::vector<const EncodedSample*> all = pointers(src_train);
  for (const auto& s : tgt_train) all.push_back(&s);
  if (all.empty()) throw ValidationError("training needs at least one sample");
  tg::Optimizer opt(cfg.opt);
  auto params = model.params().all();
  std::vector<EpochLog> log;

  auto record = [&](std::size_t epoch, nlohmann::ordered_json loss) {
    EpochLog l;
    l["epoch"] = epoch;
    l["loss"] = loss;
    if (cfg.log_metrics) {
      const auto scores = score_joint(model, Entity::target, tgt_eval, cfg.eval_batch);
      l["auc"] = safe_auc(tgt_eval, scores);
      l["gauc"] = safe_gauc(tgt_eval, scores);
    }
    log.push_back(std::move(l));
  };
  if (cfg.log_metrics) record(0, nullptr);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled(all.size(), cfg.seed, "joint", epoch);
    std::vector<const EncodedSample*> batch;
    double total = 0.0;
    for_batches(order.size(), cfg.batch, [&](std::size_t b, std::size_t end) {
      batch.clear();
      for (std::size_t i = b; i < end; ++i) batch.push_back(all[order[i]]);
      tg::Tape t;
      tg::Var loss = model.loss(t, batch);
      t.backward(loss);
      opt.step(params);
      total += loss.value().item() * static_cast<double>(end - b);
    });
    record(epoch, total / static_cast<double>(all.size()));
  }
  return log;
}

std::vector<std::string> copy_matching(tg::ParameterSet& dst, const tg::ParameterSet& src) {
  std::vector<std::string> copied;
  for (const tg::Parameter* p : src.all()) {
    tg::Parameter* d = dst.find(p->name);
    if (d && d->value.same_shape(p->value)) {
      d->value = p->value;
      copied.push_back(p->name);
    }
  }
  return copied;
}

}  // namespace mkt
