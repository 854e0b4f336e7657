#include "mkt/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "mkt/checkpoint.hpp"
#include "mkt/errors.hpp"
#include "mkt/rng.hpp"

namespace mkt {

namespace {

using ojson = nlohmann::ordered_json;

ojson train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch", t.batch},
          {"eval_batch", t.eval_batch},
          {"optimizer", {{"kind", tg::to_string(t.opt.kind)},
                         {"lr", t.opt.lr},
                         {"beta1", t.opt.beta1},
                         {"beta2", t.opt.beta2},
                         {"eps", t.opt.eps}}},
          {"log_metrics", t.log_metrics},
          {"probe_size", t.probe_size}};
}

template <typename T>
T get(const ojson& j, const char* key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config key '" + path + key + "': " + e.what());
  }
}

TrainConfig train_from(const ojson& j, const std::string& path, std::uint64_t seed) {
  TrainConfig t;
  t.epochs = get<std::size_t>(j, "epochs", path);
  t.batch = get<std::size_t>(j, "batch", path);
  t.eval_batch = get<std::size_t>(j, "eval_batch", path);
  const ojson& o = j.at("optimizer");
  t.opt.kind = tg::parse_optimizer_kind(get<std::string>(o, "kind", path + "optimizer."));
  t.opt.lr = get<double>(o, "lr", path + "optimizer.");
  t.opt.beta1 = get<double>(o, "beta1", path + "optimizer.");
  t.opt.beta2 = get<double>(o, "beta2", path + "optimizer.");
  t.opt.eps = get<double>(o, "eps", path + "optimizer.");
  t.log_metrics = get<bool>(j, "log_metrics", path);
  t.probe_size = get<std::size_t>(j, "probe_size", path);
  t.seed = seed;
  return t;
}

std::string key_list(const ojson& obj) {
  std::string s;
  for (auto it = obj.begin(); it != obj.end(); ++it) s += (s.empty() ? "" : ", ") + it.key();
  return s;
}

std::string mem_hash(const Mem& m) { return tg::content_hash(m.params()); }

std::string fmt(double v, const char* f = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

ojson ExperimentConfig::to_json() const {
  ojson j;
  j["seed"] = seed;
  j["variant"] = variant;
  j["train_fraction"] = train_fraction;
  ojson g = generator.to_json();
  g.erase("seed");
  j["generator"] = g;
  j["mem"] = {{"hfa", {{"h_im", mem.hfa.h_im},
                       {"d_align", mem.hfa.d_align},
                       {"cross_layers", mem.hfa.cross_layers},
                       {"cross_form", to_string(mem.hfa.cross_form)},
                       {"scoring", mem.hfa.scoring}}},
              {"ple", {{"n_shared_experts", mem.ple.n_shared_experts},
                       {"n_specific_experts", mem.ple.n_specific_experts},
                       {"expert_hidden", mem.ple.expert_hidden},
                       {"d_cke", mem.ple.d_cke}}},
              {"ind_hidden", mem.ind_hidden},
              {"tower_hidden", mem.tower_hidden},
              {"gamma", mem.gamma}};
  j["tem"] = {{"cross_hidden", tem.cross_hidden},
              {"d_cross", tem.d_cross},
              {"tower_hidden", tem.tower_hidden},
              {"gate_bias_init", tem.gate_bias_init},
              {"gate_init_noise", tem.gate_init_noise}};
  j["joint"] = {{"bottom", joint.bottom}, {"tower_hidden", joint.tower_hidden}};
  j["pretrain"] = train_json(pretrain);
  j["finetune"] = train_json(finetune);
  return j;
}

ojson merge_config(const ojson& base, const nlohmann::json& overlay, const std::string& path) {
  if (!overlay.is_object()) throw ValidationError("config section '" + path + "' must be an object");
  ojson out = base;
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key()))
      throw ValidationError("unknown config key '" + key + "'; valid keys: " + key_list(base));
    if (base.at(it.key()).is_object())
      out[it.key()] = merge_config(base.at(it.key()), it.value(), key);
    else
      out[it.key()] = it.value();
  }
  return out;
}

void apply_override(ojson& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  ojson value;
  try {
    value = ojson::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  ojson* node = &tree;
  std::string walked;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i]))
      throw ValidationError("unknown config key '" + (walked.empty() ? parts[i] : walked + "." + parts[i]) +
                            "'; valid keys: " + (node->is_object() ? key_list(*node) : std::string("(none)")));
    walked += (walked.empty() ? "" : ".") + parts[i];
    node = &(*node)[parts[i]];
  }
  if (node->is_object()) throw ValidationError("config key '" + key + "' is a section, not a value");
  *node = value;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& overlay) {
  const ojson j = merge_config(ExperimentConfig{}.to_json(), overlay);
  ExperimentConfig c;
  c.seed = get<std::uint64_t>(j, "seed", "");
  c.variant = get<std::string>(j, "variant", "");
  c.train_fraction = get<double>(j, "train_fraction", "");
  c.generator = GeneratorConfig::from_json(j.at("generator"));
  c.generator.seed = c.seed;

  const ojson& m = j.at("mem");
  const ojson& h = m.at("hfa");
  c.mem.hfa.h_im = get<std::size_t>(h, "h_im", "mem.hfa.");
  c.mem.hfa.d_align = get<std::size_t>(h, "d_align", "mem.hfa.");
  c.mem.hfa.cross_layers = get<std::size_t>(h, "cross_layers", "mem.hfa.");
  c.mem.hfa.cross_form = parse_cross_form(get<std::string>(h, "cross_form", "mem.hfa."));
  c.mem.hfa.scoring = get<bool>(h, "scoring", "mem.hfa.");
  const ojson& p = m.at("ple");
  c.mem.ple.n_shared_experts = get<std::size_t>(p, "n_shared_experts", "mem.ple.");
  c.mem.ple.n_specific_experts = get<std::size_t>(p, "n_specific_experts", "mem.ple.");
  c.mem.ple.expert_hidden = get<std::size_t>(p, "expert_hidden", "mem.ple.");
  c.mem.ple.d_cke = get<std::size_t>(p, "d_cke", "mem.ple.");
  c.mem.ind_hidden = get<std::size_t>(m, "ind_hidden", "mem.");
  c.mem.tower_hidden = get<std::size_t>(m, "tower_hidden", "mem.");
  c.mem.gamma = get<double>(m, "gamma", "mem.");

  const ojson& t = j.at("tem");
  c.tem.cross_hidden = get<std::size_t>(t, "cross_hidden", "tem.");
  c.tem.d_cross = get<std::size_t>(t, "d_cross", "tem.");
  c.tem.tower_hidden = get<std::size_t>(t, "tower_hidden", "tem.");
  c.tem.gate_bias_init = get<double>(t, "gate_bias_init", "tem.");
  c.tem.gate_init_noise = get<double>(t, "gate_init_noise", "tem.");

  const ojson& jt = j.at("joint");
  c.joint.bottom = get<std::vector<std::size_t>>(jt, "bottom", "joint.");
  c.joint.tower_hidden = get<std::size_t>(jt, "tower_hidden", "joint.");

  c.pretrain = train_from(j.at("pretrain"), "pretrain.", c.seed);
  c.finetune = train_from(j.at("finetune"), "finetune.", c.seed);
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (std::find(all_variants().begin(), all_variants().end(), variant) == all_variants().end()) {
    std::string valid;
    for (const auto& v : all_variants()) valid += (valid.empty() ? "" : ", ") + v;
    throw ValidationError("unknown variant '" + variant + "'; valid variants: " + valid);
  }
  if (!(mem.gamma >= 0.0)) throw ValidationError("mem.gamma must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train_fraction must be in (0, 1)");
  if (tem.d_cross != mem.ple.d_cke) throw ValidationError("tem.d_cross must equal mem.ple.d_cke");
  for (const TrainConfig* t : {&pretrain, &finetune}) {
    if (t->batch == 0 || t->eval_batch == 0) throw ValidationError("batch sizes must be >= 1");
    if (!(t->opt.lr > 0.0)) throw ValidationError("learning rate must be > 0");
  }
  if (joint.bottom.empty()) throw ValidationError("joint.bottom must list at least one width");
  generator.validate();
}

MemConfig variant_mem(const ExperimentConfig& cfg, const std::string& variant) {
  MemConfig m = cfg.mem;
  if (variant == "mkt_wo_hfa") m.hfa.scoring = false;
  if (variant == "mkt_wo_pdl") m.gamma = 0.0;
  return m;
}

PreparedData prepare_data(const GeneratedData& g, double train_fraction, std::size_t n_users) {
  PreparedData d;
  d.schema = g.schema;
  std::tie(d.src_train, d.src_test) = split(g.source, train_fraction);
  std::tie(d.tgt_train, d.tgt_test) = split(g.target, train_fraction);
  d.activity = click_counts(d.tgt_train, n_users);
  return d;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  return prepare_data(generate(cfg.generator), cfg.train_fraction, cfg.generator.n_users);
}

StageResult pretrain_stage(const ExperimentConfig& cfg, const MemConfig& memcfg, const PreparedData& data) {
  Rng rng = substream(cfg.seed, "init.mem");
  StageResult r;
  r.mem = std::make_unique<Mem>(data.schema, memcfg, rng);
  r.log = pretrain_mem(*r.mem, data.src_train, data.tgt_train, data.src_test, data.tgt_test, cfg.pretrain);
  return r;
}

namespace {

std::unique_ptr<Tem> fresh_tem(const ExperimentConfig& cfg, const FeatureSchema& schema, Entity e) {
  Rng rng = substream(cfg.seed, e == Entity::target ? "init.tem" : "init.tem.src");
  return std::make_unique<Tem>(schema, e, cfg.tem, rng);
}

}  // namespace

TemStage finetune_stage(const ExperimentConfig& cfg, const Mem& mem, const PreparedData& data) {
  const std::string before = mem_hash(mem);
  TemStage r;
  r.tem = fresh_tem(cfg, data.schema, Entity::target);
  Rng grng = substream(cfg.seed, "init.gates");
  r.tem->add_gates(transfer_widths(mem.schema(), mem.config()), grng);
  const TransferCache train_cache = build_transfer_cache(mem, data.tgt_train);
  r.test_cache = std::make_unique<TransferCache>(build_transfer_cache(mem, data.tgt_test));
  r.log = train_tem(*r.tem, data.tgt_train, &train_cache, data.tgt_test, r.test_cache.get(), cfg.finetune);
  if (mem_hash(mem) != before) throw ContractError("MEM parameters changed during fine-tuning");
  return r;
}

std::vector<double> TemStage::test_scores(const PreparedData& data, std::size_t batch) const {
  return score_tem(*tem, data.tgt_test, test_cache.get(), GateMode::learned, batch);
}

TemStage target_only_stage(const ExperimentConfig& cfg, const PreparedData& data) {
  TemStage r;
  r.tem = fresh_tem(cfg, data.schema, Entity::target);
  r.log = train_tem(*r.tem, data.tgt_train, nullptr, data.tgt_test, nullptr, cfg.finetune);
  return r;
}

TemStage vanilla_finetune_stage(const ExperimentConfig& cfg, const PreparedData& data,
                                std::vector<EpochLog>* source_log) {
  auto src = fresh_tem(cfg, data.schema, Entity::source);
  auto log = train_tem(*src, data.src_train, nullptr, data.src_test, nullptr, cfg.pretrain);
  if (source_log) *source_log = std::move(log);
  TemStage r;
  r.tem = fresh_tem(cfg, data.schema, Entity::target);
  copy_matching(r.tem->params(), src->params());
  r.log = train_tem(*r.tem, data.tgt_train, nullptr, data.tgt_test, nullptr, cfg.finetune);
  return r;
}

std::vector<VariantResult> run_variants(const ExperimentConfig& cfg, const PreparedData& data,
                                        const std::vector<std::string>& variants) {
  std::map<std::string, StageResult> mems;  // keyed by the MEM config that produced them
  auto mem_for = [&](const std::string& variant) -> StageResult& {
    const std::string key = variant == "mkt_wo_hfa" ? "wo_hfa" : variant == "mkt_wo_pdl" ? "wo_pdl" : "full";
    auto it = mems.find(key);
    if (it == mems.end()) it = mems.emplace(key, pretrain_stage(cfg, variant_mem(cfg, variant), data)).first;
    return it->second;
  };

  std::vector<VariantResult> out;
  for (const std::string& v : variants) {
    VariantResult r;
    r.variant = v;
    std::vector<double> scores;
    if (v == "mkt" || v == "mkt_wo_hfa" || v == "mkt_wo_pdl") {
      StageResult& m = mem_for(v);
      TemStage t = finetune_stage(cfg, *m.mem, data);
      scores = t.test_scores(data, cfg.finetune.eval_batch);
      r.logs = {{"pretrain", m.log}, {"finetune", t.log}};
      r.hashes = {{"mem", mem_hash(*m.mem)}, {"tem", tg::content_hash(t.tem->params())}};
    } else if (v == "mkt_wo_finetune") {
      StageResult& m = mem_for(v);
      scores = score_mem(*m.mem, Entity::target, data.tgt_test, cfg.pretrain.eval_batch);
      r.logs = {{"pretrain", m.log}};
      r.hashes = {{"mem", mem_hash(*m.mem)}};
    } else if (v == "target_only") {
      TemStage t = target_only_stage(cfg, data);
      scores = t.test_scores(data, cfg.finetune.eval_batch);
      r.logs = {{"finetune", t.log}};
      r.hashes = {{"tem", tg::content_hash(t.tem->params())}};
    } else if (v == "vanilla_finetune") {
      std::vector<EpochLog> src_log;
      TemStage t = vanilla_finetune_stage(cfg, data, &src_log);
      scores = t.test_scores(data, cfg.finetune.eval_batch);
      r.logs = {{"pretrain", src_log}, {"finetune", t.log}};
      r.hashes = {{"tem", tg::content_hash(t.tem->params())}};
    } else if (v == "joint_shared") {
      Rng rng = substream(cfg.seed, "init.joint");
      JointSharedModel model(data.schema, cfg.joint, rng);
      r.logs = {{"train", train_joint(model, data.src_train, data.tgt_train, data.tgt_test, cfg.pretrain)}};
      scores = score_joint(model, Entity::target, data.tgt_test, cfg.pretrain.eval_batch);
      r.hashes = {{"joint", tg::content_hash(model.params())}};
    } else {
      throw ValidationError("unknown variant '" + v + "'");
    }
    r.report = group_report(to_records(data.tgt_test, scores), data.activity);
    out.push_back(std::move(r));
  }
  return out;
}

std::string ablation_table(const std::vector<VariantResult>& rows) {
  const VariantResult* ref = nullptr;
  for (const auto& r : rows)
    if (r.variant == "mkt") ref = &r;
  std::string out = "variant             auc      gauc     d_auc     d_gauc\n";
  for (const auto& r : rows) {
    char line[160];
    const std::string da = ref ? fmt(r.report.auc - ref->report.auc, "%+.4f") : "n/a";
    const std::string dg = ref ? fmt(r.report.gauc - ref->report.gauc, "%+.4f") : "n/a";
    std::snprintf(line, sizeof line, "%-18s  %.4f   %.4f   %-8s  %-8s\n", r.variant.c_str(), r.report.auc,
                  r.report.gauc, da.c_str(), dg.c_str());
    out += line;
  }
  return out;
}

std::string ablation_csv(const std::vector<VariantResult>& rows) {
  const VariantResult* ref = nullptr;
  for (const auto& r : rows)
    if (r.variant == "mkt") ref = &r;
  std::string out = "variant,auc,gauc,delta_auc_vs_mkt,delta_gauc_vs_mkt\n";
  for (const auto& r : rows) {
    out += r.variant + "," + fmt(r.report.auc, "%.17g") + "," + fmt(r.report.gauc, "%.17g") + ",";
    out += ref ? fmt(r.report.auc - ref->report.auc, "%.17g") : "";
    out += ",";
    out += ref ? fmt(r.report.gauc - ref->report.gauc, "%.17g") : "";
    out += "\n";
  }
  return out;
}

}  // namespace mkt
