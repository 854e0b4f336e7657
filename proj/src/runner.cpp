#include "mkt/runner.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mkt/checkpoint.hpp"
#include "mkt/errors.hpp"
#include "mkt/hash.hpp"
#include "mkt/rng.hpp"

namespace mkt {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kSourceFile = "source.jsonl";
constexpr const char* kTargetFile = "target.jsonl";
constexpr const char* kSchemaFile = "schema.json";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DependencyError("cannot write " + path.string());
  f << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DependencyError("missing file: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string jsonl(const std::vector<EpochLog>& log) {
  std::string out;
  for (const auto& l : log) out += l.dump() + "\n";
  return out;
}

class Manifest {
 public:
  Manifest(const fs::path& out, const std::string& command, const ojson& config)
      : path_(out / ("manifest_" + command + ".json")) {
    j_["command"] = command;
    j_["status"] = "incomplete";
    j_["config"] = config;
    j_["datasets"] = ojson::object();
    j_["checkpoints"] = ojson::object();
    j_["metrics"] = ojson::object();
    j_["wall_clock"] = ojson::object();
    write();
  }
  ojson& operator[](const char* key) { return j_[key]; }
  void time(const std::string& stage, std::chrono::steady_clock::time_point start) {
    j_["wall_clock"][stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write();
  }
  ojson finish() {
    j_["status"] = "complete";
    write();
    return j_;
  }
  void write() const { write_text(path_, j_.dump(2) + "\n"); }

 private:
  fs::path path_;
  ojson j_;
};

ExperimentConfig config_of(const ojson& tree) { return ExperimentConfig::from_json(tree); }

PreparedData load_data(const CommandOptions& opt, const ExperimentConfig& cfg, Manifest& m) {
  if (opt.data.empty()) throw DependencyError("no dataset directory given (--data); run `generate` first");
  const FeatureSchema expected = schema_for(cfg.generator);
  GeneratedData g;
  g.schema = expected;
  for (const char* name : {kSourceFile, kTargetFile}) {
    const fs::path p = opt.data / name;
    if (!fs::exists(p)) throw DependencyError("missing dataset " + p.string() + "; run `generate` first");
    (name == kSourceFile ? g.source : g.target) = load_dataset(p, &expected);
    m["datasets"][name] = sha256_file(p);
  }
  return prepare_data(g, cfg.train_fraction, cfg.generator.n_users);
}

tg::Checkpoint with_meta(const tg::ParameterSet& ps, const char* kind, const FeatureSchema& schema,
                         const ExperimentConfig& cfg) {
  tg::Checkpoint c = tg::snapshot(ps);
  c.meta["kind"] = {kind};
  c.meta["schema"] = {schema.to_json().dump()};
  c.meta["experiment"] = {cfg.to_json().dump()};
  return c;
}

std::string meta_value(const tg::Checkpoint& c, const std::string& key, const fs::path& path) {
  auto it = c.meta.find(key);
  if (it == c.meta.end() || it->second.empty())
    throw ValidationError("checkpoint " + path.string() + " lacks the '" + key + "' record");
  return it->second[0];
}

void check_schema(const FeatureSchema& data_schema, const FeatureSchema& ckpt_schema, const fs::path& path) {
  const auto diff = schema_diff(data_schema, ckpt_schema);
  if (diff.empty()) return;
  std::string msg = "schema of " + path.string() + " differs from the data:";
  for (const auto& d : diff) msg += " " + d + ";";
  throw ValidationError(msg);
}

struct LoadedMem {
  ExperimentConfig cfg;
  std::unique_ptr<Mem> mem;
};

LoadedMem load_mem(const fs::path& path) {
  if (path.empty()) throw DependencyError("no MEM checkpoint given (--mem); run `pretrain` first");
  const tg::Checkpoint c = tg::load_checkpoint(path);
  if (meta_value(c, "kind", path) != "mem") throw ValidationError(path.string() + " is not a MEM checkpoint");
  LoadedMem out;
  try {
    out.cfg = config_of(ojson::parse(meta_value(c, "experiment", path)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad experiment record in " + path.string() + ": " + e.what());
  }
  const FeatureSchema schema = FeatureSchema::from_json(ojson::parse(meta_value(c, "schema", path)));
  Rng rng = substream(out.cfg.seed, "init.mem");
  out.mem = std::make_unique<Mem>(schema, variant_mem(out.cfg, out.cfg.variant), rng);
  tg::restore(out.mem->params(), c);
  return out;
}

bool uses_mem(const std::string& v) { return v == "mkt" || v == "mkt_wo_hfa" || v == "mkt_wo_pdl"; }

ojson flatten(const ojson& j, const std::string& prefix = "") {
  ojson out = ojson::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object()) {
      const ojson inner = flatten(it.value(), key);
      for (auto& [k, v] : inner.items()) out[k] = v;
    } else {
      out[key] = it.value();
    }
  }
  return out;
}

ojson report_json(const MetricsReport& r) { return r.to_json(); }

}  // namespace

ojson resolve_config(const CommandOptions& opt) {
  ojson tree = ExperimentConfig{}.to_json();
  if (!opt.config.empty()) {
    if (!fs::exists(opt.config)) throw DependencyError("config file not found: " + opt.config.string());
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(read_text(opt.config));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config file " + opt.config.string() + " is not valid JSON: " + e.what());
    }
    tree = merge_config(tree, file);
  }
  for (const auto& s : opt.sets) apply_override(tree, s);
  if (opt.seed) tree["seed"] = *opt.seed;
  return config_of(tree).to_json();
}

ojson cmd_generate(const CommandOptions& opt) {
  const ojson tree = resolve_config(opt);
  const ExperimentConfig cfg = config_of(tree);
  fs::create_directories(opt.out);
  Manifest m(opt.out, "generate", tree);
  const auto t0 = std::chrono::steady_clock::now();
  const GeneratedData g = generate(cfg.generator);
  const ojson gen = cfg.generator.to_json();
  save_dataset(opt.out / kSourceFile, g.schema, Entity::source, g.source, gen);
  save_dataset(opt.out / kTargetFile, g.schema, Entity::target, g.target, gen);
  write_text(opt.out / kSchemaFile, g.schema.to_json().dump(2) + "\n");
  for (const char* name : {kSourceFile, kTargetFile, kSchemaFile}) m["datasets"][name] = sha256_file(opt.out / name);
  for (Entity e : {Entity::source, Entity::target}) {
    const Dataset& d = e == Entity::source ? g.source : g.target;
    std::size_t pos = 0;
    for (const auto& s : d) pos += s.label;
    m["metrics"][to_string(e)] = {{"samples", d.size()},
                                  {"positive_rate", d.empty() ? 0.0 : static_cast<double>(pos) / d.size()}};
  }
  m.time("generate", t0);
  return m.finish();
}

ojson cmd_pretrain(const CommandOptions& opt) {
  const ojson tree = resolve_config(opt);
  const ExperimentConfig cfg = config_of(tree);
  if (!uses_mem(cfg.variant) && cfg.variant != "mkt_wo_finetune")
    throw ValidationError("variant '" + cfg.variant + "' has no MEM pretraining stage");
  fs::create_directories(opt.out);
  Manifest m(opt.out, "pretrain", tree);
  const PreparedData data = load_data(opt, cfg, m);
  const auto t0 = std::chrono::steady_clock::now();
  StageResult r = pretrain_stage(cfg, variant_mem(cfg, cfg.variant), data);
  m.time("pretrain", t0);
  tg::save_checkpoint(opt.out / "mem.ckpt", with_meta(r.mem->params(), "mem", data.schema, cfg));
  write_text(opt.out / "pretrain_log.jsonl", jsonl(r.log));
  m["checkpoints"]["mem"] = tg::content_hash(r.mem->params());
  m["metrics"]["pretrain"] = r.log;
  return m.finish();
}

ojson cmd_finetune(const CommandOptions& opt) {
  const ojson tree = resolve_config(opt);
  const ExperimentConfig cfg = config_of(tree);
  if (cfg.variant == "joint_shared" || cfg.variant == "mkt_wo_finetune")
    throw ValidationError("variant '" + cfg.variant + "' has no fine-tuning stage");
  fs::create_directories(opt.out);
  Manifest m(opt.out, "finetune", tree);
  std::optional<LoadedMem> mem;
  if (uses_mem(cfg.variant)) mem = load_mem(opt.mem);
  const PreparedData data = load_data(opt, cfg, m);
  const auto t0 = std::chrono::steady_clock::now();
  TemStage t;
  tg::Checkpoint ckpt;
  if (mem) {
    check_schema(data.schema, mem->mem->schema(), opt.mem);
    const std::string mem_hash = tg::content_hash(mem->mem->params());
    t = finetune_stage(cfg, *mem->mem, data);
    ckpt = with_meta(t.tem->params(), "tem", data.schema, cfg);
    ckpt.meta["mem_ref"] = {opt.mem.string(), mem_hash};
    m["checkpoints"]["mem"] = mem_hash;
  } else {
    t = cfg.variant == "vanilla_finetune" ? vanilla_finetune_stage(cfg, data) : target_only_stage(cfg, data);
    ckpt = with_meta(t.tem->params(), "tem", data.schema, cfg);
  }
  m.time("finetune", t0);
  tg::save_checkpoint(opt.out / "tem.ckpt", ckpt);
  write_text(opt.out / "finetune_log.jsonl", jsonl(t.log));
  m["checkpoints"]["tem"] = tg::content_hash(t.tem->params());
  m["metrics"]["finetune"] = t.log;
  return m.finish();
}

ServingModel load_serving_model(const fs::path& tem_ckpt, const fs::path& mem_ckpt) {
  if (!fs::exists(tem_ckpt)) throw DependencyError("TEM checkpoint not found: " + tem_ckpt.string());
  const tg::Checkpoint c = tg::load_checkpoint(tem_ckpt);
  if (meta_value(c, "kind", tem_ckpt) != "tem") throw ValidationError(tem_ckpt.string() + " is not a TEM checkpoint");
  ServingModel s;
  s.config = config_of(ojson::parse(meta_value(c, "experiment", tem_ckpt)));
  const FeatureSchema schema = FeatureSchema::from_json(ojson::parse(meta_value(c, "schema", tem_ckpt)));
  Rng rng = substream(s.config.seed, "init.tem");
  s.tem = std::make_unique<Tem>(schema, Entity::target, s.config.tem, rng);
  auto ref = c.meta.find("mem_ref");
  if (ref != c.meta.end()) {
    if (ref->second.size() != 2) throw ValidationError("malformed mem_ref record in " + tem_ckpt.string());
    if (mem_ckpt.empty())
      throw DependencyError("TEM checkpoint was trained against MEM " + ref->second[0] + "; pass it with --mem");
    LoadedMem lm = load_mem(mem_ckpt);
    const std::string got = tg::content_hash(lm.mem->params());
    if (got != ref->second[1])
      throw ValidationError("MEM checkpoint " + mem_ckpt.string() + " has hash " + got + ", TEM expects " +
                            ref->second[1]);
    check_schema(schema, lm.mem->schema(), mem_ckpt);
    Rng grng = substream(s.config.seed, "init.gates");
    s.tem->add_gates(transfer_widths(lm.mem->schema(), lm.mem->config()), grng);
    s.mem = std::move(lm.mem);
  }
  tg::restore(s.tem->params(), c);
  return s;
}

ojson cmd_eval(const CommandOptions& opt) {
  const ojson tree = resolve_config(opt);
  const ExperimentConfig cfg = config_of(tree);
  fs::create_directories(opt.out);
  Manifest m(opt.out, "eval", tree);
  const PreparedData data = load_data(opt, cfg, m);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> scores;
  if (!opt.tem.empty()) {
    ServingModel s = load_serving_model(opt.tem, opt.mem);
    check_schema(data.schema, s.tem->schema(), opt.tem);
    std::optional<TransferCache> cache;
    if (s.mem) cache = build_transfer_cache(*s.mem, data.tgt_test);
    scores = score_tem(*s.tem, data.tgt_test, cache ? &*cache : nullptr);
    m["checkpoints"]["tem"] = tg::content_hash(s.tem->params());
    if (s.mem) m["checkpoints"]["mem"] = tg::content_hash(s.mem->params());
    m["metrics"]["model"] = "tem";
  } else if (!opt.mem.empty()) {
    LoadedMem lm = load_mem(opt.mem);
    check_schema(data.schema, lm.mem->schema(), opt.mem);
    scores = score_mem(*lm.mem, Entity::target, data.tgt_test);
    m["checkpoints"]["mem"] = tg::content_hash(lm.mem->params());
    m["metrics"]["model"] = "mem";
  } else {
    Rng rng = substream(cfg.seed, "init.tem");
    Tem fresh(data.schema, Entity::target, cfg.tem, rng);
    scores = score_tem(fresh, data.tgt_test, nullptr);
    m["metrics"]["model"] = "untrained";
  }
  const MetricsReport rep = group_report(to_records(data.tgt_test, scores), data.activity);
  m.time("eval", t0);
  write_text(opt.out / "metrics.json", rep.to_json().dump(2) + "\n");
  write_text(opt.out / "metrics.csv", rep.to_csv());
  m["metrics"]["report"] = report_json(rep);
  return m.finish();
}

ojson cmd_ablate(const CommandOptions& opt) {
  const ojson tree = resolve_config(opt);
  const ExperimentConfig cfg = config_of(tree);
  std::vector<std::string> variants = opt.variants.empty() ? all_variants() : opt.variants;
  for (const auto& v : variants) {
    ExperimentConfig probe = cfg;
    probe.variant = v;
    probe.validate();
  }
  fs::create_directories(opt.out);
  Manifest m(opt.out, "ablate", tree);
  auto t0 = std::chrono::steady_clock::now();
  PreparedData data;
  if (opt.data.empty()) {
    data = prepare_data(cfg);
    m.time("generate", t0);
  } else {
    data = load_data(opt, cfg, m);
  }
  t0 = std::chrono::steady_clock::now();
  const auto rows = run_variants(cfg, data, variants);
  m.time("variants", t0);

  ExperimentConfig ref = cfg;
  ref.variant = "mkt";
  ref.mem = variant_mem(cfg, "mkt");
  const ojson ref_flat = flatten(ref.to_json());
  for (const auto& r : rows) {
    ExperimentConfig vc = cfg;
    vc.variant = r.variant;
    vc.mem = variant_mem(cfg, r.variant);
    ojson diff = ojson::array();
    const ojson flat = flatten(vc.to_json());
    for (auto& [k, v] : flat.items())
      if (ref_flat.at(k) != v) diff.push_back(k);
    m["metrics"][r.variant] = {{"auc", r.report.auc},
                               {"gauc", r.report.gauc},
                               {"report", r.report.to_json()},
                               {"config_diff_vs_mkt", diff}};
    for (const auto& [name, h] : r.hashes) m["checkpoints"][r.variant + "." + name] = h;
  }
  write_text(opt.out / "ablation.txt", ablation_table(rows));
  write_text(opt.out / "ablation.csv", ablation_csv(rows));
  return m.finish();
}

int run_command(const std::string& name, const CommandOptions& opt, std::ostream& err) {
  try {
    if (name == "generate")
      cmd_generate(opt);
    else if (name == "pretrain")
      cmd_pretrain(opt);
    else if (name == "finetune")
      cmd_finetune(opt);
    else if (name == "eval")
      cmd_eval(opt);
    else if (name == "ablate")
      cmd_ablate(opt);
    else
      throw ValidationError("unknown command '" + name + "'; valid: generate, pretrain, finetune, eval, ablate");
    return 0;
  } catch (const DependencyError& e) {
    err << "dependency error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

ojson comparable(const ojson& manifest) {
  ojson j = manifest;
  j.erase("wall_clock");
  return j;
}

}  // namespace mkt
