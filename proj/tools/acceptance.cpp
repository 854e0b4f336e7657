// Runs every acceptance check and prints one PASS/FAIL line per criterion.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "mkt/checkpoint.hpp"
#include "mkt/errors.hpp"
#include "mkt/experiment.hpp"
#include "mkt/gradcheck.hpp"
#include "mkt/ops.hpp"
#include "mkt/runner.hpp"

using namespace mkt;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  ojson detail = ojson::object();
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string fmt_e(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

tg::Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  tg::Tensor t(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// ---- 1: gradients ----------------------------------------------------------

using Builder = std::function<tg::Var(std::vector<tg::Var>&)>;

double op_error(const std::vector<tg::Tensor>& inputs, const Builder& build, Rng& rng) {
  std::vector<tg::Parameter> ps;
  for (std::size_t i = 0; i < inputs.size(); ++i) ps.emplace_back("in" + std::to_string(i), inputs[i]);
  std::vector<tg::Parameter*> ptrs;
  for (auto& p : ps) ptrs.push_back(&p);
  tg::Tensor proj;
  auto loss = [&](tg::Tape& t) {
    std::vector<tg::Var> v;
    for (auto& p : ps) v.push_back(t.param(p));
    tg::Var y = build(v);
    if (y.rows() == 1 && y.cols() == 1) return y;
    if (!proj.same_shape(y.value())) proj = random_tensor(y.rows(), y.cols(), rng);
    return tg::sum(tg::mul(y, t.constant(proj)));
  };
  return tg::check_gradients(ptrs, loss, 1e-5).max_rel_error;
}

GeneratorConfig small_vocab() {
  GeneratorConfig g;
  g.n_users = 12;
  g.entity[0].n_items = 10;
  g.entity[1].n_items = 10;
  g.n_city = 5;
  g.n_category = 6;
  g.n_creator = 10;
  return g;
}

Verdict gradients() {
  Rng rng = substream(1, "acceptance.grad");
  auto R = [&](std::size_t r, std::size_t c) { return random_tensor(r, c, rng); };
  std::vector<std::pair<std::string, std::pair<std::vector<tg::Tensor>, Builder>>> ops{
      {"matmul", {{R(3, 4), R(4, 2)}, [](auto& v) { return tg::matmul(v[0], v[1]); }}},
      {"matmul_nt", {{R(3, 4), R(2, 4)}, [](auto& v) { return tg::matmul_nt(v[0], v[1]); }}},
      {"linear", {{R(3, 4), R(2, 4), R(2, 1)}, [](auto& v) { return tg::linear(v[0], v[1], v[2]); }}},
      {"add", {{R(2, 3), R(2, 3)}, [](auto& v) { return tg::add(v[0], v[1]); }}},
      {"sub", {{R(2, 3), R(2, 3)}, [](auto& v) { return tg::sub(v[0], v[1]); }}},
      {"mul", {{R(2, 3), R(2, 3)}, [](auto& v) { return tg::mul(v[0], v[1]); }}},
      {"scale", {{R(2, 3)}, [](auto& v) { return tg::scale(v[0], 2.5); }}},
      {"relu", {{R(3, 3)}, [](auto& v) { return tg::relu(v[0]); }}},
      {"sigmoid", {{R(3, 3)}, [](auto& v) { return tg::sigmoid(v[0]); }}},
      {"tanh", {{R(3, 3)}, [](auto& v) { return tg::tanh(v[0]); }}},
      {"clamp", {{R(3, 3)}, [](auto& v) { return tg::clamp(v[0], -0.5, 0.5); }}},
      {"add_bias", {{R(3, 2), R(2, 1)}, [](auto& v) { return tg::add_bias(v[0], v[1]); }}},
      {"mul_rows", {{R(3, 2), R(3, 1)}, [](auto& v) { return tg::mul_rows(v[0], v[1]); }}},
      {"scale_blocks", {{R(2, 6), R(2, 3)}, [](auto& v) { return tg::scale_blocks(v[0], v[1]); }}},
      {"concat", {{R(2, 1), R(2, 3)}, [](auto& v) { return tg::concat({v[0], v[1]}); }}},
      {"slice_cols", {{R(2, 5)}, [](auto& v) { return tg::slice_cols(v[0], 1, 3); }}},
      {"gather", {{R(4, 3)}, [](auto& v) { return tg::gather(v[0], {2, 0, 2, 3}); }}},
      {"softmax_rows", {{R(3, 4)}, [](auto& v) { return tg::softmax_rows(v[0]); }}},
      {"attention_pool", {{R(3, 2), R(5, 2)}, [](auto& v) { return tg::attention_pool(v[0], v[1], {0, 2, 2, 5}); }}},
      {"cosine", {{R(3, 4), R(3, 4)}, [](auto& v) { return tg::cosine(v[0], v[1]); }}},
      {"bce_with_logits",
       {{R(4, 1)}, [](auto& v) { return tg::bce_with_logits(tg::scale(v[0], 3), std::vector<double>{1, 0, 0, 1}); }}},
      {"sum", {{R(2, 3)}, [](auto& v) { return tg::sum(v[0]); }}},
      {"mean", {{R(2, 3)}, [](auto& v) { return tg::mean(v[0]); }}},
  };
  Verdict out;
  double worst_op = 0;
  for (auto& [name, c] : ops) {
    const double e = op_error(c.first, c.second, rng);
    out.detail["ops"][name] = e;
    worst_op = std::max(worst_op, e);
  }

  const GeneratorConfig g = small_vocab();
  const GeneratedData data = generate(g);
  const ExperimentConfig cfg;
  Rng mrng = substream(1, "init.mem"), trng = substream(1, "init.tem"), grng = substream(1, "init.gates");
  Mem mem(data.schema, cfg.mem, mrng);
  const EncodedSample* mixed[] = {&data.source[0], &data.target[0]};
  auto mparams = mem.params().all();
  const auto mres = tg::check_gradients(mparams, [&](tg::Tape& t) { return mem.loss(t, mixed); });

  Tem tem(data.schema, Entity::target, cfg.tem, trng);
  tem.add_gates(transfer_widths(data.schema, cfg.mem), grng);
  const EncodedSample* tb[] = {&data.target[0], &data.target[1]};
  const TransferVectors tv = extract_transfer(mem, tb);
  const std::vector<double> labels{static_cast<double>(data.target[0].label),
                                   static_cast<double>(data.target[1].label)};
  auto tparams = tem.params().all();
  const auto tres = tg::check_gradients(tparams, [&](tg::Tape& t) {
    return tg::mean(tg::bce_with_logits(tem.forward(t, tb, &tv).logit, labels));
  });

  out.detail["worst_op"] = worst_op;
  out.detail["mem"] = {{"max_rel_error", mres.max_rel_error}, {"worst", mres.worst}, {"checked", mres.checked}};
  out.detail["tem"] = {{"max_rel_error", tres.max_rel_error}, {"worst", tres.worst}, {"checked", tres.checked}};
  out.pass = worst_op < 1e-6 && mres.max_rel_error < 1e-4 && tres.max_rel_error < 1e-4;
  out.detail["summary"] = "ops max rel err " + fmt_e(worst_op) + " (< 1e-6), MEM " + fmt_e(mres.max_rel_error) +
                          " over " + std::to_string(mres.checked) + " entries, TEM " + fmt_e(tres.max_rel_error) +
                          " over " + std::to_string(tres.checked) + " (< 1e-4)";
  return out;
}

// ---- 2: HFA contract -------------------------------------------------------

Verdict hfa_contract() {
  const ExperimentConfig cfg;
  const FeatureSchema schema = schema_for(cfg.generator);
  tg::ParameterSet ps;
  Rng rng = substream(1, "init.mem");
  Hfa hfa(ps, "hfa", schema, cfg.mem.hfa, rng);
  Rng xr = substream(2, "acceptance.hfa");
  double lo = 2, hi = 0;
  std::size_t bad = 0;
  std::set<std::size_t> q_widths;
  for (int i = 0; i < 1000; ++i) {
    const Entity e = i % 2 ? Entity::target : Entity::source;
    tg::Tape t;
    const auto out = hfa.branch(e).forward(t, t.constant(random_tensor(1, schema.spec_dim(e), xr, -3, 3)),
                                           t.constant(random_tensor(1, schema.shared_dim(), xr, -3, 3)));
    for (double p : out.p.value().values()) {
      lo = std::min(lo, p);
      hi = std::max(hi, p);
      bad += !(p > 0.0 && p < 2.0);
    }
    q_widths.insert(out.q.cols());
  }
  bool passthrough = true;
  for (Entity e : {Entity::source, Entity::target}) {
    auto& br = hfa.branch(e);
    for (auto* w : br.cross_w) w->value.fill(0.0);
    for (auto* b : br.cross_b) b->value.fill(0.0);
    tg::Tape t;
    const tg::Tensor v0 = random_tensor(4, schema.spec_dim(e), xr);
    passthrough = passthrough && br.explicit_cross(t, t.constant(v0)).value().identical(v0);
  }
  Verdict v;
  v.pass = bad == 0 && q_widths.size() == 1 && passthrough;
  v.detail = {{"score_min", lo}, {"score_max", hi}, {"out_of_range", bad}, {"q_widths", q_widths},
              {"zero_cross_passthrough", passthrough}};
  v.detail["summary"] = "min score " + fmt_e(lo) + ", 2 - max score " + fmt_e(2.0 - hi) + ", " + std::to_string(bad) +
                        " outside (0,2); q widths " + std::to_string(q_widths.size() == 1 ? *q_widths.begin() : 0) +
                        (q_widths.size() == 1 ? " for both entities" : " DIFFER") +
                        "; zero cross layers pass through: " + (passthrough ? "yes" : "no");
  return v;
}

// ---- 3 and 4: PDL effect, freeze and reduction ------------------------------

struct DefaultRun {
  ExperimentConfig cfg;
  PreparedData data;
  StageResult mem;
};

DefaultRun default_pretrain() {
  DefaultRun r;
  r.data = prepare_data(r.cfg);
  r.mem = pretrain_stage(r.cfg, r.cfg.mem, r.data);
  return r;
}

Verdict pdl(const DefaultRun& run) {
  Rng rng = substream(3, "acceptance.pdl");
  double lo = 2, hi = -2;
  for (int i = 0; i < 1000; ++i) {
    tg::Tape t;
    KnowledgeBundle a, b;
    a.g_com = t.constant(random_tensor(4, 8, rng, -5, 5));
    a.g_ind = t.constant(random_tensor(4, 8, rng, -5, 5));
    b.g_com = t.constant(random_tensor(3, 8, rng, -5, 5));
    b.g_ind = i % 3 ? t.constant(random_tensor(3, 8, rng, -5, 5)) : b.g_com;
    const double v = polarized_distribution_loss(t, &a, &b).value().item();
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const auto& log = run.mem.log;
  const double s0 = log.front()["cos_src"], s1 = log.back()["cos_src"];
  const double t0 = log.front()["cos_tgt"], t1 = log.back()["cos_tgt"];
  Verdict v;
  v.pass = lo >= -2 && hi <= 2 && s1 < s0 && t1 < t0;
  v.detail = {{"pdl_min", lo},       {"pdl_max", hi},        {"cos_src_init", s0}, {"cos_src_final", s1},
              {"cos_tgt_init", t0}, {"cos_tgt_final", t1}, {"pretrain_log", log}};
  v.detail["summary"] = "random PDL in [" + fmt(lo) + ", " + fmt(hi) + "]; mean cos(g_com,g_ind) source " + fmt(s0) +
                        " -> " + fmt(s1) + ", target " + fmt(t0) + " -> " + fmt(t1) + " over " +
                        std::to_string(run.cfg.pretrain.epochs) + " epochs";
  return v;
}

Verdict freeze(const DefaultRun& run) {
  const std::string before = tg::content_hash(run.mem.mem->params());
  const TemStage gated = finetune_stage(run.cfg, *run.mem.mem, run.data);
  const std::string after = tg::content_hash(run.mem.mem->params());

  Rng rng = substream(run.cfg.seed, "init.tem");
  Tem plain(run.data.schema, Entity::target, run.cfg.tem, rng);
  const auto copied = copy_matching(plain.params(), gated.tem->params());
  const auto zeroed =
      score_tem(*gated.tem, run.data.tgt_test, gated.test_cache.get(), GateMode::forced_zero);
  const auto standalone = score_tem(plain, run.data.tgt_test, nullptr);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < zeroed.size(); ++i)
    differ += std::memcmp(&zeroed[i], &standalone[i], sizeof(double)) != 0;
  Verdict v;
  v.pass = before == after && differ == 0 && copied.size() == plain.params().size();
  v.detail = {{"mem_hash_before", before}, {"mem_hash_after", after}, {"samples", zeroed.size()},
              {"bitwise_differences", differ}};
  v.detail["summary"] = std::string("MEM hash ") + (before == after ? "unchanged" : "CHANGED") +
                        " across fine-tuning; forced-zero gates vs standalone TEM: " + std::to_string(differ) +
                        " of " + std::to_string(zeroed.size()) + " logits differ bitwise";
  return v;
}

// ---- 5 to 8: comparative sweeps -------------------------------------------

struct SweepResult {
  std::map<std::string, std::vector<double>> gauc;                          // per variant, per seed
  std::map<std::string, std::vector<std::array<double, 3>>> bucket_gauc;  // per variant, per seed
  double mean(const std::string& v) const {
    const auto& x = gauc.at(v);
    double s = 0;
    for (double d : x) s += d;
    return s / static_cast<double>(x.size());
  }
  double bucket_mean(const std::string& v, std::size_t b) const {
    const auto& x = bucket_gauc.at(v);
    double s = 0;
    for (const auto& d : x) s += d[b];
    return s / static_cast<double>(x.size());
  }
};

SweepResult sweep(const ojson& base, const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& variants,
                  double alpha) {
  SweepResult r;
  for (std::uint64_t seed : seeds) {
    ojson tree = base;
    tree["seed"] = seed;
    tree["generator"]["alpha"] = alpha;
    const ExperimentConfig cfg = ExperimentConfig::from_json(tree);
    const PreparedData data = prepare_data(cfg);
    const auto rows = run_variants(cfg, data, variants);
    for (const auto& row : rows) {
      r.gauc[row.variant].push_back(row.report.gauc);
      std::array<double, 3> b{};
      for (std::size_t k = 0; k < 3; ++k) b[k] = row.report.groups[k].gauc.value_or(std::nan(""));
      r.bucket_gauc[row.variant].push_back(b);
      std::cerr << "  alpha=" << alpha << " seed=" << seed << " " << row.variant << " gauc=" << fmt(row.report.gauc)
                << "\n";
    }
  }
  return r;
}

ojson sweep_json(const SweepResult& s) {
  ojson j;
  for (const auto& [v, g] : s.gauc) j[v] = {{"gauc", g}, {"mean", s.mean(v)}};
  return j;
}

Verdict table2(const SweepResult& s) {
  const double m = s.mean("mkt"), v = s.mean("vanilla_finetune"), j = s.mean("joint_shared"),
               t = s.mean("target_only");
  Verdict out;
  out.pass = m > v && v > j && j > t && m - t >= 0.01;
  out.detail = sweep_json(s);
  out.detail["summary"] = "3-seed mean GAUC mkt " + fmt(m) + ", vanilla_finetune " + fmt(v) + ", joint_shared " +
                          fmt(j) + ", target_only " + fmt(t) + "; mkt - target_only = " + fmt(m - t) +
                          " (need ordering mkt > vanilla > joint > target_only and gain >= 0.01)";
  return out;
}

Verdict table4(const SweepResult& s) {
  const double m = s.mean("mkt");
  Verdict out;
  out.pass = true;
  std::string summary = "mkt " + fmt(m);
  for (const char* v : {"mkt_wo_hfa", "mkt_wo_pdl", "mkt_wo_finetune"}) {
    const double x = s.mean(v);
    out.pass = out.pass && x < m;
    summary += std::string(", ") + v + " " + fmt(x) + (x < m ? "" : " (not lower)");
    out.detail[v] = x;
  }
  out.detail["mkt"] = m;
  out.detail["summary"] = summary;
  return out;
}

Verdict dose_response(const SweepResult& high, const SweepResult& zero) {
  const double g9 = high.mean("mkt") - high.mean("target_only");
  const double g0 = zero.mean("mkt") - zero.mean("target_only");
  Verdict out;
  out.pass = g9 > g0 && std::abs(g0) <= 0.005;
  out.detail = {{"gain_alpha_0.9", g9}, {"gain_alpha_0", g0}, {"alpha_0", sweep_json(zero)}};
  out.detail["summary"] = "mkt - target_only GAUC: alpha 0.9 " + fmt(g9) + ", alpha 0 " + fmt(g0) +
                          " (need gain(0.9) > gain(0) and |gain(0)| <= 0.005)";
  return out;
}

Verdict long_tail(const SweepResult& s) {
  std::array<double, 3> rel{};
  ojson buckets;
  for (std::size_t b = 0; b < 3; ++b) {
    const double m = s.bucket_mean("mkt", b), t = s.bucket_mean("target_only", b);
    rel[b] = (m - t) / t;
    buckets[activity_buckets()[b].name] = {{"mkt", m}, {"target_only", t}, {"relative_gain", rel[b]}};
  }
  Verdict out;
  out.pass = rel[0] >= rel[2];
  out.detail = {{"buckets", buckets}};
  out.detail["summary"] = "relative GAUC gain of mkt over target_only: [0,10) " + fmt(100 * rel[0], 2) + "%, [10,30) " +
                          fmt(100 * rel[1], 2) + "%, [30,inf) " + fmt(100 * rel[2], 2) +
                          "% (need [0,10) >= [30,inf))";
  return out;
}

// ---- 9: metric oracles -----------------------------------------------------

Verdict metric_oracles() {
  Rng rng = substream(9, "acceptance.metrics");
  auto pairs_auc = [](const std::vector<PredictionRecord>& r) {
    double wins = 0;
    std::size_t n = 0;
    for (const auto& p : r)
      if (p.label)
        for (const auto& q : r)
          if (!q.label) {
            ++n;
            wins += p.score > q.score ? 1.0 : p.score == q.score ? 0.5 : 0.0;
          }
    return wins / static_cast<double>(n);
  };
  std::size_t checked = 0, mismatched = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 199);
    const std::uint32_t users = 1 + static_cast<std::uint32_t>(trial % 15);
    const int levels = trial % 3 ? 1000 : 4;
    std::uniform_int_distribution<int> lv(0, levels - 1);
    std::uniform_int_distribution<std::uint32_t> uu(0, users - 1);
    std::bernoulli_distribution click(0.3);
    std::vector<PredictionRecord> r;
    for (std::size_t i = 0; i < n; ++i)
      r.push_back({uu(rng), static_cast<double>(lv(rng)) / levels, static_cast<std::uint8_t>(click(rng))});
    std::size_t pos = 0;
    for (const auto& x : r) pos += x.label;
    if (pos > 0 && pos < n) {
      ++checked;
      mismatched += auc(r) != pairs_auc(r);
    }
    std::map<std::uint32_t, std::vector<PredictionRecord>> by;
    for (const auto& x : r) by[x.user].push_back(x);
    double num = 0, den = 0;
    for (const auto& [u, v] : by) {
      std::size_t p = 0;
      for (const auto& x : v) p += x.label;
      if (p == 0 || p == v.size()) continue;
      num += static_cast<double>(v.size()) * pairs_auc(v);
      den += static_cast<double>(v.size());
    }
    if (den > 0) {
      ++checked;
      mismatched += gauc(r).gauc != num / den;
    }
  }
  std::vector<PredictionRecord> worked;
  for (auto [s, y] : std::vector<std::pair<double, int>>{{0.9, 1}, {0.8, 1}, {0.7, 1}, {0.3, 0}, {0.2, 0}, {0.1, 0}})
    worked.push_back({1, s, static_cast<std::uint8_t>(y)});
  worked.push_back({2, 0.4, 1});
  worked.push_back({2, 0.4, 0});
  const double w = gauc(worked).gauc;
  const std::vector<PredictionRecord> hand{{0, 0.1, 0}, {0, 0.4, 0}, {0, 0.35, 1}, {0, 0.8, 1}};
  const double h = auc(hand);
  Verdict v;
  v.pass = mismatched == 0 && w == 0.875 && h == 0.75;
  v.detail = {{"comparisons", checked}, {"mismatches", mismatched}, {"worked_example", w}, {"hand_auc", h}};
  v.detail["summary"] = std::to_string(checked) + " auc/gauc comparisons against all-pairs oracles, " +
                        std::to_string(mismatched) + " mismatches; worked GAUC example " + fmt(w, 6) +
                        " (expect 0.875); hand AUC " + fmt(h, 6) + " (expect 0.75)";
  return v;
}

// ---- 10: determinism ---------------------------------------------------------

ojson pipeline_manifests(const fs::path& out, const fs::path& config) {
  fs::remove_all(out);
  CommandOptions o;
  o.config = config;
  o.out = out / "data";
  ojson m;
  m["generate"] = comparable(cmd_generate(o));
  o.data = out / "data";
  o.out = out / "pre";
  m["pretrain"] = comparable(cmd_pretrain(o));
  o.mem = out / "pre" / "mem.ckpt";
  o.out = out / "fin";
  m["finetune"] = comparable(cmd_finetune(o));
  o.tem = out / "fin" / "tem.ckpt";
  o.out = out / "eval";
  m["eval"] = comparable(cmd_eval(o));
  return m;
}

Verdict determinism(const fs::path& out, const fs::path& config) {
  const ojson a = pipeline_manifests(out / "run_a", config);
  const ojson b = pipeline_manifests(out / "run_b", config);
  std::vector<std::string> differ;
  for (auto it = a.begin(); it != a.end(); ++it)
    if (b.at(it.key()) != it.value()) differ.push_back(it.key());
  Verdict v;
  v.pass = differ.empty();
  v.detail = {{"differing_manifests", differ},
              {"tem_hash", a["finetune"]["checkpoints"]["tem"]},
              {"eval_gauc", a["eval"]["metrics"]["report"]["gauc"]}};
  v.detail["summary"] = "generate/pretrain/finetune/eval twice: " +
                        (differ.empty() ? std::string("manifests identical (metrics, dataset and checkpoint hashes)")
                                        : std::to_string(differ.size()) + " manifests differ");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks for the two-stage transfer pipeline"};
  fs::path config = "configs/acceptance.json";
  fs::path out = "acceptance_out";
  std::vector<int> only;
  app.add_option("--config", config, "config overlay for the comparative runs")->capture_default_str();
  app.add_option("--out", out, "working directory")->capture_default_str();
  app.add_option("--criteria", only, "subset of criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  CommandOptions copt;
  copt.config = config;
  ojson base;
  try {
    base = resolve_config(copt);
  } catch (const std::exception& e) {
    std::cerr << "cannot load " << config << ": " << e.what() << "\n";
    return 2;
  }
  fs::create_directories(out);

  std::map<int, Verdict> verdicts;
  auto record = [&](int id, const std::function<Verdict()>& f) {
    if (!wanted(id)) return;
    std::cerr << "criterion " << id << " ...\n";
    try {
      verdicts[id] = f();
    } catch (const std::exception& e) {
      verdicts[id] = Verdict{false, {{"summary", std::string("error: ") + e.what()}}};
    }
  };

  record(1, gradients);
  record(2, hfa_contract);
  if (wanted(3) || wanted(4)) {
    std::cerr << "default pretraining run ...\n";
    const DefaultRun run = default_pretrain();
    record(3, [&] { return pdl(run); });
    record(4, [&] { return freeze(run); });
  }
  if (wanted(5) || wanted(6) || wanted(7) || wanted(8)) {
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const SweepResult high = sweep(base, seeds, all_variants(), 0.9);
    record(5, [&] { return table2(high); });
    record(6, [&] { return table4(high); });
    if (wanted(7)) {
      const SweepResult zero = sweep(base, seeds, {"mkt", "target_only"}, 0.0);
      record(7, [&] { return dose_response(high, zero); });
    }
    record(8, [&] { return long_tail(high); });
  }
  record(9, metric_oracles);
  record(10, [&] { return determinism(out, config); });

  ojson report;
  bool all = true;
  for (const auto& [id, v] : verdicts) {
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  "
              << v.detail.value("summary", std::string()) << "\n";
    report[std::to_string(id)] = {{"pass", v.pass}, {"detail", v.detail}};
    all = all && v.pass;
  }
  std::ofstream(out / "acceptance.json") << report.dump(2) << "\n";
  return all ? 0 : 1;
}
