#include "mkt/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>

#include "mkt/errors.hpp"
#include "mkt/rng.hpp"

namespace mkt {

namespace {

constexpr const char* kFormat = "mkt-dataset";
constexpr int kVersion = 1;

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

std::vector<double> normal_vec(std::size_t k, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(k);
  for (auto& x : v) x = n(rng);
  return v;
}

// Equiprobable bucket of a standard normal draw.
std::int32_t quantize(double x, std::int32_t buckets) {
  const double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
  return std::clamp(static_cast<std::int32_t>(cdf * buckets), 0, buckets - 1);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("generator config: " + what);
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("generator config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

std::size_t GeneratorConfig::n_source_samples() const {
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_target_samples)));
}

void GeneratorConfig::validate() const {
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0, 1]");
  require(beta >= 0.0 && beta <= 1.0, "beta must be in [0, 1]");
  require(ratio > 0.0, "ratio must be > 0");
  require(kappa >= 0.0, "kappa must be >= 0");
  require(n_users >= 1 && latent_dim >= 1 && n_target_samples >= 1, "counts must be >= 1");
  require(n_source_samples() >= 1, "ratio * n_target_samples must round to >= 1");
  require(zipf_exponent >= 0.0 && zipf_offset >= 0.0, "zipf parameters must be >= 0");
  require(target_affinity_sigma >= 0.0, "target_affinity_sigma must be >= 0");
  for (const auto& e : entity) {
    require(e.n_items >= 1, "entity n_items must be >= 1");
    require(e.neg_keep_rate > 0.0 && e.neg_keep_rate <= 1.0, "neg_keep_rate must be in (0, 1]");
    require(e.positive_rate > 0.0 && e.positive_rate < 1.0, "positive_rate must be in (0, 1)");
  }
  for (std::int32_t v : {n_age, n_city, n_category, n_creator, n_price, n_condition, n_style, n_length, n_quality})
    require(v >= 1, "vocab sizes must be >= 1");
  require(seq_len >= 1 && embed_dim >= 1 && attn_dim >= 1, "seq_len, embed_dim, attn_dim must be >= 1");
}

nlohmann::ordered_json GeneratorConfig::to_json() const {
  nlohmann::ordered_json j;
  j["n_users"] = n_users;
  j["latent_dim"] = latent_dim;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["kappa"] = kappa;
  j["ratio"] = ratio;
  j["n_target_samples"] = n_target_samples;
  j["zipf_exponent"] = zipf_exponent;
  j["zipf_offset"] = zipf_offset;
  j["target_affinity_sigma"] = target_affinity_sigma;
  for (Entity e : {Entity::source, Entity::target}) {
    const auto& ec = entity[index_of(e)];
    j[to_string(e)] = {{"n_items", ec.n_items}, {"neg_keep_rate", ec.neg_keep_rate}, {"positive_rate", ec.positive_rate}};
  }
  j["vocab"] = {{"age", n_age},       {"city", n_city},           {"category", n_category},
                {"creator", n_creator}, {"price", n_price},       {"condition", n_condition},
                {"style", n_style},   {"length", n_length},       {"quality", n_quality}};
  j["seq_len"] = seq_len;
  j["embed_dim"] = embed_dim;
  j["attn_dim"] = attn_dim;
  j["seed"] = seed;
  return j;
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  if (!j.is_object()) throw ValidationError("generator config must be an object");
  read(j, "n_users", c.n_users);
  read(j, "latent_dim", c.latent_dim);
  read(j, "alpha", c.alpha);
  read(j, "beta", c.beta);
  read(j, "kappa", c.kappa);
  read(j, "ratio", c.ratio);
  read(j, "n_target_samples", c.n_target_samples);
  read(j, "zipf_exponent", c.zipf_exponent);
  read(j, "zipf_offset", c.zipf_offset);
  read(j, "target_affinity_sigma", c.target_affinity_sigma);
  for (Entity e : {Entity::source, Entity::target}) {
    const std::string key = to_string(e);
    if (!j.contains(key)) continue;
    auto& ec = c.entity[index_of(e)];
    read(j.at(key), "n_items", ec.n_items);
    read(j.at(key), "neg_keep_rate", ec.neg_keep_rate);
    read(j.at(key), "positive_rate", ec.positive_rate);
  }
  if (j.contains("vocab")) {
    const auto& v = j.at("vocab");
    read(v, "age", c.n_age);
    read(v, "city", c.n_city);
    read(v, "category", c.n_category);
    read(v, "creator", c.n_creator);
    read(v, "price", c.n_price);
    read(v, "condition", c.n_condition);
    read(v, "style", c.n_style);
    read(v, "length", c.n_length);
    read(v, "quality", c.n_quality);
  }
  read(j, "seq_len", c.seq_len);
  read(j, "embed_dim", c.embed_dim);
  read(j, "attn_dim", c.attn_dim);
  read(j, "seed", c.seed);
  return c;
}

FeatureSchema schema_for(const GeneratorConfig& cfg) {
  FeatureSchema s;
  s.user_fields = {{"user_id", static_cast<std::int32_t>(cfg.n_users)}, {"age", cfg.n_age}, {"city", cfg.n_city}};
  s.shared_fields = {{"category", cfg.n_category}, {"creator", cfg.n_creator}};
  s.spec_fields[0] = {{"item_id", static_cast<std::int32_t>(cfg.entity[0].n_items)},
                      {"price", cfg.n_price},
                      {"condition", cfg.n_condition}};
  s.spec_fields[1] = {{"post_id", static_cast<std::int32_t>(cfg.entity[1].n_items)},
                      {"style", cfg.n_style},
                      {"length", cfg.n_length},
                      {"quality", cfg.n_quality}};
  s.seq_len = cfg.seq_len;
  s.embed_dim = cfg.embed_dim;
  s.attn_dim = cfg.attn_dim;
  return s;
}

double World::logit(Entity e, std::uint32_t user, std::size_t item) const {
  const auto& t = taste(e, user);
  const ItemInfo& it = items[index_of(e)][item];
  double dot = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) dot += t[i] * it.z[i];
  return cfg.kappa * dot / std::sqrt(static_cast<double>(t.size())) + cfg.beta * it.spec_effect + bias[index_of(e)];
}

World build_world(const GeneratorConfig& cfg) {
  cfg.validate();
  World w;
  w.cfg = cfg;
  const std::size_t k = cfg.latent_dim;
  const double a = cfg.alpha;

  Rng urng = substream(cfg.seed, "generator.users");
  std::uniform_int_distribution<std::int32_t> city(0, cfg.n_city - 1);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    auto lat = normal_vec(k, urng);
    auto xi = normal_vec(k, urng);
    std::vector<double> t(k);
    for (std::size_t i = 0; i < k; ++i) t[i] = a * lat[i] + std::sqrt(1.0 - a * a) * xi[i];
    w.user_attrs.push_back({quantize(lat[0], cfg.n_age), city(urng)});
    w.user_latent.push_back(std::move(lat));
    w.target_taste.push_back(std::move(t));
    const double base = std::pow(static_cast<double>(u + 1) + cfg.zipf_offset, -cfg.zipf_exponent);
    w.activity[0].push_back(base);
    w.activity[1].push_back(base * std::exp(cfg.target_affinity_sigma * n01(urng)));
  }

  Rng crng = substream(cfg.seed, "generator.clusters");
  std::vector<std::vector<double>> mu, nu;
  for (std::int32_t c = 0; c < cfg.n_category; ++c) mu.push_back(normal_vec(k, crng));
  for (std::int32_t c = 0; c < cfg.n_creator; ++c) nu.push_back(normal_vec(k, crng));

  Rng erng = substream(cfg.seed, "generator.effects");
  std::vector<double> price_fx(cfg.n_price), style_fx(cfg.n_style), quality_fx(cfg.n_quality);
  for (auto& x : price_fx) x = n01(erng);
  for (auto& x : style_fx) x = n01(erng);
  for (auto& x : quality_fx) x = 0.5 * n01(erng);

  for (Entity e : {Entity::source, Entity::target}) {
    Rng irng = substream(cfg.seed, "generator.items", index_of(e));
    std::uniform_int_distribution<std::int32_t> cat(0, cfg.n_category - 1), cre(0, cfg.n_creator - 1);
    const std::size_t n = cfg.entity[index_of(e)].n_items;
    auto& items = w.items[index_of(e)];
    items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      ItemInfo it;
      it.category = cat(irng);
      it.creator = cre(irng);
      it.cluster.resize(k);
      for (std::size_t d = 0; d < k; ++d) it.cluster[d] = (mu[it.category][d] + nu[it.creator][d]) / std::sqrt(2.0);
      const auto eps = normal_vec(k, irng);
      it.z.resize(k);
      if (e == Entity::source) {
        for (std::size_t d = 0; d < k; ++d) it.z[d] = 0.8 * it.cluster[d] + 0.6 * eps[d];
        it.spec_ids = {static_cast<std::int32_t>(i), quantize(n01(irng), cfg.n_price),
                       std::uniform_int_distribution<std::int32_t>(0, cfg.n_condition - 1)(irng)};
        it.spec_effect = price_fx[it.spec_ids[1]];
      } else {
        const double norm = std::sqrt(a * a + (1.0 - a) * (1.0 - a));
        for (std::size_t d = 0; d < k; ++d) it.z[d] = (a * it.cluster[d] + (1.0 - a) * eps[d]) / norm;
        it.spec_ids = {static_cast<std::int32_t>(i), quantize(n01(irng), cfg.n_style),
                       std::uniform_int_distribution<std::int32_t>(0, cfg.n_length - 1)(irng),
                       quantize(n01(irng), cfg.n_quality)};
        it.spec_effect = style_fx[it.spec_ids[1]] + quality_fx[it.spec_ids[3]];
      }
      items.push_back(std::move(it));
    }
  }

  // Calibrate each entity's bias so the kept positive share matches the
  // configured rate: raw rate r solves r / (r + (1 - r) keep) = P.
  for (Entity e : {Entity::source, Entity::target}) {
    const auto& ec = cfg.entity[index_of(e)];
    const double P = ec.positive_rate, keep = ec.neg_keep_rate;
    const double r = P * keep / ((1.0 - P) + P * keep);
    Rng mrng = substream(cfg.seed, "generator.calibration", index_of(e));
    const auto& act = w.activity[index_of(e)];
    std::discrete_distribution<std::size_t> users(act.begin(), act.end());
    std::uniform_int_distribution<std::size_t> items(0, ec.n_items - 1);
    std::vector<double> x(20000);
    w.bias[index_of(e)] = 0.0;
    for (auto& v : x) {
      const auto u = static_cast<std::uint32_t>(users(mrng));
      v = w.logit(e, u, items(mrng));
    }
    double lo = -30.0, hi = 30.0;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      double m = 0.0;
      for (double v : x) m += sigmoid(v + mid);
      (m / static_cast<double>(x.size()) < r ? lo : hi) = mid;
    }
    w.bias[index_of(e)] = 0.5 * (lo + hi);
  }
  return w;
}

GeneratedData generate(const GeneratorConfig& cfg) { return generate(build_world(cfg)); }

GeneratedData generate(const World& w) {
  const GeneratorConfig& cfg = w.cfg;
  GeneratedData out;
  out.schema = schema_for(cfg);
  const std::array<std::size_t, 2> quota{cfg.n_source_samples(), cfg.n_target_samples};

  // Event-level entity mix chosen so both quotas fill at about the same time.
  std::array<double, 2> load{};
  for (std::size_t e = 0; e < 2; ++e) {
    const auto& ec = cfg.entity[e];
    const double r = ec.positive_rate * ec.neg_keep_rate / ((1.0 - ec.positive_rate) + ec.positive_rate * ec.neg_keep_rate);
    load[e] = static_cast<double>(quota[e]) / (r + (1.0 - r) * ec.neg_keep_rate);
  }
  const double p_source = load[0] / (load[0] + load[1]);

  Rng rng = substream(cfg.seed, "generator.timeline");
  std::array<std::discrete_distribution<std::size_t>, 2> users{
      std::discrete_distribution<std::size_t>(w.activity[0].begin(), w.activity[0].end()),
      std::discrete_distribution<std::size_t>(w.activity[1].begin(), w.activity[1].end())};
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::array<std::uniform_int_distribution<std::size_t>, 2> items{
      std::uniform_int_distribution<std::size_t>(0, cfg.entity[0].n_items - 1),
      std::uniform_int_distribution<std::size_t>(0, cfg.entity[1].n_items - 1)};
  std::vector<std::array<std::deque<std::size_t>, 2>> history(cfg.n_users);
  std::array<Dataset*, 2> sink{&out.source, &out.target};
  out.source.reserve(quota[0]);
  out.target.reserve(quota[1]);

  while (out.source.size() < quota[0] || out.target.size() < quota[1]) {
    std::size_t ei = unif(rng) < p_source ? 0 : 1;
    if (sink[ei]->size() >= quota[ei]) ei = 1 - ei;
    const auto u = static_cast<std::uint32_t>(users[ei](rng));
    const Entity e = static_cast<Entity>(ei);
    const std::size_t item = items[ei](rng);
    const bool click = unif(rng) < sigmoid(w.logit(e, u, item));
    const bool keep = click || unif(rng) < cfg.entity[ei].neg_keep_rate;
    if (keep) {
      const ItemInfo& it = w.items[ei][item];
      EncodedSample s;
      s.entity = e;
      s.user = u;
      s.user_ids = {static_cast<std::int32_t>(u), w.user_attrs[u][0], w.user_attrs[u][1]};
      s.shared_ids = {it.category, it.creator};
      s.spec_ids = it.spec_ids;
      for (std::size_t h = 0; h < 2; ++h) {
        for (std::size_t past : history[u][h]) {
          const ItemInfo& p = w.items[h][past];
          s.sequences[h].push_back(p.category);
          s.sequences[h].push_back(p.creator);
        }
      }
      s.label = click ? 1 : 0;
      sink[ei]->push_back(std::move(s));
    }
    if (click) {
      auto& q = history[u][ei];
      q.push_back(item);
      if (q.size() > cfg.seq_len) q.pop_front();
    }
  }
  return out;
}

namespace {

void append_ids(std::string& out, const std::vector<std::int32_t>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  out += ']';
}

std::vector<std::int32_t> ids_of(const nlohmann::json& j, std::size_t line) {
  if (!j.is_array()) throw ParseError("expected an id array", line);
  std::vector<std::int32_t> v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number_integer()) throw ParseError("non-integer id", line);
    v.push_back(x.get<std::int32_t>());
  }
  return v;
}

}  // namespace

std::string serialize_dataset(const FeatureSchema& schema, Entity entity, const Dataset& data,
                              const nlohmann::ordered_json& generator) {
  nlohmann::ordered_json h;
  h["format"] = kFormat;
  h["version"] = kVersion;
  h["entity"] = to_string(entity);
  h["count"] = data.size();
  h["schema_hash"] = schema.hash();
  h["schema"] = schema.to_json();
  h["generator"] = generator;
  std::string out = h.dump() + "\n";
  for (const auto& s : data) {
    out += '[';
    out += std::to_string(index_of(s.entity));
    out += ',';
    out += std::to_string(s.user);
    out += ',';
    append_ids(out, s.user_ids);
    out += ',';
    append_ids(out, s.shared_ids);
    out += ',';
    append_ids(out, s.spec_ids);
    out += ',';
    append_ids(out, s.sequences[0]);
    out += ',';
    append_ids(out, s.sequences[1]);
    out += ',';
    out += std::to_string(s.label);
    out += "]\n";
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const FeatureSchema& schema, Entity entity, const Dataset& data,
                  const nlohmann::ordered_json& generator) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DependencyError("cannot write dataset " + path.string());
  const std::string text = serialize_dataset(schema, entity, data, generator);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw DependencyError("failed writing dataset " + path.string());
}

Dataset parse_dataset(const std::string& text, const FeatureSchema* active, DatasetHeader* header_out) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  ++lineno;
  DatasetHeader hdr;
  FeatureSchema schema;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.value("format", "") != kFormat) throw ParseError("not a dataset file", lineno);
    if (h.value("version", 0) != kVersion) throw ParseError("unsupported dataset version", lineno);
    hdr.entity = parse_entity(h.at("entity").get<std::string>());
    hdr.count = h.at("count").get<std::size_t>();
    hdr.schema_hash = h.at("schema_hash").get<std::string>();
    hdr.schema = h.at("schema");
    hdr.generator = h.at("generator");
    schema = FeatureSchema::from_json(h.at("schema"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad header: ") + e.what(), lineno);
  } catch (const ValidationError& e) {
    throw ParseError(std::string("bad header: ") + e.what(), lineno);
  }
  if (schema.hash() != hdr.schema_hash) throw ParseError("header schema does not match its hash", lineno);
  if (active && active->hash() != hdr.schema_hash) {
    std::string msg = "dataset schema differs from the active schema:";
    for (const auto& d : schema_diff(*active, schema)) msg += " " + d + ";";
    throw ValidationError(msg);
  }

  Dataset data;
  data.reserve(hdr.count);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw ParseError("malformed record", lineno);
    }
    if (!j.is_array() || j.size() != 8) throw ParseError("record must be an array of 8 fields", lineno);
    EncodedSample s;
    try {
      const int e = j[0].get<int>();
      if (e != 0 && e != 1) throw ParseError("bad entity", lineno);
      s.entity = static_cast<Entity>(e);
      s.user = j[1].get<std::uint32_t>();
      s.label = j[7].get<std::uint8_t>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError("bad scalar field", lineno);
    }
    s.user_ids = ids_of(j[2], lineno);
    s.shared_ids = ids_of(j[3], lineno);
    s.spec_ids = ids_of(j[4], lineno);
    s.sequences[0] = ids_of(j[5], lineno);
    s.sequences[1] = ids_of(j[6], lineno);
    if (s.entity != hdr.entity) throw ParseError("record entity differs from the header", lineno);
    try {
      validate_sample(schema, s);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
    data.push_back(std::move(s));
  }
  if (data.size() != hdr.count)
    throw ParseError("truncated: header promises " + std::to_string(hdr.count) + " records, found " +
                         std::to_string(data.size()),
                     lineno + 1);
  if (header_out) *header_out = std::move(hdr);
  return data;
}

Dataset load_dataset(const std::filesystem::path& path, const FeatureSchema* active, DatasetHeader* header) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DependencyError("dataset not found: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_dataset(ss.str(), active, header);
}

std::pair<Dataset, Dataset> split(const Dataset& data, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("split fraction must be in (0, 1)");
  // The epsilon keeps e.g. 30/31 * 31000 from flooring to 29999.
  const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.size()) + 1e-9));
  if (n_train == 0 || n_train == data.size())
    throw ValidationError("degenerate split: " + std::to_string(n_train) + " train / " +
                          std::to_string(data.size() - n_train) + " test");
  return {Dataset(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n_train)),
          Dataset(data.begin() + static_cast<std::ptrdiff_t>(n_train), data.end())};
}

std::unordered_map<std::uint32_t, std::size_t> click_counts(const Dataset& data, std::size_t n_users) {
  std::unordered_map<std::uint32_t, std::size_t> m;
  for (std::size_t u = 0; u < n_users; ++u) m[static_cast<std::uint32_t>(u)] = 0;
  for (const auto& s : data)
    if (s.label) ++m[s.user];
  return m;
}

}  // namespace mkt
