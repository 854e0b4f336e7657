#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mkt/schema.hpp"

namespace mkt {

struct EntityGenConfig {
  std::size_t n_items = 1000;
  double neg_keep_rate = 0.3;  // fraction of negatives kept; every positive is kept
  double positive_rate = 0.25;  // target positive share after negative sampling
};

struct GeneratorConfig {
  std::size_t n_users = 3000;
  std::size_t latent_dim = 4;
  double alpha = 0.9;  // cross-entity shared structure
  double beta = 0.5;   // entity-specific feature effect
  double kappa = 2.5;  // logit scale of the taste term
  double ratio = 3.0;  // source : target samples
  std::size_t n_target_samples = 40000;
  double zipf_exponent = 1.1;
  double zipf_offset = 10.0;
  // Per-user lognormal multiplier on target activity: users busy on one
  // entity can be rare on the other.
  double target_affinity_sigma = 1.0;
  std::array<EntityGenConfig, 2> entity{EntityGenConfig{2000, 0.3, 0.25}, EntityGenConfig{1000, 0.3, 0.25}};

  // Vocabularies of the derived categorical fields.
  std::int32_t n_age = 8;
  std::int32_t n_city = 30;
  std::int32_t n_category = 40;
  std::int32_t n_creator = 150;
  std::int32_t n_price = 10;
  std::int32_t n_condition = 4;
  std::int32_t n_style = 12;
  std::int32_t n_length = 5;
  std::int32_t n_quality = 5;

  std::size_t seq_len = 10;
  std::size_t embed_dim = 8;
  std::size_t attn_dim = 16;
  std::uint64_t seed = 1;

  std::size_t n_source_samples() const;
  void validate() const;  // ValidationError naming the bad field
  nlohmann::ordered_json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);  // missing keys keep defaults
};

FeatureSchema schema_for(const GeneratorConfig& cfg);

struct ItemInfo {
  std::int32_t category = 0;
  std::int32_t creator = 0;
  std::vector<std::int32_t> spec_ids;  // full entity-specific id list, item id first
  std::vector<double> z;                // latent
  std::vector<double> cluster;          // (mu_category + nu_creator) / sqrt 2
  double spec_effect = 0.0;
};

// Every latent quantity behind a generated dataset.
struct World {
  GeneratorConfig cfg;
  std::vector<std::vector<double>> user_latent;   // u
  std::vector<std::vector<double>> target_taste;  // alpha u + sqrt(1 - alpha^2) xi
  std::vector<std::array<std::int32_t, 2>> user_attrs;  // age, city
  std::array<std::vector<double>, 2> activity;  // unnormalized per-entity user weights
  std::array<std::vector<ItemInfo>, 2> items;
  std::array<double, 2> bias{0.0, 0.0};

  const std::vector<double>& taste(Entity e, std::uint32_t user) const {
    return e == Entity::source ? user_latent[user] : target_taste[user];
  }
  double logit(Entity e, std::uint32_t user, std::size_t item) const;
};

World build_world(const GeneratorConfig& cfg);

struct GeneratedData {
  FeatureSchema schema;
  Dataset source;
  Dataset target;
};

// Pure function of the config (seed included). Samples are in generation
// (time) order.
GeneratedData generate(const GeneratorConfig& cfg);
GeneratedData generate(const World& world);

struct DatasetHeader {
  std::string schema_hash;
  Entity entity = Entity::source;
  std::size_t count = 0;
  nlohmann::ordered_json schema;
  nlohmann::ordered_json generator;
};

void save_dataset(const std::filesystem::path& path, const FeatureSchema& schema, Entity entity, const Dataset& data,
                  const nlohmann::ordered_json& generator = nullptr);
std::string serialize_dataset(const FeatureSchema& schema, Entity entity, const Dataset& data,
                              const nlohmann::ordered_json& generator = nullptr);

// Throws ParseError (with line number) on malformed or truncated content and
// ValidationError when `active` is given and its hash differs from the file's.
Dataset parse_dataset(const std::string& text, const FeatureSchema* active = nullptr, DatasetHeader* header = nullptr);
Dataset load_dataset(const std::filesystem::path& path, const FeatureSchema* active = nullptr,
                     DatasetHeader* header = nullptr);

// First floor(fraction * n) samples train, the rest test; order preserved.
std::pair<Dataset, Dataset> split(const Dataset& data, double fraction);

// Positive labels per user over `data`; every user id below n_users is
// present, with zero if absent.
std::unordered_map<std::uint32_t, std::size_t> click_counts(const Dataset& data, std::size_t n_users);

}  // namespace mkt
