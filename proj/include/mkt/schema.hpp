#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace mkt {

enum class Entity : std::uint8_t { source = 0, target = 1 };

inline constexpr std::size_t index_of(Entity e) { return static_cast<std::size_t>(e); }
std::string to_string(Entity e);
Entity parse_entity(const std::string& s);

struct Field {
  std::string name;
  std::int32_t vocab = 0;

  bool operator==(const Field&) const = default;
};

// The four feature groups: user profile, entity-shared, and one
// entity-specific list per entity. Behavior sequences are lists of items
// described by their entity-shared fields.
struct FeatureSchema {
  std::vector<Field> user_fields;
  std::vector<Field> shared_fields;
  std::array<std::vector<Field>, 2> spec_fields;  // indexed by Entity
  std::size_t seq_len = 10;
  std::size_t embed_dim = 8;
  std::size_t attn_dim = 16;

  const std::vector<Field>& spec(Entity e) const { return spec_fields[index_of(e)]; }
  std::size_t n_user() const { return user_fields.size(); }
  std::size_t n_shared() const { return shared_fields.size(); }
  std::size_t n_spec(Entity e) const { return spec(e).size(); }

  std::size_t user_dim() const { return n_user() * embed_dim; }
  std::size_t seq_dim() const { return 2 * attn_dim; }
  std::size_t shared_dim() const { return n_shared() * embed_dim; }
  std::size_t spec_dim(Entity e) const { return n_spec(e) * embed_dim; }
  // Length of the full embedding [v_u || v_seq || v_shared || v_spec].
  std::size_t full_dim(Entity e) const { return user_dim() + seq_dim() + shared_dim() + spec_dim(e); }

  // Throws ValidationError when a group is malformed.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);
  std::string hash() const;

  bool operator==(const FeatureSchema&) const = default;
};

// Human-readable list of differences, empty when equal.
std::vector<std::string> schema_diff(const FeatureSchema& expected, const FeatureSchema& actual);

// One impression with integer-encoded features. Sequence items are stored
// flattened: item k of sequence s occupies
// sequences[s][k * n_shared, (k + 1) * n_shared).
struct EncodedSample {
  Entity entity = Entity::source;
  std::uint32_t user = 0;
  std::vector<std::int32_t> user_ids;
  std::vector<std::int32_t> shared_ids;
  std::vector<std::int32_t> spec_ids;
  std::array<std::vector<std::int32_t>, 2> sequences;  // [0] source clicks, [1] target clicks
  std::uint8_t label = 0;

  std::size_t seq_items(std::size_t which, std::size_t n_shared) const {
    return n_shared ? sequences[which].size() / n_shared : 0;
  }

  bool operator==(const EncodedSample&) const = default;
};

// Throws ValidationError naming the offending field and id.
void validate_sample(const FeatureSchema& schema, const EncodedSample& s);

using Dataset = std::vector<EncodedSample>;

}  // namespace mkt
