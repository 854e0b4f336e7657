#include "mkt/schema.hpp"

#include <set>

#include "mkt/errors.hpp"
#include "mkt/hash.hpp"

namespace mkt {

std::string to_string(Entity e) { return e == Entity::source ? "source" : "target"; }

Entity parse_entity(const std::string& s) {
  if (s == "source") return Entity::source;
  if (s == "target") return Entity::target;
  throw ValidationError("unknown entity '" + s + "'");
}

namespace {

void validate_group(const std::vector<Field>& fields, const std::string& group, bool allow_empty,
                    std::set<std::string>& seen) {
  if (!allow_empty && fields.empty()) throw ValidationError("schema group '" + group + "' must not be empty");
  for (const Field& f : fields) {
    if (f.name.empty()) throw ValidationError("schema group '" + group + "' has a field without a name");
    if (f.vocab < 1) throw ValidationError("field '" + f.name + "' needs a vocab size >= 1");
    if (!seen.insert(group + "/" + f.name).second)
      throw ValidationError("field '" + f.name + "' declared twice in group '" + group + "'");
  }
}

nlohmann::ordered_json fields_json(const std::vector<Field>& fields) {
  auto arr = nlohmann::ordered_json::array();
  for (const Field& f : fields) arr.push_back({{"name", f.name}, {"vocab", f.vocab}});
  return arr;
}

std::vector<Field> fields_from(const nlohmann::json& j, const char* key) {
  std::vector<Field> out;
  if (!j.contains(key)) return out;
  for (const auto& f : j.at(key)) out.push_back(Field{f.at("name").get<std::string>(), f.at("vocab").get<std::int32_t>()});
  return out;
}

void check_ids(const std::vector<Field>& fields, const std::vector<std::int32_t>& ids, const char* group) {
  if (ids.size() != fields.size())
    throw ValidationError(std::string(group) + " ids: expected " + std::to_string(fields.size()) + ", got " +
                          std::to_string(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || ids[i] >= fields[i].vocab)
      throw ValidationError("id " + std::to_string(ids[i]) + " out of vocab for field '" + fields[i].name +
                            "' (vocab " + std::to_string(fields[i].vocab) + ")");
}

}  // namespace

void FeatureSchema::validate() const {
  std::set<std::string> seen;
  validate_group(user_fields, "user", false, seen);
  validate_group(shared_fields, "shared", false, seen);
  validate_group(spec_fields[0], "spec.source", false, seen);
  validate_group(spec_fields[1], "spec.target", false, seen);
  if (embed_dim < 1) throw ValidationError("schema.embed_dim must be >= 1");
  if (attn_dim < 1) throw ValidationError("schema.attn_dim must be >= 1");
}

nlohmann::ordered_json FeatureSchema::to_json() const {
  nlohmann::ordered_json j;
  j["user_fields"] = fields_json(user_fields);
  j["shared_fields"] = fields_json(shared_fields);
  j["spec_fields"] = {{"source", fields_json(spec_fields[0])}, {"target", fields_json(spec_fields[1])}};
  j["seq_len"] = seq_len;
  j["embed_dim"] = embed_dim;
  j["attn_dim"] = attn_dim;
  return j;
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  try {
    FeatureSchema s;
    s.user_fields = fields_from(j, "user_fields");
    s.shared_fields = fields_from(j, "shared_fields");
    s.spec_fields[0] = fields_from(j.at("spec_fields"), "source");
    s.spec_fields[1] = fields_from(j.at("spec_fields"), "target");
    s.seq_len = j.value("seq_len", s.seq_len);
    s.embed_dim = j.value("embed_dim", s.embed_dim);
    s.attn_dim = j.value("attn_dim", s.attn_dim);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed schema: ") + e.what());
  }
}

std::string FeatureSchema::hash() const { return sha256_hex(to_json().dump()); }

std::vector<std::string> schema_diff(const FeatureSchema& a, const FeatureSchema& b) {
  std::vector<std::string> out;
  auto cmp = [&](const std::vector<Field>& x, const std::vector<Field>& y, const std::string& group) {
    const std::size_t n = std::max(x.size(), y.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= x.size()) {
        out.push_back(group + ": unexpected field '" + y[i].name + "'");
      } else if (i >= y.size()) {
        out.push_back(group + ": missing field '" + x[i].name + "'");
      } else if (!(x[i] == y[i])) {
        out.push_back(group + "[" + std::to_string(i) + "]: expected " + x[i].name + "/" + std::to_string(x[i].vocab) +
                      ", got " + y[i].name + "/" + std::to_string(y[i].vocab));
      }
    }
  };
  cmp(a.user_fields, b.user_fields, "user_fields");
  cmp(a.shared_fields, b.shared_fields, "shared_fields");
  cmp(a.spec_fields[0], b.spec_fields[0], "spec_fields.source");
  cmp(a.spec_fields[1], b.spec_fields[1], "spec_fields.target");
  if (a.seq_len != b.seq_len) out.push_back("seq_len differs");
  if (a.embed_dim != b.embed_dim) out.push_back("embed_dim differs");
  if (a.attn_dim != b.attn_dim) out.push_back("attn_dim differs");
  return out;
}

void validate_sample(const FeatureSchema& schema, const EncodedSample& s) {
  check_ids(schema.user_fields, s.user_ids, "user");
  check_ids(schema.shared_fields, s.shared_ids, "shared");
  check_ids(schema.spec(s.entity), s.spec_ids, s.entity == Entity::source ? "spec.source" : "spec.target");
  const std::size_t ns = schema.n_shared();
  for (std::size_t which = 0; which < 2; ++which) {
    const auto& seq = s.sequences[which];
    if (seq.size() % ns != 0) throw ValidationError("sequence " + std::to_string(which) + " is not a whole number of items");
    if (seq.size() / ns > schema.seq_len)
      throw ValidationError("sequence " + std::to_string(which) + " longer than seq_len " +
                            std::to_string(schema.seq_len));
    for (std::size_t k = 0; k < seq.size(); ++k) {
      const Field& f = schema.shared_fields[k % ns];
      if (seq[k] < 0 || seq[k] >= f.vocab)
        throw ValidationError("id " + std::to_string(seq[k]) + " out of vocab for field '" + f.name +
                              "' in behavior sequence " + std::to_string(which));
    }
  }
  if (s.label > 1) throw ValidationError("label " + std::to_string(s.label) + " is not in {0, 1}");
}

}  // namespace mkt
