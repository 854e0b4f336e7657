#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mkt/parameter.hpp"

namespace mkt::tg {

// Parameter file: one record per line, `name<TAB>rows<TAB>cols<TAB>v1,v2,...`
// with values printed to 17 significant digits so that a load reproduces the
// exact doubles. Lines starting with '#' carry metadata as TAB-separated
// `#key<TAB>value...` fields.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::map<std::string, std::vector<std::string>> meta;

  const Tensor* find(const std::string& name) const;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);

Checkpoint snapshot(const ParameterSet& params);
// Copies every tensor of `ckpt` into the matching parameter. Missing or
// extra names and shape differences throw ValidationError listing them.
void restore(ParameterSet& params, const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// SHA-256 of the serialized parameter values, independent of metadata.
std::string content_hash(const ParameterSet& params);

}  // namespace mkt::tg
