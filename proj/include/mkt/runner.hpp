#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mkt/experiment.hpp"

namespace mkt {

struct CommandOptions {
  std::filesystem::path config;  // optional JSON overlay
  std::filesystem::path out = "out";
  std::vector<std::string> sets;  // dotted key=value overrides, applied in order
  std::optional<std::uint64_t> seed;
  std::filesystem::path data;  // directory written by `generate`
  std::filesystem::path mem;   // MEM checkpoint
  std::filesystem::path tem;   // TEM checkpoint
  std::vector<std::string> variants;  // ablate only; empty means all
};

// Defaults, then the config file, then --set overrides, then --seed.
nlohmann::ordered_json resolve_config(const CommandOptions& opt);

// Each command writes a manifest (flagged incomplete until it finishes)
// into opt.out and returns the finished manifest.
nlohmann::ordered_json cmd_generate(const CommandOptions& opt);
nlohmann::ordered_json cmd_pretrain(const CommandOptions& opt);
nlohmann::ordered_json cmd_finetune(const CommandOptions& opt);
nlohmann::ordered_json cmd_eval(const CommandOptions& opt);
nlohmann::ordered_json cmd_ablate(const CommandOptions& opt);

// Dispatches by name and maps errors to exit codes: 0 ok, 2 validation,
// 3 missing dependency, 1 anything else. Messages go to `err`.
int run_command(const std::string& name, const CommandOptions& opt, std::ostream& err);

// Manifest without wall-clock fields, for run-to-run comparison.
nlohmann::ordered_json comparable(const nlohmann::ordered_json& manifest);

// TEM loader used for serving: refuses a MEM checkpoint whose content hash
// differs from the one recorded in the TEM checkpoint.
struct ServingModel {
  ExperimentConfig config;
  std::unique_ptr<Mem> mem;
  std::unique_ptr<Tem> tem;
};
ServingModel load_serving_model(const std::filesystem::path& tem_ckpt, const std::filesystem::path& mem_ckpt);

}  // namespace mkt
