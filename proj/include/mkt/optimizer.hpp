#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>

#include "mkt/parameter.hpp"

namespace mkt::tg {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer_kind(const std::string& s);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  // Updates every trainable parameter from its accumulated gradient, then
  // zeroes the gradients of all parameters. Frozen parameters keep their
  // values bit for bit.
  void step(std::span<Parameter* const> params);

  std::uint64_t steps() const noexcept { return steps_; }
  const OptimizerConfig& config() const noexcept { return cfg_; }
  bool has_moments(const Parameter& p) const { return moments_.count(&p) != 0; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  OptimizerConfig cfg_;
  std::uint64_t steps_ = 0;
  std::unordered_map<const Parameter*, Moments> moments_;
};

}  // namespace mkt::tg
