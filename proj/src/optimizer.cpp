#include "mkt/optimizer.hpp"

#include <cmath>

#include "mkt/errors.hpp"

namespace mkt::tg {

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ValidationError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
  if (!(cfg_.lr >= 0.0)) throw ValidationError("learning rate must be non-negative");
}

void Optimizer::step(std::span<Parameter* const> params) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (Parameter* p : params) {
    if (p->trainable && p->grad.same_shape(p->value)) {
      double* w = p->value.data();
      const double* g = p->grad.data();
      const std::size_t n = p->value.size();
      if (cfg_.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < n; ++i) w[i] -= cfg_.lr * g[i];
      } else {
        auto [it, inserted] = moments_.try_emplace(p);
        Moments& mo = it->second;
        if (inserted) {
          mo.m = Tensor(p->value.rows(), p->value.cols());
          mo.v = Tensor(p->value.rows(), p->value.cols());
        }
        double* m = mo.m.data();
        double* v = mo.v.data();
        for (std::size_t i = 0; i < n; ++i) {
          m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
          v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
          w[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
        }
      }
    }
    p->zero_grad();
  }
}

}  // namespace mkt::tg
