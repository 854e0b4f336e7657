#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mkt/ops.hpp"
#include "mkt/parameter.hpp"
#include "mkt/rng.hpp"

namespace mkt::nn {

tg::Tensor uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);
// Glorot-uniform weight of shape (out, in).
tg::Tensor glorot(std::size_t out, std::size_t in, Rng& rng);

// y = x W^T + b with W (out, in) and b (out, 1); parameters `<name>.w`, `<name>.b`.
struct Linear {
  tg::Parameter* w = nullptr;
  tg::Parameter* b = nullptr;

  static Linear create(tg::ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool with_bias = true);
  std::size_t in() const { return w->value.cols(); }
  std::size_t out() const { return w->value.rows(); }
  tg::Var operator()(tg::Tape& t, tg::Var x) const;
};

// Stack of Linear layers with ReLU between them; the last layer is linear
// unless `relu_last` is set.
struct Mlp {
  std::vector<Linear> layers;
  bool relu_last = false;

  static Mlp create(tg::ParameterSet& ps, const std::string& prefix, std::size_t in,
                    const std::vector<std::size_t>& sizes, Rng& rng, bool relu_last = false);
  std::size_t out() const { return layers.back().out(); }
  tg::Var operator()(tg::Tape& t, tg::Var x) const;
};

// Linear layer whose input arrives as two blocks, [main || spec]:
// y = main W_main^T + spec W_spec^T + b. Keeping the blocks as separate
// parameters (`<name>.w_main`, `<name>.w_spec`, `<name>.b`) lets a model
// built for another entity reuse the main block when only the
// entity-specific width differs.
struct SplitLinear {
  tg::Parameter* w_main = nullptr;
  tg::Parameter* w_spec = nullptr;
  tg::Parameter* b = nullptr;

  static SplitLinear create(tg::ParameterSet& ps, const std::string& name, std::size_t in_main, std::size_t in_spec,
                            std::size_t out, Rng& rng);
  std::size_t out() const { return w_main->value.rows(); }
  tg::Var operator()(tg::Tape& t, tg::Var main, tg::Var spec) const;
};

}  // namespace mkt::nn
