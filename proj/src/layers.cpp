#include "mkt/layers.hpp"

#include <cmath>
#include <random>

#include "mkt/errors.hpp"

namespace mkt::nn {

tg::Tensor uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  tg::Tensor t(rows, cols);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

tg::Tensor glorot(std::size_t out, std::size_t in, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  return uniform(out, in, -a, a, rng);
}

Linear Linear::create(tg::ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool with_bias) {
  Linear l;
  l.w = &ps.add(name + ".w", glorot(out, in, rng));
  if (with_bias) l.b = &ps.add(name + ".b", tg::Tensor(out, 1));
  return l;
}

tg::Var Linear::operator()(tg::Tape& t, tg::Var x) const {
  return b ? tg::linear(x, t.param(*w), t.param(*b)) : tg::linear(x, t.param(*w));
}

Mlp Mlp::create(tg::ParameterSet& ps, const std::string& prefix, std::size_t in, const std::vector<std::size_t>& sizes,
                Rng& rng, bool relu_last) {
  if (sizes.empty()) throw ValidationError("mlp '" + prefix + "' needs at least one layer");
  Mlp m;
  m.relu_last = relu_last;
  std::size_t width = in;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    m.layers.push_back(Linear::create(ps, prefix + ".fc" + std::to_string(i), width, sizes[i], rng));
    width = sizes[i];
  }
  return m;
}

tg::Var Mlp::operator()(tg::Tape& t, tg::Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](t, x);
    if (i + 1 < layers.size() || relu_last) x = tg::relu(x);
  }
  return x;
}

SplitLinear SplitLinear::create(tg::ParameterSet& ps, const std::string& name, std::size_t in_main,
                                std::size_t in_spec, std::size_t out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in_main + in_spec + out));
  SplitLinear l;
  l.w_main = &ps.add(name + ".w_main", uniform(out, in_main, -a, a, rng));
  l.w_spec = &ps.add(name + ".w_spec", uniform(out, in_spec, -a, a, rng));
  l.b = &ps.add(name + ".b", tg::Tensor(out, 1));
  return l;
}

tg::Var SplitLinear::operator()(tg::Tape& t, tg::Var main, tg::Var spec) const {
  return tg::add(tg::linear(main, t.param(*w_main), t.param(*b)), tg::linear(spec, t.param(*w_spec)));
}

}  // namespace mkt::nn
