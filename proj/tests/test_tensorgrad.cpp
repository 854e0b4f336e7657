#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"
#include "mkt/errors.hpp"
#include "mkt/gradcheck.hpp"
#include "mkt/ops.hpp"
#include "mkt/optimizer.hpp"

using namespace mkt;
using namespace mkt::tg;

namespace {

double value_of(const std::function<Var(Tape&)>& f) {
  Tape t;
  return f(t).value().item();
}

// Weighted sum with a fixed random projection, so every output element gets a
// distinct upstream gradient.
Var project(Tape& t, Var y, std::uint64_t seed = 99) {
  Rng rng = substream(seed, "projection");
  return sum(mul(y, t.constant(test::random_tensor(y.rows(), y.cols(), rng))));
}

struct OpCase {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Var(Tape&, std::vector<Var>&)> build;
};

std::vector<OpCase> op_cases() {
  Rng rng = substream(5, "op-cases");
  auto R = [&](std::size_t r, std::size_t c) { return test::random_tensor(r, c, rng); };
  auto P = [&](std::size_t r, std::size_t c) { return test::random_tensor(r, c, rng, 0.2, 1.5); };
  std::vector<OpCase> c;
  c.push_back({"matmul", {R(3, 4), R(4, 2)}, [](Tape&, auto& v) { return matmul(v[0], v[1]); }});
  c.push_back({"matmul_nt", {R(3, 4), R(2, 4)}, [](Tape&, auto& v) { return matmul_nt(v[0], v[1]); }});
  c.push_back({"linear", {R(3, 4), R(2, 4), R(2, 1)}, [](Tape&, auto& v) { return linear(v[0], v[1], v[2]); }});
  c.push_back({"linear_nobias", {R(3, 4), R(2, 4)}, [](Tape&, auto& v) { return linear(v[0], v[1]); }});
  c.push_back({"add", {R(2, 3), R(2, 3)}, [](Tape&, auto& v) { return add(v[0], v[1]); }});
  c.push_back({"sub", {R(2, 3), R(2, 3)}, [](Tape&, auto& v) { return sub(v[0], v[1]); }});
  c.push_back({"mul", {R(2, 3), R(2, 3)}, [](Tape&, auto& v) { return mul(v[0], v[1]); }});
  c.push_back({"scale", {R(2, 3)}, [](Tape&, auto& v) { return scale(v[0], -1.7); }});
  c.push_back({"relu", {R(3, 3)}, [](Tape&, auto& v) { return relu(v[0]); }});
  c.push_back({"clamp", {R(3, 3)}, [](Tape&, auto& v) { return clamp(v[0], -0.5, 0.5); }});
  c.push_back({"sigmoid", {R(3, 3)}, [](Tape&, auto& v) { return sigmoid(v[0]); }});
  c.push_back({"tanh", {R(3, 3)}, [](Tape&, auto& v) { return tanh(v[0]); }});
  c.push_back({"add_bias", {R(3, 2), R(2, 1)}, [](Tape&, auto& v) { return add_bias(v[0], v[1]); }});
  c.push_back({"mul_rows", {R(3, 2), R(3, 1)}, [](Tape&, auto& v) { return mul_rows(v[0], v[1]); }});
  c.push_back({"scale_blocks", {R(2, 6), R(2, 3)}, [](Tape&, auto& v) { return scale_blocks(v[0], v[1]); }});
  c.push_back({"concat", {R(2, 1), R(2, 3)}, [](Tape&, auto& v) { return concat({v[0], v[1]}); }});
  c.push_back({"slice_cols", {R(2, 5)}, [](Tape&, auto& v) { return slice_cols(v[0], 1, 3); }});
  c.push_back({"gather", {R(4, 3)}, [](Tape&, auto& v) { return gather(v[0], {2, 0, 2, 3}); }});
  c.push_back({"softmax_rows", {R(3, 4)}, [](Tape&, auto& v) { return softmax_rows(v[0]); }});
  c.push_back({"attention_pool", {R(3, 2), R(5, 2)},
               [](Tape&, auto& v) { return attention_pool(v[0], v[1], {0, 2, 2, 5}); }});
  c.push_back({"cosine", {R(3, 4), R(3, 4)}, [](Tape&, auto& v) { return cosine(v[0], v[1]); }});
  c.push_back({"bce_with_logits", {R(4, 1)},
               [](Tape&, auto& v) { return bce_with_logits(scale(v[0], 3.0), std::vector<double>{1, 0, 0, 1}); }});
  c.push_back({"sum", {R(2, 3)}, [](Tape&, auto& v) { return sum(v[0]); }});
  c.push_back({"mean", {R(2, 3)}, [](Tape&, auto& v) { return mean(v[0]); }});
  c.push_back({"fan_out", {R(2, 2)}, [](Tape&, auto& v) { return mul(v[0], add(v[0], v[0])); }});
  c.push_back({"positive_inputs_mul_rows", {P(2, 2), P(2, 1)}, [](Tape&, auto& v) { return mul_rows(v[0], v[1]); }});
  return c;
}

}  // namespace

TEST(Ops, MatmulHandCases) {
  Tape t;
  Var eye = t.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  Var m = t.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  EXPECT_TRUE(matmul(eye, m).value().identical(m.value()));
  Var r = matmul(t.constant(Tensor::from_rows({{1, 2}})), t.constant(Tensor::from_rows({{3}, {4}})));
  EXPECT_EQ(r.value().item(), 11.0);
}

TEST(Ops, MatmulShapeMismatch) {
  Tape t;
  EXPECT_THROW(matmul(t.constant(Tensor(2, 3)), t.constant(Tensor(2, 3))), DimensionError);
  EXPECT_THROW(add(t.constant(Tensor(2, 3)), t.constant(Tensor(3, 2))), DimensionError);
}

TEST(Ops, ElementwiseHandCases) {
  Tape t;
  EXPECT_EQ(sigmoid(t.constant(Tensor::scalar(0))).value().item(), 0.5);
  EXPECT_EQ(relu(t.constant(Tensor::scalar(-3))).value().item(), 0.0);
  EXPECT_EQ(relu(t.constant(Tensor::scalar(3))).value().item(), 3.0);
}

TEST(Ops, ConcatHandCases) {
  Tape t;
  Var a = t.constant(Tensor::from_rows({{1}}));
  Var b = t.constant(Tensor::from_rows({{2, 3}}));
  EXPECT_TRUE(concat({a, b}).value().identical(Tensor::from_rows({{1, 2, 3}})));
  EXPECT_TRUE(concat({b}).value().identical(b.value()));
}

TEST(Ops, ConcatBackwardIsOnes) {
  Parameter a{"a", Tensor::from_rows({{1, 2}, {3, 4}})};
  Parameter b{"b", Tensor::from_rows({{5}, {6}})};
  Tape t;
  Var va = t.param(a), vb = t.param(b);
  t.backward(sum(concat({va, vb})));
  EXPECT_TRUE(a.grad.identical(Tensor(2, 2, 1.0)));
  EXPECT_TRUE(b.grad.identical(Tensor(2, 1, 1.0)));
}

TEST(Ops, CosineHandCases) {
  Tape t;
  auto cos = [&](std::initializer_list<double> x, std::initializer_list<double> y) {
    return cosine(t.constant(Tensor::row(x)), t.constant(Tensor::row(y))).value().item();
  };
  EXPECT_NEAR(cos({1, 0}, {0, 1}), 0.0, 1e-15);
  EXPECT_NEAR(cos({1, 1}, {-1, -1}), -1.0, 1e-12);
  EXPECT_NEAR(cos({0.3, -2, 5}, {0.3, -2, 5}), 1.0, 1e-12);
}

TEST(Ops, BceHandCases) {
  Tape t;
  auto bce = [&](double logit, double label) {
    return bce_with_logits(t.constant(Tensor::scalar(logit)), std::vector<double>{label}).value().item();
  };
  EXPECT_NEAR(bce(0, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce(0, 0), std::log(2.0), 1e-15);
  // log1p(exp(-50)) to double precision is exp(-50) itself.
  EXPECT_NEAR(bce(50, 1), std::exp(-50.0), 1e-30);
  EXPECT_NEAR(bce(-50, 0), std::exp(-50.0), 1e-30);
  EXPECT_NEAR(bce(800, 0), 800.0, 1e-9);
  EXPECT_THROW(bce(0, 0.5), ValidationError);
}

TEST(Tape, PassThroughAndFanOut) {
  Parameter x{"x", Tensor::scalar(1.5)};
  {
    Tape t;
    t.backward(sum(t.param(x)));
    EXPECT_EQ(x.grad.item(), 1.0);
  }
  x.zero_grad();
  {
    Tape t;
    Var v = t.param(x);
    t.backward(add(v, v));
    EXPECT_EQ(x.grad.item(), 2.0);
  }
}

TEST(Tape, BackwardNeedsScalar) {
  Parameter x{"x", Tensor(2, 2, 1.0)};
  Tape t;
  EXPECT_THROW(t.backward(t.param(x)), ContractError);
}

TEST(Gradients, EveryOpMatchesFiniteDifferences) {
  for (auto& c : op_cases()) {
    std::vector<Parameter> ps;
    for (std::size_t i = 0; i < c.inputs.size(); ++i) ps.push_back({c.name + "." + std::to_string(i), c.inputs[i]});
    std::vector<Parameter*> ptrs;
    for (auto& p : ps) ptrs.push_back(&p);
    auto loss = [&](Tape& t) {
      std::vector<Var> v;
      for (auto& p : ps) v.push_back(t.param(p));
      Var y = c.build(t, v);
      return y.rows() == 1 && y.cols() == 1 ? y : project(t, y);
    };
    const auto r = check_gradients(ptrs, loss, 1e-5);
    EXPECT_LT(r.max_rel_error, 1e-6) << c.name << " worst " << r.worst;
    EXPECT_GT(r.checked, 0u);
  }
}

TEST(Gradients, SumOfMatmulWrtA) {
  Rng rng = substream(3, "matmul");
  Parameter a{"a", test::random_tensor(3, 5, rng)};
  Parameter b{"b", test::random_tensor(5, 2, rng)};
  Parameter* only_a[] = {&a};
  const auto r = check_gradients(only_a, [&](Tape& t) { return sum(matmul(t.param(a), t.constant(b.value))); });
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_EQ(r.checked, 15u);
}

TEST(Gradients, CheckerNoticesWrongGradient) {
  Parameter x{"x", Tensor::scalar(0.7)};
  Parameter* ps[] = {&x};
  // detach hides the dependency from the tape, so the analytic gradient is 0.
  const auto r = check_gradients(ps, [&](Tape& t) { return sum(mul(t.param(x), detach(t.param(x)))); });
  EXPECT_GT(r.max_rel_error, 0.4);
  EXPECT_GT(value_of([&](Tape& t) { return sum(t.param(x)); }), 0.0);
}

TEST(Optimizer, SgdStep) {
  Parameter p{"p", Tensor::scalar(1.0)};
  p.grad = Tensor::scalar(1.0);
  Optimizer opt({OptimizerKind::sgd, 0.1});
  Parameter* ps[] = {&p};
  opt.step(ps);
  EXPECT_NEAR(p.value.item(), 0.9, 1e-15);
  EXPECT_EQ(p.grad.item(), 0.0);
}

TEST(Optimizer, AdamFirstStepMovesByLr) {
  Parameter p{"p", Tensor::scalar(1.0)};
  p.grad = Tensor::scalar(1.0);
  const double lr = 0.01;
  Optimizer opt({OptimizerKind::adam, lr});
  Parameter* ps[] = {&p};
  opt.step(ps);
  // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps)
  EXPECT_NEAR(p.value.item(), 1.0 - lr * 1.0 / (1.0 + 1e-8), 1e-15);
}

TEST(Optimizer, FrozenParameterUnchanged) {
  Parameter p{"p", Tensor::from_rows({{0.25, -3.5}})};
  p.trainable = false;
  p.grad = Tensor::from_rows({{4, 5}});
  const Tensor before = p.value;
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
    Optimizer opt({kind, 0.5});
    Parameter* ps[] = {&p};
    opt.step(ps);
    EXPECT_TRUE(p.value.identical(before));
    EXPECT_FALSE(opt.has_moments(p));
    p.grad = Tensor::from_rows({{4, 5}});
  }
}
