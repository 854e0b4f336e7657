#include "mkt/tape.hpp"

#include <string>

#include "mkt/errors.hpp"

namespace mkt::tg {

const Tensor& Var::value() const { return tape_->value(id_); }

Tensor Var::grad() const {
  if (const Tensor* g = tape_->grad_if_any(id_)) return *g;
  const Tensor& v = value();
  return Tensor(v.rows(), v.cols());
}

Tape::Tape() {
#ifdef NDEBUG
  check_finite_ = false;
#else
  check_finite_ = true;
#endif
  nodes_.reserve(256);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  Node n;
  n.op = "param";
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, std::vector<std::size_t> parents, Tensor value, BackwardFn backward) {
  if (check_finite_ && !all_finite(value))
    throw ContractError("non-finite value produced by op '" + std::string(op) + "'");
  Node n;
  n.op = op;
  n.requires_grad = false;
  for (std::size_t p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  n.parents = std::move(parents);
  n.value = std::move(value);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->value : n.value;
}

Tensor& Tape::grad_acc(std::size_t id) {
  Node& n = nodes_[id];
  Tensor& g = n.param ? n.param->grad : n.grad;
  const Tensor& v = n.param ? n.param->value : n.value;
  if (!g.same_shape(v)) g = Tensor(v.rows(), v.cols());
  return g;
}

const Tensor* Tape::grad_if_any(std::size_t id) const {
  const Node& n = nodes_[id];
  const Tensor& g = n.param ? n.param->grad : n.grad;
  const Tensor& v = n.param ? n.param->value : n.value;
  return g.same_shape(v) ? &g : nullptr;
}

void Tape::backward(Var loss) {
  if (loss.valid() && &loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  const Tensor& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ContractError("backward requires a scalar loss, got shape " + lv.shape_str());
  if (!nodes_[loss.id()].requires_grad) return;
  grad_acc(loss.id())[0] += 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.param) continue;
    if (!n.grad.same_shape(n.value)) continue;  // nothing flowed here
    n.backward(*this, id);
  }
}

}  // namespace mkt::tg
