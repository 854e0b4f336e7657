#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "mkt/parameter.hpp"
#include "mkt/tensor.hpp"

namespace mkt::tg {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while its tape is.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

  const Tensor& value() const;
  // Gradient after backward; a zero tensor if nothing flowed into this node.
  Tensor grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records the forward computation of one step in topological order and
// replays it in reverse for gradients. The graph is rebuilt every step and
// confined to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a parameter; gradients accumulate straight into p.grad.
  Var param(Parameter& p);
  Var record(std::string_view op, std::vector<std::size_t> parents, Tensor value, BackwardFn backward);

  // Populates gradients of every ancestor of `loss`, accumulating across
  // fan-out. Throws ContractError unless loss is 1x1.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Lazily allocated accumulator for node `id`.
  Tensor& grad_acc(std::size_t id);
  const Tensor* grad_if_any(std::size_t id) const;
  std::string_view op(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void set_check_finite(bool on) noexcept { check_finite_ = on; }

 private:
  struct Node {
    std::string_view op;
    std::vector<std::size_t> parents;
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool check_finite_;
};

}  // namespace mkt::tg
