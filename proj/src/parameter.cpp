#include "mkt/parameter.hpp"

#include "mkt/errors.hpp"

namespace mkt::tg {

void Parameter::zero_grad() {
  if (grad.same_shape(value))
    grad.fill(0.0);
  else
    grad = Tensor(value.rows(), value.cols());
}

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ValidationError("duplicate parameter name '" + name + "'");
  Parameter& p = params_.emplace_back();
  p.name = std::move(name);
  p.grad = Tensor(value.rows(), value.cols());
  p.value = std::move(value);
  index_.emplace(p.name, &p);
  return p;
}

Parameter* ParameterSet::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

const Parameter* ParameterSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

Parameter& ParameterSet::at(std::string_view name) {
  Parameter* p = find(name);
  if (!p) throw ValidationError("unknown parameter '" + std::string(name) + "'");
  return *p;
}

const Parameter& ParameterSet::at(std::string_view name) const {
  const Parameter* p = find(name);
  if (!p) throw ValidationError("unknown parameter '" + std::string(name) + "'");
  return *p;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::set_trainable(bool trainable) {
  for (auto& p : params_) p.trainable = trainable;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace mkt::tg
