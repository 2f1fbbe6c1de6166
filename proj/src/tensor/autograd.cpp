#include "vitkit/autograd.hpp"

#include <algorithm>

#include "vitkit/errors.hpp"

namespace vitkit {

namespace {
thread_local bool g_strict_finite = false;
}

void set_strict_finite(bool enabled) { g_strict_finite = enabled; }
bool strict_finite() { return g_strict_finite; }

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  auto param = std::make_unique<Parameter>();
  param->name = std::move(name);
  param->value = std::move(value);
  Parameter& ref = *param;
  index_.emplace(ref.name, &ref);
  params_.push_back(std::move(param));
  return ref;
}

Parameter* ParameterStore::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

Parameter& ParameterStore::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

const Parameter& ParameterStore::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

void ParameterStore::remove_prefix(std::string_view prefix) {
  std::erase_if(params_, [&](const std::unique_ptr<Parameter>& p) {
    if (p->name.starts_with(prefix)) {
      index_.erase(p->name);
      return true;
    }
    return false;
  });
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.numel();
  return n;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->name);
  return out;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Node node;
  node.op = "variable";
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Parameter& param) {
  Node node;
  node.op = "parameter";
  node.value = param.value;
  node.param = &param;
  node.requires_grad = param.requires_grad;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
                 BackwardFn backward) {
  if (g_strict_finite && !all_finite(value)) {
    throw NumericError("non-finite value produced by " + std::string(op) + " with shape " +
                       shape_to_string(value.shape()));
  }
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw ContractError("operation input refers to a future node");
    node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  }
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Tensor Tape::grad(Var v) const {
  if (v.id < grads_.size() && grads_[v.id]) return *grads_[v.id];
  return Tensor(nodes_[v.id].value.shape());
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward target belongs to another tape");
  const Tensor& out = nodes_[loss.id].value;
  if (out.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_to_string(out.shape()));
  }
  grads_.assign(nodes_.size(), std::nullopt);
  grads_[loss.id] = Tensor(out.shape(), Real{1});
  visits_ = 0;

  std::vector<Tensor*> input_grads;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!grads_[i] || !node.requires_grad || !node.backward) continue;
    input_grads.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!grads_[in]) grads_[in] = Tensor(nodes_[in].value.shape());
      input_grads[k] = &*grads_[in];
    }
    node.backward(*grads_[i], input_grads);
    ++visits_;
  }

  for (std::size_t i = 0; i <= loss.id; ++i) {
    Node& node = nodes_[i];
    if (!node.param || !node.requires_grad) continue;
    Parameter& p = *node.param;
    if (!p.grad || p.grad->shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
    if (!grads_[i]) continue;
    auto dst = p.grad->data();
    auto src = grads_[i]->data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

}  // namespace vitkit
