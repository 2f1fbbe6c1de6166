#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vitkit/tensor.hpp"

namespace vitkit {

/// Named trainable tensor. `grad` stays empty until a backward pass or
/// zero_grad() populates it.
struct Parameter {
  std::string name;
  Tensor value;
  std::optional<Tensor> grad;
  bool requires_grad = true;

  void zero_grad() { grad = Tensor(value.shape()); }
};

/// Insertion-ordered collection of uniquely named parameters with stable
/// addresses.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);

  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  /// Drops every parameter whose name starts with `prefix`.
  void remove_prefix(std::string_view prefix);

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t total_elements() const;
  std::vector<std::string> names() const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> index_;
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Local backward rule: receives the gradient of the node's output and one
/// accumulator per input (null when that input needs no gradient). Rules
/// must add into the accumulators, never overwrite them.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

/// Enables NaN/Inf checks on every recorded value in the current thread.
void set_strict_finite(bool enabled);
bool strict_finite();

class StrictFiniteGuard {
 public:
  explicit StrictFiniteGuard(bool enabled = true) : previous_(strict_finite()) {
    set_strict_finite(enabled);
  }
  ~StrictFiniteGuard() { set_strict_finite(previous_); }
  StrictFiniteGuard(const StrictFiniteGuard&) = delete;
  StrictFiniteGuard& operator=(const StrictFiniteGuard&) = delete;

 private:
  bool previous_;
};

/// Ordered record of executed operations. Nodes are appended in execution
/// order, so every input id precedes its consumers. A tape belongs to one
/// computation at a time.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Free variable that receives a gradient readable through grad().
  Var variable(Tensor value);
  /// Leaf bound to a parameter; backward adds its gradient into param.grad.
  Var leaf(Parameter& param);

  /// Appends an operation output. Nodes whose inputs need no gradient are
  /// stored without their backward rule.
  Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Id the next recorded node will receive; lets a backward rule refer to
  /// its own output.
  std::size_t next_id() const noexcept { return nodes_.size(); }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::string_view op_name(Var v) const { return nodes_[v.id].op; }

  /// Gradient of the last backward() target with respect to `v`; a
  /// zero tensor when `v` was not on the path.
  Tensor grad(Var v) const;

  /// Reverse sweep from a scalar `loss`. Node gradients are recomputed on
  /// every call; parameter gradients accumulate.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  /// Number of nodes whose backward rule ran during the last sweep.
  std::size_t last_backward_visits() const noexcept { return visits_; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  // deque keeps references returned by value() valid as nodes are appended.
  std::deque<Node> nodes_;
  std::vector<std::optional<Tensor>> grads_;
  std::size_t visits_ = 0;
};

}  // namespace vitkit
