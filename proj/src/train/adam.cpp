#include "vitkit/train/adam.hpp"

#include <cmath>

#include "vitkit/errors.hpp"

namespace vitkit::train {

void AdamConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("Adam eps must be positive");
}

void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = nlohmann::json{{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
  AdamConfig d;
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
}

Adam::Adam(AdamConfig config) : config_(config) { config_.validate(); }

void Adam::step(ParameterStore& params) {
  for (const auto* p : params.all()) {
    if (p->requires_grad && !p->grad) throw ContractError("parameter '" + p->name + "' has no gradient");
    if (p->requires_grad && p->grad->shape() != p->value.shape()) {
      throw ContractError("gradient of '" + p->name + "' has shape " + shape_to_string(p->grad->shape()) +
                          ", parameter has " + shape_to_string(p->value.shape()));
    }
  }
  ++t_;
  const Real b1 = config_.beta1, b2 = config_.beta2;
  const Real c1 = 1 - std::pow(b1, static_cast<Real>(t_));
  const Real c2 = 1 - std::pow(b2, static_cast<Real>(t_));
  for (auto* p : params.all()) {
    if (!p->requires_grad) continue;
    auto [it, fresh] = moments_.try_emplace(p->name);
    if (fresh) {
      it->second.m = Tensor(p->value.shape());
      it->second.v = Tensor(p->value.shape());
    } else if (it->second.m.shape() != p->value.shape()) {
      throw ContractError("parameter '" + p->name + "' changed shape under the optimizer");
    }
    Real* theta = p->value.data().data();
    const Real* g = p->grad->data().data();
    Real* m = it->second.m.data().data();
    Real* v = it->second.v.data().data();
    for (std::size_t i = 0, n = p->value.numel(); i < n; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      theta[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

const Tensor* Adam::first_moment(const std::string& name) const {
  auto it = moments_.find(name);
  return it == moments_.end() ? nullptr : &it->second.m;
}

const Tensor* Adam::second_moment(const std::string& name) const {
  auto it = moments_.find(name);
  return it == moments_.end() ? nullptr : &it->second.v;
}

}  // namespace vitkit::train
