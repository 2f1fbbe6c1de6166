#pragma once

#include <string>
#include <unordered_map>

#include "json.hpp"
#include "vitkit/autograd.hpp"

namespace vitkit::train {

struct AdamConfig {
  Real lr = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;

  /// lr > 0, betas in [0, 1), eps > 0 (ConfigError).
  void validate() const;
};

void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);

/// Bias-corrected Adam over named parameters. Moments are keyed by
/// parameter name and created lazily at the parameter's shape.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// One update of every parameter with requires_grad. A trainable
  /// parameter without a gradient is a ContractError naming it.
  void step(ParameterStore& params);

  std::size_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }
  /// nullptr until the parameter has been updated once.
  const Tensor* first_moment(const std::string& name) const;
  const Tensor* second_moment(const std::string& name) const;

 private:
  struct Moments {
    Tensor m, v;
  };
  AdamConfig config_;
  std::unordered_map<std::string, Moments> moments_;
  std::size_t t_ = 0;
};

}  // namespace vitkit::train
