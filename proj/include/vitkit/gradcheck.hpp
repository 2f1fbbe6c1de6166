#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "vitkit/autograd.hpp"

namespace vitkit {

/// Builds a scalar loss on the given tape, reading parameters through
/// Tape::leaf so perturbations are observed.
using LossBuilder = std::function<Var(Tape&)>;

struct GradcheckOptions {
  Real eps = 1e-5;
  /// Entries probed per parameter tensor; 0 probes every entry. When
  /// sampling, the first and last entries are always included.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradcheckReport {
  Real max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  Real worst_analytic = 0;
  Real worst_numeric = 0;
  std::size_t entries_checked = 0;
};

/// |a - b| / max(|a|, |b|, 1e-8).
Real relative_error(Real analytic, Real numeric);

/// Compares tape gradients against central differences
/// (f(p + eps) - f(p - eps)) / (2 eps). Parameter values are restored
/// afterwards; parameter gradients hold the analytic gradient on return.
GradcheckReport finite_diff_gradcheck(const LossBuilder& loss, std::span<Parameter* const> params,
                                      const GradcheckOptions& options = {});

}  // namespace vitkit
