#include "vitkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vitkit/errors.hpp"
#include "vitkit/rng.hpp"

namespace vitkit {

Real relative_error(Real analytic, Real numeric) {
  const Real denom = std::max({std::abs(analytic), std::abs(numeric), Real{1e-8}});
  return std::abs(analytic - numeric) / denom;
}

namespace {

Real evaluate(const LossBuilder& loss) {
  Tape tape;
  return loss(tape).value().item();
}

std::vector<std::size_t> probe_indices(std::size_t n, std::size_t budget, Rng& rng) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (budget == 0 || budget >= n) return all;
  std::vector<std::size_t> middle(all.begin() + 1, all.end() - 1);
  rng.shuffle(middle);
  std::vector<std::size_t> picked{0, n - 1};
  const std::size_t extra = budget > 2 ? budget - 2 : 0;
  picked.insert(picked.end(), middle.begin(), middle.begin() + static_cast<std::ptrdiff_t>(std::min(extra, middle.size())));
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

GradcheckReport finite_diff_gradcheck(const LossBuilder& loss, std::span<Parameter* const> params,
                                      const GradcheckOptions& options) {
  if (!(options.eps > 0 && options.eps <= 1e-2)) {
    throw ContractError("gradcheck eps must lie in (0, 1e-2]");
  }
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = loss(tape);
    tape.backward(out);
  }

  GradcheckReport report;
  Rng rng(options.seed);
  for (auto* p : params) {
    const Tensor analytic = *p->grad;
    for (std::size_t i : probe_indices(p->value.numel(), options.max_entries_per_param, rng)) {
      const Real saved = p->value[i];
      p->value[i] = saved + options.eps;
      const Real up = evaluate(loss);
      p->value[i] = saved - options.eps;
      const Real down = evaluate(loss);
      p->value[i] = saved;
      const Real numeric = (up - down) / (2 * options.eps);
      const Real err = relative_error(analytic[i], numeric);
      ++report.entries_checked;
      if (err > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = err;
        report.worst_param = p->name;
        report.worst_index = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace vitkit
