#include <cmath>
#include <memory>

#include "vitkit/errors.hpp"
#include "vitkit/ops.hpp"

namespace vitkit::ops {

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("operands live on different tapes");
  return *a.tape;
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (!is_suffix(x.shape(), y.shape())) {
    throw DimensionError("add: cannot broadcast " + shape_to_string(y.shape()) + " onto " +
                         shape_to_string(x.shape()));
  }
  Tensor out = x;
  const std::size_t inner = y.numel();
  auto o = out.data();
  auto yv = y.data();
  for (std::size_t i = 0; i < o.size(); i += inner)
    for (std::size_t j = 0; j < inner; ++j) o[i + j] += yv[j];
  return tape.record("add", std::move(out), {a.id, b.id},
                     [inner](const Tensor& g, std::span<Tensor* const> grads) {
                       auto gv = g.data();
                       if (grads[0]) {
                         auto d = grads[0]->data();
                         for (std::size_t i = 0; i < gv.size(); ++i) d[i] += gv[i];
                       }
                       if (grads[1]) {
                         auto d = grads[1]->data();
                         for (std::size_t i = 0; i < gv.size(); i += inner)
                           for (std::size_t j = 0; j < inner; ++j) d[j] += gv[i + j];
                       }
                     });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) {
    throw DimensionError("sub: shape mismatch " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(y.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= y[i];
  return tape.record("sub", std::move(out), {a.id, b.id},
                     [](const Tensor& g, std::span<Tensor* const> grads) {
                       for (std::size_t i = 0; i < g.numel(); ++i) {
                         if (grads[0]) (*grads[0])[i] += g[i];
                         if (grads[1]) (*grads[1])[i] -= g[i];
                       }
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) {
    throw DimensionError("mul: shape mismatch " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(y.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= y[i];
  Tape* tp = &tape;
  const auto ia = a.id, ib = b.id;
  return tape.record("mul", std::move(out), {ia, ib},
                     [tp, ia, ib](const Tensor& g, std::span<Tensor* const> grads) {
                       const Tensor& xv = tp->value(ia);
                       const Tensor& yv = tp->value(ib);
                       for (std::size_t i = 0; i < g.numel(); ++i) {
                         if (grads[0]) (*grads[0])[i] += g[i] * yv[i];
                         if (grads[1]) (*grads[1])[i] += g[i] * xv[i];
                       }
                     });
}

Var scale(Var a, Real factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.tape->record("scale", std::move(out), {a.id},
                        [factor](const Tensor& g, std::span<Tensor* const> grads) {
                          auto d = grads[0]->data();
                          for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
                        });
}

Var sum(Var a) {
  Real total = 0;
  for (Real v : a.value().data()) total += v;
  return a.tape->record("sum", Tensor::scalar(total), {a.id},
                        [](const Tensor& g, std::span<Tensor* const> grads) {
                          const Real s = g.item();
                          for (auto& d : grads[0]->data()) d += s;
                        });
}

Var mean(Var a) {
  const auto n = static_cast<Real>(a.value().numel());
  return scale(sum(a), Real{1} / n);
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0 ? v : Real{0};
  Tape* tp = x.tape;
  const auto ix = x.id;
  return tp->record("relu", std::move(out), {ix},
                    [tp, ix](const Tensor& g, std::span<Tensor* const> grads) {
                      const Tensor& in = tp->value(ix);
                      auto d = grads[0]->data();
                      for (std::size_t i = 0; i < d.size(); ++i)
                        if (in[i] > 0) d[i] += g[i];
                    });
}

Var gelu(Var x) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.numel(); ++i) {
    const Real v = in[i];
    const Real t = std::tanh(kGeluTanhCoeff * (v + kGeluCubicCoeff * v * v * v));
    out[i] = Real{0.5} * v * (Real{1} + t);
  }
  Tape* tp = x.tape;
  const auto ix = x.id;
  return tp->record("gelu", std::move(out), {ix},
                    [tp, ix](const Tensor& g, std::span<Tensor* const> grads) {
                      const Tensor& in = tp->value(ix);
                      auto d = grads[0]->data();
                      for (std::size_t i = 0; i < d.size(); ++i) {
                        const Real v = in[i];
                        const Real t = std::tanh(kGeluTanhCoeff * (v + kGeluCubicCoeff * v * v * v));
                        const Real dt = (Real{1} - t * t) * kGeluTanhCoeff *
                                        (Real{1} + Real{3} * kGeluCubicCoeff * v * v);
                        d[i] += g[i] * (Real{0.5} * (Real{1} + t) + Real{0.5} * v * dt);
                      }
                    });
}

Var activation(Var x, Activation kind) {
  return kind == Activation::relu ? relu(x) : gelu(x);
}

Var dropout(Var x, Real p, Rng& rng) {
  if (p < 0 || p >= 1) throw ConfigError("dropout probability must be in [0, 1)");
  if (p == 0) return x;
  const Tensor& in = x.value();
  auto mask = std::make_shared<std::vector<Real>>(in.numel());
  const Real keep = Real{1} / (Real{1} - p);
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.numel(); ++i) {
    (*mask)[i] = rng.bernoulli(p) ? Real{0} : keep;
    out[i] = in[i] * (*mask)[i];
  }
  return x.tape->record("dropout", std::move(out), {x.id},
                        [mask](const Tensor& g, std::span<Tensor* const> grads) {
                          auto d = grads[0]->data();
                          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (*mask)[i];
                        });
}

}  // namespace vitkit::ops
