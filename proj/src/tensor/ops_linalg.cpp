#include <numeric>

#include "eigen_views.hpp"
#include "vitkit/errors.hpp"
#include "vitkit/ops.hpp"

namespace vitkit::ops {

using detail::view;

Var matmul(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("matmul operands live on different tapes");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(x.shape()) + " and " +
                         shape_to_string(y.shape()));
  }
  const std::size_t m = x.dim(0), k = x.dim(1), n = y.dim(1);
  Tensor out({m, n});
  view(out.data().data(), m, n).noalias() = view(x.data().data(), m, k) * view(y.data().data(), k, n);
  Tape* tp = a.tape;
  const auto ia = a.id, ib = b.id;
  return tp->record("matmul", std::move(out), {ia, ib},
                    [tp, ia, ib, m, k, n](const Tensor& g, std::span<Tensor* const> grads) {
                      auto gv = view(g.data().data(), m, n);
                      if (grads[0]) {
                        view(grads[0]->data().data(), m, k).noalias() +=
                            gv * view(tp->value(ib).data().data(), k, n).transpose();
                      }
                      if (grads[1]) {
                        view(grads[1]->data().data(), k, n).noalias() +=
                            view(tp->value(ia).data().data(), m, k).transpose() * gv;
                      }
                    });
}

Var bmm(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("bmm operands live on different tapes");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 3 || y.rank() != 3 || x.dim(0) != y.dim(0) || x.dim(2) != y.dim(1)) {
    throw DimensionError("bmm: incompatible shapes " + shape_to_string(x.shape()) + " and " +
                         shape_to_string(y.shape()));
  }
  const std::size_t batch = x.dim(0), m = x.dim(1), k = x.dim(2), n = y.dim(2);
  Tensor out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    view(out.data().data() + i * m * n, m, n).noalias() =
        view(x.data().data() + i * m * k, m, k) * view(y.data().data() + i * k * n, k, n);
  }
  Tape* tp = a.tape;
  const auto ia = a.id, ib = b.id;
  return tp->record(
      "bmm", std::move(out), {ia, ib},
      [tp, ia, ib, batch, m, k, n](const Tensor& g, std::span<Tensor* const> grads) {
        const Real* xa = tp->value(ia).data().data();
        const Real* yb = tp->value(ib).data().data();
        for (std::size_t i = 0; i < batch; ++i) {
          auto gv = view(g.data().data() + i * m * n, m, n);
          if (grads[0]) {
            view(grads[0]->data().data() + i * m * k, m, k).noalias() +=
                gv * view(yb + i * k * n, k, n).transpose();
          }
          if (grads[1]) {
            view(grads[1]->data().data() + i * k * n, k, n).noalias() +=
                view(xa + i * m * k, m, k).transpose() * gv;
          }
        }
      });
}

Var transpose_last2(Var a) {
  const std::size_t r = a.value().rank();
  if (r < 2) throw DimensionError("transpose_last2 needs rank >= 2");
  std::vector<std::size_t> perm(r);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::swap(perm[r - 1], perm[r - 2]);
  return permute(a, std::move(perm));
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  const Tensor& in = x.value();
  const Tensor& w = weight.value();
  if (w.rank() != 2 || in.rank() == 0 || in.shape().back() != w.dim(0)) {
    throw DimensionError("linear: input " + shape_to_string(in.shape()) +
                         " does not match weight " + shape_to_string(w.shape()));
  }
  const std::size_t k = w.dim(0), n = w.dim(1);
  const std::size_t m = in.numel() / k;
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != n)) {
    throw DimensionError("linear: bias " + shape_to_string(bias->value().shape()) +
                         " does not match output width " + std::to_string(n));
  }
  Shape out_shape = in.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  auto ov = view(out.data().data(), m, n);
  ov.noalias() = view(in.data().data(), m, k) * view(w.data().data(), k, n);
  if (bias) {
    ov.rowwise() += view(bias->value().data().data(), 1, n).row(0);
  }
  Tape* tp = x.tape;
  const auto ix = x.id, iw = weight.id;
  std::vector<std::size_t> inputs{ix, iw};
  if (bias) inputs.push_back(bias->id);
  return tp->record("linear", std::move(out), std::move(inputs),
                    [tp, ix, iw, m, k, n](const Tensor& g, std::span<Tensor* const> grads) {
                      auto gv = view(g.data().data(), m, n);
                      if (grads[0]) {
                        view(grads[0]->data().data(), m, k).noalias() +=
                            gv * view(tp->value(iw).data().data(), k, n).transpose();
                      }
                      if (grads[1]) {
                        view(grads[1]->data().data(), k, n).noalias() +=
                            view(tp->value(ix).data().data(), m, k).transpose() * gv;
                      }
                      if (grads.size() > 2 && grads[2]) {
                        view(grads[2]->data().data(), 1, n).row(0) += gv.colwise().sum();
                      }
                    });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape->record("reshape", std::move(out), {a.id},
                        [](const Tensor& g, std::span<Tensor* const> grads) {
                          auto d = grads[0]->data();
                          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
                        });
}

namespace {

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// For each output flat index, the flat index of the source element.
std::vector<std::size_t> permutation_gather(const Shape& in_shape, const std::vector<std::size_t>& perm) {
  const std::size_t r = in_shape.size();
  const auto in_strides = strides_of(in_shape);
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[perm[i]];
    src_stride[i] = in_strides[perm[i]];
  }
  const std::size_t total = shape_numel(in_shape);
  std::vector<std::size_t> gather(total);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    gather[flat] = src;
    for (std::size_t ax = r; ax-- > 0;) {
      if (++idx[ax] < out_shape[ax]) {
        src += src_stride[ax];
        break;
      }
      src -= src_stride[ax] * (out_shape[ax] - 1);
      idx[ax] = 0;
    }
  }
  return gather;
}

}  // namespace

Var permute(Var a, std::vector<std::size_t> perm) {
  const Tensor& in = a.value();
  const std::size_t r = in.rank();
  std::vector<bool> seen(r, false);
  if (perm.size() != r) throw DimensionError("permute: permutation rank mismatch");
  for (auto p : perm) {
    if (p >= r || seen[p]) throw DimensionError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in.shape()[perm[i]];
  auto gather = std::make_shared<std::vector<std::size_t>>(permutation_gather(in.shape(), perm));
  Tensor out(out_shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = in[(*gather)[i]];
  return a.tape->record("permute", std::move(out), {a.id},
                        [gather](const Tensor& g, std::span<Tensor* const> grads) {
                          auto d = grads[0]->data();
                          for (std::size_t i = 0; i < g.numel(); ++i) d[(*gather)[i]] += g[i];
                        });
}

}  // namespace vitkit::ops
