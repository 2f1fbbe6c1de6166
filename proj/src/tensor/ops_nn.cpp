#include <algorithm>
#include <cmath>
#include <memory>

#include "vitkit/errors.hpp"
#include "vitkit/ops.hpp"

namespace vitkit::ops {

namespace {

struct AxisLayout {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisLayout layout_for(const Shape& shape, std::size_t axis) {
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

}  // namespace

Var softmax(Var x, std::size_t axis) {
  const Tensor& in = x.value();
  if (axis >= in.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_to_string(in.shape()));
  }
  const AxisLayout l = layout_for(in.shape(), axis);
  Tensor out(in.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.extent * l.inner + i;
      Real peak = in[base];
      for (std::size_t j = 1; j < l.extent; ++j) peak = std::max(peak, in[base + j * l.inner]);
      Real total = 0;
      for (std::size_t j = 0; j < l.extent; ++j) {
        const Real e = std::exp(in[base + j * l.inner] - peak);
        out[base + j * l.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < l.extent; ++j) out[base + j * l.inner] /= total;
    }
  }
  Tape* tp = x.tape;
  const std::size_t self = tp->next_id();
  return tp->record("softmax", std::move(out), {x.id},
                    [tp, self, l](const Tensor& g, std::span<Tensor* const> grads) {
                      const Tensor& y = tp->value(self);
                      auto d = grads[0]->data();
                      for (std::size_t o = 0; o < l.outer; ++o) {
                        for (std::size_t i = 0; i < l.inner; ++i) {
                          const std::size_t base = o * l.extent * l.inner + i;
                          Real dot = 0;
                          for (std::size_t j = 0; j < l.extent; ++j) {
                            const std::size_t at = base + j * l.inner;
                            dot += g[at] * y[at];
                          }
                          for (std::size_t j = 0; j < l.extent; ++j) {
                            const std::size_t at = base + j * l.inner;
                            d[at] += y[at] * (g[at] - dot);
                          }
                        }
                      }
                    });
}

Var layer_norm(Var x, Var gamma, Var beta, Real eps) {
  const Tensor& in = x.value();
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  if (in.rank() == 0) throw DimensionError("layer_norm needs rank >= 1");
  const std::size_t width = in.shape().back();
  if (gm.shape() != Shape{width} || bt.shape() != Shape{width}) {
    throw DimensionError("layer_norm: gamma/beta " + shape_to_string(gm.shape()) + "/" +
                         shape_to_string(bt.shape()) + " do not match last extent of " +
                         shape_to_string(in.shape()));
  }
  if (eps <= 0) throw ConfigError("layer_norm eps must be positive");
  const std::size_t rows = in.numel() / width;
  auto normalized = std::make_shared<Tensor>(in.shape());
  auto inv_std = std::make_shared<std::vector<Real>>(rows);
  Tensor out(in.shape());
  const auto n = static_cast<Real>(width);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = in.data().data() + r * width;
    Real mu = 0;
    for (std::size_t j = 0; j < width; ++j) mu += row[j];
    mu /= n;
    Real var = 0;
    for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    const Real is = Real{1} / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < width; ++j) {
      const Real xh = (row[j] - mu) * is;
      (*normalized)[r * width + j] = xh;
      out[r * width + j] = xh * gm[j] + bt[j];
    }
  }
  Tape* tp = x.tape;
  const auto ig = gamma.id;
  return tp->record(
      "layer_norm", std::move(out), {x.id, gamma.id, beta.id},
      [tp, ig, normalized, inv_std, rows, width](const Tensor& g, std::span<Tensor* const> grads) {
        const Tensor& gm = tp->value(ig);
        const auto n = static_cast<Real>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * width;
          if (grads[1] || grads[2]) {
            for (std::size_t j = 0; j < width; ++j) {
              if (grads[1]) (*grads[1])[j] += g[base + j] * (*normalized)[base + j];
              if (grads[2]) (*grads[2])[j] += g[base + j];
            }
          }
          if (!grads[0]) continue;
          Real mean_dxh = 0, mean_dxh_xh = 0;
          for (std::size_t j = 0; j < width; ++j) {
            const Real dxh = g[base + j] * gm[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * (*normalized)[base + j];
          }
          mean_dxh /= n;
          mean_dxh_xh /= n;
          const Real is = (*inv_std)[r];
          for (std::size_t j = 0; j < width; ++j) {
            const Real dxh = g[base + j] * gm[j];
            (*grads[0])[base + j] += is * (dxh - mean_dxh - (*normalized)[base + j] * mean_dxh_xh);
          }
        }
      });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw DimensionError("cross_entropy expects B x C logits, got " + shape_to_string(z.shape()));
  const std::size_t batch = z.dim(0), classes = z.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch));
  }
  if (batch == 0 || classes == 0) throw DimensionError("cross_entropy on empty logits");
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) {
      throw LabelError("label " + std::to_string(labels[b]) + " at batch index " + std::to_string(b) +
                       " is outside [0, " + std::to_string(classes) + ")");
    }
  }
  auto probs = std::make_shared<Tensor>(z.shape());
  Real total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const Real* row = z.data().data() + b * classes;
    const Real peak = *std::max_element(row, row + classes);
    Real acc = 0;
    for (std::size_t c = 0; c < classes; ++c) acc += std::exp(row[c] - peak);
    const Real lse = peak + std::log(acc);
    for (std::size_t c = 0; c < classes; ++c) (*probs)[b * classes + c] = std::exp(row[c] - lse);
    total += lse - row[labels[b]];
  }
  const Real loss = total / static_cast<Real>(batch);
  std::vector<std::size_t> targets(labels.begin(), labels.end());
  return logits.tape->record(
      "cross_entropy", Tensor::scalar(loss), {logits.id},
      [probs, targets = std::move(targets), batch, classes](const Tensor& g, std::span<Tensor* const> grads) {
        const Real s = g.item() / static_cast<Real>(batch);
        auto d = grads[0]->data();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < classes; ++c) {
            const Real onehot = c == targets[b] ? Real{1} : Real{0};
            d[b * classes + c] += s * ((*probs)[b * classes + c] - onehot);
          }
        }
      });
}

Var prepend_token(Var x, Var token) {
  const Tensor& in = x.value();
  const Tensor& tok = token.value();
  if (in.rank() != 3 || tok.shape() != Shape{in.dim(2)}) {
    throw DimensionError("prepend_token: token " + shape_to_string(tok.shape()) +
                         " does not fit sequence " + shape_to_string(in.shape()));
  }
  const std::size_t batch = in.dim(0), n = in.dim(1), width = in.dim(2);
  Tensor out({batch, n + 1, width});
  for (std::size_t b = 0; b < batch; ++b) {
    Real* dst = out.data().data() + b * (n + 1) * width;
    std::copy(tok.data().begin(), tok.data().end(), dst);
    const Real* src = in.data().data() + b * n * width;
    std::copy(src, src + n * width, dst + width);
  }
  return x.tape->record("prepend_token", std::move(out), {x.id, token.id},
                        [batch, n, width](const Tensor& g, std::span<Tensor* const> grads) {
                          for (std::size_t b = 0; b < batch; ++b) {
                            const Real* src = g.data().data() + b * (n + 1) * width;
                            if (grads[1])
                              for (std::size_t j = 0; j < width; ++j) (*grads[1])[j] += src[j];
                            if (grads[0]) {
                              Real* dst = grads[0]->data().data() + b * n * width;
                              for (std::size_t j = 0; j < n * width; ++j) dst[j] += src[width + j];
                            }
                          }
                        });
}

Var select_token(Var x, std::size_t index) {
  const Tensor& in = x.value();
  if (in.rank() != 3 || index >= in.dim(1)) {
    throw DimensionError("select_token: index " + std::to_string(index) + " invalid for " +
                         shape_to_string(in.shape()));
  }
  const std::size_t batch = in.dim(0), t = in.dim(1), width = in.dim(2);
  Tensor out({batch, width});
  for (std::size_t b = 0; b < batch; ++b) {
    const Real* src = in.data().data() + (b * t + index) * width;
    std::copy(src, src + width, out.data().data() + b * width);
  }
  return x.tape->record("select_token", std::move(out), {x.id},
                        [batch, t, width, index](const Tensor& g, std::span<Tensor* const> grads) {
                          for (std::size_t b = 0; b < batch; ++b) {
                            Real* dst = grads[0]->data().data() + (b * t + index) * width;
                            for (std::size_t j = 0; j < width; ++j) dst[j] += g[b * width + j];
                          }
                        });
}

}  // namespace vitkit::ops
