#include <algorithm>
#include <limits>
#include <memory>

#include "eigen_views.hpp"
#include "vitkit/errors.hpp"
#include "vitkit/ops.hpp"

namespace vitkit::ops {

using detail::view;

std::optional<std::size_t> conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                           std::size_t pad) {
  if (stride == 0) return std::nullopt;
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel) return std::nullopt;
  return (padded - kernel) / stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t ho, wo;
  std::size_t groups, cin_g, cout_g;
  Conv2dOptions opt;

  std::size_t col_rows() const { return cin_g * kh * kw; }
  std::size_t col_cols() const { return ho * wo; }
};

// Unfolds the channels [c0, c0 + cin_g) of one sample into a
// (cin_g*kh*kw) x (ho*wo) matrix.
void im2col(const ConvGeometry& g, const Real* sample, std::size_t c0, Real* col) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    const Real* plane = sample + (c0 + c) * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        Real* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.opt.stride_h + ky) -
                          static_cast<std::ptrdiff_t>(g.opt.pad_h);
          Real* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, Real{0});
            continue;
          }
          const Real* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.opt.stride_w + kx) -
                            static_cast<std::ptrdiff_t>(g.opt.pad_w);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? Real{0}
                                                                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const Real* col, std::size_t c0, Real* sample_grad) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    Real* plane = sample_grad + (c0 + c) * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const Real* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.opt.stride_h + ky) -
                          static_cast<std::ptrdiff_t>(g.opt.pad_h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          Real* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.opt.stride_w + kx) -
                            static_cast<std::ptrdiff_t>(g.opt.pad_w);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

ConvGeometry make_geometry(const Tensor& in, const Tensor& k, const Conv2dOptions& opt) {
  if (in.rank() != 4 || k.rank() != 4) {
    throw DimensionError("conv2d expects 4-d input and kernel, got " + shape_to_string(in.shape()) +
                         " and " + shape_to_string(k.shape()));
  }
  ConvGeometry g{};
  g.opt = opt;
  g.batch = in.dim(0);
  g.cin = in.dim(1);
  g.h = in.dim(2);
  g.w = in.dim(3);
  g.cout = k.dim(0);
  g.kh = k.dim(2);
  g.kw = k.dim(3);
  g.groups = opt.groups;
  if (g.groups == 0 || g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    throw ConfigError("conv2d: channels " + std::to_string(g.cin) + " -> " + std::to_string(g.cout) +
                      " not divisible by groups " + std::to_string(g.groups));
  }
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  if (k.dim(1) != g.cin_g) {
    throw DimensionError("conv2d: kernel " + shape_to_string(k.shape()) + " does not match input " +
                         shape_to_string(in.shape()) + " with groups " + std::to_string(g.groups));
  }
  const auto ho = conv_out_extent(g.h, g.kh, opt.stride_h, opt.pad_h);
  const auto wo = conv_out_extent(g.w, g.kw, opt.stride_w, opt.pad_w);
  if (!ho || !wo || *ho == 0 || *wo == 0) {
    throw ConfigError("conv2d: non-positive output extent for input " + shape_to_string(in.shape()) +
                      ", kernel " + shape_to_string(k.shape()));
  }
  g.ho = *ho;
  g.wo = *wo;
  return g;
}

}  // namespace

Var conv2d(Var input, Var kernel, std::optional<Var> bias, const Conv2dOptions& options) {
  const Tensor& in = input.value();
  const Tensor& k = kernel.value();
  const ConvGeometry g = make_geometry(in, k, options);
  if (bias && bias->value().shape() != Shape{g.cout}) {
    throw DimensionError("conv2d: bias " + shape_to_string(bias->value().shape()) +
                         " does not match output channels " + std::to_string(g.cout));
  }
  const std::size_t rows = g.col_rows(), cols = g.col_cols();
  std::vector<Real> col(rows * cols);
  Tensor out({g.batch, g.cout, g.ho, g.wo});
  for (std::size_t b = 0; b < g.batch; ++b) {
    const Real* sample = in.data().data() + b * g.cin * g.h * g.w;
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      im2col(g, sample, grp * g.cin_g, col.data());
      Real* dst = out.data().data() + (b * g.cout + grp * g.cout_g) * cols;
      view(dst, g.cout_g, cols).noalias() =
          view(k.data().data() + grp * g.cout_g * rows, g.cout_g, rows) * view(col.data(), rows, cols);
    }
    if (bias) {
      const Tensor& bv = bias->value();
      for (std::size_t c = 0; c < g.cout; ++c) {
        Real* dst = out.data().data() + (b * g.cout + c) * cols;
        for (std::size_t i = 0; i < cols; ++i) dst[i] += bv[c];
      }
    }
  }
  Tape* tp = input.tape;
  const auto ii = input.id, ik = kernel.id;
  std::vector<std::size_t> inputs{ii, ik};
  if (bias) inputs.push_back(bias->id);
  return tp->record(
      "conv2d", std::move(out), std::move(inputs),
      [tp, ii, ik, g](const Tensor& grad, std::span<Tensor* const> grads) {
        const Tensor& in = tp->value(ii);
        const Tensor& k = tp->value(ik);
        const std::size_t rows = g.col_rows(), cols = g.col_cols();
        std::vector<Real> col(rows * cols);
        std::vector<Real> dcol(rows * cols);
        for (std::size_t b = 0; b < g.batch; ++b) {
          const Real* sample = in.data().data() + b * g.cin * g.h * g.w;
          for (std::size_t grp = 0; grp < g.groups; ++grp) {
            auto gout = view(grad.data().data() + (b * g.cout + grp * g.cout_g) * cols, g.cout_g, cols);
            auto kmat = view(k.data().data() + grp * g.cout_g * rows, g.cout_g, rows);
            if (grads[1]) {
              im2col(g, sample, grp * g.cin_g, col.data());
              view(grads[1]->data().data() + grp * g.cout_g * rows, g.cout_g, rows).noalias() +=
                  gout * view(col.data(), rows, cols).transpose();
            }
            if (grads[0]) {
              view(dcol.data(), rows, cols).noalias() = kmat.transpose() * gout;
              col2im_add(g, dcol.data(), grp * g.cin_g, grads[0]->data().data() + b * g.cin * g.h * g.w);
            }
          }
          if (grads.size() > 2 && grads[2]) {
            for (std::size_t c = 0; c < g.cout; ++c) {
              const Real* src = grad.data().data() + (b * g.cout + c) * cols;
              Real acc = 0;
              for (std::size_t i = 0; i < cols; ++i) acc += src[i];
              (*grads[2])[c] += acc;
            }
          }
        }
      });
}

Var max_pool2d(Var input, std::size_t window) {
  const Tensor& in = input.value();
  if (in.rank() != 4) throw DimensionError("max_pool2d expects B x C x H x W, got " + shape_to_string(in.shape()));
  if (window == 0 || in.dim(2) < window || in.dim(3) < window) {
    throw ConfigError("max_pool2d: window " + std::to_string(window) + " does not fit " +
                      shape_to_string(in.shape()));
  }
  const std::size_t planes = in.dim(0) * in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t ho = h / window, wo = w / window;
  Tensor out({in.dim(0), in.dim(1), ho, wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* plane = in.data().data() + p * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        Real best = -std::numeric_limits<Real>::infinity();
        std::size_t best_at = 0;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t at = (oy * window + dy) * w + ox * window + dx;
            if (plane[at] > best) {
              best = plane[at];
              best_at = at;
            }
          }
        }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = best;
        (*argmax)[o] = p * h * w + best_at;
      }
    }
  }
  return input.tape->record("max_pool2d", std::move(out), {input.id},
                            [argmax](const Tensor& g, std::span<Tensor* const> grads) {
                              for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[(*argmax)[i]] += g[i];
                            });
}

Var global_avg_pool(Var input) {
  const Tensor& in = input.value();
  if (in.rank() != 4) {
    throw DimensionError("global_avg_pool expects B x C x H x W, got " + shape_to_string(in.shape()));
  }
  const std::size_t planes = in.dim(0) * in.dim(1), area = in.dim(2) * in.dim(3);
  Tensor out({in.dim(0), in.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    Real acc = 0;
    for (std::size_t i = 0; i < area; ++i) acc += in[p * area + i];
    out[p] = acc / static_cast<Real>(area);
  }
  return input.tape->record("global_avg_pool", std::move(out), {input.id},
                            [planes, area](const Tensor& g, std::span<Tensor* const> grads) {
                              const Real inv = Real{1} / static_cast<Real>(area);
                              for (std::size_t p = 0; p < planes; ++p)
                                for (std::size_t i = 0; i < area; ++i) (*grads[0])[p * area + i] += g[p] * inv;
                            });
}

Var flatten(Var input) {
  const Tensor& in = input.value();
  if (in.rank() < 1) throw DimensionError("flatten needs a batch axis");
  const std::size_t batch = in.dim(0);
  return reshape(input, {batch, batch ? in.numel() / batch : 0});
}

}  // namespace vitkit::ops
