#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "vitkit/autograd.hpp"
#include "vitkit/rng.hpp"
#include "vitkit/tensor.hpp"

// Differentiable operations. Every function reads its inputs' values, never
// mutates them, and records one node on the inputs' tape.
namespace vitkit::ops {

// Elementwise

/// a + b. `b` may equal a's shape or any trailing suffix of it, in which
/// case it is broadcast over the leading axes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product of equal shapes.
Var mul(Var a, Var b);
Var scale(Var a, Real factor);
/// Sum of all elements as a rank-0 tensor.
Var sum(Var a);
Var mean(Var a);

enum class Activation { relu, gelu };

/// Tanh-approximation constant sqrt(2/pi) used by gelu, fixed to ten
/// decimals.
inline constexpr Real kGeluTanhCoeff = 0.7978845608;
inline constexpr Real kGeluCubicCoeff = 0.044715;

Var relu(Var x);
Var gelu(Var x);
Var activation(Var x, Activation kind);

// Linear algebra

/// (m x k) . (k x n) -> (m x n).
Var matmul(Var a, Var b);
/// Batched product (n x m x k) . (n x k x p) -> (n x m x p).
Var bmm(Var a, Var b);
/// Swaps the last two axes.
Var transpose_last2(Var a);
/// Affine map over the last axis: x[..., in] . w[in, out] + b[out].
Var linear(Var x, Var weight, std::optional<Var> bias = std::nullopt);
Var reshape(Var a, Shape shape);
/// out.shape[i] = in.shape[perm[i]].
Var permute(Var a, std::vector<std::size_t> perm);

// Normalization and losses

/// Numerically stable softmax along `axis` (max-shifted).
Var softmax(Var x, std::size_t axis);
/// Standardizes each slice over the last axis, then applies gamma/beta.
Var layer_norm(Var x, Var gamma, Var beta, Real eps = 1e-5);
/// Mean over the batch of -log softmax(logits)[label]; logits are B x C.
Var cross_entropy(Var logits, std::span<const std::size_t> labels);

// Sequence helpers

/// Prepends `token` (D) to each sequence of x (B x N x D) -> B x (N+1) x D.
Var prepend_token(Var x, Var token);
/// Row `index` of each sequence of x (B x T x D) -> B x D.
Var select_token(Var x, std::size_t index);
/// Inverted dropout; identity when p == 0.
Var dropout(Var x, Real p, Rng& rng);

// Convolution

struct Conv2dOptions {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
  std::size_t groups = 1;
};

/// Output extent of one convolution axis, or nullopt if it is not positive.
std::optional<std::size_t> conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                           std::size_t pad);

/// Cross-correlation with zero padding. input B x Cin x H x W, kernel
/// Cout x (Cin/groups) x Kh x Kw, optional per-output-channel bias.
Var conv2d(Var input, Var kernel, std::optional<Var> bias, const Conv2dOptions& options);
/// Non-overlapping max pooling with a square window.
Var max_pool2d(Var input, std::size_t window = 2);
/// Mean over spatial axes: B x C x H x W -> B x C.
Var global_avg_pool(Var input);
/// B x ... -> B x (product of the rest).
Var flatten(Var input);

}  // namespace vitkit::ops
