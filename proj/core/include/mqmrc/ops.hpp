#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "mqmrc/tensor.hpp"

namespace mqmrc {

enum class EwKind { Mul, Add, Sub, Max };

/// Matrix product over the trailing two axes. Accepts rank-2 x rank-2,
/// rank-3 x rank-3 with equal leading dim, and either operand rank-2 against
/// the other rank-3 (the rank-2 side is broadcast over the batch).
Tensor matmul(const Tensor& a, const Tensor& b);

/// Pointwise op. Shapes must be equal, or one operand may be a vector whose
/// length equals the other's trailing dimension; the vector is then broadcast
/// across all rows. Max routes the gradient to the larger operand, ties to a.
Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b);

inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Mul, a, b); }
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Sub, a, b); }
inline Tensor emax(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Max, a, b); }

Tensor scale(const Tensor& x, double c);

/// Numerically stable softmax along `axis` (negative counts from the back).
Tensor softmax(const Tensor& x, int axis = -1);

/// -log softmax(logits)[target] for a vector of logits.
Tensor cross_entropy(const Tensor& logits, std::size_t target);

/// Mean of per-row cross-entropies for [N, C] logits with N targets.
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<std::size_t>& targets);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor gelu(const Tensor& x);

/// Inverted dropout: keeps with probability 1-rate and rescales by 1/(1-rate).
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor transpose_last2(const Tensor& x);

/// Row gather: x has shape [n, ...], result [rows.size(), ...]. Rows may
/// repeat; backward scatter-adds.
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows);

/// Stacks k same-shaped tensors along a new leading axis.
Tensor stack_rows(const std::vector<Tensor>& parts);

Tensor split_heads(const Tensor& x, std::size_t n_heads);  // [n,d] -> [h,n,d/h]
Tensor merge_heads(const Tensor& x);                       // [h,n,dh] -> [n,h*dh]

/// x @ w + b with b broadcast across rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace mqmrc
