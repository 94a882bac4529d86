#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "babyhgrn/random.hpp"
#include "babyhgrn/tensor.hpp"

// Differentiable operations. Unless stated otherwise, binary ops require equal
// shapes. The only broadcasts are the *_row variants, which apply a vector of
// length n across every row of an [m x n] matrix.
namespace babyhgrn {

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, real factor);
// a * factor + offset
Tensor affine(const Tensor& a, real factor, real offset);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// x * sigmoid(x)
Tensor silu(const Tensor& a);

// Along the last axis, max-subtracted.
Tensor softmax(const Tensor& z);
Tensor log_softmax(const Tensor& z);

// [m] x [n] -> [m x n]
Tensor outer_product(const Tensor& a, const Tensor& b);
// diag(d) . s for d [m], s [m x n]
Tensor diag_scale(const Tensor& d, const Tensor& s);

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
// Row lookup: out[i] = table[ids[i]]. Doubles as the embedding op.
Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids);

// Scalar reductions, accumulated in f64.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// x / sqrt(mean(x^2) + eps) * gain, per row of [m x n].
Tensor rms_norm(const Tensor& x, const Tensor& gain, real eps = real(1e-6));

// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, real p, Rng& rng);

}  // namespace babyhgrn
