#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "babyhgrn/tensor.hpp"

namespace babyhgrn {

// Extents of one gated linear recurrence call. Inputs are row-major with one
// row per (sequence, step), row index = b * steps + t:
//   q, f, k : [batch*steps x heads*key_dim]
//   v, out  : [batch*steps x heads*value_dim]
//   state   : [batch x heads*key_dim*value_dim], head-major, then key, then value
struct RecurrenceDims {
  std::size_t batch = 1;
  std::size_t steps = 1;
  std::size_t heads = 1;
  std::size_t key_dim = 1;
  std::size_t value_dim = 1;

  std::size_t rows() const { return batch * steps; }
  std::size_t key_width() const { return heads * key_dim; }
  std::size_t value_width() const { return heads * value_dim; }
  std::size_t state_width() const { return heads * key_dim * value_dim; }
};

enum class ScanMode { sequential, chunked };

struct RecurrenceResult {
  std::vector<real> output;
  std::vector<real> final_state;
};

// Reference path. Per head and step:
//   S_t = diag(f_t) S_{t-1} + k_t v_t^T,   o_t = S_t^T q_t
// `initial_state` may be empty (zeros). Accumulates in f64.
RecurrenceResult recurrence_sequential(const RecurrenceDims& dims, std::span<const real> q,
                                       std::span<const real> f, std::span<const real> k,
                                       std::span<const real> v,
                                       std::span<const real> initial_state);

// Same contract, evaluated blockwise: every block is first summarised from a
// zero state, block entry states come from an inclusive scan over the
// summaries, then each block's outputs are formed from its entry state plus an
// intra-block decay-weighted mixing matrix. block == 1 is the step recurrence.
RecurrenceResult recurrence_chunked(const RecurrenceDims& dims, std::size_t block,
                                    std::span<const real> q, std::span<const real> f,
                                    std::span<const real> k, std::span<const real> v,
                                    std::span<const real> initial_state);

// Effect of one span of steps on a single head's state:
//   S_out = diag(decay) S_in + state
struct BlockSummary {
  std::vector<double> decay;  // [key_dim]
  std::vector<double> state;  // [key_dim x value_dim]
};

// Summary of applying `earlier` and then `later`. Associative.
BlockSummary combine(const BlockSummary& earlier, const BlockSummary& later);

struct RecurrenceGrads {
  std::vector<real> q, f, k, v, initial_state;
};

// Reverse pass; either upstream gradient may be empty (treated as zero).
RecurrenceGrads recurrence_backward(const RecurrenceDims& dims, std::span<const real> q,
                                    std::span<const real> f, std::span<const real> k,
                                    std::span<const real> v,
                                    std::span<const real> initial_state,
                                    std::span<const real> d_output,
                                    std::span<const real> d_final_state);

struct RecurrenceOutputs {
  Tensor output;       // [batch*steps x heads*value_dim]
  Tensor final_state;  // [batch x heads*key_dim*value_dim]
};

// Differentiable wrapper. `initial_state` may be an undefined Tensor.
RecurrenceOutputs gated_recurrence(const Tensor& q, const Tensor& f, const Tensor& k,
                                   const Tensor& v, const Tensor& initial_state,
                                   const RecurrenceDims& dims, ScanMode mode,
                                   std::size_t block);

}  // namespace babyhgrn
