#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "babyhgrn/config.hpp"
#include "babyhgrn/random.hpp"
#include "babyhgrn/tensor.hpp"

namespace babyhgrn {

using TokenId = std::int64_t;

// `batch` sequences of `steps` tokens, row-major.
struct TokenBatch {
  std::size_t batch = 1;
  std::size_t steps = 0;
  std::vector<TokenId> ids;

  static TokenBatch single(std::span<const TokenId> tokens);
};

// Insertion-ordered named tensors. Order fixes checkpoint layout and
// optimizer traversal.
class ParameterStore {
 public:
  Tensor& add(std::string name, Tensor tensor);
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  std::size_t element_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Per-layer recurrent state. HGRN2 keeps one [batch x heads*key*value] matrix
// per layer; LSTM keeps h and c per layer. Empty means zeros.
struct ModelState {
  std::vector<Tensor> layers;
  std::size_t position = 0;

  bool empty() const { return layers.empty(); }
  void reset() {
    layers.clear();
    position = 0;
  }
};

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // dropout draws; required when training with dropout > 0
  std::optional<ScanMode> scan_mode;
  std::optional<std::size_t> scan_block;
};

// Per-layer forget-gate floors from logits gammas [L x F]: a softmax over the
// layer axis, cumulatively summed from the bottom with the first layer's mass
// removed. Row 0 is zero, rows are non-decreasing and stay below 1.
Tensor monotone_lower_bounds(const Tensor& gammas);

class LanguageModel {
 public:
  LanguageModel(ModelConfig config, std::uint64_t seed);
  LanguageModel(ModelConfig config, ParameterStore parameters);

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

  // Logits [batch*steps x vocab]; row b*steps+t depends only on tokens
  // [b, 0..t] (and on `state`, which is advanced when given).
  Tensor forward(const TokenBatch& tokens, const ForwardOptions& options = {},
                 ModelState* state = nullptr) const;

  // HGRN2 only: [num_layers x forget_dim].
  Tensor lower_bounds() const;
  std::vector<std::vector<double>> lower_bound_values() const;

  std::size_t parameter_count() const { return params_.element_count(); }
  std::size_t layer_parameter_count(std::size_t layer) const;
  // Element counts grouped by top-level module (embed, layers.N, final_norm, lm_head, ...).
  std::vector<std::pair<std::string, std::size_t>> parameter_breakdown() const;

  LanguageModel clone() const;

 private:
  Tensor forward_hgrn2(const TokenBatch& tokens, const ForwardOptions& options,
                       ModelState* state) const;
  Tensor forward_lstm(const TokenBatch& tokens, const ForwardOptions& options,
                      ModelState* state) const;

  ModelConfig config_;
  ParameterStore params_;
};

}  // namespace babyhgrn
