#include "babyhgrn/model.hpp"

#include <cmath>

#include "babyhgrn/ops.hpp"
#include "babyhgrn/recurrence.hpp"

namespace babyhgrn {

TokenBatch TokenBatch::single(std::span<const TokenId> tokens) {
  return TokenBatch{1, tokens.size(), std::vector<TokenId>(tokens.begin(), tokens.end())};
}

Tensor& ParameterStore::add(std::string name, Tensor tensor) {
  require(!contains(name), ErrorKind::usage, "duplicate parameter '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

Tensor& ParameterStore::at(std::string_view name) {
  for (auto& [key, t] : entries_)
    if (key == name) return t;
  fail(ErrorKind::usage, "no parameter named '" + std::string(name) + "'");
}

const Tensor& ParameterStore::at(std::string_view name) const {
  for (const auto& [key, t] : entries_)
    if (key == name) return t;
  fail(ErrorKind::usage, "no parameter named '" + std::string(name) + "'");
}

bool ParameterStore::contains(std::string_view name) const {
  for (const auto& [key, t] : entries_)
    if (key == name) return true;
  return false;
}

std::size_t ParameterStore::element_count() const {
  std::size_t n = 0;
  for (const auto& [key, t] : entries_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [key, t] : entries_) t.zero_grad();
}

Tensor monotone_lower_bounds(const Tensor& gammas) {
  require(gammas.rank() == 2, ErrorKind::dimension, "lower bounds expect [layers x width] logits");
  const std::size_t layers = gammas.dim(0), width = gammas.dim(1);
  require(layers >= 1, ErrorKind::dimension, "lower bounds need at least one layer");
  const auto g = gammas.data();
  std::vector<double> probs(layers * width);
  std::vector<real> out(layers * width, real(0));
  for (std::size_t c = 0; c < width; ++c) {
    double top = g[c];
    for (std::size_t l = 1; l < layers; ++l) top = std::max<double>(top, g[l * width + c]);
    double total = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      probs[l * width + c] = std::exp(double(g[l * width + c]) - top);
      total += probs[l * width + c];
    }
    double cumulative = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      probs[l * width + c] /= total;
      if (l > 0) cumulative += probs[l * width + c];
      out[l * width + c] = static_cast<real>(cumulative);
    }
  }
  return detail::make_result(
      {layers, width}, std::move(out), "monotone_lower_bounds", {gammas},
      [layers, width, probs = std::move(probs)](detail::Node& self) {
        auto& parent = *self.parents[0];
        if (!parent.requires_grad) return;
        auto& grad = parent.ensure_grad();
        std::vector<double> dp(layers);
        for (std::size_t c = 0; c < width; ++c) {
          // beta_l = sum_{1<=j<=l} p_j  =>  dp_j = sum_{l>=j} dbeta_l for j >= 1
          double suffix = 0;
          for (std::size_t l = layers; l-- > 1;) {
            suffix += self.grad[l * width + c];
            dp[l] = suffix;
          }
          dp[0] = 0;
          double dot = 0;
          for (std::size_t l = 0; l < layers; ++l) dot += dp[l] * probs[l * width + c];
          for (std::size_t l = 0; l < layers; ++l) {
            grad[l * width + c] += static_cast<real>(probs[l * width + c] * (dp[l] - dot));
          }
        }
      });
}

namespace {

std::string layer_prefix(std::size_t l) { return "layers." + std::to_string(l) + "."; }

enum class Init { ones, zeros, uniform };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
  double stddev = 0;
};

// Names, shapes and initial distributions, in storage order.
std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
  std::vector<ParamSpec> out;
  const std::size_t v = c.vocab_size;
  if (c.arch == ArchKind::hgrn2) {
    const std::size_t d = c.hidden_size, fd = c.forget_dim(), w = c.mlp_width();
    const double proj = 1.0 / std::sqrt(double(d));
    out.push_back({"embed.weight", {v, d}, Init::uniform, proj});
    for (std::size_t l = 0; l < c.num_layers; ++l) {
      const auto p = layer_prefix(l);
      out.push_back({p + "attn_norm.gain", {d}, Init::ones});
      out.push_back({p + "attn.q_proj", {d, fd}, Init::uniform, proj});
      out.push_back({p + "attn.f_proj", {d, fd}, Init::uniform, proj});
      out.push_back({p + "attn.i_proj", {d, d}, Init::uniform, proj});
      out.push_back({p + "attn.o_proj", {d, d}, Init::uniform, proj});
      out.push_back({p + "mlp_norm.gain", {d}, Init::ones});
      out.push_back({p + "mlp.gate_proj", {d, w}, Init::uniform, proj});
      out.push_back({p + "mlp.up_proj", {d, w}, Init::uniform, proj});
      out.push_back({p + "mlp.down_proj", {w, d}, Init::uniform, 1.0 / std::sqrt(double(w))});
    }
    out.push_back({"lower_bounds", {c.num_layers, fd}, Init::zeros});
    out.push_back({"final_norm.gain", {d}, Init::ones});
    out.push_back({"lm_head.weight", {d, v}, Init::uniform, proj});
  } else {
    const std::size_t h = c.hidden_size, e = c.lstm_input_size();
    out.push_back({"embed.weight", {v, e}, Init::uniform, 1.0 / std::sqrt(double(e))});
    for (std::size_t l = 0; l < c.num_layers; ++l) {
      const auto p = "lstm." + std::to_string(l) + ".";
      const std::size_t in = l == 0 ? e : h;
      out.push_back({p + "w_ih", {in, 4 * h}, Init::uniform, 1.0 / std::sqrt(double(in))});
      out.push_back({p + "w_hh", {h, 4 * h}, Init::uniform, 1.0 / std::sqrt(double(h))});
      out.push_back({p + "bias", {4 * h}, Init::zeros});
    }
    out.push_back({"final_norm.gain", {h}, Init::ones});
    out.push_back({"lm_head.weight", {h, v}, Init::uniform, 1.0 / std::sqrt(double(h))});
  }
  return out;
}

Tensor initial_value(const ParamSpec& spec, Rng& rng) {
  switch (spec.init) {
    case Init::ones: return Tensor::full(spec.shape, real(1), true);
    case Init::zeros: return Tensor::zeros(spec.shape, true);
    case Init::uniform: break;
  }
  // Uniform with the requested standard deviation.
  const double bound = std::sqrt(3.0) * spec.stddev;
  std::vector<real> values(numel(spec.shape));
  for (auto& x : values) x = static_cast<real>(rng.uniform(-bound, bound));
  return Tensor::from(spec.shape, std::move(values), true);
}

}  // namespace

LanguageModel::LanguageModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  for (const auto& spec : parameter_layout(config_)) {
    params_.add(spec.name, initial_value(spec, rng));
  }
}

LanguageModel::LanguageModel(ModelConfig config, ParameterStore parameters)
    : config_(std::move(config)), params_(std::move(parameters)) {
  config_.validate();
  const auto layout = parameter_layout(config_);
  require(layout.size() == params_.size(), ErrorKind::config,
          "parameter set does not match the model config");
  for (const auto& spec : layout) {
    require(params_.contains(spec.name), ErrorKind::config, "missing parameter '" + spec.name + "'");
    const auto& shape = params_.at(spec.name).shape();
    require(shape == spec.shape, ErrorKind::config,
            "parameter '" + spec.name + "' has shape " + shape_string(shape) + ", expected " +
                shape_string(spec.shape));
  }
}

Tensor LanguageModel::forward(const TokenBatch& tokens, const ForwardOptions& options,
                              ModelState* state) const {
  require(tokens.ids.size() == tokens.batch * tokens.steps, ErrorKind::dimension,
          "token batch holds " + std::to_string(tokens.ids.size()) + " ids for " +
              std::to_string(tokens.batch) + "x" + std::to_string(tokens.steps));
  require(tokens.steps >= 1, ErrorKind::data, "empty token sequence");
  for (TokenId id : tokens.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      fail(ErrorKind::data, "token id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(config_.vocab_size));
    }
  }
  Tensor logits = config_.arch == ArchKind::hgrn2 ? forward_hgrn2(tokens, options, state)
                                                  : forward_lstm(tokens, options, state);
  if (state) state->position += tokens.steps;
  return logits;
}

Tensor LanguageModel::lower_bounds() const {
  require(config_.arch == ArchKind::hgrn2, ErrorKind::usage, "lower bounds exist only for hgrn2");
  return monotone_lower_bounds(params_.at("lower_bounds"));
}

std::vector<std::vector<double>> LanguageModel::lower_bound_values() const {
  NoGradGuard no_grad;
  const Tensor beta = lower_bounds();
  const std::size_t width = beta.dim(1);
  std::vector<std::vector<double>> rows(beta.dim(0));
  for (std::size_t l = 0; l < rows.size(); ++l) {
    rows[l].assign(beta.data().begin() + l * width, beta.data().begin() + (l + 1) * width);
  }
  return rows;
}

Tensor LanguageModel::forward_hgrn2(const TokenBatch& tokens, const ForwardOptions& options,
                                    ModelState* state) const {
  const auto& c = config_;
  const ScanMode mode = options.scan_mode.value_or(c.scan_mode);
  const std::size_t block = options.scan_block.value_or(c.scan_block);
  const RecurrenceDims dims{tokens.batch, tokens.steps, c.heads(), c.key_dim(), c.head_value_dim()};
  if (state && !state->empty()) {
    require(state->layers.size() == c.num_layers, ErrorKind::usage, "state has wrong layer count");
  }

  Tensor x = gather_rows(params_.at("embed.weight"), tokens.ids);
  const Tensor beta = lower_bounds();
  std::vector<Tensor> next_state;
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const auto p = layer_prefix(l);
    try {
      const Tensor h = rms_norm(x, params_.at(p + "attn_norm.gain"));
      const Tensor q = matmul(h, params_.at(p + "attn.q_proj"));
      const Tensor gate_logits = matmul(h, params_.at(p + "attn.f_proj"));
      const Tensor v = matmul(h, params_.at(p + "attn.i_proj"));

      const Tensor floor = slice_rows(beta, l, l + 1);
      const Tensor forget =
          add_row(mul_row(sigmoid(gate_logits), affine(floor, real(-1), real(1))), floor);
      const Tensor input_gate = affine(forget, real(-1), real(1));

      const Tensor s0 = (state && !state->empty()) ? state->layers[l] : Tensor();
      auto rec = gated_recurrence(q, forget, input_gate, v, s0, dims, mode, block);
      x = add(x, matmul(rec.output, params_.at(p + "attn.o_proj")));
      next_state.push_back(rec.final_state);

      const Tensor h2 = rms_norm(x, params_.at(p + "mlp_norm.gain"));
      const Tensor gated = mul(silu(matmul(h2, params_.at(p + "mlp.gate_proj"))),
                               matmul(h2, params_.at(p + "mlp.up_proj")));
      x = add(x, matmul(gated, params_.at(p + "mlp.down_proj")));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
      fail(ErrorKind::numeric, "layer " + std::to_string(l) + ": " + e.what());
    }
  }
  if (state) state->layers = std::move(next_state);
  x = rms_norm(x, params_.at("final_norm.gain"));
  return matmul(x, params_.at("lm_head.weight"));
}

Tensor LanguageModel::forward_lstm(const TokenBatch& tokens, const ForwardOptions& options,
                                   ModelState* state) const {
  const auto& c = config_;
  const std::size_t hsz = c.hidden_size, batch = tokens.batch, steps = tokens.steps;
  if (state && !state->empty()) {
    require(state->layers.size() == 2 * c.num_layers, ErrorKind::usage,
            "state has wrong layer count");
  }

  std::vector<std::vector<std::int64_t>> step_rows(steps, std::vector<std::int64_t>(batch));
  std::vector<std::int64_t> to_batch_major(batch * steps);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      step_rows[t][b] = static_cast<std::int64_t>(b * steps + t);
      to_batch_major[b * steps + t] = static_cast<std::int64_t>(t * batch + b);
    }
  }

  Tensor x = gather_rows(params_.at("embed.weight"), tokens.ids);
  std::vector<Tensor> next_state;
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const auto p = "lstm." + std::to_string(l) + ".";
    if (l > 0 && options.training && c.dropout > 0) {
      require(options.rng != nullptr, ErrorKind::usage, "training with dropout needs an rng");
      x = dropout(x, static_cast<real>(c.dropout), *options.rng);
    }
    try {
      const Tensor projected = add_row(matmul(x, params_.at(p + "w_ih")), params_.at(p + "bias"));
      const Tensor& w_hh = params_.at(p + "w_hh");
      Tensor h, cell;
      if (state && !state->empty()) {
        h = state->layers[2 * l];
        cell = state->layers[2 * l + 1];
      } else {
        h = Tensor::zeros({batch, hsz});
        cell = Tensor::zeros({batch, hsz});
      }
      std::vector<Tensor> outputs;
      outputs.reserve(steps);
      for (std::size_t t = 0; t < steps; ++t) {
        const Tensor gates = add(gather_rows(projected, step_rows[t]), matmul(h, w_hh));
        const Tensor in_gate = sigmoid(slice_cols(gates, 0, hsz));
        const Tensor forget = sigmoid(slice_cols(gates, hsz, 2 * hsz));
        const Tensor candidate = tanh(slice_cols(gates, 2 * hsz, 3 * hsz));
        const Tensor out_gate = sigmoid(slice_cols(gates, 3 * hsz, 4 * hsz));
        cell = add(mul(forget, cell), mul(in_gate, candidate));
        h = mul(out_gate, tanh(cell));
        outputs.push_back(h);
      }
      next_state.push_back(h);
      next_state.push_back(cell);
      x = gather_rows(concat_rows(outputs), to_batch_major);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
      fail(ErrorKind::numeric, "lstm layer " + std::to_string(l) + ": " + e.what());
    }
  }
  if (state) state->layers = std::move(next_state);
  x = rms_norm(x, params_.at("final_norm.gain"));
  return matmul(x, params_.at("lm_head.weight"));
}

std::size_t LanguageModel::layer_parameter_count(std::size_t layer) const {
  require(layer < config_.num_layers, ErrorKind::usage, "layer index out of range");
  const std::string prefix = config_.arch == ArchKind::hgrn2
                                 ? layer_prefix(layer)
                                 : "lstm." + std::to_string(layer) + ".";
  std::size_t n = 0;
  for (const auto& [name, t] : params_) {
    if (name.rfind(prefix, 0) == 0) n += t.size();
  }
  // The layer's own row of forget-gate floor logits.
  if (config_.arch == ArchKind::hgrn2) n += config_.forget_dim();
  return n;
}

std::vector<std::pair<std::string, std::size_t>> LanguageModel::parameter_breakdown() const {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& [name, t] : params_) {
    std::string group = name.substr(0, name.find('.'));
    if (group == "layers" || group == "lstm") {
      const auto second = name.find('.', group.size() + 1);
      group = name.substr(0, second);
    }
    if (!out.empty() && out.back().first == group) out.back().second += t.size();
    else out.emplace_back(group, t.size());
  }
  return out;
}

LanguageModel LanguageModel::clone() const {
  ParameterStore copy;
  for (const auto& [name, t] : params_) {
    copy.add(name, Tensor::from(t.shape(), std::vector<real>(t.data().begin(), t.data().end()),
                                t.requires_grad()));
  }
  return LanguageModel(config_, std::move(copy));
}

}  // namespace babyhgrn
