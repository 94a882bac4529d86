#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "babyhgrn/recurrence.hpp"

namespace babyhgrn {

enum class ArchKind { hgrn2, lstm };

std::string to_string(ArchKind kind);
ArchKind parse_arch(const std::string& name);

struct ModelConfig {
  ArchKind arch = ArchKind::hgrn2;
  std::size_t vocab_size = 2000;
  std::size_t hidden_size = 64;
  std::size_t num_layers = 4;
  // HGRN2: per-head key (state expansion) width.
  std::size_t expand_ratio = 8;
  // Channel-mixing width multiplier.
  std::size_t hidden_ratio = 4;
  // 0 derives hidden_size / expand_ratio heads, which keeps the layer's
  // parameter count independent of expand_ratio.
  std::size_t num_heads = 2;
  std::size_t scan_block = 64;
  ScanMode scan_mode = ScanMode::chunked;
  // LSTM only.
  std::size_t embedding_size = 0;  // 0 = hidden_size
  double dropout = 0.1;

  std::size_t heads() const;
  std::size_t key_dim() const { return expand_ratio; }
  std::size_t forget_dim() const { return heads() * expand_ratio; }
  std::size_t head_value_dim() const { return hidden_size / heads(); }
  std::size_t mlp_width() const { return hidden_ratio * hidden_size; }
  std::size_t lstm_input_size() const { return embedding_size ? embedding_size : hidden_size; }

  // Throws ErrorKind::config on violated invariants.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Named configurations. Only hgrn2 and lstm kinds are buildable; the other
// entries document published settings.
struct Preset {
  std::string name;
  std::string family;
  bool buildable = false;
  ModelConfig config;
  std::vector<std::pair<std::string, std::string>> fields;
};

const std::vector<Preset>& presets();
const Preset& find_preset(const std::string& name);

ModelConfig desk_hgrn2_config(std::size_t vocab_size = 2000);
ModelConfig desk_lstm_config(std::size_t vocab_size = 2000);

}  // namespace babyhgrn
