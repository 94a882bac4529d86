#include "babyhgrn/config.hpp"

#include "babyhgrn/errors.hpp"

namespace babyhgrn {

std::string to_string(ArchKind kind) { return kind == ArchKind::hgrn2 ? "hgrn2" : "lstm"; }

ArchKind parse_arch(const std::string& name) {
  if (name == "hgrn2") return ArchKind::hgrn2;
  if (name == "lstm") return ArchKind::lstm;
  fail(ErrorKind::config, "unknown architecture '" + name + "' (expected hgrn2 or lstm)");
}

std::size_t ModelConfig::heads() const {
  if (num_heads != 0) return num_heads;
  return expand_ratio ? hidden_size / expand_ratio : 0;
}

void ModelConfig::validate() const {
  require(vocab_size >= 2, ErrorKind::config, "vocab_size must be at least 2");
  require(hidden_size >= 1, ErrorKind::config, "hidden_size must be positive");
  require(num_layers >= 1, ErrorKind::config, "num_layers must be at least 1");
  if (arch == ArchKind::hgrn2) {
    require(expand_ratio >= 1, ErrorKind::config, "expand_ratio must be at least 1");
    require(hidden_ratio >= 1, ErrorKind::config, "hidden_ratio must be at least 1");
    require(heads() >= 1, ErrorKind::config, "head count resolves to zero");
    require(hidden_size % heads() == 0, ErrorKind::config,
            "hidden_size " + std::to_string(hidden_size) + " not divisible by " +
                std::to_string(heads()) + " heads");
    if (num_heads == 0) {
      require(hidden_size % expand_ratio == 0, ErrorKind::config,
              "derived heads need hidden_size divisible by expand_ratio");
    }
    require(scan_block >= 1, ErrorKind::config, "scan_block must be at least 1");
  } else {
    require(dropout >= 0.0 && dropout < 1.0, ErrorKind::config, "dropout must be in [0, 1)");
  }
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {
      {"arch", to_string(cfg.arch)},
      {"vocab_size", cfg.vocab_size},
      {"hidden_size", cfg.hidden_size},
      {"num_layers", cfg.num_layers},
      {"expand_ratio", cfg.expand_ratio},
      {"hidden_ratio", cfg.hidden_ratio},
      {"num_heads", cfg.num_heads},
      {"scan_block", cfg.scan_block},
      {"scan_mode", cfg.scan_mode == ScanMode::chunked ? "chunked" : "sequential"},
      {"embedding_size", cfg.embedding_size},
      {"dropout", cfg.dropout},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    if (j.contains("arch")) cfg.arch = parse_arch(j.at("arch").get<std::string>());
    auto take = [&](const char* key, std::size_t& field) {
      if (j.contains(key)) field = j.at(key).get<std::size_t>();
    };
    take("vocab_size", cfg.vocab_size);
    take("hidden_size", cfg.hidden_size);
    take("num_layers", cfg.num_layers);
    take("expand_ratio", cfg.expand_ratio);
    take("hidden_ratio", cfg.hidden_ratio);
    take("num_heads", cfg.num_heads);
    take("scan_block", cfg.scan_block);
    take("embedding_size", cfg.embedding_size);
    if (j.contains("dropout")) cfg.dropout = j.at("dropout").get<double>();
    if (j.contains("scan_mode")) {
      const auto mode = j.at("scan_mode").get<std::string>();
      if (mode == "chunked") cfg.scan_mode = ScanMode::chunked;
      else if (mode == "sequential") cfg.scan_mode = ScanMode::sequential;
      else fail(ErrorKind::config, "unknown scan_mode '" + mode + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("malformed model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ModelConfig desk_hgrn2_config(std::size_t vocab_size) {
  ModelConfig cfg;
  cfg.arch = ArchKind::hgrn2;
  cfg.vocab_size = vocab_size;
  cfg.hidden_size = 64;
  cfg.num_layers = 4;
  cfg.expand_ratio = 8;
  cfg.num_heads = 2;
  cfg.hidden_ratio = 4;
  cfg.scan_block = 64;
  return cfg;
}

ModelConfig desk_lstm_config(std::size_t vocab_size) {
  ModelConfig cfg;
  cfg.arch = ArchKind::lstm;
  cfg.vocab_size = vocab_size;
  cfg.hidden_size = 128;
  cfg.embedding_size = 64;
  cfg.num_layers = 2;
  cfg.dropout = 0.1;
  return cfg;
}

namespace {

Preset hgrn2_preset(std::string name, std::size_t hidden, std::size_t layers) {
  Preset p{std::move(name), "hgrn2", true, {}, {}};
  p.config.arch = ArchKind::hgrn2;
  p.config.vocab_size = 16000;
  p.config.hidden_size = hidden;
  p.config.num_layers = layers;
  p.config.hidden_ratio = 4;
  p.config.expand_ratio = 128;
  p.config.num_heads = 0;
  p.fields = {{"Hidden Size", std::to_string(hidden)},
              {"Layers", std::to_string(layers)},
              {"Hidden Ratio", "4"},
              {"Expand Ratio", "128"}};
  return p;
}

std::vector<Preset> build_presets() {
  std::vector<Preset> out;
  out.push_back({"hgrn2-desk", "hgrn2", true, desk_hgrn2_config(), {}});
  out.push_back(hgrn2_preset("hgrn2-360m", 1024, 26));
  out.push_back(hgrn2_preset("hgrn2-1.2b", 2048, 18));

  Preset lstm{"lstm", "lstm", true, {}, {}};
  lstm.config.arch = ArchKind::lstm;
  lstm.config.vocab_size = 16000;
  lstm.config.hidden_size = 9120;
  lstm.config.embedding_size = 512;
  lstm.config.num_layers = 2;
  lstm.config.dropout = 0.1;
  lstm.fields = {{"Hidden Size", "9120"}, {"Embedding Size", "512"}, {"LSTM Layers", "2"},
                 {"Dropout", "0.1"}};
  out.push_back(lstm);
  out.push_back({"lstm-desk", "lstm", true, desk_lstm_config(), {}});

  out.push_back({"transformer", "transformer", false, {},
                 {{"Hidden Size", "1024"}, {"Intermediate Size", "4096"},
                  {"Hidden Layers", "22"}, {"Attention Heads", "32"}}});
  out.push_back({"mamba", "mamba", false, {},
                 {{"Hidden Size", "1024"}, {"Intermediate Size", "2048"},
                  {"Hidden Layers", "48"}, {"State Size", "8"}}});
  out.push_back({"xlstm", "xlstm", false, {},
                 {{"Embedding Size", "1024"}, {"Num Blocks", "48"}, {"mLSTM Heads", "4"},
                  {"Ratio", "[1:0]"}}});
  return out;
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = build_presets();
  return table;
}

const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets()) {
    if (p.name == name) return p;
  }
  fail(ErrorKind::config, "unknown preset '" + name + "'");
}

}  // namespace babyhgrn
