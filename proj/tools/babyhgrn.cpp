// babyhgrn: corpus sampling, tokenizer training, packing, training,
// distillation, learning-rate sweeps, evaluation and checkpoint inspection.
//
// Settings resolve as: built-in defaults < --config file < explicit flags.
// Each run writes resolved_config.json into its output directory.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "babyhgrn/bpe.hpp"
#include "babyhgrn/checkpoint.hpp"
#include "babyhgrn/corpus.hpp"
#include "babyhgrn/evaluation.hpp"
#include "babyhgrn/packed.hpp"
#include "babyhgrn/synthetic.hpp"
#include "babyhgrn/trainer.hpp"

using namespace babyhgrn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum class Kind { text, integer, real, flag };

struct Setting {
  std::string key;  // config-file key; the flag is --key with '_' -> '-'
  Kind kind;
  json fallback;    // null = no default
  std::string help;
};

struct Command {
  std::string name;
  std::string summary;
  std::vector<Setting> settings;
  int (*run)(const json& cfg, const fs::path& out);
};

const std::vector<Setting> kCommon = {
    {"seed", Kind::integer, 0, "random seed"},
    {"workers", Kind::integer, 1, "cap on worker threads (all work is single-threaded)"},
};

const std::vector<Setting> kTrainSettings = {
    {"data", Kind::text, nullptr, "packed dataset (.bhpk)"},
    {"model", Kind::text, "hgrn2-desk", "model preset name"},
    {"model_config", Kind::text, nullptr, "JSON file overriding preset fields"},
    {"epochs", Kind::integer, 3, "training epochs"},
    {"batch_size", Kind::integer, 64, "chunks per step"},
    {"learning_rate", Kind::real, 1e-3, "peak learning rate (linear decay to zero)"},
    {"sequence_length", Kind::integer, nullptr, "chunk length; defaults to the dataset's"},
    {"max_grad_norm", Kind::real, 1.0, "gradient clipping threshold"},
    {"adam_beta1", Kind::real, 0.9, "Adam beta1"},
    {"adam_beta2", Kind::real, 0.999, "Adam beta2"},
    {"adam_eps", Kind::real, 1e-8, "Adam epsilon"},
};

std::string flag_name(std::string key) {
  for (auto& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

// Converts a flag or config value to the setting's JSON type.
json coerce(const Setting& s, const json& raw) {
  const std::string where = "setting '" + s.key + "'";
  try {
    switch (s.kind) {
      case Kind::text:
        if (raw.is_string()) return raw;
        if (raw.is_number()) return raw.dump();
        break;
      case Kind::integer:
        if (raw.is_number_unsigned()) return raw;
        if (raw.is_number_integer() && raw.get<long long>() >= 0) return raw;
        if (raw.is_string()) {
          std::size_t used = 0;
          const auto value = std::stoull(raw.get<std::string>(), &used);
          if (used == raw.get<std::string>().size()) return value;
        }
        break;
      case Kind::real:
        if (raw.is_number()) return raw.get<double>();
        if (raw.is_string()) {
          std::size_t used = 0;
          const auto value = std::stod(raw.get<std::string>(), &used);
          if (used == raw.get<std::string>().size()) return value;
        }
        break;
      case Kind::flag:
        if (raw.is_boolean()) return raw;
        if (raw == "true" || raw == "1") return true;
        if (raw == "false" || raw == "0") return false;
        break;
    }
  } catch (const std::exception&) {
  }
  fail(ErrorKind::usage, where + ": cannot use value " + raw.dump());
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const std::string& need(const json& cfg, const char* key) {
  require(cfg.contains(key) && cfg.at(key).is_string() && !cfg.at(key).get<std::string>().empty(),
          ErrorKind::usage, std::string("missing required setting '") + key + "' (" +
                                flag_name(key) + ")");
  return cfg.at(key).get_ref<const std::string&>();
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  require(bool(out), ErrorKind::usage, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Adds values only known after loading inputs to the snapshot.
void amend_snapshot(const fs::path& out, const json& patch) {
  json snapshot;
  std::ifstream(out / "resolved_config.json") >> snapshot;
  snapshot.update(patch);
  write_json(out / "resolved_config.json", snapshot);
}

// ---- model and training settings -----------------------------------------

ModelConfig resolve_model(const json& cfg, const std::string& preset_key, std::size_t vocab_size,
                          const std::string& override_key = "model_config") {
  const auto& preset = find_preset(cfg.value(preset_key, std::string("hgrn2-desk")));
  require(preset.buildable, ErrorKind::config,
          "preset '" + preset.name + "' documents a published setting and cannot be built");
  json merged = to_json(preset.config);
  if (cfg.contains(override_key) && cfg.at(override_key).is_string()) {
    const json extra = read_config_file(cfg.at(override_key).get<std::string>());
    require(extra.is_object(), ErrorKind::config, "model config must be an object");
    merged.update(extra);
  }
  merged["vocab_size"] = vocab_size;
  return model_config_from_json(merged);
}

TrainConfig resolve_train(const json& cfg, const PackedDataset& data, const fs::path& out) {
  json j = cfg;
  if (!j.contains("sequence_length")) j["sequence_length"] = data.chunk_len;
  TrainConfig tc = TrainConfig::from_json(j);
  tc.output_dir = out;
  return tc;
}

// ---- subcommands ---------------------------------------------------------

int cmd_sample(const json& cfg, const fs::path& out) {
  const auto& plan_arg = need(cfg, "plan");
  SamplingPlan plan;
  if (plan_arg == "mixture-10m" || plan_arg == "mixture-100m") {
    plan = SamplingPlan::from_counts(plan_arg == "mixture-10m" ? mixture_10m_counts() : mixture_100m_counts());
    const auto& source = need(cfg, "source");
    for (auto& d : plan.domains) d.source = source;
  } else {
    const json raw = read_config_file(plan_arg);
    require(!(raw.contains("domains") && raw.at("domains").is_array() && raw.at("domains").empty()),
            ErrorKind::usage, "sampling plan has no domains");
    plan = SamplingPlan::from_json(raw);
  }
  const auto sampled = sample_corpus(plan, cfg.at("total_words").get<std::size_t>(), cfg.at("seed"));
  write_jsonl(out / "corpus.jsonl", sampled.documents);
  write_json(out / "manifest.json", sampled.manifest.to_json());
  std::cout << sampled.manifest.table();
  return 0;
}

std::vector<std::string> corpus_texts(const fs::path& path) {
  std::vector<std::string> texts;
  for (auto& doc : read_jsonl(path)) texts.push_back(std::move(doc.text));
  return texts;
}

int cmd_tokenize(const json& cfg, const fs::path& out) {
  const auto texts = corpus_texts(need(cfg, "input"));
  const auto vocab = BpeVocabulary::train(texts, cfg.at("vocab_size"));
  vocab.save(out / "vocab.json");
  std::cout << "vocabulary: " << vocab.vocab_size() << " tokens (requested " << vocab.requested_size() << ")";
  if (!vocab.reached_requested_size()) std::cout << ", merges ran out early";
  std::cout << "\nwrote " << (out / "vocab.json").string() << '\n';
  return 0;
}

int cmd_pack(const json& cfg, const fs::path& out) {
  const auto texts = corpus_texts(need(cfg, "input"));
  const auto encoder = load_encoder(need(cfg, "vocab"));
  const auto data = pack(texts, *encoder, cfg.at("chunk_len"));
  save_packed(out / "data.bhpk", data);
  std::cout << "chunks: " << data.chunk_count() << " x " << data.chunk_len << " tokens, dropped tail "
            << data.dropped_tokens << "\nwrote " << (out / "data.bhpk").string() << '\n';
  return 0;
}

int cmd_synth(const json& cfg, const fs::path& out) {
  SyntheticGrammar grammar;
  const std::uint64_t seed = cfg.at("seed");
  std::vector<Document> docs;
  for (auto& text : grammar.corpus(cfg.at("words"), seed)) docs.push_back({std::move(text), "synthetic"});
  write_jsonl(out / "corpus.jsonl", docs);
  grammar.vocabulary().save(out / "vocab.json");
  save_pairs(out / "pairs.jsonl", grammar.minimal_pairs(cfg.at("pairs"), seed + 1));
  save_choices(out / "choices.jsonl", grammar.choice_instances(cfg.at("choices"), cfg.at("candidates"), seed + 2));
  std::cout << "wrote corpus.jsonl (" << docs.size() << " documents), vocab.json ("
            << grammar.vocabulary().vocab_size() << " tokens), pairs.jsonl, choices.jsonl to " << out.string()
            << '\n';
  return 0;
}

void print_epochs(const TrainReport& r) {
  std::cout << "epoch  mean CE  perplexity\n";
  for (const auto& e : r.epochs) {
    std::cout << std::setw(5) << e.epoch + 1 << std::fixed << std::setprecision(4) << std::setw(9) << e.mean_ce
              << std::setw(12) << e.perplexity << '\n';
  }
  std::cout << r.steps << " steps in " << std::setprecision(1) << r.wall_seconds << "s; checkpoint "
            << r.final_checkpoint.string() << '\n';
}

int cmd_train(const json& cfg, const fs::path& out) {
  const auto data = load_packed(need(cfg, "data"));
  const auto model_cfg = resolve_model(cfg, "model", data.vocab_size);
  const auto tc = resolve_train(cfg, data, out);
  amend_snapshot(out, {{"sequence_length", tc.sequence_length}, {"resolved_model", to_json(model_cfg)}});
  LanguageModel model(model_cfg, tc.seed);
  const auto report = train(model, data, tc);
  write_json(out / "report.json", report.to_json());
  print_epochs(report);
  return 0;
}

int cmd_distill(const json& cfg, const fs::path& out) {
  const auto data = load_packed(need(cfg, "data"));
  DistillPipelineConfig pc;
  pc.student_model = resolve_model(cfg, "model", data.vocab_size);
  pc.teacher_model = resolve_model(cfg, "teacher_model", data.vocab_size, "teacher_model_config");
  pc.student_train = resolve_train(cfg, data, out / "student");
  pc.teacher_train = pc.student_train;
  pc.teacher_train.output_dir = out / "teacher";
  if (cfg.contains("teacher_epochs")) pc.teacher_train.epochs = cfg.at("teacher_epochs");
  pc.distill = DistillConfig::from_json(cfg);
  pc.distill.validate();
  amend_snapshot(out, {{"sequence_length", pc.student_train.sequence_length},
                       {"resolved_model", to_json(pc.student_model)},
                       {"resolved_teacher_model", to_json(pc.teacher_model)},
                       {"resolved_teacher_epochs", pc.teacher_train.epochs}});

  std::optional<LanguageModel> teacher;
  if (cfg.contains("teacher")) {
    teacher.emplace(load_checkpoint(cfg.at("teacher").get<std::string>()));
    pc.distill.teacher_checkpoint = cfg.at("teacher").get<std::string>();
  }
  LanguageModel student(pc.student_model, pc.student_train.seed);
  const auto report = distill_pipeline(pc, data, student, teacher ? &*teacher : nullptr);
  write_json(out / "report.json", report.to_json());
  if (report.teacher) {
    std::cout << "teacher\n";
    print_epochs(*report.teacher);
  }
  std::cout << "student (alpha " << pc.distill.alpha << ")\n";
  print_epochs(report.student);
  return 0;
}

int cmd_sweep(const json& cfg, const fs::path& out) {
  const auto data = load_packed(need(cfg, "data"));
  const auto model_cfg = resolve_model(cfg, "model", data.vocab_size);
  const auto tc = resolve_train(cfg, data, out);
  std::vector<double> grid;
  for (const auto& item : split(cfg.at("grid").get<std::string>(), ',')) {
    grid.push_back(coerce({"grid", Kind::real, nullptr, ""}, item));
  }
  amend_snapshot(out, {{"sequence_length", tc.sequence_length}, {"resolved_model", to_json(model_cfg)}});
  const std::uint64_t seed = tc.seed;
  const auto result = lr_sweep([&] { return LanguageModel(model_cfg, seed); }, data, tc, grid);
  write_json(out / "sweep.json", result.to_json());
  std::cout << "learning rate  final-epoch CE\n";
  for (const auto& run : result.runs) {
    std::cout << std::setw(13) << std::scientific << std::setprecision(0) << run.learning_rate << "  ";
    if (run.ok) std::cout << std::fixed << std::setprecision(4) << run.metric << '\n';
    else std::cout << "failed: " << run.error << '\n';
  }
  if (const auto w = result.winner()) std::cout << "best: " << std::scientific << std::setprecision(0) << *w << '\n';
  return result.winner() ? 0 : static_cast<int>(ErrorKind::numeric) + 2;
}

int cmd_eval(const json& cfg, const fs::path& out) {
  const auto& checkpoint = need(cfg, "checkpoint");
  const auto model = load_checkpoint(checkpoint);
  const bool any = cfg.contains("pairs") || cfg.contains("choices") || cfg.contains("perplexity");
  require(any, ErrorKind::usage, "nothing to evaluate: give --pairs, --choices and/or --perplexity");
  ScoreOptions options{parse_norm(cfg.at("norm")), parse_start(cfg.at("start"))};

  EvalReport report;
  report.model_id = cfg.value("model_id", fs::path(checkpoint).stem().string());
  std::unique_ptr<TextEncoder> encoder;
  if (cfg.contains("pairs") || cfg.contains("choices")) {
    encoder = load_encoder(need(cfg, "vocab"));
    require(encoder->vocab_size() == model.config().vocab_size, ErrorKind::config,
            "vocabulary size does not match the checkpoint");
  }
  for (const auto& path : split(cfg.value("pairs", std::string()), ',')) {
    auto score = eval_minimal_pairs(model, *encoder, load_pairs(path), options);
    score.task = fs::path(path).stem().string();
    report.tasks.push_back(std::move(score));
  }
  for (const auto& path : split(cfg.value("choices", std::string()), ',')) {
    auto score = eval_choice(model, *encoder, load_choices(path), options);
    score.task = fs::path(path).stem().string();
    report.tasks.push_back(std::move(score));
  }
  if (cfg.contains("perplexity")) {
    report.perplexity = perplexity(model, load_packed(cfg.at("perplexity").get<std::string>()));
  }
  write_json(out / "report.json", report.to_json());
  std::cout << report.table();
  return 0;
}

int cmd_inspect(const json& cfg, const fs::path& out) {
  const auto model = load_checkpoint(need(cfg, "checkpoint"));
  const auto& mc = model.config();
  // Module = parameter name without its last component.
  std::vector<std::pair<std::string, std::size_t>> modules;
  for (const auto& [name, t] : model.parameters()) {
    const auto dot = name.rfind('.');
    const auto module = dot == std::string::npos ? name : name.substr(0, dot);
    if (modules.empty() || modules.back().first != module) modules.emplace_back(module, 0);
    modules.back().second += t.size();
  }
  json j = {{"config", to_json(mc)}, {"parameters", model.parameter_count()}};
  std::cout << to_string(mc.arch) << ": " << model.parameter_count() << " parameters\n";
  for (const auto& [module, n] : modules) {
    std::cout << "  " << std::left << std::setw(28) << module << std::right << std::setw(12) << n << '\n';
    j["modules"][module] = n;
  }
  if (mc.arch == ArchKind::hgrn2) {
    const auto beta = model.lower_bound_values();
    std::cout << "forget-gate lower bounds (layer: min / mean / max)\n";
    for (std::size_t l = 0; l < beta.size(); ++l) {
      double lo = 1, hi = 0, sum = 0;
      for (double b : beta[l]) {
        lo = std::min(lo, b);
        hi = std::max(hi, b);
        sum += b;
      }
      std::cout << "  " << l << ": " << std::fixed << std::setprecision(4) << lo << " / "
                << sum / double(beta[l].size()) << " / " << hi << '\n';
    }
    bool monotone = true;
    for (std::size_t l = 1; l < beta.size(); ++l) {
      for (std::size_t c = 0; c < beta[l].size(); ++c) monotone = monotone && beta[l][c] >= beta[l - 1][c];
    }
    std::cout << "monotone across layers: " << (monotone ? "yes" : "no") << '\n';
    j["lower_bounds"] = beta;
    j["lower_bounds_monotone"] = monotone;
  }
  write_json(out / "inspect.json", j);
  return 0;
}

std::vector<Command> commands() {
  auto with_train = [](std::vector<Setting> extra) {
    std::vector<Setting> all = kTrainSettings;
    all.insert(all.end(), extra.begin(), extra.end());
    return all;
  };
  return {
      {"sample", "sample a domain-stratified corpus from a plan",
       {{"plan", Kind::text, nullptr, "plan JSON, or mixture-10m / mixture-100m"},
        {"source", Kind::text, nullptr, "JSONL pool for the built-in mixtures"},
        {"total_words", Kind::integer, 10000000, "word budget"}},
       cmd_sample},
      {"tokenize", "train a byte-level BPE vocabulary",
       {{"input", Kind::text, nullptr, "corpus JSONL"}, {"vocab_size", Kind::integer, 16000, "target size"}},
       cmd_tokenize},
      {"pack", "tokenize a corpus into fixed-length chunks",
       {{"input", Kind::text, nullptr, "corpus JSONL"},
        {"vocab", Kind::text, nullptr, "vocabulary JSON"},
        {"chunk_len", Kind::integer, 512, "tokens per chunk"}},
       cmd_pack},
      {"synth", "write a synthetic grammar corpus, vocabulary and probe sets",
       {{"words", Kind::integer, 192000, "corpus size in words"},
        {"pairs", Kind::integer, 1000, "minimal pairs"},
        {"choices", Kind::integer, 1000, "choice instances"},
        {"candidates", Kind::integer, 4, "candidates per choice"}},
       cmd_synth},
      {"train", "train a language model", kTrainSettings, cmd_train},
      {"distill", "train a student against a teacher (trains the teacher when none is given)",
       with_train({{"teacher", Kind::text, nullptr, "teacher checkpoint"},
                   {"teacher_model", Kind::text, "hgrn2-desk", "teacher preset when training one"},
                   {"teacher_model_config", Kind::text, nullptr, "JSON overriding teacher preset fields"},
                   {"teacher_epochs", Kind::integer, nullptr, "teacher epochs (default: epochs)"},
                   {"alpha", Kind::real, 0.5, "weight of the distillation term"},
                   {"temperature", Kind::real, 1.0, "softmax temperature"}}),
       cmd_distill},
      {"sweep", "train once per learning rate and rank by final-epoch CE",
       with_train({{"grid", Kind::text, "1e-3,1e-4,1e-5,1e-6", "comma-separated learning rates"}}), cmd_sweep},
      {"eval", "score minimal pairs, choice probes and perplexity",
       {{"checkpoint", Kind::text, nullptr, "model checkpoint"},
        {"vocab", Kind::text, nullptr, "vocabulary JSON"},
        {"pairs", Kind::text, nullptr, "comma-separated minimal-pair JSONL files"},
        {"choices", Kind::text, nullptr, "comma-separated choice JSONL files"},
        {"perplexity", Kind::text, nullptr, "packed dataset for perplexity"},
        {"norm", Kind::text, "none", "score normalisation: none | per-token"},
        {"start", Kind::text, "boundary", "conditioning token: boundary | bos"},
        {"model_id", Kind::text, nullptr, "name in the report"}},
       cmd_eval},
      {"inspect", "print parameter counts and forget-gate lower bounds",
       {{"checkpoint", Kind::text, nullptr, "model checkpoint"}}, cmd_inspect},
  };
}

int exit_code(ErrorKind kind) { return 2 + static_cast<int>(kind); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"babyhgrn: small recurrent language models from corpus to evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  const auto cmds = commands();
  struct Parsed {
    CLI::App* app = nullptr;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::string config_path;
    std::string out;
  };
  std::vector<Parsed> parsed(cmds.size());
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    auto& p = parsed[i];
    p.app = app.add_subcommand(cmds[i].name, cmds[i].summary);
    p.app->add_option("--config", p.config_path, "JSON or key=value settings file");
    p.app->add_option("--out", p.out, "output directory (default $BABYHGRN_OUT/<command> or runs/<command>)");
    std::vector<Setting> all = cmds[i].settings;
    all.insert(all.end(), kCommon.begin(), kCommon.end());
    for (const auto& s : all) {
      std::string help = s.help;
      if (!s.fallback.is_null()) help += " [" + (s.fallback.is_string() ? s.fallback.get<std::string>() : s.fallback.dump()) + "]";
      p.options[s.key] = p.app->add_option(flag_name(s.key), p.values[s.key], help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::usage);
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!parsed[i].app->parsed()) continue;
    const auto& cmd = cmds[i];
    auto& p = parsed[i];
    try {
      std::vector<Setting> all = cmd.settings;
      all.insert(all.end(), kCommon.begin(), kCommon.end());
      std::map<std::string, const Setting*> by_key;
      for (const auto& s : all) by_key[s.key] = &s;

      json cfg = json::object();
      for (const auto& s : all) {
        if (!s.fallback.is_null()) cfg[s.key] = s.fallback;
      }
      if (!p.config_path.empty()) {
        const json file = read_config_file(p.config_path);
        require(file.is_object(), ErrorKind::config, "config file must hold an object");
        for (const auto& [key, value] : file.items()) {
          require(by_key.count(key) > 0, ErrorKind::usage,
                  "unknown setting '" + key + "' in " + p.config_path + " for '" + cmd.name + "'");
          cfg[key] = value.is_null() ? value : coerce(*by_key.at(key), value);
          if (value.is_null()) cfg.erase(key);
        }
      }
      for (const auto& s : all) {
        if (p.options.at(s.key)->count() > 0) cfg[s.key] = coerce(s, p.values.at(s.key));
      }
      require(cfg.at("workers").get<std::size_t>() >= 1, ErrorKind::usage, "--workers must be at least 1");

      fs::path out = p.out;
      if (out.empty()) {
        const char* root = std::getenv("BABYHGRN_OUT");
        out = fs::path(root && *root ? root : "runs") / cmd.name;
      }
      fs::create_directories(out);
      json snapshot = cfg;
      snapshot["command"] = cmd.name;
      snapshot["output_dir"] = out.string();
      write_json(out / "resolved_config.json", snapshot);
      return cmd.run(cfg, out);
    } catch (const Error& e) {
      std::cerr << "babyhgrn " << cmd.name << ": " << to_string(e.kind()) << " error: " << e.what() << '\n';
      return exit_code(e.kind());
    } catch (const std::exception& e) {
      std::cerr << "babyhgrn " << cmd.name << ": " << e.what() << '\n';
      return 1;
    }
  }
  return exit_code(ErrorKind::usage);
}
