#include <doctest.h>

#include <cmath>
#include <functional>
#include <filesystem>
#include <fstream>

#include "babyhgrn/checkpoint.hpp"
#include "babyhgrn/evaluation.hpp"
#include "babyhgrn/synthetic.hpp"
#include "babyhgrn/trainer.hpp"

using namespace babyhgrn;
namespace fs = std::filesystem;

namespace {

ErrorKind error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::usage;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "babyhgrn_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ModelConfig tiny(std::size_t vocab) {
  ModelConfig cfg = desk_hgrn2_config(vocab);
  cfg.hidden_size = 32;
  cfg.num_layers = 2;
  cfg.expand_ratio = 4;
  cfg.num_heads = 2;
  cfg.hidden_ratio = 2;
  cfg.scan_block = 16;
  return cfg;
}

LanguageModel uniform_model(std::size_t vocab) {
  LanguageModel model(tiny(vocab), 1);
  for (auto& w : model.parameters().at("lm_head.weight").mutable_data()) w = 0;
  return model;
}

TrainConfig quick_train(std::size_t chunk) {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  cfg.sequence_length = chunk;
  cfg.seed = 5;
  return cfg;
}

// One small trained model shared by the tests below.
struct Trained {
  SyntheticGrammar grammar;
  PackedDataset data;
  LanguageModel model;
  TrainReport report;

  Trained()
      : data(pack(grammar.corpus(30000, 21), grammar.vocabulary(), 64)),
        model(tiny(grammar.vocabulary().vocab_size()), 2) {
    TrainConfig cfg = quick_train(64);
    cfg.epochs = 2;
    report = train(model, data, cfg);
  }
};

const Trained& trained() {
  static const Trained t;
  return t;
}

}  // namespace

TEST_CASE("uniform model scores -n ln V") {
  const auto model = uniform_model(50);
  const std::vector<TokenId> tokens = {4, 9, 30, 7};
  const auto score = sequence_logprob(model, tokens, {}, 1);
  CHECK(score.tokens == 4);
  CHECK(score.logprob == doctest::Approx(-4 * std::log(50.0)).epsilon(1e-6));
  CHECK(score.value(ScoreNorm::per_token) == doctest::Approx(-std::log(50.0)).epsilon(1e-6));
  CHECK(error_kind([&] { sequence_logprob(model, std::vector<TokenId>{}, {}, 1); }) ==
        ErrorKind::data);
}

TEST_CASE("scoring with context obeys the chain rule") {
  LanguageModel model(tiny(40), 3);
  const std::vector<TokenId> a = {5, 6, 7}, b = {8, 9};
  std::vector<TokenId> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const double whole = sequence_logprob(model, ab, {}, 2).logprob;
  const double split = sequence_logprob(model, a, {}, 2).logprob + sequence_logprob(model, b, a, 2).logprob;
  CHECK(whole == doctest::Approx(split).epsilon(1e-5));
}

TEST_CASE("ties are wrong for pairs and resolve to the first choice") {
  SyntheticGrammar grammar;
  const auto model = uniform_model(grammar.vocabulary().vocab_size());
  const std::vector<MinimalPair> pairs = {{"the dog runs .", "the dog run .", "x"}};
  const auto p = eval_minimal_pairs(model, grammar.vocabulary(), pairs);
  CHECK(p.correct == 0);
  CHECK(p.ties == 1);

  const std::vector<ChoiceInstance> first = {{"the dog", {"runs", "sleeps"}, 0, "x"}};
  const std::vector<ChoiceInstance> second = {{"the dog", {"runs", "sleeps"}, 1, "x"}};
  CHECK(eval_choice(model, grammar.vocabulary(), first).correct == 1);
  const auto s = eval_choice(model, grammar.vocabulary(), second);
  CHECK(s.correct == 0);
  CHECK(s.ties == 1);
}

TEST_CASE("task files reject degenerate instances") {
  const auto dir = scratch("tasks");
  std::ofstream(dir / "same.jsonl") << R"({"good": "a b", "bad": "a b", "tag": "t"})" << '\n';
  CHECK(error_kind([&] { load_pairs(dir / "same.jsonl"); }) == ErrorKind::data);
  std::ofstream(dir / "one.jsonl") << R"({"context": "c", "candidates": ["x"], "gold": 0})" << '\n';
  CHECK(error_kind([&] { load_choices(dir / "one.jsonl"); }) == ErrorKind::data);

  SyntheticGrammar grammar;
  const auto pairs = grammar.minimal_pairs(5, 1);
  save_pairs(dir / "pairs.jsonl", pairs);
  const auto loaded = load_pairs(dir / "pairs.jsonl");
  REQUIRE(loaded.size() == 5);
  CHECK(loaded[3].bad == pairs[3].bad);
  const auto items = grammar.choice_instances(5, 4, 1);
  save_choices(dir / "choices.jsonl", items);
  CHECK(load_choices(dir / "choices.jsonl")[2].gold == items[2].gold);
}

TEST_CASE("macro average is the unweighted mean") {
  const std::vector<double> row = {69.4, 55.6, 50.7, 63.0};
  CHECK(macro_average(row) == doctest::Approx(59.675));
  CHECK(std::round(macro_average(row) * 10) / 10 == doctest::Approx(59.7));
  CHECK(macro_average(std::vector<double>{42.0}) == 42.0);
  CHECK(macro_average(std::vector<double>{5, 5, 5}) == 5.0);
  CHECK(error_kind([] { macro_average(std::vector<double>{}); }) == ErrorKind::usage);

  EvalReport report;
  report.tasks.push_back({"a", 3, 4, 0, {}});
  report.tasks.push_back({"b", 1, 2, 0, {}});
  CHECK(report.macro_average() == doctest::Approx(62.5));
  CHECK(report.to_json().contains("macro_average_note"));
}

TEST_CASE("perplexity is the exponential of mean cross-entropy") {
  const auto& t = trained();
  const double ce = mean_cross_entropy(t.model, t.data, 8);
  CHECK(perplexity(t.model, t.data, 8) == doctest::Approx(std::exp(ce)));
  for (const auto& e : t.report.epochs) CHECK(e.perplexity == doctest::Approx(std::exp(e.mean_ce)));
}

TEST_CASE("a trained toy model prefers grammatical text") {
  const auto& t = trained();
  const auto& vocab = t.grammar.vocabulary();
  const double real_text = sequence_logprob(t.model, vocab, "the dog runs . many cats sleep .").logprob;
  const double shuffled = sequence_logprob(t.model, vocab, "runs . dog the sleep cats . many").logprob;
  CHECK(real_text > shuffled);

  const std::vector<ChoiceInstance> verbatim = {
      {"", {"sleep cats many .", "many cats sleep .", "cats . many sleep"}, 1, "verbatim"}};
  CHECK(eval_choice(t.model, vocab, verbatim).correct == 1);

  const auto a = eval_minimal_pairs(t.model, vocab, t.grammar.minimal_pairs(50, 4));
  const auto b = eval_minimal_pairs(t.model, vocab, t.grammar.minimal_pairs(50, 4));
  CHECK(a.correct == b.correct);
}

TEST_CASE("training follows the linear schedule and writes its artifacts") {
  SyntheticGrammar grammar;
  const auto data = pack(grammar.corpus(3000, 1), grammar.vocabulary(), 32);
  LanguageModel model(tiny(grammar.vocabulary().vocab_size()), 4);
  TrainConfig cfg = quick_train(32);
  cfg.epochs = 2;
  cfg.output_dir = scratch("run");
  const auto report = train(model, data, cfg);
  const std::size_t per_epoch = (data.chunk_count() + cfg.batch_size - 1) / cfg.batch_size;
  REQUIRE(report.steps == 2 * per_epoch);
  for (std::size_t s = 0; s < report.steps; ++s) {
    CHECK(report.step_lr[s] == doctest::Approx(cfg.learning_rate * (1.0 - double(s) / double(report.steps))));
  }
  CHECK(fs::exists(cfg.output_dir / "checkpoints" / "epoch_1.bhck"));
  CHECK(fs::exists(cfg.output_dir / "checkpoints" / "epoch_2.bhck"));
  CHECK(checkpoint_bytes(load_checkpoint(report.final_checkpoint)) == checkpoint_bytes(model));

  std::ifstream log(cfg.output_dir / "metrics.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"step", "lr", "loss", "grad_norm", "tokens_per_sec"}) CHECK(j.contains(key));
    ++lines;
  }
  CHECK(lines == report.steps);
}

TEST_CASE("training is deterministic for a fixed seed") {
  SyntheticGrammar grammar;
  const auto data = pack(grammar.corpus(2000, 1), grammar.vocabulary(), 32);
  const auto cfg = quick_train(32);
  LanguageModel a(tiny(grammar.vocabulary().vocab_size()), 6), b(tiny(grammar.vocabulary().vocab_size()), 6);
  const auto ra = train(a, data, cfg);
  const auto rb = train(b, data, cfg);
  CHECK(ra.step_loss == rb.step_loss);
  CHECK(checkpoint_bytes(a) == checkpoint_bytes(b));
}

TEST_CASE("training contract violations") {
  SyntheticGrammar grammar;
  const auto data = pack(grammar.corpus(2000, 1), grammar.vocabulary(), 32);
  LanguageModel model(tiny(grammar.vocabulary().vocab_size()), 7);
  CHECK(error_kind([&] { train(model, data, quick_train(16)); }) == ErrorKind::config);
  TrainConfig bad = quick_train(32);
  bad.max_grad_norm = 0;
  CHECK(error_kind([&] { train(model, data, bad); }) == ErrorKind::config);

  LanguageModel other_vocab(tiny(grammar.vocabulary().vocab_size() + 3), 8);
  DistillConfig distill;
  CHECK(error_kind([&] { train(model, data, quick_train(32), &distill, &other_vocab); }) ==
        ErrorKind::config);
  distill.alpha = 2;
  CHECK(error_kind([&] { distill.validate(); }) == ErrorKind::config);

  TrainConfig explode = quick_train(32);
  explode.learning_rate = 1e30;
  explode.max_grad_norm = 1e30;
  try {
    train(model, data, explode);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("distillation with alpha zero is plain cross-entropy training") {
  SyntheticGrammar grammar;
  const auto data = pack(grammar.corpus(2000, 1), grammar.vocabulary(), 32);
  const auto vocab = grammar.vocabulary().vocab_size();
  LanguageModel teacher(tiny(vocab), 9);
  LanguageModel plain(tiny(vocab), 10), distilled(tiny(vocab), 10);
  DistillConfig distill;
  distill.alpha = 0;
  const auto a = train(plain, data, quick_train(32));
  const auto b = train(distilled, data, quick_train(32), &distill, &teacher);
  CHECK(a.step_loss == b.step_loss);

  DistillPipelineConfig pipeline{tiny(vocab), tiny(vocab), quick_train(32), quick_train(32), {}};
  LanguageModel student(tiny(vocab), 11);
  const auto report = distill_pipeline(pipeline, data, student);
  REQUIRE(report.teacher.has_value());
  CHECK(report.student.step_ce.size() == report.student.step_loss.size());
  CHECK(report.to_json().contains("student_blended_curve"));
}

TEST_CASE("learning-rate sweep ranking") {
  SyntheticGrammar grammar;
  const auto data = pack(grammar.corpus(4000, 1), grammar.vocabulary(), 32);
  const auto vocab = grammar.vocabulary().vocab_size();
  auto factory = [&] { return LanguageModel(tiny(vocab), 12); };

  const auto single = lr_sweep(factory, data, quick_train(32), {3e-4});
  CHECK(single.winner() == 3e-4);

  const auto grid = lr_sweep(factory, data, quick_train(32));
  REQUIRE(grid.runs.size() == 4);
  CHECK(grid.winner() != 1e-6);
  CHECK(grid.runs[grid.ranking.back()].learning_rate == 1e-6);

  const auto tied = lr_sweep(factory, data, quick_train(32), {1e-5, 1e-4},
                             [](const LanguageModel&, const TrainReport&) { return 1.0; });
  CHECK(tied.winner() == 1e-4);

  const auto with_failure = lr_sweep(factory, data, quick_train(32), {1e-3, -1.0});
  CHECK_FALSE(with_failure.runs[1].ok);
  CHECK_FALSE(with_failure.runs[1].error.empty());
  CHECK(with_failure.winner() == 1e-3);
  CHECK_THROWS_AS(lr_sweep(factory, data, quick_train(32), {}), Error);
}

TEST_CASE("config files in both syntaxes") {
  const auto kv = parse_key_values("# comment\nepochs = 5\nlearning_rate=1e-4\noutput_dir = runs/a\n");
  const auto cfg = TrainConfig::from_json(kv);
  CHECK(cfg.epochs == 5);
  CHECK(cfg.learning_rate == 1e-4);
  CHECK(cfg.output_dir == "runs/a");
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.sequence_length == 512);

  const auto dir = scratch("cfg");
  std::ofstream(dir / "c.json") << R"({"alpha": 0.25, "temperature": 2})";
  const auto distill = DistillConfig::from_json(read_config_file(dir / "c.json"));
  CHECK(distill.alpha == 0.25);
  CHECK(distill.temperature == 2.0);

  CHECK(error_kind([] { parse_key_values("no equals sign"); }) == ErrorKind::config);
  CHECK(error_kind([] { TrainConfig::from_json({{"optimizer", "sgd"}}); }) == ErrorKind::config);
  CHECK(error_kind([] { TrainConfig::from_json({{"epochs", "many"}}); }) == ErrorKind::config);
}
