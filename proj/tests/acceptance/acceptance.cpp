// Acceptance run: one PASS/FAIL line per criterion. Artifacts (training
// curves, manifests) go to ./acceptance_artifacts.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "babyhgrn/bpe.hpp"
#include "babyhgrn/checkpoint.hpp"
#include "babyhgrn/corpus.hpp"
#include "babyhgrn/evaluation.hpp"
#include "babyhgrn/losses.hpp"
#include "babyhgrn/model.hpp"
#include "babyhgrn/recurrence.hpp"
#include "babyhgrn/synthetic.hpp"
#include "babyhgrn/trainer.hpp"

using namespace babyhgrn;
namespace fs = std::filesystem;

namespace {

const fs::path kArtifacts = "acceptance_artifacts";

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& check) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(),
              seconds_since(start));
  std::fflush(stdout);
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// ---- 1 -------------------------------------------------------------------

Outcome gradient_integrity() {
  const auto start = Clock::now();
  FILE* pipe = popen(BABYHGRN_GRADIENT_HELPER, "r");
  if (!pipe) return {false, "could not start the f64 gradient helper"};
  std::string line;
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) line += buf.data();
  const int status = pclose(pipe);
  const double elapsed = seconds_since(start);
  if (!line.empty() && line.back() == '\n') line.pop_back();

  std::size_t cases = 0, checked = 0, model_checked = 0, model_params = 0;
  double max_rel = 1e9;
  std::istringstream in(line);
  std::string field;
  while (in >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const auto key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "cases") cases = std::stoul(value);
    if (key == "checked") checked = std::stoul(value);
    if (key == "max_rel") max_rel = std::stod(value);
    if (key == "model_checked") model_checked = std::stoul(value);
    if (key == "model_params") model_params = std::stoul(value);
  }
  const bool pass = status == 0 && cases > 0 && max_rel <= 1e-3 && model_params > 0 &&
                    model_checked == model_params && elapsed < 60;
  return {pass, line + fmt(" | limit 1e-3, helper %.1fs < 60s", elapsed)};
}

// ---- 2 -------------------------------------------------------------------

template <typename A, typename B>
double sup_diff(const A& a, const B& b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, double(std::abs(a[i] - b[i])));
  return worst;
}

Outcome scan_equivalence() {
  Rng rng(2024);
  double worst = 0;
  std::size_t comparisons = 0;
  for (int trial = 0; trial < 100; ++trial) {
    RecurrenceDims d;
    d.batch = 1 + rng.below(2);
    d.steps = 1 + rng.below(64);
    d.heads = std::size_t(1) << rng.below(3);
    d.key_dim = 1 + rng.below(32 / d.heads);
    d.value_dim = 1 + rng.below(32 / d.heads);
    auto fill = [&](std::size_t n, double lo, double hi) {
      std::vector<real> x(n);
      for (auto& e : x) e = real(rng.uniform(lo, hi));
      return x;
    };
    const auto q = fill(d.rows() * d.key_width(), -1, 1);
    const auto f = fill(d.rows() * d.key_width(), 0, 1);
    const auto k = fill(d.rows() * d.key_width(), -1, 1);
    const auto v = fill(d.rows() * d.value_width(), -1, 1);
    const auto s0 = trial % 2 ? fill(d.batch * d.state_width(), -1, 1) : std::vector<real>{};
    const auto ref = recurrence_sequential(d, q, f, k, v, s0);
    for (std::size_t block : {std::size_t{1}, std::size_t{4}, d.steps}) {
      const auto got = recurrence_chunked(d, block, q, f, k, v, s0);
      worst = std::max({worst, sup_diff(got.output, ref.output), sup_diff(got.final_state, ref.final_state)});
      ++comparisons;
    }
  }
  return {worst <= 1e-5, fmt("100 inputs x blocks {1,4,T}: %zu comparisons, max sup-norm %.2e <= 1e-5",
                             comparisons, worst)};
}

// ---- 3 -------------------------------------------------------------------

Outcome lower_bound_law() {
  Rng rng(3);
  std::size_t configs = 0, violations = 0;
  double lo = 1, hi = 0;
  for (std::size_t layers = 1; layers <= 8; ++layers) {
    for (int rep = 0; rep < 4; ++rep) {
      ModelConfig cfg;
      cfg.vocab_size = 16;
      cfg.hidden_size = 8 * (1 + rng.below(4));
      cfg.num_layers = layers;
      cfg.expand_ratio = std::size_t(2) << rng.below(3);
      cfg.num_heads = 0;
      cfg.hidden_ratio = 2;
      LanguageModel model(cfg, 100 + configs);
      for (auto& g : model.parameters().at("lower_bounds").mutable_data()) g = real(rng.uniform(-4, 4));
      const auto beta = model.lower_bound_values();
      for (std::size_t l = 0; l < beta.size(); ++l) {
        for (std::size_t c = 0; c < beta[l].size(); ++c) {
          lo = std::min(lo, beta[l][c]);
          hi = std::max(hi, beta[l][c]);
          if (beta[l][c] < 0 || beta[l][c] >= 1) ++violations;
          if (l > 0 && beta[l][c] < beta[l - 1][c]) ++violations;
        }
      }
      ++configs;
    }
  }

  std::string counts;
  bool neutral = true;
  for (std::size_t d : {16, 32, 64, 128}) {
    ModelConfig a;
    a.vocab_size = 16;
    a.hidden_size = d;
    a.num_layers = 1;
    a.num_heads = 0;
    a.expand_ratio = 2;
    ModelConfig b = a;
    b.expand_ratio = 8;
    const auto na = LanguageModel(a, 1).layer_parameter_count(0);
    const auto nb = LanguageModel(b, 1).layer_parameter_count(0);
    neutral = neutral && na == nb;
    counts += fmt("%sd=%zu:%zu/%zu", counts.empty() ? "" : " ", d, na, nb);
  }
  return {violations == 0 && neutral,
          fmt("%zu configs L=1..8, beta range [%.6f, %.6f], %zu violations; layer params e=2/e=8 ",
              configs, lo, hi, violations) +
              counts};
}

// ---- 4 -------------------------------------------------------------------

Outcome loss_identities() {
  Rng rng(4);
  std::vector<real> a(60), b(60);
  for (auto& x : a) x = real(rng.uniform(-3, 3));
  for (auto& x : b) x = real(rng.uniform(-3, 3));
  const auto za = Tensor::from({6, 10}, a), zb = Tensor::from({6, 10}, b);
  const std::vector<TokenId> targets = {0, 3, 9, 2, 2, 7};
  const auto ce = ce_loss(za, targets), kd = kd_loss(zb, za);
  const bool blend = total_loss(ce, kd, 0.0).item() == ce.item() && total_loss(ce, kd, 1.0).item() == kd.item() &&
                     total_loss(ce.item(), kd.item(), 0.0) == ce.item() &&
                     total_loss(ce.item(), kd.item(), 1.0) == kd.item();
  const double self_kd = kd_loss(za, za).item();
  const double uniform = ce_loss(Tensor::zeros({4, 2000}), std::vector<TokenId>{0, 1, 1000, 1999}).item();
  const double err = std::abs(uniform - std::log(2000.0));
  return {blend && self_kd == 0.0 && err <= 1e-5,
          fmt("alpha 0/1 bit-exact: %s; kd(z,z)=%g; uniform CE %.4f vs ln 2000 = %.4f (err %.1e)",
              blend ? "yes" : "no", self_kd, uniform, std::log(2000.0), err)};
}

// ---- 5, 6, 7 share the desk model ----------------------------------------

constexpr std::size_t kChunk = 128;
constexpr std::uint64_t kModelSeed = 7;

struct Desk {
  SyntheticGrammar grammar;
  PackedDataset data;
  double bigram = 0;
  LanguageModel model;
  TrainReport report;
  bool trained = false;

  Desk()
      : data(pack(grammar.corpus(192000, 1), grammar.vocabulary(), kChunk)),
        bigram(bigram_conditional_entropy(data)),
        model(desk_hgrn2_config(grammar.vocabulary().vocab_size()), kModelSeed) {}

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-3;
    cfg.sequence_length = kChunk;
    cfg.seed = 3;
    return cfg;
  }
};

Desk& desk() {
  static Desk d;
  return d;
}

Outcome desk_learning() {
  auto& d = desk();
  TrainConfig cfg = d.train_config();
  cfg.output_dir = kArtifacts / "desk_run";
  d.report = train(d.model, d.data, cfg);
  d.trained = true;
  const double first = d.report.initial_ce();
  const double reached = d.report.epochs.back().mean_ce;
  const bool pass = reached < 0.6 * first && reached <= 1.1 * d.bigram && d.report.wall_seconds < 600;
  std::string epochs;
  for (const auto& e : d.report.epochs) epochs += fmt(" %.3f", e.mean_ce);
  return {pass, fmt("%zu tokens, vocab %zu, %zu steps; step-0 CE %.4f, last-epoch CE %.4f (< %.4f), "
                    "bigram H %.4f (limit %.4f); epoch CE%s; %.0fs < 600s",
                    d.data.tokens.size(), d.grammar.vocabulary().vocab_size(), d.report.steps, first, reached,
                    0.6 * first, d.bigram, 1.1 * d.bigram, epochs.c_str(), d.report.wall_seconds)};
}

Outcome distillation_effect() {
  auto& d = desk();
  if (!d.trained) return {false, "teacher from criterion 5 unavailable"};
  const auto& teacher = d.model;
  const auto validation = pack(d.grammar.corpus(20000, 2), d.grammar.vocabulary(), kChunk);
  const double teacher_val = mean_cross_entropy(teacher, validation);
  const auto& ep = d.report.epochs;
  const double last_gain = ep[ep.size() - 2].mean_ce - ep.back().mean_ce;

  ModelConfig student_cfg = desk_hgrn2_config(d.grammar.vocabulary().vocab_size());
  student_cfg.hidden_size = 32;
  student_cfg.num_layers = 2;
  student_cfg.expand_ratio = 4;
  student_cfg.hidden_ratio = 2;

  nlohmann::json curves;
  std::array<double, 2> final_val{};
  std::array<std::string, 2> val_curve;
  const std::array<double, 2> alphas = {0.0, 0.5};
  for (std::size_t i = 0; i < 2; ++i) {
    LanguageModel student(student_cfg, 21);
    TrainConfig cfg = d.train_config();
    cfg.seed = 4;
    cfg.output_dir = kArtifacts / fmt("student_alpha_%.1f", alphas[i]);
    DistillConfig distill;
    distill.alpha = alphas[i];
    const auto r = train(student, d.data, cfg, &distill, &teacher);
    std::vector<double> per_epoch;
    for (const auto& e : r.epochs) {
      per_epoch.push_back(mean_cross_entropy(load_checkpoint(e.checkpoint), validation));
      val_curve[i] += fmt(" %.4f", per_epoch.back());
    }
    final_val[i] = per_epoch.back();
    curves[fmt("alpha_%.1f", alphas[i])] = {{"train_ce", r.step_ce},
                                             {"train_objective", r.step_loss},
                                             {"validation_ce_per_epoch", per_epoch}};
  }
  curves["teacher_validation_ce"] = teacher_val;
  std::ofstream(kArtifacts / "distill_curves.json") << curves.dump(2) << '\n';

  return {final_val[1] <= final_val[0],
          fmt("teacher val CE %.4f (last-epoch train gain %.3f); student d=32 L=2 val CE per epoch: "
              "alpha=0:%s | alpha=0.5:%s; final %.4f <= %.4f; curves in %s",
              teacher_val, last_gain, val_curve[0].c_str(), val_curve[1].c_str(), final_val[1], final_val[0],
              (kArtifacts / "distill_curves.json").c_str())};
}

Outcome harness_calibration() {
  auto& d = desk();
  const auto& vocab = d.grammar.vocabulary();
  const auto pairs = d.grammar.minimal_pairs(1000, 11);
  const auto choices = d.grammar.choice_instances(1000, 4, 12);
  // The criterion-5 model at its initialisation.
  const LanguageModel untrained(desk_hgrn2_config(vocab.vocab_size()), kModelSeed);
  const auto up = eval_minimal_pairs(untrained, vocab, pairs);
  const auto uc = eval_choice(untrained, vocab, choices);
  if (!d.trained) return {false, "trained model from criterion 5 unavailable"};
  auto tp = eval_minimal_pairs(d.model, vocab, pairs);
  const bool pass = std::abs(up.accuracy() - 50) <= 5 && std::abs(uc.accuracy() - 25) <= 5 && tp.accuracy() > 90;
  return {pass, fmt("untrained pairs %.1f%% (50+-5), 4-way choices %.1f%% (25+-5); trained pairs %.1f%% > 90 "
                    "(agreement %.1f, attractor %.1f)",
                    up.accuracy(), uc.accuracy(), tp.accuracy(), tp.by_tag["agreement"].accuracy(),
                    tp.by_tag["attractor"].accuracy())};
}

// ---- 8 -------------------------------------------------------------------

Outcome dataset_fidelity() {
  const auto plan = SamplingPlan::from_counts(mixture_10m_counts());
  SyntheticGrammar grammar;
  DomainPools pools;
  Rng rng(8);
  for (const auto& spec : plan.domains) {
    for (int i = 0; i < 400; ++i) pools[spec.name].push_back({grammar.sample_document(rng), spec.name});
  }
  std::size_t total = 0;
  for (const auto& [name, n] : mixture_10m_counts()) total += n;
  const std::size_t budget = total / 1000;

  auto build = [&] {
    const auto sampled = sample_corpus(plan, pools, budget, 42);
    std::vector<std::string> texts;
    for (const auto& doc : sampled.documents) texts.push_back(doc.text);
    const auto bpe = BpeVocabulary::train(texts, 400);
    return std::pair{sampled.manifest, packed_bytes(pack(texts, bpe, 64))};
  };
  const auto [manifest, bytes] = build();
  const auto [manifest2, bytes2] = build();
  std::ofstream(kArtifacts / "fidelity_manifest.json") << manifest.to_json().dump(2) << '\n';

  double worst = 0;
  std::string headline;
  for (std::size_t i = 0; i < manifest.domains.size(); ++i) {
    const double actual = 100 * manifest.actual_ratio(i);
    const double target = 100 * manifest.domains[i].requested_ratio;
    worst = std::max(worst, std::abs(actual - target));
    if (i < 3) headline += fmt("%s%s %.2f%% (target %.2f%%)", i ? ", " : "", manifest.domains[i].name.c_str(), actual, target);
  }
  const bool identical = bytes == bytes2;
  return {worst <= 0.5 && identical,
          fmt("%zu words requested, %zu sampled; ", budget, manifest.sampled_words()) + headline +
              fmt("; max deviation %.3fpp <= 0.5; repacked bytes identical: %s (%zu bytes)", worst,
                  identical ? "yes" : "no", bytes.size())};
}

// ---- 9 -------------------------------------------------------------------

Outcome reporting() {
  const std::vector<double> row = {69.4, 55.6, 50.7, 63.0};
  const double avg = macro_average(row);
  const double shown = std::round(avg * 10) / 10;
  return {std::abs(shown - 59.7) < 1e-9, fmt("macro_average(69.4, 55.6, 50.7, 63.0) = %.3f -> %.1f", avg, shown)};
}

// ---- 10 ------------------------------------------------------------------

Outcome determinism() {
  SyntheticGrammar grammar;
  const auto data = pack(grammar.corpus(20000, 5), grammar.vocabulary(), 64);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.sequence_length = 64;
  cfg.seed = 10;
  std::array<TrainReport, 2> reports;
  std::array<std::string, 2> files;
  for (std::size_t i = 0; i < 2; ++i) {
    LanguageModel model(desk_hgrn2_config(grammar.vocabulary().vocab_size()), 10);
    cfg.output_dir = kArtifacts / fmt("determinism_%zu", i);
    reports[i] = train(model, data, cfg);
    std::ifstream in(reports[i].final_checkpoint, std::ios::binary);
    files[i].assign(std::istreambuf_iterator<char>(in), {});
  }
  const bool losses = reports[0].step_loss == reports[1].step_loss;
  const bool checkpoints = !files[0].empty() && files[0] == files[1];
  return {losses && checkpoints,
          fmt("%zu steps; final loss %.6f vs %.6f; step losses identical: %s; checkpoint bytes identical: %s (%zu bytes)",
              reports[0].steps, reports[0].final_loss(), reports[1].final_loss(), losses ? "yes" : "no",
              checkpoints ? "yes" : "no", files[0].size())};
}

}  // namespace

int main() {
  fs::create_directories(kArtifacts);
  report(1, "gradient integrity", gradient_integrity);
  report(2, "scan equivalence", scan_equivalence);
  report(3, "lower-bound law", lower_bound_law);
  report(4, "loss identities", loss_identities);
  report(5, "learning at desk scale", desk_learning);
  report(6, "distillation effect", distillation_effect);
  report(7, "zero-shot harness calibration", harness_calibration);
  report(8, "dataset fidelity", dataset_fidelity);
  report(9, "reporting", reporting);
  report(10, "determinism", determinism);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
