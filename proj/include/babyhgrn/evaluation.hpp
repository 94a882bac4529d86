#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "babyhgrn/model.hpp"
#include "babyhgrn/packed.hpp"
#include "babyhgrn/text_encoder.hpp"

namespace babyhgrn {

struct MinimalPair {
  std::string good;
  std::string bad;
  std::string tag;
};

struct ChoiceInstance {
  std::string context;
  std::vector<std::string> candidates;
  std::size_t gold = 0;
  std::string tag;
};

// Throw ErrorKind::data on identical/empty pair members, fewer than two
// candidates or an out-of-range gold index.
void validate(const MinimalPair& pair);
void validate(const ChoiceInstance& instance);

// Line-delimited JSON: {good, bad, tag} and {context, candidates, gold, tag}.
std::vector<MinimalPair> load_pairs(const std::filesystem::path& path);
std::vector<ChoiceInstance> load_choices(const std::filesystem::path& path);
void save_pairs(const std::filesystem::path& path, const std::vector<MinimalPair>& pairs);
void save_choices(const std::filesystem::path& path, const std::vector<ChoiceInstance>& items);

enum class ScoreNorm { none, per_token };
ScoreNorm parse_norm(const std::string& name);

struct SequenceScore {
  double logprob = 0;  // nats
  std::size_t tokens = 0;

  double value(ScoreNorm norm) const {
    return norm == ScoreNorm::per_token ? logprob / double(tokens) : logprob;
  }
};

// Token the scored text is conditioned on. Packed training streams separate
// documents with eos only, so `boundary` (eos) is the start-of-document state
// a trained model has seen; `bos` is kept for models trained with it.
enum class ScoreStart { boundary, bos };
ScoreStart parse_start(const std::string& name);
TokenId start_token(const TextEncoder& encoder, ScoreStart start);

// sum_t log P(tokens[t] | start, context, tokens[<t]). Throws ErrorKind::data
// when `tokens` is empty.
SequenceScore sequence_logprob(const LanguageModel& model, std::span<const TokenId> tokens,
                               std::span<const TokenId> context, TokenId start);
SequenceScore sequence_logprob(const LanguageModel& model, const TextEncoder& encoder,
                               std::string_view text, std::string_view context = {},
                               ScoreStart start = ScoreStart::boundary);

struct ScoreOptions {
  ScoreNorm norm = ScoreNorm::none;
  ScoreStart start = ScoreStart::boundary;
};

struct TagScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? 100.0 * double(correct) / double(total) : 0.0; }
};

struct TaskScore {
  std::string task;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t ties = 0;
  std::map<std::string, TagScore> by_tag;

  double accuracy() const { return total ? 100.0 * double(correct) / double(total) : 0.0; }
};

// A pair is correct iff score(good) > score(bad); exact ties count as wrong.
TaskScore eval_minimal_pairs(const LanguageModel& model, const TextEncoder& encoder,
                             std::span<const MinimalPair> pairs, ScoreOptions options = {});

// Prediction is the first candidate attaining the maximum score.
TaskScore eval_choice(const LanguageModel& model, const TextEncoder& encoder,
                      std::span<const ChoiceInstance> instances, ScoreOptions options = {});

// Unweighted mean of the given scores.
double macro_average(std::span<const double> scores);

// Mean next-token cross-entropy (nats) over every chunk of `data`.
double mean_cross_entropy(const LanguageModel& model, const PackedDataset& data,
                          std::size_t batch_size = 16);
double perplexity(const LanguageModel& model, const PackedDataset& data,
                  std::size_t batch_size = 16);

struct EvalReport {
  std::string model_id;
  std::vector<TaskScore> tasks;
  std::optional<double> perplexity;

  double macro_average() const;
  nlohmann::json to_json() const;
  std::string table() const;
};

}  // namespace babyhgrn
