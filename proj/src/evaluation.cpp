#include "babyhgrn/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "babyhgrn/losses.hpp"
#include "babyhgrn/ops.hpp"

namespace babyhgrn {

void validate(const MinimalPair& pair) {
  require(!pair.good.empty() && !pair.bad.empty(), ErrorKind::data, "minimal pair with an empty sentence");
  require(pair.good != pair.bad, ErrorKind::data, "minimal pair members are identical: '" + pair.good + "'");
}

void validate(const ChoiceInstance& instance) {
  require(instance.candidates.size() >= 2, ErrorKind::data,
          "choice instance needs at least two candidates");
  require(instance.gold < instance.candidates.size(), ErrorKind::data,
          "gold index " + std::to_string(instance.gold) + " out of range");
  for (const auto& c : instance.candidates) {
    require(!c.empty(), ErrorKind::data, "choice instance with an empty candidate");
  }
}

namespace {

template <typename T, typename Parse>
std::vector<T> load_lines(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::ingestion, "cannot read task file " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
      validate(out.back());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.kind(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  require(!out.empty(), ErrorKind::data, "task file " + path.string() + " is empty");
  return out;
}

}  // namespace

std::vector<MinimalPair> load_pairs(const std::filesystem::path& path) {
  return load_lines<MinimalPair>(path, [](const nlohmann::json& j) {
    return MinimalPair{j.at("good").get<std::string>(), j.at("bad").get<std::string>(),
                       j.value("tag", std::string("all"))};
  });
}

std::vector<ChoiceInstance> load_choices(const std::filesystem::path& path) {
  return load_lines<ChoiceInstance>(path, [](const nlohmann::json& j) {
    return ChoiceInstance{j.value("context", std::string()),
                          j.at("candidates").get<std::vector<std::string>>(),
                          j.at("gold").get<std::size_t>(), j.value("tag", std::string("all"))};
  });
}

void save_pairs(const std::filesystem::path& path, const std::vector<MinimalPair>& pairs) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::ingestion, "cannot write " + path.string());
  for (const auto& p : pairs) {
    out << nlohmann::json{{"good", p.good}, {"bad", p.bad}, {"tag", p.tag}}.dump() << '\n';
  }
}

void save_choices(const std::filesystem::path& path, const std::vector<ChoiceInstance>& items) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::ingestion, "cannot write " + path.string());
  for (const auto& c : items) {
    out << nlohmann::json{{"context", c.context}, {"candidates", c.candidates}, {"gold", c.gold},
                          {"tag", c.tag}}
               .dump()
        << '\n';
  }
}

ScoreNorm parse_norm(const std::string& name) {
  if (name == "none") return ScoreNorm::none;
  if (name == "per-token" || name == "per_token") return ScoreNorm::per_token;
  fail(ErrorKind::config, "unknown score normalization '" + name + "'");
}

ScoreStart parse_start(const std::string& name) {
  if (name == "boundary" || name == "eos") return ScoreStart::boundary;
  if (name == "bos") return ScoreStart::bos;
  fail(ErrorKind::config, "unknown scoring start '" + name + "'");
}

TokenId start_token(const TextEncoder& encoder, ScoreStart start) {
  return start == ScoreStart::bos ? encoder.specials().bos : encoder.specials().eos;
}

SequenceScore sequence_logprob(const LanguageModel& model, std::span<const TokenId> tokens,
                               std::span<const TokenId> context, TokenId start) {
  require(!tokens.empty(), ErrorKind::data, "cannot score an empty token sequence");
  std::vector<TokenId> input;
  input.reserve(1 + context.size() + tokens.size());
  input.push_back(start);
  input.insert(input.end(), context.begin(), context.end());
  input.insert(input.end(), tokens.begin(), tokens.end() - 1);

  NoGradGuard no_grad;
  const Tensor logp = log_softmax(model.forward(TokenBatch::single(input)));
  const std::size_t v = logp.dim(1);
  const std::size_t offset = context.size();
  SequenceScore score;
  score.tokens = tokens.size();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    score.logprob += logp.data()[(offset + t) * v + static_cast<std::size_t>(tokens[t])];
  }
  return score;
}

SequenceScore sequence_logprob(const LanguageModel& model, const TextEncoder& encoder,
                               std::string_view text, std::string_view context,
                               ScoreStart start) {
  const auto ids = encoder.encode(text);
  const auto ctx = context.empty() ? std::vector<TokenId>{} : encoder.encode(context);
  return sequence_logprob(model, ids, ctx, start_token(encoder, start));
}

TaskScore eval_minimal_pairs(const LanguageModel& model, const TextEncoder& encoder,
                             std::span<const MinimalPair> pairs, ScoreOptions options) {
  require(!pairs.empty(), ErrorKind::data, "no minimal pairs to evaluate");
  TaskScore score{"pairs", 0, 0, 0, {}};
  for (const auto& pair : pairs) {
    validate(pair);
    const double good = sequence_logprob(model, encoder, pair.good, {}, options.start).value(options.norm);
    const double bad = sequence_logprob(model, encoder, pair.bad, {}, options.start).value(options.norm);
    const bool correct = good > bad;
    if (good == bad) ++score.ties;
    ++score.total;
    auto& tag = score.by_tag[pair.tag];
    ++tag.total;
    if (correct) {
      ++score.correct;
      ++tag.correct;
    }
  }
  return score;
}

TaskScore eval_choice(const LanguageModel& model, const TextEncoder& encoder,
                      std::span<const ChoiceInstance> instances, ScoreOptions options) {
  require(!instances.empty(), ErrorKind::data, "no choice instances to evaluate");
  TaskScore score{"choices", 0, 0, 0, {}};
  for (const auto& item : instances) {
    validate(item);
    std::size_t best = 0;
    double best_score = -INFINITY;
    bool tied = false;
    for (std::size_t c = 0; c < item.candidates.size(); ++c) {
      const double s = sequence_logprob(model, encoder, item.candidates[c], item.context, options.start)
                           .value(options.norm);
      if (s > best_score) {
        best = c;
        best_score = s;
        tied = false;
      } else if (s == best_score) {
        tied = true;
      }
    }
    if (tied) ++score.ties;
    ++score.total;
    auto& tag = score.by_tag[item.tag];
    ++tag.total;
    if (best == item.gold) {
      ++score.correct;
      ++tag.correct;
    }
  }
  return score;
}

double macro_average(std::span<const double> scores) {
  require(!scores.empty(), ErrorKind::usage, "macro average of no scores");
  double total = 0;
  for (double s : scores) total += s;
  return total / double(scores.size());
}

double mean_cross_entropy(const LanguageModel& model, const PackedDataset& data,
                          std::size_t batch_size) {
  require(data.chunk_count() > 0, ErrorKind::data, "empty dataset");
  require(batch_size > 0, ErrorKind::config, "batch_size must be positive");
  NoGradGuard no_grad;
  const std::size_t steps = data.chunk_len - 1;
  double total = 0;
  std::size_t counted = 0;
  for (std::size_t start = 0; start < data.chunk_count(); start += batch_size) {
    const std::size_t end = std::min(data.chunk_count(), start + batch_size);
    TokenBatch batch{end - start, steps, {}};
    std::vector<TokenId> targets;
    for (std::size_t c = start; c < end; ++c) {
      const auto chunk = data.chunk(c);
      batch.ids.insert(batch.ids.end(), chunk.begin(), chunk.end() - 1);
      targets.insert(targets.end(), chunk.begin() + 1, chunk.end());
    }
    const double loss = ce_loss(model.forward(batch), targets).item();
    total += loss * double(targets.size());
    counted += targets.size();
  }
  return total / double(counted);
}

double perplexity(const LanguageModel& model, const PackedDataset& data, std::size_t batch_size) {
  return std::exp(mean_cross_entropy(model, data, batch_size));
}

double EvalReport::macro_average() const {
  std::vector<double> scores;
  for (const auto& t : tasks) scores.push_back(t.accuracy());
  return babyhgrn::macro_average(scores);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json task_rows = nlohmann::json::array();
  for (const auto& t : tasks) {
    nlohmann::json tags = nlohmann::json::object();
    for (const auto& [tag, s] : t.by_tag) {
      tags[tag] = {{"accuracy", s.accuracy()}, {"correct", s.correct}, {"total", s.total}};
    }
    task_rows.push_back({{"task", t.task},
                         {"accuracy", t.accuracy()},
                         {"correct", t.correct},
                         {"total", t.total},
                         {"ties", t.ties},
                         {"by_tag", tags}});
  }
  nlohmann::json out = {{"model", model_id}, {"tasks", task_rows}};
  if (!tasks.empty()) {
    out["macro_average"] = macro_average();
    out["macro_average_note"] =
        "unweighted mean over tasks; task sizes differ, so small tasks weigh as much as large ones";
  }
  if (perplexity) out["perplexity"] = *perplexity;
  return out;
}

std::string EvalReport::table() const {
  std::ostringstream out;
  out << std::left << std::setw(12) << "Task" << std::right << std::setw(10) << "Accuracy"
      << std::setw(8) << "N" << std::setw(7) << "Ties" << '\n';
  out << std::fixed << std::setprecision(1);
  for (const auto& t : tasks) {
    out << std::left << std::setw(12) << t.task << std::right << std::setw(10) << t.accuracy()
        << std::setw(8) << t.total << std::setw(7) << t.ties << '\n';
  }
  if (!tasks.empty()) {
    out << std::left << std::setw(12) << "Macro-Avg." << std::right << std::setw(10)
        << macro_average() << '\n';
  }
  if (perplexity) {
    out << std::left << std::setw(12) << "Perplexity" << std::right << std::setw(10)
        << std::setprecision(3) << *perplexity << '\n';
  }
  return out.str();
}

}  // namespace babyhgrn
