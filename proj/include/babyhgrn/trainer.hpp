#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "babyhgrn/config.hpp"
#include "babyhgrn/model.hpp"
#include "babyhgrn/optim.hpp"
#include "babyhgrn/packed.hpp"

namespace babyhgrn {

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  AdamConfig adam;
  std::size_t sequence_length = 512;  // must equal the dataset's chunk length
  double max_grad_norm = 1.0;
  std::uint64_t seed = 0;
  // When non-empty: metrics.jsonl, checkpoints/epoch_N.bhck and model.bhck go here.
  std::filesystem::path output_dir;

  void validate() const;
  nlohmann::json to_json() const;
  // Reads the keys it knows and leaves the rest to other sections.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

struct DistillConfig {
  double alpha = 0.5;
  double temperature = 1.0;
  std::filesystem::path teacher_checkpoint;

  void validate() const;
  nlohmann::json to_json() const;
  static DistillConfig from_json(const nlohmann::json& j, DistillConfig base);
  static DistillConfig from_json(const nlohmann::json& j) { return from_json(j, DistillConfig{}); }
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_ce = 0;  // nats/token over the epoch's batches
  double perplexity = 0;
  std::filesystem::path checkpoint;
};

struct TrainReport {
  std::vector<double> step_loss;  // optimized objective (blended when distilling)
  std::vector<double> step_ce;    // cross-entropy part alone
  std::vector<double> step_lr;
  std::vector<EpochStats> epochs;
  std::size_t steps = 0;
  double wall_seconds = 0;
  std::filesystem::path final_checkpoint;

  double initial_ce() const { return step_ce.empty() ? 0.0 : step_ce.front(); }
  double final_loss() const { return step_loss.empty() ? 0.0 : step_loss.back(); }
  nlohmann::json to_json() const;
};

// Batches of input = chunk[0..n-2], target = chunk[1..n-1]. With `distill`,
// the objective is total_loss(ce, kd, alpha) against `teacher`, which is
// loaded from distill->teacher_checkpoint when null.
TrainReport train(LanguageModel& model, const PackedDataset& data, const TrainConfig& cfg,
                  const DistillConfig* distill = nullptr, const LanguageModel* teacher = nullptr);

inline const std::vector<double>& default_lr_grid() {
  static const std::vector<double> grid = {1e-3, 1e-4, 1e-5, 1e-6};
  return grid;
}

// Lower is better.
using SweepMetric = std::function<double(const LanguageModel&, const TrainReport&)>;

struct SweepRun {
  double learning_rate = 0;
  bool ok = false;
  double metric = 0;
  std::string error;
  TrainReport report;
};

struct SweepResult {
  std::vector<SweepRun> runs;    // grid order
  std::vector<std::size_t> ranking;  // indices of successful runs, best first
  std::optional<double> winner() const;
  nlohmann::json to_json() const;
};

// One run per rate from a fresh factory model with the shared seed. Runs that
// throw are recorded as failed. Equal metrics rank the larger rate first.
// Default metric: last epoch's mean CE.
SweepResult lr_sweep(const std::function<LanguageModel()>& factory, const PackedDataset& data,
                     const TrainConfig& cfg, const std::vector<double>& grid = default_lr_grid(),
                     SweepMetric metric = {});

struct DistillPipelineConfig {
  ModelConfig teacher_model;
  ModelConfig student_model;
  TrainConfig teacher_train;
  TrainConfig student_train;
  DistillConfig distill;
};

struct DistillReport {
  std::optional<TrainReport> teacher;  // absent when a trained teacher was supplied
  TrainReport student;
  nlohmann::json to_json() const;
};

// Trains the teacher first unless one is given, then the student against it.
DistillReport distill_pipeline(const DistillPipelineConfig& cfg, const PackedDataset& data,
                               LanguageModel& student, const LanguageModel* teacher = nullptr);

// JSON object when the file starts with '{', otherwise key=value lines
// ('#' comments). Values parse as JSON scalars where possible, else strings.
nlohmann::json read_config_file(const std::filesystem::path& path);
nlohmann::json parse_key_values(const std::string& text);

}  // namespace babyhgrn
