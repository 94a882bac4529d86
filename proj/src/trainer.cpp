#include "babyhgrn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "babyhgrn/checkpoint.hpp"
#include "babyhgrn/losses.hpp"
#include "babyhgrn/random.hpp"

namespace babyhgrn {

namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out, ErrorKind kind) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(kind, std::string("config key '") + key + "' has the wrong type");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::validate() const {
  require(epochs > 0, ErrorKind::config, "epochs must be positive");
  require(batch_size > 0, ErrorKind::config, "batch_size must be positive");
  require(learning_rate > 0 && std::isfinite(learning_rate), ErrorKind::config,
          "learning_rate must be positive");
  require(max_grad_norm > 0, ErrorKind::config, "max_grad_norm must be positive");
  require(sequence_length >= 2, ErrorKind::config, "sequence_length must be at least 2");
  require(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0,
          ErrorKind::config, "invalid Adam hyperparameters");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"optimizer", "adam"},
          {"adam_beta1", adam.beta1},
          {"adam_beta2", adam.beta2},
          {"adam_eps", adam.eps},
          {"sequence_length", sequence_length},
          {"max_grad_norm", max_grad_norm},
          {"scheduler", "linear"},
          {"seed", seed},
          {"output_dir", output_dir.string()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig cfg) {
  const auto k = ErrorKind::config;
  read_key(j, "epochs", cfg.epochs, k);
  read_key(j, "batch_size", cfg.batch_size, k);
  read_key(j, "learning_rate", cfg.learning_rate, k);
  read_key(j, "adam_beta1", cfg.adam.beta1, k);
  read_key(j, "adam_beta2", cfg.adam.beta2, k);
  read_key(j, "adam_eps", cfg.adam.eps, k);
  read_key(j, "sequence_length", cfg.sequence_length, k);
  read_key(j, "max_grad_norm", cfg.max_grad_norm, k);
  read_key(j, "seed", cfg.seed, k);
  if (j.contains("optimizer")) {
    require(j.at("optimizer") == "adam", k, "only the adam optimizer is supported");
  }
  if (j.contains("scheduler")) {
    require(j.at("scheduler") == "linear", k, "only the linear scheduler is supported");
  }
  std::string out = cfg.output_dir.string();
  read_key(j, "output_dir", out, k);
  cfg.output_dir = out;
  cfg.validate();
  return cfg;
}

void DistillConfig::validate() const {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::config, "alpha must lie in [0, 1]");
  require(temperature > 0 && std::isfinite(temperature), ErrorKind::config,
          "temperature must be positive");
}

nlohmann::json DistillConfig::to_json() const {
  return {{"alpha", alpha},
          {"temperature", temperature},
          {"teacher_checkpoint", teacher_checkpoint.string()}};
}

DistillConfig DistillConfig::from_json(const nlohmann::json& j, DistillConfig cfg) {
  read_key(j, "alpha", cfg.alpha, ErrorKind::config);
  read_key(j, "temperature", cfg.temperature, ErrorKind::config);
  std::string teacher = cfg.teacher_checkpoint.string();
  read_key(j, "teacher_checkpoint", teacher, ErrorKind::config);
  cfg.teacher_checkpoint = teacher;
  cfg.validate();
  return cfg;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"mean_ce", e.mean_ce},
                    {"perplexity", e.perplexity},
                    {"checkpoint", e.checkpoint.string()}});
  }
  return {{"steps", steps},
          {"wall_seconds", wall_seconds},
          {"step_loss", step_loss},
          {"step_ce", step_ce},
          {"epochs", rows},
          {"final_checkpoint", final_checkpoint.string()}};
}

TrainReport train(LanguageModel& model, const PackedDataset& data, const TrainConfig& cfg,
                  const DistillConfig* distill, const LanguageModel* teacher) {
  cfg.validate();
  require(data.chunk_count() > 0, ErrorKind::data, "training dataset is empty");
  require(cfg.sequence_length == data.chunk_len, ErrorKind::config,
          "sequence_length " + std::to_string(cfg.sequence_length) +
              " does not match the dataset chunk length " + std::to_string(data.chunk_len));
  require(data.vocab_size <= model.config().vocab_size, ErrorKind::config,
          "dataset vocabulary exceeds the model's");

  std::optional<LanguageModel> loaded_teacher;
  if (distill) {
    distill->validate();
    if (!teacher) {
      require(!distill->teacher_checkpoint.empty(), ErrorKind::config,
              "distillation needs a teacher checkpoint");
      loaded_teacher.emplace(load_checkpoint(distill->teacher_checkpoint));
      teacher = &*loaded_teacher;
    }
    require(teacher->config().vocab_size == model.config().vocab_size, ErrorKind::config,
            "teacher vocabulary " + std::to_string(teacher->config().vocab_size) +
                " differs from student vocabulary " + std::to_string(model.config().vocab_size));
  }

  const bool writes = !cfg.output_dir.empty();
  std::ofstream metrics;
  if (writes) {
    std::filesystem::create_directories(cfg.output_dir / "checkpoints");
    metrics.open(cfg.output_dir / "metrics.jsonl", std::ios::app);
    require(static_cast<bool>(metrics), ErrorKind::ingestion, "cannot open metrics log");
  }

  const std::size_t chunks = data.chunk_count();
  const std::size_t per_epoch = (chunks + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = per_epoch * cfg.epochs;
  const std::size_t steps = data.chunk_len - 1;

  Adam optimizer(model.parameters(), cfg.adam);
  Rng order_rng(cfg.seed);
  Rng dropout_rng = Rng(cfg.seed).fork(0xD50);
  ForwardOptions fwd;
  fwd.training = true;
  fwd.rng = &dropout_rng;

  TrainReport report;
  const auto start = std::chrono::steady_clock::now();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(chunks);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng epoch_rng = order_rng.fork(epoch);
    epoch_rng.shuffle(std::span<std::size_t>(order));

    double ce_sum = 0;
    std::size_t ce_tokens = 0;
    for (std::size_t b = 0; b < chunks; b += cfg.batch_size, ++step) {
      const auto step_start = std::chrono::steady_clock::now();
      const std::size_t end = std::min(chunks, b + cfg.batch_size);
      TokenBatch batch{end - b, steps, {}};
      std::vector<TokenId> targets;
      for (std::size_t i = b; i < end; ++i) {
        const auto chunk = data.chunk(order[i]);
        batch.ids.insert(batch.ids.end(), chunk.begin(), chunk.end() - 1);
        targets.insert(targets.end(), chunk.begin() + 1, chunk.end());
      }

      const double lr = linear_decay(cfg.learning_rate, step, total_steps);
      double loss_value = 0, ce_value = 0, norm = 0;
      try {
        model.parameters().zero_grad();
        const Tensor logits = model.forward(batch, fwd);
        const Tensor ce = ce_loss(logits, targets);
        Tensor loss = ce;
        if (distill) {
          Tensor teacher_logits;
          {
            NoGradGuard frozen;
            teacher_logits = teacher->forward(batch);
          }
          loss = total_loss(ce, kd_loss(teacher_logits, logits, distill->temperature),
                            distill->alpha);
        }
        loss_value = loss.item();
        ce_value = ce.item();
        require(std::isfinite(loss_value), ErrorKind::numeric, "loss is not finite");
        loss.backward();
        norm = clip_grad_norm(model.parameters(), cfg.max_grad_norm);
        require(std::isfinite(norm), ErrorKind::numeric, "gradient norm is not finite");
        optimizer.step(lr);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        fail(ErrorKind::numeric, "training step " + std::to_string(step) + ": " + e.what());
      }

      report.step_loss.push_back(loss_value);
      report.step_ce.push_back(ce_value);
      report.step_lr.push_back(lr);
      ce_sum += ce_value * double(targets.size());
      ce_tokens += targets.size();

      if (writes) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - step_start).count();
        metrics << nlohmann::json{{"step", step},
                                  {"epoch", epoch},
                                  {"lr", lr},
                                  {"loss", loss_value},
                                  {"ce", ce_value},
                                  {"grad_norm", norm},
                                  {"tokens_per_sec", secs > 0 ? double(targets.size()) / secs : 0.0}}
                       .dump()
                << '\n';
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_ce = ce_sum / double(ce_tokens);
    stats.perplexity = std::exp(stats.mean_ce);
    if (writes) {
      stats.checkpoint = cfg.output_dir / "checkpoints" / ("epoch_" + std::to_string(epoch + 1) + ".bhck");
      save_checkpoint(stats.checkpoint, model);
    }
    report.epochs.push_back(stats);
  }
  report.steps = step;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (writes) {
    report.final_checkpoint = cfg.output_dir / "model.bhck";
    save_checkpoint(report.final_checkpoint, model);
  }
  return report;
}

std::optional<double> SweepResult::winner() const {
  if (ranking.empty()) return std::nullopt;
  return runs[ranking.front()].learning_rate;
}

nlohmann::json SweepResult::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json row = {{"learning_rate", r.learning_rate}, {"ok", r.ok}};
    if (r.ok) {
      row["metric"] = r.metric;
      row["final_loss"] = r.report.final_loss();
    } else {
      row["error"] = r.error;
    }
    rows.push_back(row);
  }
  nlohmann::json out = {{"runs", rows}};
  nlohmann::json ranked = nlohmann::json::array();
  for (auto i : ranking) ranked.push_back(runs[i].learning_rate);
  out["ranking"] = ranked;
  if (auto w = winner()) out["winner"] = *w;
  return out;
}

SweepResult lr_sweep(const std::function<LanguageModel()>& factory, const PackedDataset& data,
                     const TrainConfig& cfg, const std::vector<double>& grid, SweepMetric metric) {
  require(!grid.empty(), ErrorKind::config, "learning-rate grid is empty");
  if (!metric) {
    metric = [](const LanguageModel&, const TrainReport& r) { return r.epochs.back().mean_ce; };
  }
  SweepResult result;
  for (double rate : grid) {
    SweepRun run;
    run.learning_rate = rate;
    try {
      TrainConfig run_cfg = cfg;
      run_cfg.learning_rate = rate;
      if (!cfg.output_dir.empty()) {
        std::ostringstream name;
        name << "lr_" << rate;
        run_cfg.output_dir = cfg.output_dir / name.str();
      }
      LanguageModel model = factory();
      run.report = train(model, data, run_cfg);
      run.metric = metric(model, run.report);
      require(std::isfinite(run.metric), ErrorKind::numeric, "sweep metric is not finite");
      run.ok = true;
    } catch (const std::exception& e) {
      run.error = e.what();
    }
    result.runs.push_back(std::move(run));
  }
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    if (result.runs[i].ok) result.ranking.push_back(i);
  }
  std::stable_sort(result.ranking.begin(), result.ranking.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = result.runs[a];
    const auto& rb = result.runs[b];
    if (ra.metric != rb.metric) return ra.metric < rb.metric;
    return ra.learning_rate > rb.learning_rate;
  });
  return result;
}

nlohmann::json DistillReport::to_json() const {
  nlohmann::json out = {{"student", student.to_json()},
                        {"student_ce_curve", student.step_ce},
                        {"student_blended_curve", student.step_loss}};
  if (teacher) out["teacher"] = teacher->to_json();
  return out;
}

DistillReport distill_pipeline(const DistillPipelineConfig& cfg, const PackedDataset& data,
                               LanguageModel& student, const LanguageModel* teacher) {
  cfg.distill.validate();
  DistillReport report;
  std::optional<LanguageModel> trained;
  if (!teacher) {
    trained.emplace(cfg.teacher_model, cfg.teacher_train.seed);
    report.teacher = train(*trained, data, cfg.teacher_train);
    teacher = &*trained;
  }
  report.student = train(student, data, cfg.student_train, &cfg.distill, teacher);
  return report;
}

nlohmann::json parse_key_values(const std::string& text) {
  nlohmann::json out = nlohmann::json::object();
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::config,
            "config line " + std::to_string(line_no) + " is not key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto parsed = nlohmann::json::parse(value, nullptr, false);
    out[key] = (!parsed.is_discarded() && parsed.is_primitive()) ? parsed : nlohmann::json(value);
  }
  return out;
}

nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::config, "cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::config, path.string() + ": " + e.what());
    }
  }
  return parse_key_values(text);
}

}  // namespace babyhgrn
