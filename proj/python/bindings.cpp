// Python module babyhgrn._core. Structured results (reports, manifests)
// cross as plain dicts built from their JSON form.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "babyhgrn/bpe.hpp"
#include "babyhgrn/checkpoint.hpp"
#include "babyhgrn/corpus.hpp"
#include "babyhgrn/evaluation.hpp"
#include "babyhgrn/losses.hpp"
#include "babyhgrn/model.hpp"
#include "babyhgrn/packed.hpp"
#include "babyhgrn/recurrence.hpp"
#include "babyhgrn/synthetic.hpp"
#include "babyhgrn/trainer.hpp"

namespace py = pybind11;
using namespace babyhgrn;

namespace {

using FloatArray = py::array_t<real, py::array::c_style | py::array::forcecast>;

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::span<const real> view(const FloatArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

FloatArray to_array(const std::vector<real>& values, std::vector<py::ssize_t> shape) {
  FloatArray out(shape);
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from(shape, std::vector<real>(a.data(), a.data() + a.size()));
}

// 1-D ids become a single row; 2-D is [batch, steps].
TokenBatch to_batch(const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& ids) {
  require(ids.ndim() == 1 || ids.ndim() == 2, ErrorKind::dimension, "token ids must be 1-D or 2-D");
  TokenBatch batch;
  batch.batch = ids.ndim() == 2 ? ids.shape(0) : 1;
  batch.steps = ids.ndim() == 2 ? ids.shape(1) : ids.shape(0);
  for (py::ssize_t i = 0; i < ids.size(); ++i) {
    require(ids.data()[i] >= 0, ErrorKind::data, "negative token id");
    batch.ids.push_back(static_cast<TokenId>(ids.data()[i]));
  }
  return batch;
}

py::dict score_dict(const TaskScore& s) {
  py::dict tags;
  for (const auto& [tag, t] : s.by_tag) tags[py::str(tag)] = py::make_tuple(t.correct, t.total);
  py::dict d;
  d["task"] = s.task;
  d["correct"] = s.correct;
  d["total"] = s.total;
  d["ties"] = s.ties;
  d["accuracy"] = s.accuracy();
  d["by_tag"] = tags;
  return d;
}

ScoreOptions options(const std::string& norm, const std::string& start) {
  return {parse_norm(norm), parse_start(start)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gated linear RNN language models: data, training and evaluation";

  // Owned by the module for the life of the process; never released.
  static PyObject* error_type = PyErr_NewException("babyhgrn._core.BabyHgrnError", PyExc_RuntimeError, nullptr);
  m.attr("BabyHgrnError") = py::reinterpret_borrow<py::object>(error_type);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  // ---- configuration and models --------------------------------------------
  py::enum_<ArchKind>(m, "Arch").value("hgrn2", ArchKind::hgrn2).value("lstm", ArchKind::lstm);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("arch", &ModelConfig::arch)
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("hidden_size", &ModelConfig::hidden_size)
      .def_readwrite("num_layers", &ModelConfig::num_layers)
      .def_readwrite("expand_ratio", &ModelConfig::expand_ratio)
      .def_readwrite("hidden_ratio", &ModelConfig::hidden_ratio)
      .def_readwrite("num_heads", &ModelConfig::num_heads)
      .def_readwrite("scan_block", &ModelConfig::scan_block)
      .def_readwrite("embedding_size", &ModelConfig::embedding_size)
      .def_readwrite("dropout", &ModelConfig::dropout)
      .def("heads", &ModelConfig::heads)
      .def("validate", &ModelConfig::validate)
      .def("to_dict", [](const ModelConfig& c) { return to_python(to_json(c)); })
      .def_static("from_dict", [](const py::object& d) { return model_config_from_json(from_python(d)); });

  m.def("desk_hgrn2_config", &desk_hgrn2_config, py::arg("vocab_size") = 2000);
  m.def("desk_lstm_config", &desk_lstm_config, py::arg("vocab_size") = 2000);
  m.def("preset", [](const std::string& name) { return find_preset(name).config; });
  m.def("preset_names", [] {
    std::vector<std::string> names;
    for (const auto& p : presets()) names.push_back(p.name);
    return names;
  });

  py::class_<LanguageModel>(m, "LanguageModel")
      .def(py::init<ModelConfig, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_property_readonly("config", &LanguageModel::config)
      .def("parameter_count", &LanguageModel::parameter_count)
      .def("layer_parameter_count", &LanguageModel::layer_parameter_count)
      .def("lower_bounds", &LanguageModel::lower_bound_values)
      .def("parameter_names",
           [](const LanguageModel& model) {
             std::vector<std::string> names;
             for (const auto& [name, t] : model.parameters()) names.push_back(name);
             return names;
           })
      .def("parameter",
           [](const LanguageModel& model, const std::string& name) {
             const auto& t = model.parameters().at(name);
             const auto data = t.data();
             return to_array(std::vector<real>(data.begin(), data.end()),
                             std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
           })
      .def(
          "logits",
          [](const LanguageModel& model, const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& ids) {
            const auto batch = to_batch(ids);
            NoGradGuard no_grad;
            const auto out = model.forward(batch);
            const auto data = out.data();
            return to_array(std::vector<real>(data.begin(), data.end()),
                            {py::ssize_t(batch.batch), py::ssize_t(batch.steps), py::ssize_t(model.config().vocab_size)});
          },
          py::arg("ids"), "next-token logits, shape [batch, steps, vocab]")
      .def("save", [](const LanguageModel& model, const std::filesystem::path& p) { save_checkpoint(p, model); })
      .def("checkpoint_bytes", [](const LanguageModel& model) { return py::bytes(checkpoint_bytes(model)); })
      .def_static("load", &load_checkpoint);

  // ---- recurrence and losses ---------------------------------------------
  m.def(
      "gated_recurrence",
      [](const FloatArray& q, const FloatArray& f, const FloatArray& k, const FloatArray& v, std::size_t heads,
         std::size_t block) {
        require(q.ndim() == 2 && v.ndim() == 2, ErrorKind::dimension, "q and v must be [steps, width]");
        RecurrenceDims d{1, std::size_t(q.shape(0)), heads, std::size_t(q.shape(1)) / heads,
                         std::size_t(v.shape(1)) / heads};
        const auto r = block == 0 ? recurrence_sequential(d, view(q), view(f), view(k), view(v), {})
                                  : recurrence_chunked(d, block, view(q), view(f), view(k), view(v), {});
        return py::make_tuple(to_array(r.output, {py::ssize_t(d.steps), py::ssize_t(d.value_width())}),
                              to_array(r.final_state, {py::ssize_t(d.state_width())}));
      },
      py::arg("q"), py::arg("f"), py::arg("k"), py::arg("v"), py::arg("heads") = 1, py::arg("block") = 0,
      "S_t = diag(f_t) S_{t-1} + k_t v_t^T, o_t = S_t^T q_t per head; block 0 = sequential. "
      "Returns (outputs, final state).");

  m.def("monotone_lower_bounds", [](const FloatArray& gammas) {
    const auto t = monotone_lower_bounds(to_tensor(gammas));
    const auto data = t.data();
    return to_array(std::vector<real>(data.begin(), data.end()),
                    std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  });
  m.def(
      "ce_loss",
      [](const FloatArray& logits, const std::vector<TokenId>& targets) {
        return ce_loss(to_tensor(logits), targets).item();
      },
      py::arg("logits"), py::arg("targets"));
  m.def(
      "kd_loss",
      [](const FloatArray& teacher, const FloatArray& student, double temperature) {
        return kd_loss(to_tensor(teacher), to_tensor(student), temperature).item();
      },
      py::arg("teacher"), py::arg("student"), py::arg("temperature") = 1.0);
  m.def("total_loss", py::overload_cast<double, double, double>(&total_loss), py::arg("ce"), py::arg("kd"),
        py::arg("alpha"));

  // ---- tokenizers and data -------------------------------------------------
  py::class_<TextEncoder>(m, "TextEncoder")
      .def("encode", &TextEncoder::encode)
      .def("decode", [](const TextEncoder& enc, const std::vector<TokenId>& ids) { return enc.decode(ids); })
      .def("vocab_size", &TextEncoder::vocab_size);
  py::class_<BpeVocabulary, TextEncoder>(m, "BpeVocabulary")
      .def_static("train", [](const std::vector<std::string>& docs, std::size_t size) {
        return BpeVocabulary::train(docs, size);
      })
      .def("reached_requested_size", &BpeVocabulary::reached_requested_size)
      .def("save", &BpeVocabulary::save);
  py::class_<WordVocabulary, TextEncoder>(m, "WordVocabulary")
      .def("save", &WordVocabulary::save);
  m.def("load_encoder", &load_encoder);

  py::class_<PackedDataset>(m, "PackedDataset")
      .def_readonly("vocab_size", &PackedDataset::vocab_size)
      .def_readonly("chunk_len", &PackedDataset::chunk_len)
      .def_readonly("dropped_tokens", &PackedDataset::dropped_tokens)
      .def("chunk_count", &PackedDataset::chunk_count)
      .def("tokens",
           [](const PackedDataset& d) {
             py::array_t<std::uint32_t> out({py::ssize_t(d.chunk_count()), py::ssize_t(d.chunk_len)});
             std::copy(d.tokens.begin(), d.tokens.end(), out.mutable_data());
             return out;
           })
      .def("to_bytes", [](const PackedDataset& d) { return py::bytes(packed_bytes(d)); })
      .def("save", [](const PackedDataset& d, const std::filesystem::path& p) { save_packed(p, d); })
      .def_static("load", &load_packed);
  m.def(
      "pack",
      [](const std::vector<std::string>& docs, const TextEncoder& encoder, std::size_t chunk_len) {
        return pack(docs, encoder, chunk_len);
      },
      py::arg("documents"), py::arg("encoder"), py::arg("chunk_len") = 512);
  m.def("bigram_conditional_entropy", &bigram_conditional_entropy);

  m.def("count_words", &count_words);
  m.def("mixture_10m_counts", &mixture_10m_counts);
  m.def(
      "sample_corpus",
      [](const py::object& plan, const std::map<std::string, std::vector<std::string>>& pools,
         std::size_t total_words, std::uint64_t seed) {
        DomainPools dp;
        for (const auto& [name, texts] : pools) {
          for (const auto& t : texts) dp[name].push_back({t, name});
        }
        const auto sampled = sample_corpus(SamplingPlan::from_json(from_python(plan)), dp, total_words, seed);
        std::vector<std::pair<std::string, std::string>> docs;
        for (const auto& d : sampled.documents) docs.emplace_back(d.domain, d.text);
        return py::make_tuple(docs, to_python(sampled.manifest.to_json()));
      },
      py::arg("plan"), py::arg("pools"), py::arg("total_words"), py::arg("seed") = 0,
      "plan: {'domains': [{'name', 'ratio'}...]}; returns ([(domain, text)], manifest dict)");

  py::class_<SyntheticGrammar>(m, "SyntheticGrammar")
      .def(py::init<>())
      .def("vocabulary", &SyntheticGrammar::vocabulary, py::return_value_policy::reference_internal)
      .def("corpus", &SyntheticGrammar::corpus, py::arg("target_words"), py::arg("seed") = 0)
      .def(
          "minimal_pairs",
          [](const SyntheticGrammar& g, std::size_t n, std::uint64_t seed) {
            std::vector<std::tuple<std::string, std::string, std::string>> out;
            for (const auto& p : g.minimal_pairs(n, seed)) out.emplace_back(p.good, p.bad, p.tag);
            return out;
          },
          py::arg("count"), py::arg("seed") = 0, "[(good, bad, tag)]")
      .def(
          "choice_instances",
          [](const SyntheticGrammar& g, std::size_t n, std::size_t candidates, std::uint64_t seed) {
            py::list out;
            for (const auto& c : g.choice_instances(n, candidates, seed)) {
              py::dict d;
              d["context"] = c.context;
              d["candidates"] = c.candidates;
              d["gold"] = c.gold;
              d["tag"] = c.tag;
              out.append(d);
            }
            return out;
          },
          py::arg("count"), py::arg("candidates") = 4, py::arg("seed") = 0);

  // ---- training ----------------------------------------------------------
  m.def(
      "train",
      [](LanguageModel& model, const PackedDataset& data, const py::dict& config,
         const std::optional<py::dict>& distill, const LanguageModel* teacher) {
        const auto cfg = TrainConfig::from_json(from_python(config));
        TrainReport report;
        if (distill) {
          const auto dc = DistillConfig::from_json(from_python(*distill));
          report = train(model, data, cfg, &dc, teacher);
        } else {
          report = train(model, data, cfg);
        }
        return to_python(report.to_json());
      },
      py::arg("model"), py::arg("data"), py::arg("config") = py::dict(), py::arg("distill") = py::none(),
      py::arg("teacher") = nullptr,
      "config keys: epochs, batch_size, learning_rate, sequence_length, max_grad_norm, seed, output_dir, ...; "
      "distill keys: alpha, temperature, teacher_checkpoint. Returns the report dict.");
  m.def(
      "lr_sweep",
      [](const ModelConfig& mc, std::uint64_t model_seed, const PackedDataset& data, const py::dict& config,
         const std::vector<double>& grid) {
        const auto cfg = TrainConfig::from_json(from_python(config));
        return to_python(lr_sweep([&] { return LanguageModel(mc, model_seed); }, data, cfg, grid).to_json());
      },
      py::arg("model_config"), py::arg("model_seed"), py::arg("data"), py::arg("config") = py::dict(),
      py::arg("grid") = default_lr_grid());

  // ---- evaluation --------------------------------------------------------
  m.def(
      "sequence_logprob",
      [](const LanguageModel& model, const TextEncoder& enc, const std::string& text, const std::string& context,
         const std::string& start) {
        const auto s = sequence_logprob(model, enc, text, context, parse_start(start));
        return py::make_tuple(s.logprob, s.tokens);
      },
      py::arg("model"), py::arg("encoder"), py::arg("text"), py::arg("context") = "",
      py::arg("start") = "boundary", "(sum of log-probabilities in nats, token count)");
  m.def(
      "eval_minimal_pairs",
      [](const LanguageModel& model, const TextEncoder& enc,
         const std::vector<std::tuple<std::string, std::string, std::string>>& pairs, const std::string& norm,
         const std::string& start) {
        std::vector<MinimalPair> items;
        for (const auto& [good, bad, tag] : pairs) items.push_back({good, bad, tag});
        for (const auto& p : items) validate(p);
        return score_dict(eval_minimal_pairs(model, enc, items, options(norm, start)));
      },
      py::arg("model"), py::arg("encoder"), py::arg("pairs"), py::arg("norm") = "none",
      py::arg("start") = "boundary");
  m.def(
      "eval_choice",
      [](const LanguageModel& model, const TextEncoder& enc, const py::list& instances, const std::string& norm,
         const std::string& start) {
        std::vector<ChoiceInstance> items;
        for (const auto& obj : instances) {
          const auto d = obj.cast<py::dict>();
          ChoiceInstance c{d["context"].cast<std::string>(), d["candidates"].cast<std::vector<std::string>>(),
                           d["gold"].cast<std::size_t>(),
                           d.contains("tag") ? d["tag"].cast<std::string>() : std::string()};
          validate(c);
          items.push_back(std::move(c));
        }
        return score_dict(eval_choice(model, enc, items, options(norm, start)));
      },
      py::arg("model"), py::arg("encoder"), py::arg("instances"), py::arg("norm") = "none",
      py::arg("start") = "boundary");
  m.def("macro_average", [](const std::vector<double>& scores) { return macro_average(scores); });
  m.def("mean_cross_entropy", &mean_cross_entropy, py::arg("model"), py::arg("data"), py::arg("batch_size") = 16);
  m.def("perplexity", &perplexity, py::arg("model"), py::arg("data"), py::arg("batch_size") = 16);
}
