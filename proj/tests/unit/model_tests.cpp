#include <doctest.h>

#include <cmath>
#include <sstream>

#include "babyhgrn/checkpoint.hpp"
#include "babyhgrn/model.hpp"
#include "babyhgrn/ops.hpp"

using namespace babyhgrn;

namespace {

ModelConfig small_config(std::size_t layers = 2) {
  ModelConfig cfg;
  cfg.vocab_size = 30;
  cfg.hidden_size = 16;
  cfg.num_layers = layers;
  cfg.expand_ratio = 4;
  cfg.num_heads = 2;
  cfg.hidden_ratio = 2;
  cfg.scan_block = 4;
  return cfg;
}

double sup_diff(std::span<const real> a, std::span<const real> b) {
  REQUIRE(a.size() == b.size());
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, double(std::abs(a[i] - b[i])));
  return worst;
}

}  // namespace

TEST_CASE("lower bounds start at zero, never decrease and stay below one") {
  Rng rng(1);
  for (std::size_t layers = 1; layers <= 6; ++layers) {
    std::vector<real> g(layers * 5);
    for (auto& x : g) x = real(rng.uniform(-3, 3));
    const auto beta = monotone_lower_bounds(Tensor::from({layers, 5}, g));
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(beta.data()[c] == 0.0);
      for (std::size_t l = 1; l < layers; ++l) {
        CHECK(beta.data()[l * 5 + c] >= beta.data()[(l - 1) * 5 + c]);
        CHECK(beta.data()[l * 5 + c] < 1.0);
      }
    }
  }
}

TEST_CASE("equal lower-bound logits give evenly spaced floors") {
  const auto beta = monotone_lower_bounds(Tensor::zeros({3, 1}));
  CHECK(beta.data()[0] == doctest::Approx(0.0));
  CHECK(beta.data()[1] == doctest::Approx(1.0 / 3));
  CHECK(beta.data()[2] == doctest::Approx(2.0 / 3));
}

TEST_CASE("model reports its lower bounds per layer") {
  LanguageModel model(small_config(3), 2);
  const auto values = model.lower_bound_values();
  REQUIRE(values.size() == 3);
  CHECK(values[0].size() == model.config().forget_dim());
  CHECK(values[2][0] == doctest::Approx(2.0 / 3));
}

TEST_CASE("layer size does not depend on expand ratio when heads are derived") {
  for (std::size_t d : {16, 32, 64}) {
    ModelConfig a = small_config();
    a.hidden_size = d;
    a.num_heads = 0;
    a.expand_ratio = 2;
    ModelConfig b = a;
    b.expand_ratio = 8;
    CHECK(LanguageModel(a, 1).layer_parameter_count(0) == LanguageModel(b, 1).layer_parameter_count(0));
  }
}

TEST_CASE("outputs at a step do not depend on later tokens") {
  LanguageModel model(small_config(), 3);
  TokenBatch a{1, 6, {1, 2, 3, 4, 5, 6}};
  TokenBatch b{1, 6, {1, 2, 3, 9, 9, 9}};
  NoGradGuard no_grad;
  const auto la = model.forward(a), lb = model.forward(b);
  const std::size_t v = model.config().vocab_size;
  CHECK(sup_diff(la.data().subspan(0, 3 * v), lb.data().subspan(0, 3 * v)) == 0.0);
  CHECK(sup_diff(la.data().subspan(3 * v), lb.data().subspan(3 * v)) > 0.0);
}

TEST_CASE("carried state reproduces a single pass") {
  for (auto arch : {ArchKind::hgrn2, ArchKind::lstm}) {
    ModelConfig cfg = arch == ArchKind::hgrn2 ? small_config() : desk_lstm_config(30);
    if (arch == ArchKind::lstm) cfg.hidden_size = 12;
    LanguageModel model(cfg, 4);
    NoGradGuard no_grad;
    const std::vector<TokenId> all = {1, 5, 7, 2, 9, 11, 3};
    const auto whole = model.forward(TokenBatch::single(all));
    ModelState state;
    const std::vector<TokenId> head(all.begin(), all.begin() + 3), tail(all.begin() + 3, all.end());
    model.forward(TokenBatch::single(head), {}, &state);
    CHECK(state.position == 3);
    const auto rest = model.forward(TokenBatch::single(tail), {}, &state);
    CHECK(sup_diff(whole.data().subspan(3 * cfg.vocab_size), rest.data()) < 1e-5);
  }
}

TEST_CASE("scan mode does not change logits") {
  LanguageModel model(small_config(), 5);
  TokenBatch batch{2, 9, {}};
  for (std::size_t i = 0; i < 18; ++i) batch.ids.push_back(TokenId(i % 30));
  NoGradGuard no_grad;
  ForwardOptions seq;
  seq.scan_mode = ScanMode::sequential;
  ForwardOptions chunked;
  chunked.scan_mode = ScanMode::chunked;
  chunked.scan_block = 4;
  CHECK(sup_diff(model.forward(batch, seq).data(), model.forward(batch, chunked).data()) < 1e-5);
}

TEST_CASE("token ids outside the vocabulary are rejected") {
  LanguageModel model(small_config(), 6);
  TokenBatch batch{1, 2, {1, 30}};
  CHECK_THROWS_AS(model.forward(batch), Error);
}

TEST_CASE("checkpoint round trip is exact") {
  for (auto arch : {ArchKind::hgrn2, ArchKind::lstm}) {
    ModelConfig cfg = arch == ArchKind::hgrn2 ? small_config() : desk_lstm_config(30);
    LanguageModel model(cfg, 7);
    const std::string bytes = checkpoint_bytes(model);
    std::istringstream in(bytes);
    LanguageModel copy = read_checkpoint(in);
    CHECK(checkpoint_bytes(copy) == bytes);
    CHECK(copy.parameter_count() == model.parameter_count());
    NoGradGuard no_grad;
    const auto batch = TokenBatch::single(std::vector<TokenId>{1, 2, 3});
    CHECK(sup_diff(model.forward(batch).data(), copy.forward(batch).data()) == 0.0);
  }
}

TEST_CASE("corrupt checkpoints are data errors") {
  LanguageModel model(small_config(), 8);
  std::string bytes = checkpoint_bytes(model);
  std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
  try {
    read_checkpoint(truncated);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
  bytes[0] = 'X';
  std::istringstream bad_magic(bytes);
  CHECK_THROWS_AS(read_checkpoint(bad_magic), Error);
}

TEST_CASE("presets carry the published configurations") {
  const auto& h360 = find_preset("hgrn2-360m").config;
  CHECK(h360.hidden_size == 1024);
  CHECK(h360.num_layers == 26);
  CHECK(h360.hidden_ratio == 4);
  CHECK(h360.expand_ratio == 128);
  CHECK(find_preset("hgrn2-1.2b").config.hidden_size == 2048);
  CHECK(find_preset("hgrn2-1.2b").config.num_layers == 18);
  const auto& lstm = find_preset("lstm").config;
  CHECK(lstm.hidden_size == 9120);
  CHECK(lstm.embedding_size == 512);
  CHECK(lstm.num_layers == 2);
  CHECK(lstm.dropout == doctest::Approx(0.1));
  CHECK_FALSE(find_preset("mamba").buildable);
  CHECK_THROWS_AS(find_preset("nope"), Error);
}

TEST_CASE("invalid configurations are config errors") {
  ModelConfig cfg = small_config();
  cfg.hidden_size = 15;
  try {
    LanguageModel model(cfg, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}
