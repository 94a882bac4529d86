#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "babyhgrn/random.hpp"
#include "babyhgrn/recurrence.hpp"

using namespace babyhgrn;

namespace {

struct Inputs {
  std::vector<real> q, f, k, v, s0;
};

Inputs random_inputs(const RecurrenceDims& d, Rng& rng, bool with_state) {
  Inputs in;
  auto fill = [&](std::vector<real>& x, std::size_t n, double lo, double hi) {
    x.resize(n);
    for (auto& e : x) e = real(rng.uniform(lo, hi));
  };
  fill(in.q, d.rows() * d.key_width(), -1, 1);
  fill(in.f, d.rows() * d.key_width(), 0.0, 1.0);
  fill(in.k, d.rows() * d.key_width(), -1, 1);
  fill(in.v, d.rows() * d.value_width(), -1, 1);
  if (with_state) fill(in.s0, d.batch * d.state_width(), -1, 1);
  return in;
}

// Literal per-head matrix recurrence in long double.
std::pair<std::vector<long double>, std::vector<long double>> oracle(const RecurrenceDims& d,
                                                                     const Inputs& in) {
  const std::size_t E = d.key_dim, V = d.value_dim;
  std::vector<long double> out(d.rows() * d.value_width(), 0), last(d.batch * d.state_width(), 0);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t h = 0; h < d.heads; ++h) {
      std::vector<long double> S(E * V, 0);
      if (!in.s0.empty()) {
        for (std::size_t i = 0; i < E * V; ++i) S[i] = in.s0[b * d.state_width() + h * E * V + i];
      }
      for (std::size_t t = 0; t < d.steps; ++t) {
        const std::size_t row = b * d.steps + t;
        for (std::size_t c = 0; c < E; ++c) {
          const long double fc = in.f[row * d.key_width() + h * E + c];
          const long double kc = in.k[row * d.key_width() + h * E + c];
          for (std::size_t j = 0; j < V; ++j) {
            S[c * V + j] = fc * S[c * V + j] + kc * in.v[row * d.value_width() + h * V + j];
          }
        }
        for (std::size_t j = 0; j < V; ++j) {
          long double o = 0;
          for (std::size_t c = 0; c < E; ++c) o += S[c * V + j] * in.q[row * d.key_width() + h * E + c];
          out[row * d.value_width() + h * V + j] = o;
        }
      }
      for (std::size_t i = 0; i < E * V; ++i) last[b * d.state_width() + h * E * V + i] = S[i];
    }
  }
  return {out, last};
}

template <typename A, typename B>
double sup_diff(const A& a, const B& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, double(std::abs((long double)a[i] - (long double)b[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("sequential path matches a literal matrix recurrence") {
  Rng rng(1);
  const RecurrenceDims d{2, 7, 3, 4, 2};
  const auto in = random_inputs(d, rng, true);
  const auto got = recurrence_sequential(d, in.q, in.f, in.k, in.v, in.s0);
  const auto [out, last] = oracle(d, in);
  CHECK(sup_diff(got.output, out) < 1e-5);
  CHECK(sup_diff(got.final_state, last) < 1e-5);
}

TEST_CASE("chunked path matches sequential for several block sizes") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const RecurrenceDims d{1 + rng.below(2), 1 + rng.below(40), 1 + rng.below(3), 1 + rng.below(8),
                           1 + rng.below(4)};
    const auto in = random_inputs(d, rng, trial % 2 == 0);
    const auto ref = recurrence_sequential(d, in.q, in.f, in.k, in.v, in.s0);
    for (std::size_t block : {std::size_t{1}, std::size_t{3}, std::size_t{4}, d.steps, d.steps + 5}) {
      const auto got = recurrence_chunked(d, block, in.q, in.f, in.k, in.v, in.s0);
      CHECK(sup_diff(got.output, ref.output) < 1e-5);
      CHECK(sup_diff(got.final_state, ref.final_state) < 1e-5);
    }
  }
}

TEST_CASE("block size one is the step recurrence exactly") {
  Rng rng(3);
  const RecurrenceDims d{1, 9, 2, 3, 3};
  const auto in = random_inputs(d, rng, true);
  const auto a = recurrence_sequential(d, in.q, in.f, in.k, in.v, in.s0);
  const auto b = recurrence_chunked(d, 1, in.q, in.f, in.k, in.v, in.s0);
  CHECK(a.output == b.output);
  CHECK(a.final_state == b.final_state);
}

TEST_CASE("zero block size is rejected") {
  const RecurrenceDims d{1, 2, 1, 1, 1};
  const std::vector<real> x(2, 0.5);
  CHECK_THROWS_AS(recurrence_chunked(d, 0, x, x, x, x, {}), Error);
}

TEST_CASE("block summaries combine associatively") {
  Rng rng(4);
  auto random_summary = [&] {
    BlockSummary s;
    s.decay.resize(3);
    s.state.resize(6);
    for (auto& x : s.decay) x = rng.uniform();
    for (auto& x : s.state) x = rng.uniform(-1, 1);
    return s;
  };
  const auto a = random_summary(), b = random_summary(), c = random_summary();
  const auto left = combine(combine(a, b), c);
  const auto right = combine(a, combine(b, c));
  CHECK(sup_diff(left.decay, right.decay) < 1e-12);
  CHECK(sup_diff(left.state, right.state) < 1e-12);
}

TEST_CASE("zero forget gate keeps only the current outer product") {
  const RecurrenceDims d{1, 2, 1, 2, 1};
  const std::vector<real> q = {1, 1, 1, 1}, f = {0, 0, 0, 0}, k = {1, 2, 3, 4}, v = {5, 7};
  const auto r = recurrence_sequential(d, q, f, k, v, {});
  CHECK(r.output[0] == doctest::Approx(15.0));
  CHECK(r.output[1] == doctest::Approx(49.0));
}
