#include <doctest.h>

#include <cmath>

#include "babyhgrn/ops.hpp"
#include "babyhgrn/random.hpp"

using namespace babyhgrn;

namespace {
template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::usage;
}
}  // namespace

TEST_CASE("tape lists records in strictly decreasing creation order") {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  auto b = Tensor::from({2, 2}, {0.5, -1, 2, 0}, true);
  auto c = mul(a, b);
  auto d = add(c, a);
  auto loss = sum(sigmoid(d));
  const auto tape = Tape::collect(loss);
  REQUIRE(tape.records().size() == 4);
  for (std::size_t i = 1; i < tape.records().size(); ++i) {
    CHECK(tape.records()[i - 1]->sequence > tape.records()[i]->sequence);
  }
  CHECK(tape.leaves().size() == 2);
}

TEST_CASE("leaf gradients accumulate across backward calls") {
  auto a = Tensor::from({3}, {1, 2, 3}, true);
  auto loss = sum(mul(a, a));
  loss.backward();
  CHECK(a.grad()[1] == doctest::Approx(4.0));
  loss.backward();
  CHECK(a.grad()[1] == doctest::Approx(8.0));
  a.zero_grad();
  CHECK(a.grad()[1] == 0.0);
}

TEST_CASE("backward needs a scalar") {
  auto a = Tensor::from({2}, {1, 2}, true);
  CHECK(kind_of([&] { mul(a, a).backward(); }) == ErrorKind::usage);
}

TEST_CASE("no-grad scope records nothing") {
  auto a = Tensor::from({2}, {1, 2}, true);
  Tensor out;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    out = mul(a, a);
  }
  CHECK(grad_enabled());
  CHECK_FALSE(out.requires_grad());
}

TEST_CASE("shape and value errors are categorised") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  CHECK(kind_of([&] { matmul(a, b); }) == ErrorKind::dimension);
  CHECK(kind_of([&] { add(a, Tensor::zeros({3, 2})); }) == ErrorKind::dimension);
  CHECK(kind_of([&] { exp(Tensor::from({1}, {1000})); }) == ErrorKind::numeric);
  const std::vector<std::int64_t> ids = {0, 5};
  CHECK(kind_of([&] { gather_rows(Tensor::zeros({3, 2}), ids); }) == ErrorKind::data);
  CHECK(kind_of([&] { softmax(Tensor::zeros({2, 0})); }) == ErrorKind::dimension);
}

TEST_CASE("softmax rows are distributions and log_softmax matches an oracle") {
  Rng rng(3);
  std::vector<real> values(12);
  for (auto& v : values) v = real(rng.uniform(-30, 30));
  auto z = Tensor::from({3, 4}, values);
  auto p = softmax(z);
  auto lp = log_softmax(z);
  for (std::size_t r = 0; r < 3; ++r) {
    long double mx = -INFINITY, total = 0, row = 0;
    for (std::size_t c = 0; c < 4; ++c) mx = std::max<long double>(mx, values[r * 4 + c]);
    for (std::size_t c = 0; c < 4; ++c) total += std::exp((long double)values[r * 4 + c] - mx);
    for (std::size_t c = 0; c < 4; ++c) {
      const long double expected = values[r * 4 + c] - mx - std::log(total);
      CHECK(lp.data()[r * 4 + c] == doctest::Approx(double(expected)).epsilon(1e-5));
      row += p.data()[r * 4 + c];
    }
    CHECK(double(row) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("rms_norm and dropout") {
  auto x = Tensor::from({1, 4}, {1, -1, 1, -1});
  auto gain = Tensor::from({4}, {1, 2, 3, 4});
  auto y = rms_norm(x, gain);
  CHECK(y.data()[1] == doctest::Approx(-2.0).epsilon(1e-5));

  Rng rng(4);
  auto ones = Tensor::full({100, 100}, 1);
  auto same = dropout(ones, 0, rng);
  CHECK(same.data()[17] == 1.0);
  auto dropped = dropout(ones, real(0.25), rng);
  double total = 0;
  std::size_t zeros = 0;
  for (real v : dropped.data()) {
    total += v;
    zeros += v == 0;
  }
  CHECK(total / 1e4 == doctest::Approx(1.0).epsilon(0.05));
  CHECK(double(zeros) / 1e4 == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("rng draws are reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  std::vector<int> x = {1, 2, 3, 4, 5}, y = x;
  Rng c(7), d(7);
  c.shuffle(std::span<int>(x));
  d.shuffle(std::span<int>(y));
  CHECK(x == y);
  for (int i = 0; i < 1000; ++i) CHECK(a.below(3) < 3);
}
