#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "babyhgrn/errors.hpp"

#ifndef BABYHGRN_REAL
#define BABYHGRN_REAL float
#endif

namespace babyhgrn {

// Storage scalar. The shipped library uses f32; the gradient-check build
// compiles the same sources with f64.
using real = BABYHGRN_REAL;

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;
  bool requires_grad = false;
  std::uint64_t sequence = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::vector<real>& ensure_grad();
};

}  // namespace detail

// Dense row-major array with an optional gradient slot. Copies share the
// underlying storage; values are fixed once an op produces them, only grad
// accumulates.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<real> values, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const real> data() const;
  // Direct write access, intended for leaves (parameter updates, test setup).
  std::span<real> mutable_data();
  real at(std::size_t flat_index) const { return data()[flat_index]; }
  real item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const real> grad() const;
  std::span<real> mutable_grad();
  void zero_grad();

  const char* op_name() const;
  std::uint64_t sequence() const;

  // A constant tensor holding a copy of the values, cut from the graph.
  Tensor detach() const;

  // Reverse-mode pass from this scalar. Leaf gradients accumulate across
  // calls; intermediate gradients are recomputed each call.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record list for one backward pass: every op node reachable from a
// loss, sorted by strictly decreasing creation sequence.
class Tape {
 public:
  static Tape collect(const Tensor& loss);

  std::span<detail::Node* const> records() const { return records_; }
  std::span<detail::Node* const> leaves() const { return leaves_; }

 private:
  std::vector<detail::Node*> records_;
  std::vector<detail::Node*> leaves_;
};

// While alive on a thread, newly created tensors are constants and no graph
// is recorded (teacher forward passes, evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

// Builds an op result. When no parent requires grad (or recording is off)
// the parents and backward closure are dropped.
Tensor make_result(Shape shape, std::vector<real> data, const char* op,
                   std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);

void check_finite(std::span<const real> values, const char* op);

}  // namespace detail

}  // namespace babyhgrn
