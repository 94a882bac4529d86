#include "babyhgrn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace babyhgrn {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::usage: return "usage";
    case ErrorKind::data: return "data";
    case ErrorKind::config: return "config";
    case ErrorKind::plan: return "plan";
    case ErrorKind::ingestion: return "ingestion";
  }
  return "unknown";
}

namespace {

std::atomic<std::uint64_t> next_sequence{1};
thread_local bool recording = true;

std::uint64_t take_sequence() { return next_sequence.fetch_add(1, std::memory_order_relaxed); }

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<real> data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    fail(ErrorKind::dimension, "tensor of shape " + shape_string(shape) + " given " +
                                   std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->sequence = take_sequence();
  return node;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::vector<real>& detail::Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), real(0));
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<real>(n, real(0)), requires_grad));
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<real>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<real> values, bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return Tensor(new_node({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const {
  require(defined(), ErrorKind::usage, "use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  require(axis < s.size(), ErrorKind::dimension,
          "axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::size() const { return numel(shape()); }

std::span<const real> Tensor::data() const {
  require(defined(), ErrorKind::usage, "use of an undefined tensor");
  return node_->data;
}

std::span<real> Tensor::mutable_data() {
  require(defined(), ErrorKind::usage, "use of an undefined tensor");
  return node_->data;
}

real Tensor::item() const {
  require(size() == 1, ErrorKind::usage, "item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  require(defined(), ErrorKind::usage, "use of an undefined tensor");
  require(node_->is_leaf(), ErrorKind::usage, "requires_grad can only be set on leaf tensors");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return defined() && node_->grad.size() == node_->data.size(); }

std::span<const real> Tensor::grad() const {
  require(has_grad(), ErrorKind::usage, "tensor has no gradient");
  return node_->grad;
}

std::span<real> Tensor::mutable_grad() {
  require(defined(), ErrorKind::usage, "use of an undefined tensor");
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (defined()) std::fill(node_->grad.begin(), node_->grad.end(), real(0));
}

const char* Tensor::op_name() const { return defined() ? node_->op : "undefined"; }

std::uint64_t Tensor::sequence() const { return defined() ? node_->sequence : 0; }

Tensor Tensor::detach() const {
  return Tensor(new_node(shape(), node_->data, false));
}

Tape Tape::collect(const Tensor& loss) {
  Tape tape;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    auto* node = stack.back();
    stack.pop_back();
    if (node->is_leaf()) {
      if (node->requires_grad) tape.leaves_.push_back(node);
      continue;
    }
    tape.records_.push_back(node);
    for (const auto& parent : node->parents) {
      if (parent->requires_grad && seen.insert(parent.get()).second) {
        stack.push_back(parent.get());
      }
    }
  }
  std::sort(tape.records_.begin(), tape.records_.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->sequence > b->sequence; });
  std::sort(tape.leaves_.begin(), tape.leaves_.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->sequence < b->sequence; });
  return tape;
}

void Tensor::backward() const {
  require(defined(), ErrorKind::usage, "backward() on an undefined tensor");
  require(size() == 1, ErrorKind::usage,
          "backward() needs a scalar loss, got shape " + shape_string(shape()));
  require(node_->requires_grad, ErrorKind::usage,
          "backward() on a tensor that does not depend on any requires_grad input");

  const Tape tape = Tape::collect(*this);
  for (auto* record : tape.records()) {
    record->grad.assign(record->data.size(), real(0));
  }
  for (auto* leaf : tape.leaves()) leaf->ensure_grad();
  node_->ensure_grad()[0] += real(1);

  for (auto* record : tape.records()) {
    record->backward(*record);
  }
}

NoGradGuard::NoGradGuard() : previous_(recording) { recording = false; }
NoGradGuard::~NoGradGuard() { recording = previous_; }

bool grad_enabled() { return recording; }

namespace detail {

Tensor make_result(Shape shape, std::vector<real> data, const char* op,
                   std::vector<Tensor> parents, std::function<void(Node&)> backward) {
  check_finite(data, op);
  bool needs_grad = false;
  if (recording) {
    for (const auto& p : parents) needs_grad = needs_grad || p.requires_grad();
  }
  auto node = new_node(std::move(shape), std::move(data), needs_grad);
  node->op = op;
  if (needs_grad) {
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void check_finite(std::span<const real> values, const char* op) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorKind::numeric, std::string("non-finite value produced by ") + op +
                                   " at flat index " + std::to_string(i));
    }
  }
}

}  // namespace detail

}  // namespace babyhgrn
