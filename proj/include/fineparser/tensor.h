#pragma once

// Dense double-precision tensors with tape-free reverse-mode autodiff.
//
// Every op returns a fresh Tensor whose node remembers its parents and a
// backward closure. Calling backward() on a scalar walks the graph in reverse
// topological order. Leaves created with requires_grad accumulate gradients
// across calls until zero_grad().

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fineparser {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Lazily sized gradient buffer; nullptr when the node does not track grads.
  double* grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  int dim() const { return static_cast<int>(shape().size()); }
  int size(int d) const;
  std::int64_t numel() const;

  std::span<const double> values() const;
  // Mutable access is meant for leaves (parameters, inputs) only.
  std::span<double> values_mut();
  std::span<const double> grad() const;
  std::span<double> grad_mut();

  bool requires_grad() const;
  double item() const;
  void backward() const;
  void zero_grad();
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, std::vector<double>, const std::vector<Tensor>&,
                            std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

// Disables graph construction for its lifetime (evaluation mode).
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

// Creates an op output. The backward closure is only kept when grad mode is
// on and at least one parent tracks gradients.
Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& parents,
                   std::function<void(detail::Node&)> backward);

}  // namespace fineparser
