#pragma once

// A small reverse-mode autodiff core over dense double arrays. Operations
// record a tape only when an input requires a gradient and recording is not
// suppressed by a NoGradGuard.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace trajaware::nn {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass touches the node
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node& self)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  /// A learnable leaf.
  static Tensor parameter(Shape shape, std::vector<double> data) {
    return from(std::move(shape), std::move(data), true);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  double item() const;
  double at(std::size_t i) const { return node_->data.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->data.at(r * cols() + c); }

  /// Accumulated gradient; zeros when no backward pass has reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  /// A leaf sharing nothing with this tensor's tape.
  Tensor detach() const;

 private:
  std::shared_ptr<Node> node_;
};

/// Suppresses tape recording for its lifetime (thread-local).
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

/// Populates gradients of every tensor reachable from a scalar loss.
/// Leaf gradients accumulate across calls; interior ones are rebuilt.
void backward(const Tensor& loss);

// --- primitive operations ---------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor add_row(const Tensor& x, const Tensor& row);  // [n,d] + [d]
Tensor scale(const Tensor& x, double s);
Tensor one_minus(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor sum(const Tensor& x);
/// sum(x * w) with a constant weight array.
Tensor weighted_sum(const Tensor& x, std::span<const double> w);
Tensor mean_squared(const Tensor& x);
/// Selected rows; index -1 produces a zero row.
Tensor gather_rows(const Tensor& x, std::span<const int> rows);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor reshape(const Tensor& x, Shape shape);
Tensor element(const Tensor& x, std::size_t index);  // scalar view
/// Row-wise mean over neighbour lists; isolated rows are zero. Neighbour
/// rows are summed in lexicographic order of their contents, so the result
/// does not depend on how nodes are numbered.
Tensor neighbour_mean(const Tensor& x, const std::vector<std::vector<int>>& neighbours);

/// Builds a custom differentiable op. `backward` receives the output grad
/// and must accumulate into the parents' grads.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   std::function<void(Node& out)> backward);

}  // namespace trajaware::nn
