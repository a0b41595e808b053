#pragma once

// Reverse-mode automatic differentiation over dense row-major float64 arrays.
//
// A Tensor is a cheap handle; copies share storage. Use clone() for an
// independent copy. Operations on tensors that require gradients record an
// OpNode; backward() walks the recorded graph once and then releases it.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace smil {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {
struct TensorImpl;
struct OpNode;
}  // namespace detail

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  /// Writable view of the values. Only meaningful for leaves (parameters).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  bool is_leaf() const;
  /// Operation that produced this tensor, or "leaf".
  std::string_view op_kind() const;

  /// New leaf with copied values and no graph link.
  Tensor detach() const;
  /// New leaf with copied values, keeping the requires-grad flag.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Populates gradients of every requires-grad tensor reachable from `loss`.
/// The graph is consumed: a second call on the same graph throws GraphError.
void backward(const Tensor& loss);

// ---- operations -----------------------------------------------------------

/// a[m x k] * b[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// Valid-padding 2-D convolution: x[N x C x H x W], w[O x C x k x k], bias[O].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);
/// 2x2 max pooling with stride 2 over the last two axes of a rank-4 tensor.
Tensor max_pool2x2(const Tensor& x);

/// Elementwise; either operand may be a single-element tensor (broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor scale(const Tensor& a, double c);
/// x[N x d] + bias[d] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

/// Concatenate two rank-2 tensors along the feature axis.
Tensor concat(const Tensor& a, const Tensor& b);
/// Columns [begin, end) of a rank-2 tensor.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean over rows of -log softmax(logits)[label].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Mean over all cells of the weighted binary cross-entropy on logits.
/// `targets` holds 0/1 per cell; positives are weighted by `pos_weight`.
Tensor sigmoid_cross_entropy(const Tensor& logits, std::span<const double> targets,
                             double pos_weight = 1.0);

// Scalar helpers shared by the ops and the tests.
double softplus(double x);
double sigmoid(double x);

/// Max over coordinates of |analytic - central difference| / max(|analytic|,
/// |numeric|, 1e-6). `f` must be deterministic and return a single element.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                  double step = 1e-5);

}  // namespace smil
