#include "smil/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "smil/kernels.hpp"

namespace smil {

namespace detail {

struct OpNode {
  std::string kind;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Receives the output gradient and accumulates into the inputs.
  std::function<void(std::span<const double>)> backward;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty when absent
  bool requires_grad = false;
  std::shared_ptr<OpNode> producer;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::OpNode;
using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) { impl_->values.assign(1, 0.0); }

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
  }
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::size() const { return impl_->values.size(); }
std::span<const double> Tensor::values() const { return impl_->values; }
std::span<double> Tensor::mutable_values() { return impl_->values; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::mutable_grad() { return impl_->grad_buffer(); }
void Tensor::zero_grad() { impl_->grad.clear(); }
bool Tensor::is_leaf() const { return impl_->producer == nullptr; }

std::string_view Tensor::op_kind() const {
  return impl_->producer ? std::string_view(impl_->producer->kind) : std::string_view("leaf");
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->values = impl_->values;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.set_requires_grad(requires_grad());
  return t;
}

// ---- graph ----------------------------------------------------------------

namespace {

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  for (auto* t : ts) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Builds the result tensor and, when any input needs a gradient, links it
// into the graph. `make_backward` is only invoked in the linked case.
template <typename MakeBackward>
Tensor make_result(std::string_view kind, Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs, MakeBackward&& make_backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  if (any_requires_grad(inputs)) {
    auto node = std::make_shared<OpNode>();
    node->kind = std::string(kind);
    for (auto* t : inputs) node->inputs.push_back(t->impl());
    node->backward = make_backward();
    impl->requires_grad = true;
    impl->producer = std::move(node);
  }
  return Tensor(std::move(impl));
}

[[noreturn]] void shape_mismatch(std::string_view kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(kind) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void require_rank(std::string_view kind, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(kind) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

}  // namespace

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  const ImplPtr& root = loss.impl();
  if (root->producer && root->producer->consumed) throw GraphError("backward: graph already consumed");
  if (!root->requires_grad) throw GraphError("backward: loss does not depend on any gradient-tracked tensor");

  // Post-order DFS over producers.
  // Owning references: releasing a node below may drop the last other
  // reference to an intermediate that is still queued.
  std::vector<ImplPtr> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<ImplPtr, std::size_t>> stack{{root, 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    OpNode* node = impl->producer.get();
    if (node && node->consumed) throw GraphError("backward: graph already consumed");
    if (node && next < node->inputs.size()) {
      ImplPtr child = node->inputs[next++];
      if (child->producer && child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* impl = it->get();
    OpNode* node = impl->producer.get();
    if (!node) continue;
    if (!impl->grad.empty()) node->backward(impl->grad);
    node->consumed = true;
    node->backward = nullptr;
    node->inputs.clear();
  }
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) shape_mismatch("matmul", a.shape(), b.shape());
  std::vector<double> out(m * n);
  kernels::parallel::matmul(a.values(), b.values(), out, m, k, n);
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_result("matmul", {m, n}, std::move(out), {&a, &b}, [=] {
    return [=](std::span<const double> g) {
      if (ai->requires_grad) kernels::parallel::matmul_nt_acc(g, bi->values, ai->grad_buffer(), m, n, k);
      if (bi->requires_grad) kernels::parallel::matmul_tn_acc(ai->values, g, bi->grad_buffer(), m, k, n);
    };
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", w, 4);
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel = w.dim(2);
  if (w.dim(1) != g.in_channels || w.dim(3) != g.kernel) shape_mismatch("conv2d", x.shape(), w.shape());
  if (g.kernel > g.height || g.kernel > g.width) shape_mismatch("conv2d", x.shape(), w.shape());
  if (bias.size() != g.out_channels) shape_mismatch("conv2d", w.shape(), bias.shape());

  auto cols = std::make_shared<std::vector<double>>(g.batch * g.patch() * g.out_pixels());
  kernels::parallel::im2col(x.values(), *cols, g);
  std::vector<double> out(g.batch * g.out_channels * g.out_pixels());
  kernels::parallel::conv2d_forward(*cols, w.values(), bias.values(), out, g);

  ImplPtr xi = x.impl(), wi = w.impl(), bi = bias.impl();
  return make_result("conv2d", {g.batch, g.out_channels, g.out_height(), g.out_width()}, std::move(out),
                     {&x, &w, &bias}, [=] {
                       return [=](std::span<const double> gy) {
                         std::span<double> dx, dw, db;
                         if (xi->requires_grad) dx = xi->grad_buffer();
                         if (wi->requires_grad) dw = wi->grad_buffer();
                         if (bi->requires_grad) db = bi->grad_buffer();
                         kernels::parallel::conv2d_backward(*cols, wi->values, gy, dx, dw, db, g);
                       };
                     });
}

Tensor max_pool2x2(const Tensor& x) {
  require_rank("max_pool2x2", x, 4);
  kernels::PoolGeometry g;
  g.planes = x.dim(0) * x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  if (g.height % 2 || g.width % 2) {
    throw ShapeError("max_pool2x2: spatial dims must be even, got " + shape_str(x.shape()));
  }
  const std::size_t out_n = g.planes * g.out_height() * g.out_width();
  std::vector<double> out(out_n);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out_n);
  kernels::parallel::maxpool2x2_forward(x.values(), out, *argmax, g);
  ImplPtr xi = x.impl();
  return make_result("max_pool2x2", {x.dim(0), x.dim(1), g.out_height(), g.out_width()}, std::move(out), {&x},
                     [=] {
                       return [=](std::span<const double> gy) {
                         auto& dx = xi->grad_buffer();
                         for (std::size_t i = 0; i < gy.size(); ++i) dx[(*argmax)[i]] += gy[i];
                       };
                     });
}

// ---- elementwise ------------------------------------------------------------

namespace {

// Broadcast-aware binary op. `fwd(a, b)` computes a value; `da`/`db` give the
// partials given (a, b).
template <typename Fwd, typename Da, typename Db>
Tensor binary_op(std::string_view kind, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  const bool a_scalar = a.size() == 1 && b.size() != 1;
  const bool b_scalar = b.size() == 1 && a.size() != 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    if (a.size() != 1 || b.size() != 1) shape_mismatch(kind, a.shape(), b.shape());
  }
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = numel(shape);
  std::vector<double> out(n);
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_result(kind, shape, std::move(out), {&a, &b}, [=] {
    return [=](std::span<const double> g) {
      const auto& avv = ai->values;
      const auto& bvv = bi->values;
      if (ai->requires_grad) {
        auto& ga = ai->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          const double x = avv[a_scalar ? 0 : i], y = bvv[b_scalar ? 0 : i];
          ga[a_scalar ? 0 : i] += g[i] * da(x, y);
        }
      }
      if (bi->requires_grad) {
        auto& gb = bi->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          const double x = avv[a_scalar ? 0 : i], y = bvv[b_scalar ? 0 : i];
          gb[b_scalar ? 0 : i] += g[i] * db(x, y);
        }
      }
    };
  });
}

// Unary op whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary_op(std::string_view kind, const Tensor& x, Fwd fwd, Deriv deriv) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
  ImplPtr xi = x.impl();
  auto saved = std::make_shared<std::vector<double>>(out);
  return make_result(kind, x.shape(), std::move(out), {&x}, [=] {
    return [=](std::span<const double> g) {
      auto& gx = xi->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * deriv(xi->values[i], (*saved)[i]);
    };
  });
}

}  // namespace

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(
      "scale", a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (bias.size() != cols) shape_mismatch("add_bias", x.shape(), bias.shape());
  std::vector<double> out(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  }
  ImplPtr xi = x.impl(), bi = bias.impl();
  return make_result("add_bias", x.shape(), std::move(out), {&x, &bias}, [=] {
    return [=](std::span<const double> g) {
      if (xi->requires_grad) {
        auto& gx = xi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bi->requires_grad) {
        auto& gb = bi->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
      }
    };
  });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      "softplus", x, [](double v) { return softplus(v); }, [](double v, double) { return sigmoid(v); });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x, [](double v) { return sigmoid(v); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input");
  }
  return unary_op(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary_op(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// ---- structural -------------------------------------------------------------

Tensor concat(const Tensor& a, const Tensor& b) {
  require_rank("concat", a, 2);
  require_rank("concat", b, 2);
  const std::size_t rows = a.dim(0), p = a.dim(1), q = b.dim(1);
  if (b.dim(0) != rows) shape_mismatch("concat", a.shape(), b.shape());
  std::vector<double> out(rows * (p + q));
  auto av = a.values(), bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.begin() + r * p, p, out.begin() + r * (p + q));
    std::copy_n(bv.begin() + r * q, q, out.begin() + r * (p + q) + p);
  }
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_result("concat", {rows, p + q}, std::move(out), {&a, &b}, [=] {
    return [=](std::span<const double> g) {
      if (ai->requires_grad) {
        auto& ga = ai->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < p; ++c) ga[r * p + c] += g[r * (p + q) + c];
      }
      if (bi->requires_grad) {
        auto& gb = bi->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < q; ++c) gb[r * q + c] += g[r * (p + q) + p + c];
      }
    };
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin >= end || end > cols) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.begin() + r * cols + begin, w, out.begin() + r * w);
  ImplPtr xi = x.impl();
  return make_result("slice_cols", {rows, w}, std::move(out), {&x}, [=] {
    return [=](std::span<const double> g) {
      auto& gx = xi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) gx[r * cols + begin + c] += g[r * w + c];
    };
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) shape_mismatch("reshape", x.shape(), shape);
  std::vector<double> out(x.values().begin(), x.values().end());
  ImplPtr xi = x.impl();
  return make_result("reshape", std::move(shape), std::move(out), {&x}, [=] {
    return [=](std::span<const double> g) {
      auto& gx = xi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  ImplPtr xi = x.impl();
  return make_result("sum", {}, {s}, {&x}, [=] {
    return [=](std::span<const double> g) {
      auto& gx = xi->grad_buffer();
      for (auto& v : gx) v += g[0];
    };
  });
}

Tensor mean(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double n = static_cast<double>(x.size());
  ImplPtr xi = x.impl();
  return make_result("mean", {}, {s / n}, {&x}, [=] {
    return [=](std::span<const double> g) {
      auto& gx = xi->grad_buffer();
      for (auto& v : gx) v += g[0] / n;
    };
  });
}

// ---- losses -----------------------------------------------------------------

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank("softmax_cross_entropy", logits, 2);
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != rows) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     shape_str(logits.shape()));
  }
  auto lv = logits.values();
  auto probs = std::make_shared<std::vector<double>>(rows * classes);
  std::vector<int> y(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (y[r] < 0 || static_cast<std::size_t>(y[r]) >= classes) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y[r]) + " outside " +
                              std::to_string(classes) + " classes");
    }
    const double* row = lv.data() + r * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = std::exp(row[c] - mx);
      (*probs)[r * classes + c] = e;
      z += e;
    }
    for (std::size_t c = 0; c < classes; ++c) (*probs)[r * classes + c] /= z;
    total += mx + std::log(z) - row[y[r]];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  ImplPtr li = logits.impl();
  return make_result("softmax_cross_entropy", {}, {total * inv}, {&logits}, [=] {
    return [=](std::span<const double> g) {
      auto& gl = li->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double onehot = static_cast<std::size_t>(y[r]) == c ? 1.0 : 0.0;
          gl[r * classes + c] += g[0] * inv * ((*probs)[r * classes + c] - onehot);
        }
      }
    };
  });
}

Tensor sigmoid_cross_entropy(const Tensor& logits, std::span<const double> targets, double pos_weight) {
  if (targets.size() != logits.size()) {
    throw ShapeError("sigmoid_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     shape_str(logits.shape()));
  }
  auto lv = logits.values();
  std::vector<double> t(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    total += pos_weight * t[i] * softplus(-lv[i]) + (1.0 - t[i]) * softplus(lv[i]);
  }
  const double inv = 1.0 / static_cast<double>(lv.size());
  ImplPtr li = logits.impl();
  return make_result("sigmoid_cross_entropy", {}, {total * inv}, {&logits}, [=] {
    return [=](std::span<const double> g) {
      auto& gl = li->grad_buffer();
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double x = li->values[i];
        gl[i] += g[0] * inv * (-pos_weight * t[i] * sigmoid(-x) + (1.0 - t[i]) * sigmoid(x));
      }
    };
  });
}

// ---- gradient checking --------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point, double step) {
  if (!(step > 0.0 && step <= 1e-2)) throw std::invalid_argument("grad_check: step must lie in (0, 1e-2]");
  Tensor x = point.detach();
  x.set_requires_grad(true);
  Tensor y = f(x);
  if (y.size() != 1) throw ShapeError("grad_check: function returned " + shape_str(y.shape()));
  std::vector<double> analytic(x.size(), 0.0);
  if (y.requires_grad()) {
    backward(y);
    if (x.has_grad()) analytic.assign(x.grad().begin(), x.grad().end());
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor plus = point.detach(), minus = point.detach();
    plus.mutable_values()[i] += step;
    minus.mutable_values()[i] -= step;
    const double numeric = (f(plus).item() - f(minus).item()) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace smil
