#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbge/common.hpp"

namespace pbge {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Raised when an op receives operands whose extents it cannot combine.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
};
}  // namespace detail

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Copies share storage, the same way a handle to a graph node would; use
/// `clone()` for an independent copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double& operator[](std::size_t i) { return impl_->data[i]; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const { return impl_->is_leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> ensure_grad();
  void zero_grad();

  Tensor clone() const;
  Tensor detach() const;
  Tensor reshape(Shape shape) const;

  bool same_node(const Tensor& other) const { return impl_ == other.impl_; }
  detail::TensorImpl& impl() { return *impl_; }
  const detail::TensorImpl& impl() const { return *impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

enum class OpKind {
  matmul,
  add,
  sub,
  mul,
  scale,
  relu,
  conv2d,
  flatten,
  softmax,
  log_softmax,
  log,
  exp,
  gather,
  mean,
  sum,
  sum_last,
  clip,
  square,
  huber,
  min,
  max,
  neg,
};

const char* op_name(OpKind kind);

struct TapeNode {
  OpKind kind;
  std::vector<Tensor> inputs;
  Tensor output;
  std::function<void(TapeNode&)> backward;
};

/// Records differentiable ops in execution order while active.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(TapeNode node) { nodes_.push_back(std::move(node)); }
  std::span<TapeNode> nodes() { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Makes `tape` the recording target for this thread until destruction.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<TapeNode> nodes_;
};

Tape* active_tape();

/// Reverse sweep from a scalar root. Leaf gradients accumulate across calls.
void backward(Tape& tape, const Tensor& root);

struct OpAttrs {
  std::size_t stride = 1;
  double lo = 0.0;
  double hi = 0.0;
  double factor = 1.0;
  std::vector<std::size_t> indices;
};

/// Generic entry point; the typed free functions below are the usual API.
Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor clip(const Tensor& a, double lo, double hi);
Tensor huber(const Tensor& a);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride);
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride);
Tensor flatten(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor gather(const Tensor& a, std::span<const std::size_t> indices);
Tensor sum(const Tensor& a);
Tensor sum_last(const Tensor& a);
Tensor mean(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace pbge
