#include "pbge/tensor/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace pbge {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

thread_local Tape* g_active_tape = nullptr;

[[noreturn]] void shape_fail(OpKind kind, const std::string& detail) {
  throw ShapeError(std::string(op_name(kind)) + ": " + detail);
}

/// Attaches `output` to the active tape when any input needs a gradient.
void record(OpKind kind, std::vector<Tensor> inputs, Tensor& output,
            std::function<void(TapeNode&)> rule) {
  bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return;
  output.impl().requires_grad = true;
  output.impl().is_leaf = false;
  if (g_active_tape == nullptr) return;
  g_active_tape->record(TapeNode{kind, std::move(inputs), output, std::move(rule)});
}

ConstVecMap cvec(const Tensor& t) { return ConstVecMap(t.data().data(), static_cast<Eigen::Index>(t.size())); }

VecMap grad_vec(Tensor& t) {
  auto g = t.ensure_grad();
  return VecMap(g.data(), static_cast<Eigen::Index>(g.size()));
}

ConstVecMap out_grad(const TapeNode& node) {
  return ConstVecMap(node.output.grad().data(), static_cast<Eigen::Index>(node.output.size()));
}

template <class Fn>
Tensor unary(const Tensor& a, Fn&& fn) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

void require_same_shape(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail(kind, "extents " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

// Whether `b` can be added to `a` as a bias over the last axis.
bool is_bias_of(const Tensor& a, const Tensor& b) {
  return b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0) && a.shape() != b.shape();
}

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t filters, kh, kw, stride;
  std::size_t out_h, out_w;
  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, std::size_t stride) {
  if (input.rank() != 4) shape_fail(OpKind::conv2d, "input must be NCHW, got " + shape_string(input.shape()));
  if (kernel.rank() != 4) shape_fail(OpKind::conv2d, "kernel must be OIHW, got " + shape_string(kernel.shape()));
  if (stride == 0) shape_fail(OpKind::conv2d, "stride must be positive");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                 kernel.dim(0), kernel.dim(2), kernel.dim(3), stride, 0, 0};
  if (kernel.dim(1) != g.channels) {
    shape_fail(OpKind::conv2d, "input channels " + std::to_string(g.channels) + " vs kernel channels " +
                                   std::to_string(kernel.dim(1)));
  }
  if (g.kh > g.height || g.kw > g.width) {
    shape_fail(OpKind::conv2d, "kernel " + shape_string(kernel.shape()) + " larger than input " +
                                   shape_string(input.shape()));
  }
  g.out_h = (g.height - g.kh) / stride + 1;
  g.out_w = (g.width - g.kw) / stride + 1;
  return g;
}

// Unfolds sample `n` into a (C*KH*KW) x (OH*OW) row-major matrix.
void im2col(const ConvGeometry& g, const double* sample, double* col) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.positions();
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          const double* src = sample + (c * g.height + oi * g.stride + ki) * g.width + kj;
          for (std::size_t oj = 0; oj < g.out_w; ++oj) row[oi * g.out_w + oj] = src[oj * g.stride];
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* sample) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.positions();
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          double* dst = sample + (c * g.height + oi * g.stride + ki) * g.width + kj;
          for (std::size_t oj = 0; oj < g.out_w; ++oj) dst[oj * g.stride] += row[oi * g.out_w + oj];
        }
      }
    }
  }
}

std::pair<std::size_t, std::size_t> rows_cols(const Tensor& a) {
  std::size_t cols = a.shape().back();
  return {a.size() / cols, cols};
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::relu: return "relu";
    case OpKind::conv2d: return "conv2d";
    case OpKind::flatten: return "flatten";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::log: return "log";
    case OpKind::exp: return "exp";
    case OpKind::gather: return "gather";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::sum_last: return "sum_last";
    case OpKind::clip: return "clip";
    case OpKind::square: return "square";
    case OpKind::huber: return "huber";
    case OpKind::min: return "min";
    case OpKind::max: return "max";
    case OpKind::neg: return "neg";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->shape = {1};
  impl_->data.assign(1, 0.0);
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
  impl_->data.assign(shape_size(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<detail::TensorImpl>()) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (shape_size(shape) != data.size()) {
    throw ShapeError("shape " + shape_string(shape) + " needs " + std::to_string(shape_size(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) { return vector(std::vector<double>(values)); }

Tensor Tensor::vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

double Tensor::item() const {
  if (size() != 1) throw ContractViolation("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::ensure_grad() {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor out(impl_->shape, impl_->data);
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

Tensor Tensor::reshape(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw ShapeError("reshape " + shape_string(impl_->shape) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), impl_->data);
}

// ---------------------------------------------------------------------------
// Tape

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(Tape& tape, const Tensor& root) {
  if (root.size() != 1) {
    throw ContractViolation("backward: root must be scalar, got " + shape_string(root.shape()));
  }
  auto nodes = tape.nodes();
  for (auto& node : nodes) {
    if (node.output.has_grad()) node.output.zero_grad();
  }
  Tensor r = root;
  r.ensure_grad()[0] += 1.0;
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(*it);
  }
}

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_fail(OpKind::matmul, shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Tensor out({a.dim(0), b.dim(1)});
  MatMap(out.data().data(), m, n).noalias() = ConstMatMap(a.data().data(), m, k) * ConstMatMap(b.data().data(), k, n);
  record(OpKind::matmul, {a, b}, out, [m, k, n](TapeNode& node) {
    ConstMatMap dout(node.output.grad().data(), m, n);
    Tensor& lhs = node.inputs[0];
    Tensor& rhs = node.inputs[1];
    if (lhs.requires_grad()) {
      MatMap(lhs.ensure_grad().data(), m, k).noalias() += dout * ConstMatMap(rhs.data().data(), k, n).transpose();
    }
    if (rhs.requires_grad()) {
      MatMap(rhs.ensure_grad().data(), k, n).noalias() += ConstMatMap(lhs.data().data(), m, k).transpose() * dout;
    }
  });
  return out;
}

namespace {

Tensor add_or_sub(OpKind kind, const Tensor& a, const Tensor& b, double sign) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    VecMap(out.data().data(), static_cast<Eigen::Index>(out.size())) = cvec(a) + sign * cvec(b);
    record(kind, {a, b}, out, [sign](TapeNode& node) {
      auto g = out_grad(node);
      if (node.inputs[0].requires_grad()) grad_vec(node.inputs[0]) += g;
      if (node.inputs[1].requires_grad()) grad_vec(node.inputs[1]) += sign * g;
    });
    return out;
  }
  if (!is_bias_of(a, b)) {
    shape_fail(kind, "extents " + shape_string(a.shape()) + " vs " + shape_string(b.shape()) +
                         " (only equal shapes or last-axis bias supported)");
  }
  auto [rows, cols] = rows_cols(a);
  Tensor out(a.shape());
  const auto r = static_cast<Eigen::Index>(rows);
  const auto c = static_cast<Eigen::Index>(cols);
  MatMap(out.data().data(), r, c) =
      ConstMatMap(a.data().data(), r, c).rowwise() + sign * ConstMatMap(b.data().data(), 1, c).row(0);
  record(kind, {a, b}, out, [sign, r, c](TapeNode& node) {
    ConstMatMap g(node.output.grad().data(), r, c);
    if (node.inputs[0].requires_grad()) MatMap(node.inputs[0].ensure_grad().data(), r, c) += g;
    if (node.inputs[1].requires_grad()) {
      MatMap(node.inputs[1].ensure_grad().data(), 1, c) += sign * g.colwise().sum();
    }
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_or_sub(OpKind::add, a, b, 1.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_or_sub(OpKind::sub, a, b, -1.0); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(OpKind::mul, a, b);
  Tensor out(a.shape());
  VecMap(out.data().data(), static_cast<Eigen::Index>(out.size())) = cvec(a).cwiseProduct(cvec(b));
  record(OpKind::mul, {a, b}, out, [](TapeNode& node) {
    auto g = out_grad(node);
    if (node.inputs[0].requires_grad()) grad_vec(node.inputs[0]) += g.cwiseProduct(cvec(node.inputs[1]));
    if (node.inputs[1].requires_grad()) grad_vec(node.inputs[1]) += g.cwiseProduct(cvec(node.inputs[0]));
  });
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = unary(a, [factor](double x) { return factor * x; });
  record(OpKind::scale, {a}, out, [factor](TapeNode& node) { grad_vec(node.inputs[0]) += factor * out_grad(node); });
  return out;
}

Tensor neg(const Tensor& a) {
  Tensor out = unary(a, [](double x) { return -x; });
  record(OpKind::neg, {a}, out, [](TapeNode& node) { grad_vec(node.inputs[0]) -= out_grad(node); });
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
  record(OpKind::relu, {a}, out, [](TapeNode& node) {
    auto g = node.output.grad();
    auto x = node.inputs[0].data();
    auto dx = node.inputs[0].ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (x[i] > 0.0) dx[i] += g[i];
    }
  });
  return out;
}

Tensor square(const Tensor& a) {
  Tensor out = unary(a, [](double x) { return x * x; });
  record(OpKind::square, {a}, out, [](TapeNode& node) {
    grad_vec(node.inputs[0]) += 2.0 * out_grad(node).cwiseProduct(cvec(node.inputs[0]));
  });
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out = unary(a, [](double x) { return std::log(x); });
  record(OpKind::log, {a}, out, [](TapeNode& node) {
    grad_vec(node.inputs[0]) += out_grad(node).cwiseQuotient(cvec(node.inputs[0]));
  });
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out = unary(a, [](double x) { return std::exp(x); });
  record(OpKind::exp, {a}, out, [](TapeNode& node) {
    grad_vec(node.inputs[0]) += out_grad(node).cwiseProduct(cvec(node.output));
  });
  return out;
}

Tensor clip(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractViolation("clip: lo must not exceed hi");
  Tensor out = unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); });
  record(OpKind::clip, {a}, out, [lo, hi](TapeNode& node) {
    auto g = node.output.grad();
    auto x = node.inputs[0].data();
    auto dx = node.inputs[0].ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (x[i] > lo && x[i] < hi) dx[i] += g[i];
    }
  });
  return out;
}

// Square inside [-1, 1], linear continuation outside: d/dx = 2 * clip(x, -1, 1).
Tensor huber(const Tensor& a) {
  Tensor out = unary(a, [](double x) {
    double ax = std::abs(x);
    return ax <= 1.0 ? x * x : 2.0 * ax - 1.0;
  });
  record(OpKind::huber, {a}, out, [](TapeNode& node) {
    auto g = node.output.grad();
    auto x = node.inputs[0].data();
    auto dx = node.inputs[0].ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * std::clamp(x[i], -1.0, 1.0) * g[i];
  });
  return out;
}

namespace {

Tensor pick(OpKind kind, const Tensor& a, const Tensor& b, bool take_min) {
  require_same_shape(kind, a, b);
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = take_min ? std::min(x[i], y[i]) : std::max(x[i], y[i]);
  record(kind, {a, b}, out, [take_min](TapeNode& node) {
    auto g = node.output.grad();
    auto x = node.inputs[0].data();
    auto y = node.inputs[1].data();
    // Ties route the gradient to the first operand.
    bool ga = node.inputs[0].requires_grad();
    bool gb = node.inputs[1].requires_grad();
    std::span<double> dx = ga ? node.inputs[0].ensure_grad() : std::span<double>{};
    std::span<double> dy = gb ? node.inputs[1].ensure_grad() : std::span<double>{};
    for (std::size_t i = 0; i < g.size(); ++i) {
      bool first = take_min ? x[i] <= y[i] : x[i] >= y[i];
      if (first) {
        if (ga) dx[i] += g[i];
      } else if (gb) {
        dy[i] += g[i];
      }
    }
  });
  return out;
}

}  // namespace

Tensor minimum(const Tensor& a, const Tensor& b) { return pick(OpKind::min, a, b, true); }
Tensor maximum(const Tensor& a, const Tensor& b) { return pick(OpKind::max, a, b, false); }

namespace {

Tensor conv2d_impl(const Tensor& input, const Tensor& kernel, const Tensor* bias, std::size_t stride) {
  const ConvGeometry g = conv_geometry(input, kernel, stride);
  if (bias != nullptr && (bias->rank() != 1 || bias->dim(0) != g.filters)) {
    shape_fail(OpKind::conv2d, "bias " + shape_string(bias->shape()) + " for " + std::to_string(g.filters) + " filters");
  }
  Tensor out({g.batch, g.filters, g.out_h, g.out_w});
  const auto patch = static_cast<Eigen::Index>(g.patch());
  const auto pos = static_cast<Eigen::Index>(g.positions());
  const auto filt = static_cast<Eigen::Index>(g.filters);
  std::vector<double> col(g.patch() * g.positions());
  ConstMatMap w(kernel.data().data(), filt, patch);
  const std::size_t in_stride = g.channels * g.height * g.width;
  const std::size_t out_stride = g.filters * g.positions();
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, input.data().data() + n * in_stride, col.data());
    MatMap o(out.data().data() + n * out_stride, filt, pos);
    o.noalias() = w * ConstMatMap(col.data(), patch, pos);
    if (bias != nullptr) o.colwise() += ConstVecMap(bias->data().data(), filt);
  }
  std::vector<Tensor> inputs{input, kernel};
  if (bias != nullptr) inputs.push_back(*bias);
  record(OpKind::conv2d, std::move(inputs), out, [g](TapeNode& node) {
    const auto patch = static_cast<Eigen::Index>(g.patch());
    const auto pos = static_cast<Eigen::Index>(g.positions());
    const auto filt = static_cast<Eigen::Index>(g.filters);
    const std::size_t in_stride = g.channels * g.height * g.width;
    const std::size_t out_stride = g.filters * g.positions();
    Tensor& x = node.inputs[0];
    Tensor& k = node.inputs[1];
    const bool gx = x.requires_grad();
    const bool gk = k.requires_grad();
    const bool gb = node.inputs.size() > 2 && node.inputs[2].requires_grad();
    std::vector<double> col(g.patch() * g.positions());
    std::vector<double> dcol(gx ? col.size() : 0);
    ConstMatMap w(k.data().data(), filt, patch);
    for (std::size_t n = 0; n < g.batch; ++n) {
      ConstMatMap dout(node.output.grad().data() + n * out_stride, filt, pos);
      if (gk) {
        im2col(g, x.data().data() + n * in_stride, col.data());
        MatMap(k.ensure_grad().data(), filt, patch).noalias() += dout * ConstMatMap(col.data(), patch, pos).transpose();
      }
      if (gx) {
        MatMap(dcol.data(), patch, pos).noalias() = w.transpose() * dout;
        col2im_add(g, dcol.data(), x.ensure_grad().data() + n * in_stride);
      }
      if (gb) VecMap(node.inputs[2].ensure_grad().data(), filt) += dout.rowwise().sum();
    }
  });
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride) {
  return conv2d_impl(input, kernel, nullptr, stride);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride) {
  return conv2d_impl(input, kernel, &bias, stride);
}

Tensor flatten(const Tensor& a) {
  if (a.rank() < 1) shape_fail(OpKind::flatten, "rank 0 input");
  Tensor out({a.dim(0), a.size() / a.dim(0)}, std::vector<double>(a.data().begin(), a.data().end()));
  record(OpKind::flatten, {a}, out, [](TapeNode& node) { grad_vec(node.inputs[0]) += out_grad(node); });
  return out;
}

Tensor softmax(const Tensor& a) {
  auto [rows, cols] = rows_cols(a);
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * cols;
    double* y = out.data().data() + r * cols;
    double m = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (y[c] = std::exp(x[c] - m));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  record(OpKind::softmax, {a}, out, [rows, cols](TapeNode& node) {
    auto dx = node.inputs[0].ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = node.output.data().data() + r * cols;
      const double* g = node.output.grad().data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += y[c] * (g[c] - dot);
    }
  });
  return out;
}

Tensor log_softmax(const Tensor& a) {
  auto [rows, cols] = rows_cols(a);
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * cols;
    double* y = out.data().data() + r * cols;
    double m = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - m);
    double lse = m + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) y[c] = x[c] - lse;
  }
  record(OpKind::log_softmax, {a}, out, [rows, cols](TapeNode& node) {
    auto dx = node.inputs[0].ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = node.output.data().data() + r * cols;
      const double* g = node.output.grad().data() + r * cols;
      double gsum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) gsum += g[c];
      for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += g[c] - std::exp(y[c]) * gsum;
    }
  });
  return out;
}

Tensor gather(const Tensor& a, std::span<const std::size_t> indices) {
  if (a.rank() != 2 || indices.size() != a.dim(0)) {
    shape_fail(OpKind::gather, "input " + shape_string(a.shape()) + " with " + std::to_string(indices.size()) + " indices");
  }
  const std::size_t cols = a.dim(1);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out({idx.size()});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= cols) shape_fail(OpKind::gather, "index " + std::to_string(idx[r]) + " out of " + std::to_string(cols));
    out[r] = a[r * cols + idx[r]];
  }
  record(OpKind::gather, {a}, out, [idx = std::move(idx), cols](TapeNode& node) {
    auto dx = node.inputs[0].ensure_grad();
    auto g = node.output.grad();
    for (std::size_t r = 0; r < idx.size(); ++r) dx[r * cols + idx[r]] += g[r];
  });
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::scalar(cvec(a).sum());
  record(OpKind::sum, {a}, out, [](TapeNode& node) {
    grad_vec(node.inputs[0]).array() += node.output.grad()[0];
  });
  return out;
}

Tensor sum_last(const Tensor& a) {
  auto [rows, cols] = rows_cols(a);
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  if (shape.empty()) shape = {1};
  Tensor out(shape);
  const auto r = static_cast<Eigen::Index>(rows);
  const auto c = static_cast<Eigen::Index>(cols);
  VecMap(out.data().data(), r) = ConstMatMap(a.data().data(), r, c).rowwise().sum();
  record(OpKind::sum_last, {a}, out, [r, c](TapeNode& node) {
    MatMap(node.inputs[0].ensure_grad().data(), r, c).colwise() += ConstVecMap(node.output.grad().data(), r);
  });
  return out;
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  Tensor out = Tensor::scalar(cvec(a).sum() / n);
  record(OpKind::mean, {a}, out, [n](TapeNode& node) {
    grad_vec(node.inputs[0]).array() += node.output.grad()[0] / n;
  });
  return out;
}

Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      shape_fail(kind, "expects " + std::to_string(n) + " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::matmul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::add: need(2); return add(inputs[0], inputs[1]);
    case OpKind::sub: need(2); return sub(inputs[0], inputs[1]);
    case OpKind::mul: need(2); return mul(inputs[0], inputs[1]);
    case OpKind::scale: need(1); return scale(inputs[0], attrs.factor);
    case OpKind::relu: need(1); return relu(inputs[0]);
    case OpKind::conv2d:
      if (inputs.size() == 3) return conv2d(inputs[0], inputs[1], inputs[2], attrs.stride);
      need(2);
      return conv2d(inputs[0], inputs[1], attrs.stride);
    case OpKind::flatten: need(1); return flatten(inputs[0]);
    case OpKind::softmax: need(1); return softmax(inputs[0]);
    case OpKind::log_softmax: need(1); return log_softmax(inputs[0]);
    case OpKind::log: need(1); return log(inputs[0]);
    case OpKind::exp: need(1); return exp(inputs[0]);
    case OpKind::gather: need(1); return gather(inputs[0], attrs.indices);
    case OpKind::mean: need(1); return mean(inputs[0]);
    case OpKind::sum: need(1); return sum(inputs[0]);
    case OpKind::sum_last: need(1); return sum_last(inputs[0]);
    case OpKind::clip: need(1); return clip(inputs[0], attrs.lo, attrs.hi);
    case OpKind::square: need(1); return square(inputs[0]);
    case OpKind::huber: need(1); return huber(inputs[0]);
    case OpKind::min: need(2); return minimum(inputs[0], inputs[1]);
    case OpKind::max: need(2); return maximum(inputs[0], inputs[1]);
    case OpKind::neg: need(1); return neg(inputs[0]);
  }
  throw ContractViolation("forward_op: unknown op");
}

}  // namespace pbge
