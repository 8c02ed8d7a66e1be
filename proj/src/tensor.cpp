#include "maskvo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "maskvo/error.hpp"

namespace maskvo::learn {

namespace {

using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

int product(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw InvalidArgument("tensor dimensions must be positive, got " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::shared_ptr<TensorNode> make_node(std::vector<int> shape) {
  auto node = std::make_shared<TensorNode>();
  const int n = product(shape);
  node->shape = std::move(shape);
  node->values = Eigen::ArrayXd::Zero(n);
  return node;
}

void require_defined(const Tensor& t, const char* who) {
  if (!t.defined()) throw InvalidArgument(std::string(who) + ": undefined tensor operand");
}

void require_same_shape(const char* who, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(who) + ": shape mismatch " + shape_to_string(a.shape()) +
                          " vs " + shape_to_string(b.shape()));
  }
}

void require_rank2(const char* who, const Tensor& t) {
  if (t.shape().size() != 2) {
    throw InvalidArgument(std::string(who) + ": expected a 2-D tensor, got " +
                          shape_to_string(t.shape()));
  }
}

/// New child node wired to its parents; requires_grad propagates by union.
std::shared_ptr<TensorNode> child_of(std::vector<int> shape,
                                     std::vector<std::shared_ptr<TensorNode>> parents) {
  auto node = make_node(std::move(shape));
  node->requires_grad = false;
  for (const auto& p : parents) node->requires_grad = node->requires_grad || p->requires_grad;
  node->parents = std::move(parents);
  return node;
}

/// Elementwise unary op with derivative computed from the forward values.
Tensor unary_op(const Tensor& a, const char* who,
                const std::function<double(double)>& fwd,
                const std::function<double(double, double)>& dfdx_from_xy) {
  require_defined(a, who);
  auto node = child_of(a.shape(), {a.node()});
  for (int i = 0; i < node->values.size(); ++i) node->values(i) = fwd(a.values()(i));
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  node->backprop = [self, pa, dfdx_from_xy]() {
    for (int i = 0; i < self->grad.size(); ++i) {
      pa->grad(i) += self->grad(i) * dfdx_from_xy(pa->values(i), self->values(i));
    }
  };
  return Tensor(node);
}

}  // namespace

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::constant(std::vector<int> shape, double fill) {
  auto node = make_node(std::move(shape));
  node->values.setConstant(fill);
  return Tensor(node);
}

Tensor Tensor::from_data(std::vector<int> shape, const std::vector<double>& data,
                         bool requires_grad) {
  auto node = make_node(std::move(shape));
  if (static_cast<int>(data.size()) != node->values.size()) {
    throw InvalidArgument("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_to_string(node->shape));
  }
  for (int i = 0; i < node->values.size(); ++i) node->values(i) = data[i];
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::variable(std::vector<int> shape, const std::vector<double>& data) {
  return from_data(std::move(shape), data, true);
}

const std::vector<int>& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

int Tensor::numel() const {
  require_defined(*this, "numel");
  return static_cast<int>(node_->values.size());
}

bool Tensor::requires_grad() const {
  require_defined(*this, "requires_grad");
  return node_->requires_grad;
}

const Eigen::ArrayXd& Tensor::values() const {
  require_defined(*this, "values");
  return node_->values;
}

Eigen::ArrayXd& Tensor::mutable_values() {
  require_defined(*this, "mutable_values");
  return node_->values;
}

const Eigen::ArrayXd& Tensor::grad() const {
  require_defined(*this, "grad");
  if (node_->grad.size() != node_->values.size()) {
    throw InvalidArgument("gradient not populated; run backward() on a scalar output first");
  }
  return node_->grad;
}

double Tensor::value_at(int flat) const {
  require_defined(*this, "value_at");
  if (flat < 0 || flat >= numel()) {
    throw InvalidArgument("flat index " + std::to_string(flat) + " out of range for shape " +
                          shape_to_string(node_->shape));
  }
  return node_->values(flat);
}

double Tensor::scalar() const {
  require_defined(*this, "scalar");
  if (numel() != 1) {
    throw InvalidArgument("scalar() called on tensor of shape " + shape_to_string(node_->shape));
  }
  return node_->values(0);
}

void Tensor::backward() const {
  require_defined(*this, "backward");
  if (numel() != 1) {
    throw InvalidArgument("backward() requires a scalar output, got shape " +
                          shape_to_string(node_->shape));
  }

  // Depth-first topological order over the DAG (iterative to survive deep
  // recurrent graphs).
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (TensorNode* node : order) node->grad = Eigen::ArrayXd::Zero(node->values.size());
  node_->grad(0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->requires_grad && node->backprop) node->backprop();
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  require_same_shape("add", a, b);
  auto node = child_of(a.shape(), {a.node(), b.node()});
  node->values = a.values() + b.values();
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  TensorNode* pb = b.node().get();
  node->backprop = [self, pa, pb]() {
    pa->grad += self->grad;
    pb->grad += self->grad;
  };
  return Tensor(node);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  require_same_shape("mul", a, b);
  auto node = child_of(a.shape(), {a.node(), b.node()});
  node->values = a.values() * b.values();
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  TensorNode* pb = b.node().get();
  node->backprop = [self, pa, pb]() {
    pa->grad += self->grad * pb->values;
    pb->grad += self->grad * pa->values;
  };
  return Tensor(node);
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  if (!std::isfinite(factor)) throw InvalidArgument("scale: non-finite factor");
  auto node = child_of(a.shape(), {a.node()});
  node->values = a.values() * factor;
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  node->backprop = [self, pa, factor]() { pa->grad += self->grad * factor; };
  return Tensor(node);
}

Tensor add_rowvec(const Tensor& mat, const Tensor& vec) {
  require_defined(mat, "add_rowvec");
  require_defined(vec, "add_rowvec");
  require_rank2("add_rowvec", mat);
  if (vec.shape().size() != 1 || vec.shape()[0] != mat.shape()[1]) {
    throw InvalidArgument("add_rowvec: shape mismatch " + shape_to_string(mat.shape()) + " vs " +
                          shape_to_string(vec.shape()));
  }
  const int rows = mat.shape()[0];
  const int cols = mat.shape()[1];
  auto node = child_of(mat.shape(), {mat.node(), vec.node()});
  for (int r = 0; r < rows; ++r) {
    node->values.segment(r * cols, cols) = mat.values().segment(r * cols, cols) + vec.values();
  }
  TensorNode* self = node.get();
  TensorNode* pm = mat.node().get();
  TensorNode* pv = vec.node().get();
  node->backprop = [self, pm, pv, rows, cols]() {
    pm->grad += self->grad;
    for (int r = 0; r < rows; ++r) pv->grad += self->grad.segment(r * cols, cols);
  };
  return Tensor(node);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.shape()[1] != b.shape()[0]) {
    throw InvalidArgument("matmul: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                          shape_to_string(b.shape()));
  }
  const int n = a.shape()[0];
  const int k = a.shape()[1];
  const int m = b.shape()[1];
  auto node = child_of({n, m}, {a.node(), b.node()});
  {
    ConstRowMajorMap ma(a.values().data(), n, k);
    ConstRowMajorMap mb(b.values().data(), k, m);
    RowMajorMap mc(node->values.data(), n, m);
    mc = ma * mb;
  }
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  TensorNode* pb = b.node().get();
  node->backprop = [self, pa, pb, n, k, m]() {
    ConstRowMajorMap ma(pa->values.data(), n, k);
    ConstRowMajorMap mb(pb->values.data(), k, m);
    ConstRowMajorMap gc(self->grad.data(), n, m);
    RowMajorMap ga(pa->grad.data(), n, k);
    RowMajorMap gb(pb->grad.data(), k, m);
    ga += gc * mb.transpose();
    gb += ma.transpose() * gc;
  };
  return Tensor(node);
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  require_rank2("transpose", a);
  const int r = a.shape()[0];
  const int c = a.shape()[1];
  auto node = child_of({c, r}, {a.node()});
  {
    ConstRowMajorMap ma(a.values().data(), r, c);
    RowMajorMap mt(node->values.data(), c, r);
    mt = ma.transpose();
  }
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  node->backprop = [self, pa, r, c]() {
    ConstRowMajorMap gt(self->grad.data(), c, r);
    RowMajorMap ga(pa->grad.data(), r, c);
    ga += gt.transpose();
  };
  return Tensor(node);
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor softmax(const Tensor& a) {
  require_defined(a, "softmax");
  if (a.shape().size() != 1 && a.shape().size() != 2) {
    throw InvalidArgument("softmax: expected a 1-D or 2-D tensor, got " +
                          shape_to_string(a.shape()));
  }
  const int rows = a.shape().size() == 2 ? a.shape()[0] : 1;
  const int cols = a.shape().size() == 2 ? a.shape()[1] : a.shape()[0];
  auto node = child_of(a.shape(), {a.node()});
  for (int r = 0; r < rows; ++r) {
    const auto row = a.values().segment(r * cols, cols);
    const double peak = row.maxCoeff();
    Eigen::ArrayXd e = (row - peak).exp();
    node->values.segment(r * cols, cols) = e / e.sum();
  }
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  node->backprop = [self, pa, rows, cols]() {
    for (int r = 0; r < rows; ++r) {
      const auto s = self->values.segment(r * cols, cols);
      const auto g = self->grad.segment(r * cols, cols);
      const double dot = (g * s).sum();
      pa->grad.segment(r * cols, cols) += s * (g - dot);
    }
  };
  return Tensor(node);
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  const int n = a.numel();
  auto node = child_of({1}, {a.node()});
  node->values(0) = a.values().mean();
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  node->backprop = [self, pa, n]() { pa->grad += self->grad(0) / n; };
  return Tensor(node);
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_defined(a, "mse");
  require_defined(b, "mse");
  require_same_shape("mse", a, b);
  const int n = a.numel();
  auto node = child_of({1}, {a.node(), b.node()});
  node->values(0) = (a.values() - b.values()).square().mean();
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  TensorNode* pb = b.node().get();
  node->backprop = [self, pa, pb, n]() {
    const Eigen::ArrayXd d = (2.0 * self->grad(0) / n) * (pa->values - pb->values);
    pa->grad += d;
    pb->grad -= d;
  };
  return Tensor(node);
}

Tensor global_avg_pool(const Tensor& a) {
  require_defined(a, "global_avg_pool");
  if (a.shape().size() != 3) {
    throw InvalidArgument("global_avg_pool: expected a {C,M,N} tensor, got " +
                          shape_to_string(a.shape()));
  }
  const int channels = a.shape()[0];
  const int spatial = a.shape()[1] * a.shape()[2];
  auto node = child_of({channels}, {a.node()});
  for (int c = 0; c < channels; ++c) {
    node->values(c) = a.values().segment(c * spatial, spatial).mean();
  }
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  node->backprop = [self, pa, channels, spatial]() {
    for (int c = 0; c < channels; ++c) {
      pa->grad.segment(c * spatial, spatial) += self->grad(c) / spatial;
    }
  };
  return Tensor(node);
}

Tensor col_mean(const Tensor& a) {
  require_defined(a, "col_mean");
  require_rank2("col_mean", a);
  const int rows = a.shape()[0];
  const int cols = a.shape()[1];
  auto node = child_of({cols}, {a.node()});
  for (int r = 0; r < rows; ++r) node->values += a.values().segment(r * cols, cols);
  node->values /= rows;
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  node->backprop = [self, pa, rows, cols]() {
    for (int r = 0; r < rows; ++r) pa->grad.segment(r * cols, cols) += self->grad / rows;
  };
  return Tensor(node);
}

Tensor slice_cols(const Tensor& a, int start, int count) {
  require_defined(a, "slice_cols");
  require_rank2("slice_cols", a);
  const int rows = a.shape()[0];
  const int cols = a.shape()[1];
  if (start < 0 || count <= 0 || start + count > cols) {
    throw InvalidArgument("slice_cols: columns [" + std::to_string(start) + ", " +
                          std::to_string(start + count) + ") out of range for shape " +
                          shape_to_string(a.shape()));
  }
  auto node = child_of({rows, count}, {a.node()});
  for (int r = 0; r < rows; ++r) {
    node->values.segment(r * count, count) = a.values().segment(r * cols + start, count);
  }
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  node->backprop = [self, pa, rows, cols, start, count]() {
    for (int r = 0; r < rows; ++r) {
      pa->grad.segment(r * cols + start, count) += self->grad.segment(r * count, count);
    }
  };
  return Tensor(node);
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  require_defined(a, "reshape");
  auto node = child_of(std::move(shape), {a.node()});
  if (node->values.size() != a.numel()) {
    throw InvalidArgument("reshape: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                          shape_to_string(node->shape));
  }
  node->values = a.values();
  TensorNode* self = node.get();
  TensorNode* pa = a.node().get();
  node->backprop = [self, pa]() { pa->grad += self->grad; };
  return Tensor(node);
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  require_defined(input, "conv2d");
  require_defined(weight, "conv2d");
  require_defined(bias, "conv2d");
  if (input.shape().size() != 3) {
    throw InvalidArgument("conv2d: expected a {C,H,W} input, got " + shape_to_string(input.shape()));
  }
  if (weight.shape().size() != 4) {
    throw InvalidArgument("conv2d: expected a {Cout,Cin,kh,kw} weight, got " +
                          shape_to_string(weight.shape()));
  }
  if (stride <= 0 || padding < 0) throw InvalidArgument("conv2d: stride must be > 0 and padding >= 0");
  const int cin = input.shape()[0];
  const int h = input.shape()[1];
  const int w = input.shape()[2];
  const int cout = weight.shape()[0];
  const int kh = weight.shape()[2];
  const int kw = weight.shape()[3];
  if (weight.shape()[1] != cin) {
    throw InvalidArgument("conv2d: shape mismatch " + shape_to_string(input.shape()) + " vs " +
                          shape_to_string(weight.shape()));
  }
  if (bias.shape().size() != 1 || bias.shape()[0] != cout) {
    throw InvalidArgument("conv2d: shape mismatch " + shape_to_string(weight.shape()) + " vs " +
                          shape_to_string(bias.shape()));
  }
  const int ho = (h + 2 * padding - kh) / stride + 1;
  const int wo = (w + 2 * padding - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) {
    throw InvalidArgument("conv2d: kernel " + shape_to_string(weight.shape()) +
                          " does not fit input " + shape_to_string(input.shape()));
  }

  auto node = child_of({cout, ho, wo}, {input.node(), weight.node(), bias.node()});
  const double* in = input.values().data();
  const double* wt = weight.values().data();
  double* out = node->values.data();
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double acc = bias.values()(co);
        for (int ci = 0; ci < cin; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= w) continue;
              acc += in[(ci * h + iy) * w + ix] * wt[((co * cin + ci) * kh + ky) * kw + kx];
            }
          }
        }
        out[(co * ho + oy) * wo + ox] = acc;
      }
    }
  }

  TensorNode* self = node.get();
  TensorNode* pin = input.node().get();
  TensorNode* pwt = weight.node().get();
  TensorNode* pbs = bias.node().get();
  node->backprop = [self, pin, pwt, pbs, cin, h, w, cout, kh, kw, ho, wo, stride, padding]() {
    const double* in = pin->values.data();
    const double* wt = pwt->values.data();
    const double* go = self->grad.data();
    double* gi = pin->grad.data();
    double* gw = pwt->grad.data();
    double* gb = pbs->grad.data();
    for (int co = 0; co < cout; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const double g = go[(co * ho + oy) * wo + ox];
          if (g == 0.0) continue;
          gb[co] += g;
          for (int ci = 0; ci < cin; ++ci) {
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride - padding + kx;
                if (ix < 0 || ix >= w) continue;
                const int ii = (ci * h + iy) * w + ix;
                const int wi = ((co * cin + ci) * kh + ky) * kw + kx;
                gi[ii] += g * wt[wi];
                gw[wi] += g * in[ii];
              }
            }
          }
        }
      }
    }
  };
  return Tensor(node);
}

}  // namespace maskvo::learn
