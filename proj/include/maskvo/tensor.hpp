#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace maskvo::learn {

/// One node of the reverse-mode computation graph. Values and gradients are
/// stored flat in row-major order; `shape` gives the logical dimensions.
struct TensorNode {
  std::vector<int> shape;
  Eigen::ArrayXd values;
  Eigen::ArrayXd grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backprop;  // pushes this node's grad into its parents
};

/// Value-semantics handle to a graph node. Copies share the node, so a
/// parameter tensor can be held by an optimizer and a network at once.
class Tensor {
 public:
  Tensor() = default;

  /// Constant-filled tensor (no gradient tracking by default).
  static Tensor constant(std::vector<int> shape, double fill = 0.0);
  /// Tensor from explicit row-major data.
  static Tensor from_data(std::vector<int> shape, const std::vector<double>& data,
                          bool requires_grad = false);
  /// Trainable leaf initialized from row-major data.
  static Tensor variable(std::vector<int> shape, const std::vector<double>& data);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int numel() const;
  bool requires_grad() const;

  const Eigen::ArrayXd& values() const;
  /// In-place access for optimizer updates; never call on graph interiors.
  Eigen::ArrayXd& mutable_values();
  /// Gradient populated by the latest backward() pass through this node.
  const Eigen::ArrayXd& grad() const;

  double value_at(int flat) const;
  /// The single element of a scalar tensor.
  double scalar() const;

  /// Reverse-mode pass from a scalar output. Zeroes the gradient of every
  /// reachable node first, so gradients never leak between passes.
  void backward() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

std::string shape_to_string(const std::vector<int>& shape);

// Differentiable operations. Each builds a graph node whose backward rule
// accumulates into the operands' gradients.
Tensor add(const Tensor& a, const Tensor& b);            // elementwise, same shape
Tensor mul(const Tensor& a, const Tensor& b);            // elementwise, same shape
Tensor scale(const Tensor& a, double factor);            // constant scaling
Tensor add_rowvec(const Tensor& mat, const Tensor& vec); // {r,c} + {c} broadcast
Tensor matmul(const Tensor& a, const Tensor& b);         // {n,k} x {k,m}
Tensor transpose(const Tensor& a);                       // {r,c} -> {c,r}
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
/// Row-wise softmax of a 2-D tensor (a 1-D tensor is treated as one row).
Tensor softmax(const Tensor& a);
/// Mean over every element; scalar output.
Tensor mean(const Tensor& a);
/// Mean squared error over every element pair; scalar output.
Tensor mse(const Tensor& a, const Tensor& b);
/// {C,M,N} -> {C}: mean over the spatial grid per channel.
Tensor global_avg_pool(const Tensor& a);
/// {r,c} -> {c}: mean over rows per column.
Tensor col_mean(const Tensor& a);
/// Columns [start, start+count) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, int start, int count);
/// Same elements, new logical dimensions (row-major order preserved).
Tensor reshape(const Tensor& a, std::vector<int> shape);
/// input {Cin,H,W}, weight {Cout,Cin,kh,kw}, bias {Cout} -> {Cout,Ho,Wo}
/// with Ho = (H + 2*padding - kh) / stride + 1 (floor), likewise Wo.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);

}  // namespace maskvo::learn
