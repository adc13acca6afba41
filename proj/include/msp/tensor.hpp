#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace msp {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

struct TensorData {
  int rows = 0;
  int cols = 0;
  Eigen::ArrayXd value;  // row-major flat storage, size rows*cols
  Eigen::ArrayXd grad;   // empty until first accumulation
  bool requires_grad = false;

  int size() const { return rows * cols; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad = Eigen::ArrayXd::Zero(value.size());
  }
};

}  // namespace detail

/// Dense rank-2 tensor of 64-bit reals; vectors are 1xN rows, scalars 1x1.
/// A Tensor is a shared handle: copies alias the same storage and gradient,
/// which is what ties graph nodes to the parameter leaves they touch.
class Tensor {
 public:
  Tensor() : d_(std::make_shared<detail::TensorData>()) {}

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor constant(int rows, int cols, double fill);
  static Tensor scalar(double v);
  static Tensor from_row(const Eigen::VectorXd& v, bool requires_grad = false);
  static Tensor from_matrix(const RowMat& m, bool requires_grad = false);

  int rows() const { return d_->rows; }
  int cols() const { return d_->cols; }
  int size() const { return d_->size(); }
  bool is_scalar() const { return size() == 1; }
  bool requires_grad() const { return d_->requires_grad; }

  double value() const;          // scalar only
  double value_at(int i) const { return d_->value[i]; }
  Eigen::Map<const RowMat> mat() const {
    return Eigen::Map<const RowMat>(d_->value.data(), d_->rows, d_->cols);
  }
  Eigen::Map<RowMat> mat() {
    return Eigen::Map<RowMat>(d_->value.data(), d_->rows, d_->cols);
  }
  const Eigen::ArrayXd& flat() const { return d_->value; }
  Eigen::ArrayXd& flat() { return d_->value; }
  Eigen::VectorXd row_vector() const;  // 1xN only

  bool has_grad() const { return d_->grad.size() == d_->value.size(); }
  const Eigen::ArrayXd& grad() const { return d_->grad; }
  Eigen::ArrayXd& grad_ref() { d_->ensure_grad(); return d_->grad; }
  void zero_grad() { if (has_grad()) d_->grad.setZero(); }

  detail::TensorData* data_ptr() const { return d_.get(); }
  const std::shared_ptr<detail::TensorData>& shared_data() const { return d_; }

 private:
  std::shared_ptr<detail::TensorData> d_;
};

/// Reverse-mode tape. Constructing a Graph starts recording on the current
/// thread; destruction restores the previous recorder. Forward ops append
/// nodes in evaluation order, so append order is a topological order and
/// backward() visits nodes exactly once in reverse append order.
///
/// Gradients of non-leaf tensors are reset at the start of each backward();
/// leaf gradients accumulate additively across calls until zero_grad.
class Graph {
 public:
  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* current();

  void backward(const Tensor& loss);
  std::size_t size() const { return nodes_.size(); }

  void record(std::shared_ptr<detail::TensorData> out, std::function<void()> backward_fn);

 private:
  struct Node {
    std::shared_ptr<detail::TensorData> out;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
  Graph* previous_ = nullptr;
};

// ---- forward ops --------------------------------------------------------
// Each op computes its value unconditionally and appends a backward node
// when a Graph is recording and any input requires grad. Shapes must match
// exactly; the only broadcast is bias-row addition in add().

Tensor add(const Tensor& a, const Tensor& b);  // same shape, or [m,n]+[1,n]
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& x, double k);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, int start, int len);
Tensor gather_rows(const Tensor& x, const std::vector<int>& rows);
Tensor reshape(const Tensor& x, int rows, int cols);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);  // domain error on non-positive entries
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor softmax_rows(const Tensor& x);  // per-row, max-subtracted
Tensor sum(const Tensor& x);           // full reduction to 1x1
Tensor mean(const Tensor& x);
/// Mean of same-shape tensors with order-insensitive accumulation (per-entry
/// addends are summed in sorted value order), so the result is exactly
/// invariant under permutation of the list.
Tensor mean_of(const std::vector<Tensor>& xs);
/// 2x2/stride-2 max pooling of an [H*W, C] feature map (row-major positions).
Tensor max_pool2x2(const Tensor& x, int height, int width);

// ---- gradient checking ---------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::string note;  // location of the worst coordinate or of a NaN/Inf
};

/// Compares backward() gradients of the scalar built by f against central
/// finite differences (f(t+h)-f(t-h))/2h on every coordinate of params.
/// Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport gradient_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                               double step, double tol);

}  // namespace msp
