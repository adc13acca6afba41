#include "msp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msp {

namespace {

thread_local Graph* g_current = nullptr;

// Temporarily stops recording; used for value-only re-evaluations.
struct RecorderPause {
  Graph* saved;
  RecorderPause() : saved(g_current) { g_current = nullptr; }
  ~RecorderPause() { g_current = saved; }
};

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_current == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

Tensor make_tensor(int rows, int cols) {
  Tensor t = Tensor::zeros(rows, cols);
  return t;
}

using detail::TensorData;
using DataPtr = std::shared_ptr<TensorData>;

void mark_output(Tensor& out) { out.data_ptr()->requires_grad = true; }

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

Eigen::Map<RowMat> mat_of(TensorData& d) {
  return Eigen::Map<RowMat>(d.value.data(), d.rows, d.cols);
}

Eigen::Map<RowMat> grad_of(TensorData& d) {
  d.ensure_grad();
  return Eigen::Map<RowMat>(d.grad.data(), d.rows, d.cols);
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("Tensor: non-positive shape");
  Tensor t;
  t.d_->rows = rows;
  t.d_->cols = cols;
  t.d_->value = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(rows) * cols);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::constant(int rows, int cols, double fill) {
  Tensor t = zeros(rows, cols);
  t.d_->value.setConstant(fill);
  return t;
}

Tensor Tensor::scalar(double v) { return constant(1, 1, v); }

Tensor Tensor::from_row(const Eigen::VectorXd& v, bool requires_grad) {
  Tensor t = zeros(1, static_cast<int>(v.size()), requires_grad);
  for (int i = 0; i < v.size(); ++i) t.d_->value[i] = v[i];
  return t;
}

Tensor Tensor::from_matrix(const RowMat& m, bool requires_grad) {
  Tensor t = zeros(static_cast<int>(m.rows()), static_cast<int>(m.cols()), requires_grad);
  Eigen::Map<RowMat>(t.d_->value.data(), m.rows(), m.cols()) = m;
  return t;
}

double Tensor::value() const {
  if (!is_scalar()) throw std::invalid_argument("Tensor::value: not a scalar");
  return d_->value[0];
}

Eigen::VectorXd Tensor::row_vector() const {
  if (rows() != 1) throw std::invalid_argument("Tensor::row_vector: not a row");
  return Eigen::Map<const Eigen::VectorXd>(d_->value.data(), cols());
}

// ---- Graph ----------------------------------------------------------------

Graph::Graph() {
  previous_ = g_current;
  g_current = this;
}

Graph::~Graph() { g_current = previous_; }

Graph* Graph::current() { return g_current; }

void Graph::record(DataPtr out, std::function<void()> backward_fn) {
  nodes_.push_back(Node{std::move(out), std::move(backward_fn)});
}

void Graph::backward(const Tensor& loss) {
  if (!loss.is_scalar()) throw std::invalid_argument("Graph::backward: loss must be scalar");
  // Non-leaf grads are reset per pass; leaves (never a node output) keep
  // accumulating across calls.
  for (Node& n : nodes_) {
    n.out->ensure_grad();
    n.out->grad.setZero();
  }
  TensorData* ld = loss.data_ptr();
  ld->ensure_grad();
  ld->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward_fn();
}

// ---- ops -------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  const bool bias_row = a.rows() > 1 && b.rows() == 1 && a.cols() == b.cols();
  check(bias_row || (a.rows() == b.rows() && a.cols() == b.cols()), "add: shape mismatch");
  Tensor out = make_tensor(a.rows(), a.cols());
  if (bias_row)
    out.mat() = a.mat().rowwise() + b.mat().row(0);
  else
    out.flat() = a.flat() + b.flat();
  if (should_record({&a, &b})) {
    mark_output(out);
    DataPtr ad = a.shared_data(), bd = b.shared_data(), od = out.shared_data();
    g_current->record(od, [ad, bd, od, bias_row] {
      if (ad->requires_grad) {
        ad->ensure_grad();
        ad->grad += od->grad;
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        if (bias_row)
          grad_of(*bd).row(0) += Eigen::Map<const RowMat>(od->grad.data(), od->rows, od->cols)
                                     .colwise()
                                     .sum();
        else
          bd->grad += od->grad;
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Tensor out = make_tensor(a.rows(), a.cols());
  out.flat() = a.flat() - b.flat();
  if (should_record({&a, &b})) {
    mark_output(out);
    DataPtr ad = a.shared_data(), bd = b.shared_data(), od = out.shared_data();
    g_current->record(od, [ad, bd, od] {
      if (ad->requires_grad) {
        ad->ensure_grad();
        ad->grad += od->grad;
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        bd->grad -= od->grad;
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Tensor out = make_tensor(a.rows(), a.cols());
  out.flat() = a.flat() * b.flat();
  if (should_record({&a, &b})) {
    mark_output(out);
    DataPtr ad = a.shared_data(), bd = b.shared_data(), od = out.shared_data();
    g_current->record(od, [ad, bd, od] {
      if (ad->requires_grad) {
        ad->ensure_grad();
        ad->grad += od->grad * bd->value;
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        bd->grad += od->grad * ad->value;
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double k) {
  Tensor out = make_tensor(x.rows(), x.cols());
  out.flat() = x.flat() * k;
  if (should_record({&x})) {
    mark_output(out);
    DataPtr xd = x.shared_data(), od = out.shared_data();
    g_current->record(od, [xd, od, k] {
      if (xd->requires_grad) {
        xd->ensure_grad();
        xd->grad += od->grad * k;
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.cols() == b.rows(), "matmul: inner dimensions disagree");
  Tensor out = make_tensor(a.rows(), b.cols());
  out.mat().noalias() = a.mat() * b.mat();
  if (should_record({&a, &b})) {
    mark_output(out);
    DataPtr ad = a.shared_data(), bd = b.shared_data(), od = out.shared_data();
    g_current->record(od, [ad, bd, od] {
      Eigen::Map<const RowMat> g(od->grad.data(), od->rows, od->cols);
      if (ad->requires_grad) grad_of(*ad).noalias() += g * mat_of(*bd).transpose();
      if (bd->requires_grad) grad_of(*bd).noalias() += mat_of(*ad).transpose() * g;
    });
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows(), "concat_cols: row count mismatch");
  Tensor out = make_tensor(a.rows(), a.cols() + b.cols());
  out.mat().leftCols(a.cols()) = a.mat();
  out.mat().rightCols(b.cols()) = b.mat();
  if (should_record({&a, &b})) {
    mark_output(out);
    DataPtr ad = a.shared_data(), bd = b.shared_data(), od = out.shared_data();
    g_current->record(od, [ad, bd, od] {
      Eigen::Map<const RowMat> g(od->grad.data(), od->rows, od->cols);
      if (ad->requires_grad) grad_of(*ad) += g.leftCols(ad->cols);
      if (bd->requires_grad) grad_of(*bd) += g.rightCols(bd->cols);
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int start, int len) {
  check(start >= 0 && len > 0 && start + len <= x.cols(), "slice_cols: range out of bounds");
  Tensor out = make_tensor(x.rows(), len);
  out.mat() = x.mat().middleCols(start, len);
  if (should_record({&x})) {
    mark_output(out);
    DataPtr xd = x.shared_data(), od = out.shared_data();
    g_current->record(od, [xd, od, start, len] {
      if (!xd->requires_grad) return;
      Eigen::Map<const RowMat> g(od->grad.data(), od->rows, od->cols);
      grad_of(*xd).middleCols(start, len) += g;
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  check(!rows.empty(), "gather_rows: empty index list");
  for (int r : rows) check(r >= 0 && r < x.rows(), "gather_rows: row index out of range");
  Tensor out = make_tensor(static_cast<int>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.mat().row(static_cast<int>(i)) = x.mat().row(rows[i]);
  if (should_record({&x})) {
    mark_output(out);
    DataPtr xd = x.shared_data(), od = out.shared_data();
    g_current->record(od, [xd, od, rows] {
      if (!xd->requires_grad) return;
      Eigen::Map<const RowMat> g(od->grad.data(), od->rows, od->cols);
      auto xg = grad_of(*xd);
      for (std::size_t i = 0; i < rows.size(); ++i)
        xg.row(rows[i]) += g.row(static_cast<int>(i));
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, int rows, int cols) {
  check(rows > 0 && cols > 0 && rows * cols == x.size(), "reshape: element count mismatch");
  Tensor out = make_tensor(rows, cols);
  out.flat() = x.flat();  // row-major flat order is preserved
  if (should_record({&x})) {
    mark_output(out);
    DataPtr xd = x.shared_data(), od = out.shared_data();
    g_current->record(od, [xd, od] {
      if (xd->requires_grad) {
        xd->ensure_grad();
        xd->grad += od->grad;
      }
    });
  }
  return out;
}

namespace {

template <typename Forward, typename Backward>
Tensor unary_op(const Tensor& x, Forward fwd, Backward bwd) {
  Tensor out = make_tensor(x.rows(), x.cols());
  fwd(x.flat(), out.flat());
  if (should_record({&x})) {
    mark_output(out);
    DataPtr xd = x.shared_data(), od = out.shared_data();
    g_current->record(od, [xd, od, bwd] {
      if (!xd->requires_grad) return;
      xd->ensure_grad();
      bwd(*xd, *od);
    });
  }
  return out;
}

}  // namespace

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](const Eigen::ArrayXd& v, Eigen::ArrayXd& o) { o = v.tanh(); },
      [](TensorData& xd, const TensorData& od) {
        xd.grad += od.grad * (1.0 - od.value.square());
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](const Eigen::ArrayXd& v, Eigen::ArrayXd& o) {
        // Two-sided form avoids overflow in exp for large |v|.
        o = (v >= 0.0).select(1.0 / (1.0 + (-v).exp()), v.exp() / (1.0 + v.exp()));
      },
      [](TensorData& xd, const TensorData& od) {
        xd.grad += od.grad * od.value * (1.0 - od.value);
      });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](const Eigen::ArrayXd& v, Eigen::ArrayXd& o) { o = v.max(0.0); },
      [](TensorData& xd, const TensorData& od) {
        xd.grad += od.grad * (xd.value > 0.0).cast<double>();
      });
}

Tensor log(const Tensor& x) {
  if ((x.flat() <= 0.0).any())
    throw std::domain_error("log: non-positive entry (clamp probabilities first)");
  return unary_op(
      x, [](const Eigen::ArrayXd& v, Eigen::ArrayXd& o) { o = v.log(); },
      [](TensorData& xd, const TensorData& od) { xd.grad += od.grad / xd.value; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](const Eigen::ArrayXd& v, Eigen::ArrayXd& o) { o = v.exp(); },
      [](TensorData& xd, const TensorData& od) { xd.grad += od.grad * od.value; });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, [](const Eigen::ArrayXd& v, Eigen::ArrayXd& o) { o = v.square(); },
      [](TensorData& xd, const TensorData& od) { xd.grad += od.grad * 2.0 * xd.value; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      x, [](const Eigen::ArrayXd& v, Eigen::ArrayXd& o) { o = v.abs(); },
      [](TensorData& xd, const TensorData& od) {
        xd.grad += od.grad * xd.value.sign();
      });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  check(lo < hi, "clamp: lo must be below hi");
  return unary_op(
      x,
      [lo, hi](const Eigen::ArrayXd& v, Eigen::ArrayXd& o) { o = v.max(lo).min(hi); },
      [lo, hi](TensorData& xd, const TensorData& od) {
        xd.grad += od.grad * ((xd.value >= lo) && (xd.value <= hi)).cast<double>();
      });
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out = make_tensor(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    Eigen::ArrayXd row = x.mat().row(r).array();
    row -= row.maxCoeff();
    Eigen::ArrayXd e = row.exp();
    out.mat().row(r) = (e / e.sum()).matrix();
  }
  if (should_record({&x})) {
    mark_output(out);
    DataPtr xd = x.shared_data(), od = out.shared_data();
    g_current->record(od, [xd, od] {
      if (!xd->requires_grad) return;
      Eigen::Map<const RowMat> g(od->grad.data(), od->rows, od->cols);
      Eigen::Map<const RowMat> p(od->value.data(), od->rows, od->cols);
      auto xg = grad_of(*xd);
      for (int r = 0; r < od->rows; ++r) {
        const double dot = (g.row(r).array() * p.row(r).array()).sum();
        xg.row(r).array() += (g.row(r).array() - dot) * p.row(r).array();
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::scalar(x.flat().sum());
  if (should_record({&x})) {
    mark_output(out);
    DataPtr xd = x.shared_data(), od = out.shared_data();
    g_current->record(od, [xd, od] {
      if (!xd->requires_grad) return;
      xd->ensure_grad();
      xd->grad += od->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  const double inv_n = 1.0 / x.size();
  Tensor out = Tensor::scalar(x.flat().sum() * inv_n);
  if (should_record({&x})) {
    mark_output(out);
    DataPtr xd = x.shared_data(), od = out.shared_data();
    g_current->record(od, [xd, od, inv_n] {
      if (!xd->requires_grad) return;
      xd->ensure_grad();
      xd->grad += od->grad[0] * inv_n;
    });
  }
  return out;
}

Tensor mean_of(const std::vector<Tensor>& xs) {
  check(!xs.empty(), "mean_of: empty list");
  const int r = xs[0].rows(), c = xs[0].cols();
  for (const Tensor& t : xs) check(t.rows() == r && t.cols() == c, "mean_of: shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  Tensor out = make_tensor(r, c);
  std::vector<double> addends(xs.size());
  for (int j = 0; j < out.size(); ++j) {
    for (std::size_t i = 0; i < xs.size(); ++i) addends[i] = xs[i].flat()[j];
    std::sort(addends.begin(), addends.end());
    double acc = 0.0;
    for (double v : addends) acc += v;
    out.flat()[j] = acc * inv_n;
  }
  bool rec = false;
  if (g_current != nullptr)
    for (const Tensor& t : xs) rec = rec || t.requires_grad();
  if (rec) {
    mark_output(out);
    std::vector<DataPtr> ds;
    ds.reserve(xs.size());
    for (const Tensor& t : xs) ds.push_back(t.shared_data());
    DataPtr od = out.shared_data();
    g_current->record(od, [ds, od, inv_n] {
      for (const DataPtr& d : ds) {
        if (!d->requires_grad) continue;
        d->ensure_grad();
        d->grad += od->grad * inv_n;
      }
    });
  }
  return out;
}

Tensor max_pool2x2(const Tensor& x, int height, int width) {
  check(height > 0 && width > 0 && height * width == x.rows(), "max_pool2x2: bad spatial dims");
  check(height % 2 == 0 && width % 2 == 0, "max_pool2x2: dims must be even");
  const int oh = height / 2, ow = width / 2, channels = x.cols();
  Tensor out = make_tensor(oh * ow, channels);
  std::vector<int> arg(static_cast<std::size_t>(out.size()));
  auto in = x.mat();
  auto o = out.mat();
  for (int r = 0; r < oh; ++r) {
    for (int col = 0; col < ow; ++col) {
      const int out_pos = r * ow + col;
      const int base[4] = {(2 * r) * width + 2 * col,       (2 * r) * width + 2 * col + 1,
                           (2 * r + 1) * width + 2 * col,   (2 * r + 1) * width + 2 * col + 1};
      for (int ch = 0; ch < channels; ++ch) {
        int best = base[0];
        double best_v = in(base[0], ch);
        for (int k = 1; k < 4; ++k)
          if (in(base[k], ch) > best_v) {
            best_v = in(base[k], ch);
            best = base[k];
          }
        o(out_pos, ch) = best_v;
        arg[static_cast<std::size_t>(out_pos) * channels + ch] = best;
      }
    }
  }
  if (should_record({&x})) {
    mark_output(out);
    DataPtr xd = x.shared_data(), od = out.shared_data();
    g_current->record(od, [xd, od, arg, channels] {
      if (!xd->requires_grad) return;
      Eigen::Map<const RowMat> g(od->grad.data(), od->rows, od->cols);
      auto xg = grad_of(*xd);
      for (int pos = 0; pos < od->rows; ++pos)
        for (int ch = 0; ch < channels; ++ch)
          xg(arg[static_cast<std::size_t>(pos) * channels + ch], ch) += g(pos, ch);
    });
  }
  return out;
}

// ---- gradient checking -----------------------------------------------------

GradCheckReport gradient_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                               double step, double tol) {
  if (step <= 0.0) throw std::invalid_argument("gradient_check: step must be positive");
  GradCheckReport report;

  std::vector<Tensor> leaves = params;
  for (Tensor& p : leaves) p.zero_grad();

  std::vector<Eigen::ArrayXd> analytic;
  {
    Graph g;
    Tensor loss = f();
    if (!loss.is_scalar()) throw std::invalid_argument("gradient_check: f must return a scalar");
    if (!std::isfinite(loss.value())) {
      report.note = "forward value is not finite";
      return report;
    }
    g.backward(loss);
    for (Tensor& p : leaves)
      analytic.push_back(p.has_grad() ? p.grad() : Eigen::ArrayXd::Zero(p.size()));
  }
  for (Tensor& p : leaves) p.zero_grad();

  RecorderPause pause;  // numeric evaluations must not append nodes anywhere
  double max_rel = 0.0;
  std::string worst;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    Tensor& p = leaves[k];
    for (int i = 0; i < p.size(); ++i) {
      const double original = p.flat()[i];
      p.flat()[i] = original + step;
      const double up = f().value();
      p.flat()[i] = original - step;
      const double down = f().value();
      p.flat()[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        report.note = "non-finite gradient at param " + std::to_string(k) + " coord " +
                      std::to_string(i);
        report.max_rel_err = std::numeric_limits<double>::infinity();
        return report;
      }
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > max_rel) {
        max_rel = rel;
        worst = "param " + std::to_string(k) + " coord " + std::to_string(i);
      }
    }
  }
  report.max_rel_err = max_rel;
  report.pass = max_rel <= tol;
  report.note = worst;
  return report;
}

}  // namespace msp
