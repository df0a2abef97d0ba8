#include "vsgno/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "vsgno/errors.hpp"

namespace vsgno::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const TensorData& t, std::size_t rows, std::size_t cols) {
  return ConstMap(t.value.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MutMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw NonFiniteValue(std::string(op) + " produced a non-finite value");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(op) + ": " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeMismatch(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

std::shared_ptr<TensorData> grad_target(const Tensor& t) {
  return t.requires_grad() ? t.handle() : nullptr;
}

/// Applies an elementwise map with derivative, sharing code between unary ops.
template <typename Fwd, typename Deriv>
Tensor unary(Tape& tape, const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.size());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  Tensor result = Tensor::from(a.shape(), std::move(out));
  check_finite(result, name);
  auto ga = grad_target(a);
  tape.record({a}, result, [ga, deriv, a_data = a.handle()](const TensorData& o) {
    if (!ga) return;
    auto g = grad_slot(*ga);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += deriv(a_data->value[i], o.value[i]) * o.grad[i];
  });
  return result;
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

// ---------------------------------------------------------------- Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const auto n = element_count(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != element_count(shape)) {
    throw ShapeMismatch("tensor of shape " + shape_string(shape) + " given " +
                        std::to_string(values.size()) + " values");
  }
  auto data = std::make_shared<TensorData>();
  data->shape = std::move(shape);
  data->value = std::move(values);
  data->requires_grad = requires_grad;
  return Tensor(std::move(data));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::size_t Tensor::rows() const {
  switch (rank()) {
    case 0:
    case 1: return 1;
    case 2: return shape()[0];
    default: throw ShapeMismatch("rows() of rank-" + std::to_string(rank()) + " tensor");
  }
}

std::size_t Tensor::cols() const {
  switch (rank()) {
    case 0: return 1;
    case 1: return shape()[0];
    case 2: return shape()[1];
    default: throw ShapeMismatch("cols() of rank-" + std::to_string(rank()) + " tensor");
  }
}

double Tensor::item() const {
  if (size() != 1) throw NotScalar("tensor of shape " + shape_string(shape()));
  return data_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (data_->grad.empty()) return std::vector<double>(size(), 0.0);
  return data_->grad;
}

std::span<double> Tensor::mutable_grad() { return grad_slot(*data_); }

void Tensor::zero_grad() { std::fill(data_->grad.begin(), data_->grad.end(), 0.0); }

Tensor Tensor::clone() const { return from(shape(), data_->value, requires_grad()); }

std::span<double> grad_slot(TensorData& t) {
  if (t.grad.empty()) t.grad.assign(t.value.size(), 0.0);
  return t.grad;
}

Tensor constant(Shape shape, std::vector<double> values) {
  return Tensor::from(std::move(shape), std::move(values), false);
}

// ---------------------------------------------------------------- Tape

void Tape::record(std::vector<Tensor> inputs, const Tensor& output,
                  std::function<void(const TensorData& out)> backward) {
  if (!recording_) return;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return;
  output.node()->requires_grad = true;
  ops_.push_back(Op{{}, output.handle(), std::move(backward)});
  for (auto& in : inputs) ops_.back().inputs.push_back(in.handle());
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw NotScalar("loss has shape " + shape_string(loss.shape()));
  std::size_t end = ops_.size();
  while (end > 0 && ops_[end - 1].output.get() != loss.node()) --end;
  if (end == 0) throw DisconnectedLoss("loss was not produced on this tape");

  grad_slot(*loss.node())[0] += 1.0;
  for (std::size_t i = end; i-- > 0;) {
    const Op& op = ops_[i];
    if (op.output->grad.empty()) continue;
    op.backward(*op.output);
  }
  ops_.clear();
}

// ---------------------------------------------------------------- primitives

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
  if (b.rows() != k) {
    throw ShapeMismatch("matmul: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  std::vector<double> out(r * c);
  as_matrix(out, r, c).noalias() = as_matrix(*a.node(), r, k) * as_matrix(*b.node(), k, c);
  Tensor result = Tensor::from({r, c}, std::move(out));
  check_finite(result, "matmul");
  auto ga = grad_target(a), gb = grad_target(b);
  tape.record({a, b}, result, [ga, gb, ad = a.handle(), bd = b.handle(), r, k, c](const TensorData& o) {
    const ConstMap go(o.grad.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    if (ga) {
      grad_slot(*ga);
      as_matrix(ga->grad, r, k).noalias() += go * as_matrix(*bd, k, c).transpose();
    }
    if (gb) {
      grad_slot(*gb);
      as_matrix(gb->grad, k, c).noalias() += as_matrix(*ad, r, k).transpose() * go;
    }
  });
  return result;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor result = Tensor::from(a.shape(), std::move(out));
  check_finite(result, "add");
  auto ga = grad_target(a), gb = grad_target(b);
  tape.record({a, b}, result, [ga, gb](const TensorData& o) {
    for (const auto& g : {ga, gb}) {
      if (!g) continue;
      auto s = grad_slot(*g);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += o.grad[i];
    }
  });
  return result;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor result = Tensor::from(a.shape(), std::move(out));
  check_finite(result, "sub");
  auto ga = grad_target(a), gb = grad_target(b);
  tape.record({a, b}, result, [ga, gb](const TensorData& o) {
    if (ga) {
      auto s = grad_slot(*ga);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += o.grad[i];
    }
    if (gb) {
      auto s = grad_slot(*gb);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] -= o.grad[i];
    }
  });
  return result;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  return unary(
      tape, a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor elementwise_mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise_mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor result = Tensor::from(a.shape(), std::move(out));
  check_finite(result, "elementwise_mul");
  auto ga = grad_target(a), gb = grad_target(b);
  tape.record({a, b}, result, [ga, gb, ad = a.handle(), bd = b.handle()](const TensorData& o) {
    if (ga) {
      auto s = grad_slot(*ga);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += bd->value[i] * o.grad[i];
    }
    if (gb) {
      auto s = grad_slot(*gb);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += ad->value[i] * o.grad[i];
    }
  });
  return result;
}

Tensor concat_columns(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_columns");
  require_rank2(b, "concat_columns");
  if (a.rows() != b.rows()) {
    throw ShapeMismatch("concat_columns: " + shape_string(a.shape()) + " | " + shape_string(b.shape()));
  }
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  std::vector<double> out(n * (p + q));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.values().begin() + i * p, p, out.begin() + i * (p + q));
    std::copy_n(b.values().begin() + i * q, q, out.begin() + i * (p + q) + p);
  }
  Tensor result = Tensor::from({n, p + q}, std::move(out));
  auto ga = grad_target(a), gb = grad_target(b);
  tape.record({a, b}, result, [ga, gb, n, p, q](const TensorData& o) {
    for (std::size_t i = 0; i < n; ++i) {
      if (ga) {
        auto s = grad_slot(*ga);
        for (std::size_t j = 0; j < p; ++j) s[i * p + j] += o.grad[i * (p + q) + j];
      }
      if (gb) {
        auto s = grad_slot(*gb);
        for (std::size_t j = 0; j < q; ++j) s[i * q + j] += o.grad[i * (p + q) + p + j];
      }
    }
  });
  return result;
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

Tensor gelu(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, "gelu", [](double x) { return gelu_value(x); },
      [](double x, double) { return gelu_derivative(x); });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sqrt(Tape& tape, const Tensor& a) {
  for (double v : a.values()) {
    if (v < 0) throw NonFiniteValue("sqrt of a negative value");
  }
  return unary(
      tape, a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  Tensor result = Tensor::scalar(total);
  check_finite(result, "sum");
  auto ga = grad_target(a);
  tape.record({a}, result, [ga](const TensorData& o) {
    if (!ga) return;
    auto s = grad_slot(*ga);
    for (double& v : s) v += o.grad[0];
  });
  return result;
}

Tensor mean_over(Tape& tape, std::span<const Tensor> items) {
  if (items.empty()) throw ShapeMismatch("mean_over: empty list");
  for (const auto& t : items) require_same_shape(items.front(), t, "mean_over");
  const double inv = 1.0 / static_cast<double>(items.size());
  std::vector<double> out(items.front().size(), 0.0);
  for (const auto& t : items) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t[i];
  }
  for (double& v : out) v *= inv;
  Tensor result = Tensor::from(items.front().shape(), std::move(out));
  check_finite(result, "mean_over");
  std::vector<std::shared_ptr<TensorData>> targets;
  for (const auto& t : items) targets.push_back(grad_target(t));
  tape.record(std::vector<Tensor>(items.begin(), items.end()), result, [targets, inv](const TensorData& o) {
    for (const auto& g : targets) {
      if (!g) continue;
      auto s = grad_slot(*g);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += inv * o.grad[i];
    }
  });
  return result;
}

Tensor broadcast_row(Tape& tape, const Tensor& vec, std::size_t n) {
  if (vec.rank() == 0 || vec.rank() > 2 || vec.rows() != 1) {
    throw ShapeMismatch("broadcast_row: expected a vector, got " + shape_string(vec.shape()));
  }
  const std::size_t d = vec.cols();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) std::copy(vec.values().begin(), vec.values().end(), out.begin() + i * d);
  Tensor result = Tensor::from({n, d}, std::move(out));
  auto gv = grad_target(vec);
  tape.record({vec}, result, [gv, n, d](const TensorData& o) {
    if (!gv) return;
    auto s = grad_slot(*gv);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) s[j] += o.grad[i * d + j];
    }
  });
  return result;
}

Tensor sparse_gated_agg(Tape& tape, std::shared_ptr<const CsrMatrix> adjacency, const Tensor& gate,
                        const Tensor& x) {
  const CsrMatrix& a = *adjacency;
  require_rank2(x, "sparse_gated_agg");
  if (gate.size() != a.nnz()) {
    throw ShapeMismatch("sparse_gated_agg: gate has " + std::to_string(gate.size()) +
                        " entries for " + std::to_string(a.nnz()) + " stored edges");
  }
  if (x.rows() != a.cols) {
    throw ShapeMismatch("sparse_gated_agg: x has " + std::to_string(x.rows()) + " rows, adjacency " +
                        std::to_string(a.cols) + " columns");
  }
  const std::size_t d = x.cols();
  std::vector<double> out(a.rows * d, 0.0);
  const auto xv = x.values();
  const auto gv = gate.values();
  for (std::size_t u = 0; u < a.rows; ++u) {
    double* row = out.data() + u * d;
    for (std::size_t e = a.row_ptr[u]; e < a.row_ptr[u + 1]; ++e) {
      const double w = gv[e] * a.value[e];
      const double* src = xv.data() + a.col[e] * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += w * src[j];
    }
  }
  Tensor result = Tensor::from({a.rows, d}, std::move(out));
  check_finite(result, "sparse_gated_agg");
  auto g_gate = grad_target(gate), g_x = grad_target(x);
  tape.record({gate, x}, result,
              [adjacency, g_gate, g_x, gd = gate.handle(), xd = x.handle(), d](const TensorData& o) {
                const CsrMatrix& a = *adjacency;
                std::span<double> sg, sx;
                if (g_gate) sg = grad_slot(*g_gate);
                if (g_x) sx = grad_slot(*g_x);
                for (std::size_t u = 0; u < a.rows; ++u) {
                  const double* go = o.grad.data() + u * d;
                  for (std::size_t e = a.row_ptr[u]; e < a.row_ptr[u + 1]; ++e) {
                    const std::size_t v = a.col[e];
                    const double* xr = xd->value.data() + v * d;
                    if (g_gate) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < d; ++j) dot += go[j] * xr[j];
                      sg[e] += a.value[e] * dot;
                    }
                    if (g_x) {
                      const double w = gd->value[e] * a.value[e];
                      for (std::size_t j = 0; j < d; ++j) sx[v * d + j] += w * go[j];
                    }
                  }
                }
              });
  return result;
}

Tensor mode1_kernel(Tape& tape, const Tensor& kernel, const Tensor& coeffs) {
  require_rank2(coeffs, "mode1_kernel");
  const std::size_t m = coeffs.rows(), d = coeffs.cols();
  if (kernel.shape() != Shape{m, d, d}) {
    throw ShapeMismatch("mode1_kernel: kernel " + shape_string(kernel.shape()) + " for coefficients " +
                        shape_string(coeffs.shape()));
  }
  std::vector<double> out(m * d, 0.0);
  const auto kv = kernel.values();
  const auto cv = coeffs.values();
  for (std::size_t j = 0; j < m; ++j) {
    const Eigen::Map<const RowMat> kj(kv.data() + j * d * d, d, d);
    const Eigen::Map<const Eigen::VectorXd> cj(cv.data() + j * d, d);
    Eigen::Map<Eigen::VectorXd>(out.data() + j * d, d).noalias() = kj * cj;
  }
  Tensor result = Tensor::from({m, d}, std::move(out));
  check_finite(result, "mode1_kernel");
  auto gk = grad_target(kernel), gc = grad_target(coeffs);
  tape.record({kernel, coeffs}, result, [gk, gc, kd = kernel.handle(), cd = coeffs.handle(), m, d](const TensorData& o) {
    if (gk) grad_slot(*gk);
    if (gc) grad_slot(*gc);
    for (std::size_t j = 0; j < m; ++j) {
      const Eigen::Map<const Eigen::VectorXd> go(o.grad.data() + j * d, d);
      if (gk) {
        const Eigen::Map<const Eigen::VectorXd> cj(cd->value.data() + j * d, d);
        Eigen::Map<RowMat>(gk->grad.data() + j * d * d, d, d).noalias() += go * cj.transpose();
      }
      if (gc) {
        const Eigen::Map<const RowMat> kj(kd->value.data() + j * d * d, d, d);
        Eigen::Map<Eigen::VectorXd>(gc->grad.data() + j * d, d).noalias() += kj.transpose() * go;
      }
    }
  });
  return result;
}

Tensor heaviside_with_surrogate(Tape& tape, const Tensor& membrane, const Tensor& theta,
                                std::function<double(double)> backward_scale) {
  require_rank2(membrane, "heaviside_with_surrogate");
  const std::size_t n = membrane.rows(), d = membrane.cols();
  if (theta.size() != d || theta.rows() != 1) {
    throw ShapeMismatch("heaviside_with_surrogate: theta " + shape_string(theta.shape()) + " for membrane " +
                        shape_string(membrane.shape()));
  }
  std::vector<double> out(n * d);
  const auto mv = membrane.values();
  const auto tv = theta.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = mv[i * d + j] >= tv[j] ? 1.0 : 0.0;
  }
  Tensor result = Tensor::from({n, d}, std::move(out));
  auto gm = grad_target(membrane), gt = grad_target(theta);
  tape.record({membrane, theta}, result,
              [gm, gt, md = membrane.handle(), td = theta.handle(), n, d,
               scale_fn = std::move(backward_scale)](const TensorData& o) {
                std::span<double> sm, st;
                if (gm) sm = grad_slot(*gm);
                if (gt) st = grad_slot(*gt);
                for (std::size_t i = 0; i < n; ++i) {
                  for (std::size_t j = 0; j < d; ++j) {
                    const std::size_t k = i * d + j;
                    if (o.grad[k] == 0.0) continue;
                    const double g = scale_fn(md->value[k] - td->value[j]) * o.grad[k];
                    if (gm) sm[k] += g;
                    if (gt) st[j] -= g;
                  }
                }
              });
  return result;
}

// ---------------------------------------------------------------- grad_check

double grad_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> inputs, double eps) {
  for (auto& x : inputs) x.zero_grad();
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (auto& x : inputs) {
    const std::vector<double> analytic = x.grad();
    auto values = x.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      Tape plus(false);
      const double fp = f(plus).item();
      values[i] = saved - eps;
      Tape minus(false);
      const double fm = f(minus).item();
      values[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

double grad_check(const std::function<Tensor(Tape&)>& f, Tensor& x, double eps) {
  return grad_check(f, std::span<Tensor>(&x, 1), eps);
}

}  // namespace vsgno::ad
