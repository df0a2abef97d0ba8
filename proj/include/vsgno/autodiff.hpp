#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// tensors of rank 1..3. Only the primitives the operator network needs are
// provided; there is no implicit broadcasting.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vsgno::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Compressed sparse row matrix with sorted column indices per row.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col;
  std::vector<double> value;

  std::size_t nnz() const { return col.size(); }
};

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
};

/// Shared handle to a tensor node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t size() const { return data_->value.size(); }
  /// Rows/cols of a rank-2 tensor; a rank-1 tensor reads as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return data_->value; }
  std::span<double> mutable_values() { return data_->value; }
  double operator[](std::size_t i) const { return data_->value[i]; }
  double item() const;

  bool requires_grad() const { return data_->requires_grad; }
  bool has_grad() const { return !data_->grad.empty(); }
  /// Gradient values; all zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Deep copy of shape and values (gradient dropped).
  Tensor clone() const;

  TensorData* node() const { return data_.get(); }
  const std::shared_ptr<TensorData>& handle() const { return data_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> data) : data_(std::move(data)) {}
  std::shared_ptr<TensorData> data_;
};

/// Ordered record of differentiable operations. Backward replays the record
/// in exact reverse and accumulates into every reachable grad slot.
class Tape {
 public:
  /// A non-recording tape evaluates forward values only.
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  /// Records `backward` for `output` if recording and any input needs grad.
  /// Marks the output as requiring grad in that case.
  void record(std::vector<Tensor> inputs, const Tensor& output,
              std::function<void(const TensorData& out)> backward);

  /// Fills grad slots with d(loss)/d(tensor) for every tensor reachable from
  /// `loss`, then clears the tape. Leaf gradients accumulate across calls
  /// until zeroed.
  void backward(const Tensor& loss);

 private:
  struct Op {
    std::vector<std::shared_ptr<TensorData>> inputs;
    std::shared_ptr<TensorData> output;
    std::function<void(const TensorData& out)> backward;
  };
  bool recording_;
  std::vector<Op> ops_;
};

/// Grad slot of `t`, allocated (zeroed) on first use.
std::span<double> grad_slot(TensorData& t);

/// Tensor that never receives gradients.
Tensor constant(Shape shape, std::vector<double> values);

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);
Tensor elementwise_mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor concat_columns(Tape& tape, const Tensor& a, const Tensor& b);
Tensor gelu(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor sqrt(Tape& tape, const Tensor& a);
Tensor sum(Tape& tape, const Tensor& a);
/// Elementwise mean of equally shaped tensors; each receives 1/count of the gradient.
Tensor mean_over(Tape& tape, std::span<const Tensor> items);
/// Repeats a length-d vector (rank 1 or 1 x d) as the n rows of an n x d tensor.
Tensor broadcast_row(Tape& tape, const Tensor& vec, std::size_t n);
/// out[u] = sum over stored edges (u,v) of gate[e] * A[u,v] * x[v].
Tensor sparse_gated_agg(Tape& tape, std::shared_ptr<const CsrMatrix> adjacency,
                        const Tensor& gate, const Tensor& x);
/// Per-mode channel mixing: out[j] = K[j] * c[j] for K of shape m x d x d.
Tensor mode1_kernel(Tape& tape, const Tensor& kernel, const Tensor& coeffs);

/// Heaviside(M - theta) in the forward pass, with theta a d-vector applied
/// per column. `backward_scale(diff)` is the stand-in for the Heaviside
/// derivative: dY/dM = s, dY/dtheta = -s.
Tensor heaviside_with_surrogate(Tape& tape, const Tensor& membrane, const Tensor& theta,
                                std::function<double(double)> backward_scale);

double gelu_value(double x);
double gelu_derivative(double x);

/// Max over coordinates of |analytic - central difference| / max(1, |central difference|)
/// for d f / d x, where f builds a scalar on the given tape and reads x.
double grad_check(const std::function<Tensor(Tape&)>& f, Tensor& x, double eps);
/// Same, maximised over several inputs.
double grad_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> inputs, double eps);

}  // namespace vsgno::ad
