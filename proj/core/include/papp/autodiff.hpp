#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Tape records every operation in creation order, which is a topological
// order of the graph; backward() walks it once in reverse. Complex values are
// carried as (re, im) pairs of real tensors, see CVar.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace papp::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Scalar value of a one-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  void fill(double v);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the node's own value and its accumulated gradient.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Records a derived node. `backward` runs only if some input requires grad.
  Var record(Tensor value, bool requires_grad, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Zero-initialized gradient buffer of a node, or nullptr if the node does
  /// not require a gradient.
  Tensor* grad_buffer(std::size_t id);

  /// Gradient of the last backward() w.r.t. a node (zeros if unreached).
  Tensor grad(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws ConfigError when the
  /// loss has more than one element.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t backward_visits() const { return backward_visits_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::size_t backward_visits_ = 0;
};

// ---- elementwise -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
/// s / a, elementwise.
Var rdiv_scalar(double s, Var a);
/// max(a, s); the gradient is zero where the constant wins.
Var maximum_scalar(Var a, double s);
Var relu(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);

// ---- reductions and shape --------------------------------------------------

Var sum(Var a);
Var mean(Var a);
/// Sums over the last axis, dropping it.
Var sum_last(Var a);
Var reshape(Var a, Shape shape);
/// [B, ...] -> [B, prod(...)].
Var flatten(Var a);
/// Concatenates two [B, F] tensors along the feature axis.
Var concat_cols(Var a, Var b);
/// Columns [start, start + count) of a [B, F] tensor.
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Slice i of the leading axis: [N, ...] -> [...].
Var select_first(Var a, std::size_t index);
/// Value-only copy; gradients do not flow through it.
Var detach(Var a);

// ---- linear algebra --------------------------------------------------------

/// [m, k] x [k, n].
Var matmul(Var a, Var b);
/// Batched [B, m, k] x [B, k, n], optionally transposing the trailing matrices.
Var bmm(Var a, Var b, bool transpose_a = false, bool transpose_b = false);
/// Swaps the last two axes of a [B, m, n] tensor.
Var transpose_last(Var a);
/// [B, F] + bias[F].
Var add_bias(Var x, Var bias);
/// Multiplies sample b of x[B, ...] by s[b].
Var scale_rows(Var x, Var s);
/// Multiplies column j of sample b of x[B, m, n] by s[b, j].
Var scale_cols(Var x, Var s);
/// Diagonal of each [n, n] slice of a [B, n, n] tensor.
Var diagonal(Var a);
/// a[b] + s[b] * I for a [B, n, n].
Var add_scaled_identity(Var a, Var s);

/// 2-D convolution, stride 1, zero "same" padding, odd square kernel.
/// x[B, C_in, H, W], weight[C_out, C_in, k, k], bias[C_out].
Var conv2d(Var x, Var weight, Var bias);

// ---- normalization and regularization -------------------------------------

/// Batch statistics produced by a training-mode batch_norm call.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;  // unbiased
};

/// Per-feature (rank 2) or per-channel (rank 4, axis 1) batch normalization.
/// Training mode normalizes with batch statistics and reports them through
/// `stats` when non-null; evaluation mode uses the running statistics.
Var batch_norm(Var x, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var,
               bool training, BatchStats* stats = nullptr, double eps = 1e-5);

/// Inverted dropout. Identity when !training or rate == 0.
Var dropout(Var x, double rate, std::uint64_t mask_seed, bool training);

// ---- complex ---------------------------------------------------------------

struct CVar {
  Var re;
  Var im;
};

/// Batched complex matrix product from four real products.
CVar cbmm(const CVar& a, const CVar& b);
/// Batched conjugate transpose of the trailing matrices.
CVar cherm(const CVar& a);
/// Squared modulus, elementwise.
Var cabs2(const CVar& a);

struct SolveReport {
  std::vector<std::uint8_t> singular;  // per batch element
};

/// Solves A[b] X[b] = B[b] for Hermitian positive-definite A[b] (batched,
/// [B, n, n] and [B, n, m]). Backward uses the adjoint method:
/// dB = A^{-H} g and dA = -(A^{-H} g) X^H.
/// Without a report a failed factorization throws NumericError; with one the
/// offending batch element yields X = 0 and its flag is set.
CVar hermitian_solve(const CVar& a, const CVar& b, SolveReport* report = nullptr);

// ---- parameters ------------------------------------------------------------

/// Named tensors in declaration order. Non-trainable entries hold buffers
/// such as batch-norm running statistics.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  std::size_t add(std::string name, Tensor value, bool trainable = true);

  std::size_t size() const { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  std::size_t index_of(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

  /// Total number of trainable scalars.
  std::size_t trainable_count() const;

  /// CRC-32 over names and raw value bytes.
  std::uint32_t checksum() const;

 private:
  std::vector<Entry> entries_;
};

/// Gradients aligned index-by-index with a ParameterSet (buffers get empty
/// tensors).
using GradSet = std::vector<Tensor>;

GradSet zeros_like(const ParameterSet& params);
/// acc += scale * g.
void accumulate(GradSet& acc, const GradSet& g, double scale);
void check_aligned(const ParameterSet& params, const GradSet& grads);

/// p <- p - lr * g for every trainable entry.
void sgd_step(ParameterSet& params, const GradSet& grads, double lr);

/// Places every entry of `params` on the tape; trainable ones as variables.
std::vector<Var> bind(Tape& tape, const ParameterSet& params);
/// Collects gradients for variables created by bind().
GradSet collect(const Tape& tape, const ParameterSet& params, const std::vector<Var>& vars);

/// Checkpoint: magic, version, metadata key/values, then (name, trainable,
/// shape, values) per entry for each group, then a CRC-32 of the content.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::pair<std::string, ParameterSet>> groups;

  const ParameterSet& group(const std::string& name) const;
  std::string meta(const std::string& key, const std::string& fallback = {}) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Glorot-uniform initializer bound sqrt(6 / (fan_in + fan_out)).
double glorot_bound(std::size_t fan_in, std::size_t fan_out);

}  // namespace papp::ad
