#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// Every op whose inputs live on a Tape is appended to that tape as a data
// record (kind, attributes, input slots, output node). Backward rules are
// themselves written in terms of the public ops, so a gradient computed with
// create_graph=true is recorded like any other value and can be
// differentiated again.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace metarec::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Plain value: shape plus row-major data.
struct Array {
  Shape shape;
  std::vector<double> data;
};

namespace detail {
struct TapeState;
}

class Tape;

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);
  explicit Tensor(Array value);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return value_->shape; }
  std::size_t rank() const { return value_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return value_->shape.at(axis); }
  std::size_t numel() const { return value_->data.size(); }
  std::span<const double> data() const& { return value_->data; }
  std::span<const double> data() && = delete;
  const std::vector<double>& values() const& { return value_->data; }
  std::vector<double> values() && { return value_->data; }
  double operator[](std::size_t i) const { return value_->data[i]; }
  double at(std::size_t row, std::size_t col) const;
  // Value of a single-element tensor.
  double item() const;

  // True when recorded on a tape that is still alive.
  bool attached() const;
  std::int64_t node() const { return node_; }
  Tensor detach() const { return Tensor(value_); }

  const std::shared_ptr<const Array>& array() const { return value_; }

 private:
  friend class Tape;
  friend struct Access;
  explicit Tensor(std::shared_ptr<const Array> value) : value_(std::move(value)) {}
  Tensor(std::shared_ptr<const Array> value, std::weak_ptr<detail::TapeState> tape,
         std::int64_t node)
      : value_(std::move(value)), tape_(std::move(tape)), node_(node) {}

  std::shared_ptr<const Array> value_;
  std::weak_ptr<detail::TapeState> tape_;
  std::int64_t node_ = -1;
};

enum class OpKind : std::uint8_t {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddScalar,
  kMatMul,
  kTranspose,
  kReshape,
  kSum,
  kMean,
  kSumAxis,
  kMeanAxis,
  kBroadcastScalar,
  kExpand,
  kConcat,
  kSlice,
  kPadSlice,
  kGather,
  kScatterAddRows,
  kSigmoid,
  kTanh,
  kRelu,
  kLog,
  kExp,
  kSoftmax,
  kSquare,
  kSqrt,
  kL2Norm,
  kReciprocal,
  kClampMin,
  kStopGradient,
  kStraightThrough,
  kCrossEntropy,
};

const char* op_name(OpKind kind);

// Attributes carried by a record; each kind reads only the fields it needs.
struct OpAttrs {
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t count = 0;
  double scalar = 0.0;
  Shape shape;
  std::shared_ptr<const std::vector<std::size_t>> indices;
};

// Differentiation tape. Cheap to copy (shared state); tensors hold a weak
// reference so a destroyed tape simply detaches them.
class Tape {
 public:
  Tape();

  // Registers a leaf whose gradient can be requested.
  Tensor variable(const Tensor& value);
  Tensor variable(Shape shape, std::vector<double> data);

  std::size_t num_records() const;
  std::size_t num_nodes() const;

  // Kinds of the recorded ops, in recording order.
  std::vector<OpKind> op_kinds() const;

  // Recomputes every record from the stored node values and reports whether
  // all outputs are reproduced bit-exactly.
  bool replay_matches() const;

 private:
  friend struct Access;
  std::shared_ptr<detail::TapeState> state_;
};

// ---- forward ops ---------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor neg(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Axis reductions keep the reduced axis with extent 1.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
// Scalar to any shape.
Tensor broadcast_scalar(const Tensor& x, Shape shape);
// Repeats an extent-1 axis `count` times.
Tensor expand(const Tensor& x, std::size_t axis, std::size_t count);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// Embeds x at offset `begin` into zeros with extent `total` along axis.
Tensor pad_slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t total);
// Row lookup along axis 0.
Tensor gather(const Tensor& table, std::span<const std::size_t> indices);
// Adds row i of x into row indices[i] of a zero table with `rows` rows.
Tensor scatter_add_rows(const Tensor& x, std::span<const std::size_t> indices, std::size_t rows);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor l2_norm(const Tensor& x, std::size_t axis);
// 1/x with 1/0 defined as 0.
Tensor reciprocal(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);
Tensor stop_gradient(const Tensor& x);
// Forward value is exactly `quantized`; the backward pass hands the
// incoming gradient to `continuous` unchanged.
Tensor straight_through(const Tensor& continuous, const Tensor& quantized);
// Mean over rows of -log softmax(logits[row])[targets[row]] for a
// [rows x classes] matrix; a rank-1 logits vector takes a single target.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

// (a.b) / (max(|a|, eps) max(|b|, eps)) for equal-length tensors.
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-12);

// ---- differentiation -----------------------------------------------------

// Gradients of a single-element `output` with respect to each `wrt`
// tensor. Unreachable or detached inputs receive zeros of matching shape.
// With create_graph the results stay on the tape and can be differentiated.
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt, bool create_graph = false);
Tensor grad(const Tensor& output, const Tensor& wrt, bool create_graph = false);

}  // namespace metarec::ad
