#include "metarec/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace metarec::ad {

namespace detail {

struct Slot {
  std::shared_ptr<const Array> value;
  std::int64_t node = -1;  // -1: constant captured by value
};

struct Record {
  OpKind kind;
  OpAttrs attrs;
  std::vector<Slot> inputs;
  std::int64_t output = -1;
};

struct TapeState {
  std::vector<std::shared_ptr<const Array>> values;
  std::vector<std::int64_t> producer;  // record index, -1 for leaves
  std::vector<Record> records;
};

}  // namespace detail

struct Access {
  static Tensor make(std::shared_ptr<const Array> value,
                     const std::shared_ptr<detail::TapeState>& tape, std::int64_t node) {
    return Tensor(std::move(value), tape, node);
  }
  static Tensor constant(std::shared_ptr<const Array> value) { return Tensor(std::move(value)); }
  static std::shared_ptr<detail::TapeState> tape_of(const Tensor& t) {
    if (t.node_ < 0) return nullptr;
    return t.tape_.lock();
  }
  static const std::shared_ptr<detail::TapeState>& state(const Tape& tape) { return tape.state_; }
};

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---- Tensor --------------------------------------------------------------

Tensor::Tensor() : value_(std::make_shared<const Array>(Array{Shape{}, {0.0}})) {}

Tensor::Tensor(Shape shape, std::vector<double> data) {
  if (ad::numel(shape) != data.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
  }
  value_ = std::make_shared<const Array>(Array{std::move(shape), std::move(data)});
}

Tensor::Tensor(Array value) : Tensor(std::move(value.shape), std::move(value.data)) {}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> data(ad::numel(shape), value);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw std::invalid_argument("at: tensor is not a matrix");
  return value_->data.at(row * value_->shape[1] + col);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  }
  return value_->data[0];
}

bool Tensor::attached() const { return node_ >= 0 && !tape_.expired(); }

// ---- Tape ----------------------------------------------------------------

Tape::Tape() : state_(std::make_shared<detail::TapeState>()) {}

Tensor Tape::variable(const Tensor& value) {
  auto id = static_cast<std::int64_t>(state_->values.size());
  state_->values.push_back(value.array());
  state_->producer.push_back(-1);
  return Access::make(value.array(), state_, id);
}

Tensor Tape::variable(Shape shape, std::vector<double> data) {
  return variable(Tensor(std::move(shape), std::move(data)));
}

std::size_t Tape::num_records() const { return state_->records.size(); }
std::size_t Tape::num_nodes() const { return state_->values.size(); }

std::vector<OpKind> Tape::op_kinds() const {
  std::vector<OpKind> kinds;
  kinds.reserve(state_->records.size());
  for (const auto& r : state_->records) kinds.push_back(r.kind);
  return kinds;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kReshape: return "reshape";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSumAxis: return "sum_axis";
    case OpKind::kMeanAxis: return "mean_axis";
    case OpKind::kBroadcastScalar: return "broadcast_scalar";
    case OpKind::kExpand: return "expand";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kPadSlice: return "pad_slice";
    case OpKind::kGather: return "gather";
    case OpKind::kScatterAddRows: return "scatter_add_rows";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kLog: return "log";
    case OpKind::kExp: return "exp";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kL2Norm: return "l2_norm";
    case OpKind::kReciprocal: return "reciprocal";
    case OpKind::kClampMin: return "clamp_min";
    case OpKind::kStopGradient: return "stop_gradient";
    case OpKind::kStraightThrough: return "straight_through";
    case OpKind::kCrossEntropy: return "cross_entropy";
  }
  return "unknown";
}

namespace {

[[noreturn]] void shape_error(OpKind kind, const std::string& what) {
  throw std::invalid_argument(std::string(op_name(kind)) + ": " + what);
}

void require_same(OpKind kind, const Array& a, const Array& b) {
  if (a.shape != b.shape) {
    shape_error(kind, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
}

void require_axis(OpKind kind, const Array& x, std::size_t axis) {
  if (axis >= x.shape.size()) {
    shape_error(kind, "axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape));
  }
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisView {
  std::size_t outer, extent, inner;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

template <typename F>
Array unary(const Array& x, F f) {
  Array out{x.shape, std::vector<double>(x.data.size())};
  for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = f(x.data[i]);
  return out;
}

template <typename F>
Array binary(OpKind kind, const Array& a, const Array& b, F f) {
  require_same(kind, a, b);
  Array out{a.shape, std::vector<double>(a.data.size())};
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Array compute(OpKind kind, const OpAttrs& at, std::span<const Array* const> in) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) shape_error(kind, "expected " + std::to_string(n) + " inputs");
  };
  switch (kind) {
    case OpKind::kAdd:
      arity(2);
      return binary(kind, *in[0], *in[1], [](double a, double b) { return a + b; });
    case OpKind::kSub:
      arity(2);
      return binary(kind, *in[0], *in[1], [](double a, double b) { return a - b; });
    case OpKind::kMul:
      arity(2);
      return binary(kind, *in[0], *in[1], [](double a, double b) { return a * b; });
    case OpKind::kDiv:
      arity(2);
      return binary(kind, *in[0], *in[1], [](double a, double b) { return a / b; });
    case OpKind::kScale: {
      arity(1);
      double s = at.scalar;
      return unary(*in[0], [s](double v) { return v * s; });
    }
    case OpKind::kAddScalar: {
      arity(1);
      double s = at.scalar;
      return unary(*in[0], [s](double v) { return v + s; });
    }
    case OpKind::kMatMul: {
      arity(2);
      const Array& a = *in[0];
      const Array& b = *in[1];
      if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
        shape_error(kind, "incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
      }
      std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
      Array out{Shape{m, n}, std::vector<double>(m * n, 0.0)};
      for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          double av = a.data[i * k + p];
          const double* brow = b.data.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
      }
      return out;
    }
    case OpKind::kTranspose: {
      arity(1);
      const Array& x = *in[0];
      if (x.shape.size() != 2) shape_error(kind, "expected a matrix, got " + shape_str(x.shape));
      std::size_t r = x.shape[0], c = x.shape[1];
      Array out{Shape{c, r}, std::vector<double>(r * c)};
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = x.data[i * c + j];
      return out;
    }
    case OpKind::kReshape: {
      arity(1);
      if (numel(at.shape) != in[0]->data.size()) {
        shape_error(kind, "cannot reshape " + shape_str(in[0]->shape) + " to " + shape_str(at.shape));
      }
      return Array{at.shape, in[0]->data};
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      arity(1);
      const Array& x = *in[0];
      double s = 0.0;
      for (double v : x.data) s += v;
      if (kind == OpKind::kMean) {
        if (x.data.empty()) shape_error(kind, "mean of empty tensor");
        s /= static_cast<double>(x.data.size());
      }
      return Array{Shape{}, {s}};
    }
    case OpKind::kSumAxis:
    case OpKind::kMeanAxis: {
      arity(1);
      const Array& x = *in[0];
      require_axis(kind, x, at.axis);
      auto v = axis_view(x.shape, at.axis);
      Shape shape = x.shape;
      shape[at.axis] = 1;
      Array out{shape, std::vector<double>(v.outer * v.inner, 0.0)};
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t e = 0; e < v.extent; ++e)
          for (std::size_t i = 0; i < v.inner; ++i)
            out.data[o * v.inner + i] += x.data[(o * v.extent + e) * v.inner + i];
      if (kind == OpKind::kMeanAxis) {
        if (v.extent == 0) shape_error(kind, "mean over empty axis");
        for (double& d : out.data) d /= static_cast<double>(v.extent);
      }
      return out;
    }
    case OpKind::kBroadcastScalar: {
      arity(1);
      if (in[0]->data.size() != 1) {
        shape_error(kind, "input " + shape_str(in[0]->shape) + " is not a scalar");
      }
      return Array{at.shape, std::vector<double>(numel(at.shape), in[0]->data[0])};
    }
    case OpKind::kExpand: {
      arity(1);
      const Array& x = *in[0];
      require_axis(kind, x, at.axis);
      if (x.shape[at.axis] != 1) shape_error(kind, "axis extent must be 1 in " + shape_str(x.shape));
      Shape shape = x.shape;
      shape[at.axis] = at.count;
      auto v = axis_view(shape, at.axis);
      Array out{shape, std::vector<double>(numel(shape))};
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t e = 0; e < v.extent; ++e)
          for (std::size_t i = 0; i < v.inner; ++i)
            out.data[(o * v.extent + e) * v.inner + i] = x.data[o * v.inner + i];
      return out;
    }
    case OpKind::kConcat: {
      if (in.empty()) shape_error(kind, "no inputs");
      const Array& first = *in[0];
      require_axis(kind, first, at.axis);
      Shape shape = first.shape;
      shape[at.axis] = 0;
      for (const Array* p : in) {
        if (p->shape.size() != first.shape.size()) {
          shape_error(kind, "rank mismatch " + shape_str(first.shape) + " vs " + shape_str(p->shape));
        }
        for (std::size_t d = 0; d < p->shape.size(); ++d) {
          if (d != at.axis && p->shape[d] != first.shape[d]) {
            shape_error(kind, "shape mismatch " + shape_str(first.shape) + " vs " + shape_str(p->shape));
          }
        }
        shape[at.axis] += p->shape[at.axis];
      }
      auto v = axis_view(shape, at.axis);
      Array out{shape, std::vector<double>(numel(shape))};
      std::size_t offset = 0;
      for (const Array* p : in) {
        std::size_t ext = p->shape[at.axis];
        for (std::size_t o = 0; o < v.outer; ++o)
          std::copy_n(p->data.data() + o * ext * v.inner, ext * v.inner,
                      out.data.data() + (o * v.extent + offset) * v.inner);
        offset += ext;
      }
      return out;
    }
    case OpKind::kSlice: {
      arity(1);
      const Array& x = *in[0];
      require_axis(kind, x, at.axis);
      if (at.begin > at.end || at.end > x.shape[at.axis]) {
        shape_error(kind, "range [" + std::to_string(at.begin) + "," + std::to_string(at.end) +
                              ") out of bounds for " + shape_str(x.shape));
      }
      auto v = axis_view(x.shape, at.axis);
      Shape shape = x.shape;
      std::size_t ext = at.end - at.begin;
      shape[at.axis] = ext;
      Array out{shape, std::vector<double>(numel(shape))};
      for (std::size_t o = 0; o < v.outer; ++o)
        std::copy_n(x.data.data() + (o * v.extent + at.begin) * v.inner, ext * v.inner,
                    out.data.data() + o * ext * v.inner);
      return out;
    }
    case OpKind::kPadSlice: {
      arity(1);
      const Array& x = *in[0];
      require_axis(kind, x, at.axis);
      std::size_t ext = x.shape[at.axis];
      if (at.begin + ext > at.count) shape_error(kind, "slice does not fit in padded extent");
      Shape shape = x.shape;
      shape[at.axis] = at.count;
      auto v = axis_view(shape, at.axis);
      Array out{shape, std::vector<double>(numel(shape), 0.0)};
      for (std::size_t o = 0; o < v.outer; ++o)
        std::copy_n(x.data.data() + o * ext * v.inner, ext * v.inner,
                    out.data.data() + (o * v.extent + at.begin) * v.inner);
      return out;
    }
    case OpKind::kGather: {
      arity(1);
      const Array& t = *in[0];
      if (t.shape.empty()) shape_error(kind, "table must have rank >= 1");
      std::size_t rows = t.shape[0];
      std::size_t width = rows ? t.data.size() / rows : 0;
      const auto& idx = *at.indices;
      Shape shape = t.shape;
      shape[0] = idx.size();
      Array out{shape, std::vector<double>(idx.size() * width)};
      for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= rows) {
          shape_error(kind, "index " + std::to_string(idx[r]) + " out of range for " +
                                std::to_string(rows) + " rows");
        }
        std::copy_n(t.data.data() + idx[r] * width, width, out.data.data() + r * width);
      }
      return out;
    }
    case OpKind::kScatterAddRows: {
      arity(1);
      const Array& x = *in[0];
      const auto& idx = *at.indices;
      if (x.shape.empty() || x.shape[0] != idx.size()) {
        shape_error(kind, "row count of " + shape_str(x.shape) + " does not match " +
                              std::to_string(idx.size()) + " indices");
      }
      std::size_t width = idx.empty() ? numel(Shape(x.shape.begin() + 1, x.shape.end()))
                                      : x.data.size() / idx.size();
      Shape shape = x.shape;
      shape[0] = at.count;
      Array out{shape, std::vector<double>(at.count * width, 0.0)};
      for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= at.count) shape_error(kind, "index " + std::to_string(idx[r]) + " out of range");
        for (std::size_t c = 0; c < width; ++c) out.data[idx[r] * width + c] += x.data[r * width + c];
      }
      return out;
    }
    case OpKind::kSigmoid:
      arity(1);
      return unary(*in[0], stable_sigmoid);
    case OpKind::kTanh:
      arity(1);
      return unary(*in[0], [](double v) { return std::tanh(v); });
    case OpKind::kRelu:
      arity(1);
      return unary(*in[0], [](double v) { return v > 0.0 ? v : 0.0; });
    case OpKind::kLog:
      arity(1);
      return unary(*in[0], [](double v) { return std::log(v); });
    case OpKind::kExp:
      arity(1);
      return unary(*in[0], [](double v) { return std::exp(v); });
    case OpKind::kSquare:
      arity(1);
      return unary(*in[0], [](double v) { return v * v; });
    case OpKind::kSqrt:
      arity(1);
      return unary(*in[0], [](double v) { return std::sqrt(v); });
    case OpKind::kReciprocal:
      arity(1);
      return unary(*in[0], [](double v) { return v == 0.0 ? 0.0 : 1.0 / v; });
    case OpKind::kClampMin: {
      arity(1);
      double f = at.scalar;
      return unary(*in[0], [f](double v) { return v > f ? v : f; });
    }
    case OpKind::kSoftmax: {
      arity(1);
      const Array& x = *in[0];
      require_axis(kind, x, at.axis);
      auto v = axis_view(x.shape, at.axis);
      Array out{x.shape, std::vector<double>(x.data.size())};
      for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
          auto pos = [&](std::size_t e) { return (o * v.extent + e) * v.inner + i; };
          double m = -INFINITY;
          for (std::size_t e = 0; e < v.extent; ++e) m = std::max(m, x.data[pos(e)]);
          double z = 0.0;
          for (std::size_t e = 0; e < v.extent; ++e) {
            double ev = std::exp(x.data[pos(e)] - m);
            out.data[pos(e)] = ev;
            z += ev;
          }
          for (std::size_t e = 0; e < v.extent; ++e) out.data[pos(e)] /= z;
        }
      }
      return out;
    }
    case OpKind::kL2Norm: {
      arity(1);
      const Array& x = *in[0];
      require_axis(kind, x, at.axis);
      auto v = axis_view(x.shape, at.axis);
      Shape shape = x.shape;
      shape[at.axis] = 1;
      Array out{shape, std::vector<double>(v.outer * v.inner, 0.0)};
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t e = 0; e < v.extent; ++e)
          for (std::size_t i = 0; i < v.inner; ++i) {
            double d = x.data[(o * v.extent + e) * v.inner + i];
            out.data[o * v.inner + i] += d * d;
          }
      for (double& d : out.data) d = std::sqrt(d);
      return out;
    }
    case OpKind::kStopGradient:
      arity(1);
      return *in[0];
    case OpKind::kStraightThrough:
      arity(2);
      require_same(kind, *in[0], *in[1]);
      return *in[1];
    case OpKind::kCrossEntropy: {
      arity(1);
      const Array& x = *in[0];
      const auto& targets = *at.indices;
      std::size_t rows, classes;
      if (x.shape.size() == 1) {
        rows = 1;
        classes = x.shape[0];
      } else if (x.shape.size() == 2) {
        rows = x.shape[0];
        classes = x.shape[1];
      } else {
        shape_error(kind, "logits must be a vector or matrix, got " + shape_str(x.shape));
      }
      if (targets.size() != rows || rows == 0) {
        shape_error(kind, std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
      }
      double total = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] >= classes) {
          shape_error(kind, "target " + std::to_string(targets[r]) + " out of range for " +
                                std::to_string(classes) + " classes");
        }
        const double* row = x.data.data() + r * classes;
        double m = *std::max_element(row, row + classes);
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - m);
        total += m + std::log(z) - row[targets[r]];
      }
      return Array{Shape{}, {total / static_cast<double>(rows)}};
    }
  }
  shape_error(kind, "unhandled op");
}

Tensor apply(OpKind kind, OpAttrs attrs, std::span<const Tensor* const> inputs) {
  std::shared_ptr<detail::TapeState> tape;
  std::vector<std::shared_ptr<detail::TapeState>> owners(inputs.size());
  std::vector<const Array*> arrays(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    arrays[i] = inputs[i]->array().get();
    owners[i] = Access::tape_of(*inputs[i]);
    if (owners[i]) {
      if (tape && tape != owners[i]) {
        throw std::invalid_argument(std::string(op_name(kind)) + ": inputs recorded on different tapes");
      }
      tape = owners[i];
    }
  }
  auto value = std::make_shared<const Array>(compute(kind, attrs, arrays));
  if (!tape) return Access::constant(std::move(value));

  detail::Record rec{kind, std::move(attrs), {}, -1};
  rec.inputs.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    rec.inputs.push_back({inputs[i]->array(), owners[i] ? inputs[i]->node() : -1});
  }
  auto id = static_cast<std::int64_t>(tape->values.size());
  rec.output = id;
  tape->values.push_back(value);
  tape->producer.push_back(static_cast<std::int64_t>(tape->records.size()));
  tape->records.push_back(std::move(rec));
  return Access::make(std::move(value), tape, id);
}

Tensor apply1(OpKind kind, const Tensor& x, OpAttrs attrs = {}) {
  const Tensor* in[] = {&x};
  return apply(kind, std::move(attrs), in);
}

Tensor apply2(OpKind kind, const Tensor& a, const Tensor& b, OpAttrs attrs = {}) {
  const Tensor* in[] = {&a, &b};
  return apply(kind, std::move(attrs), in);
}

OpAttrs axis_attrs(std::size_t axis) {
  OpAttrs a;
  a.axis = axis;
  return a;
}

OpAttrs scalar_attrs(double s) {
  OpAttrs a;
  a.scalar = s;
  return a;
}

OpAttrs index_attrs(std::span<const std::size_t> indices, std::size_t count = 0) {
  OpAttrs a;
  a.indices = std::make_shared<const std::vector<std::size_t>>(indices.begin(), indices.end());
  a.count = count;
  return a;
}

Tensor mask_where(const Tensor& x, double floor) {
  auto m = unary(*x.array(), [floor](double v) { return v > floor ? 1.0 : 0.0; });
  return Tensor(std::move(m));
}

using GradList = std::vector<std::optional<Tensor>>;

// Backward rules. `in` and `out` are attached when building a graph of the
// gradient, detached otherwise; `need[i]` marks inputs that want a gradient.
GradList backward(const detail::Record& rec, std::span<const Tensor> in, const Tensor& out,
                  const Tensor& g, const std::vector<char>& need) {
  GradList r(in.size());
  const OpAttrs& at = rec.attrs;
  auto want = [&](std::size_t i) { return need[i] != 0; };
  switch (rec.kind) {
    case OpKind::kAdd:
      if (want(0)) r[0] = g;
      if (want(1)) r[1] = g;
      break;
    case OpKind::kSub:
      if (want(0)) r[0] = g;
      if (want(1)) r[1] = neg(g);
      break;
    case OpKind::kMul:
      if (want(0)) r[0] = mul(g, in[1]);
      if (want(1)) r[1] = mul(g, in[0]);
      break;
    case OpKind::kDiv:
      if (want(0)) r[0] = div(g, in[1]);
      if (want(1)) r[1] = neg(div(mul(g, out), in[1]));
      break;
    case OpKind::kScale:
      r[0] = scale(g, at.scalar);
      break;
    case OpKind::kAddScalar:
    case OpKind::kStraightThrough:
      r[0] = g;
      break;
    case OpKind::kMatMul:
      if (want(0)) r[0] = matmul(g, transpose(in[1]));
      if (want(1)) r[1] = matmul(transpose(in[0]), g);
      break;
    case OpKind::kTranspose:
      r[0] = transpose(g);
      break;
    case OpKind::kReshape:
      r[0] = reshape(g, in[0].shape());
      break;
    case OpKind::kSum:
      r[0] = broadcast_scalar(g, in[0].shape());
      break;
    case OpKind::kMean:
      r[0] = scale(broadcast_scalar(g, in[0].shape()), 1.0 / static_cast<double>(in[0].numel()));
      break;
    case OpKind::kSumAxis:
      r[0] = expand(g, at.axis, in[0].dim(at.axis));
      break;
    case OpKind::kMeanAxis:
      r[0] = scale(expand(g, at.axis, in[0].dim(at.axis)), 1.0 / static_cast<double>(in[0].dim(at.axis)));
      break;
    case OpKind::kBroadcastScalar:
      r[0] = reshape(sum(g), in[0].shape());
      break;
    case OpKind::kExpand:
      r[0] = sum(g, at.axis);
      break;
    case OpKind::kConcat: {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        std::size_t ext = in[i].dim(at.axis);
        if (want(i)) r[i] = slice(g, at.axis, offset, offset + ext);
        offset += ext;
      }
      break;
    }
    case OpKind::kSlice:
      r[0] = pad_slice(g, at.axis, at.begin, in[0].dim(at.axis));
      break;
    case OpKind::kPadSlice:
      r[0] = slice(g, at.axis, at.begin, at.begin + in[0].dim(at.axis));
      break;
    case OpKind::kGather:
      r[0] = scatter_add_rows(g, *at.indices, in[0].dim(0));
      break;
    case OpKind::kScatterAddRows:
      r[0] = gather(g, *at.indices);
      break;
    case OpKind::kSigmoid:
      r[0] = mul(g, mul(out, add_scalar(neg(out), 1.0)));
      break;
    case OpKind::kTanh:
      r[0] = mul(g, add_scalar(neg(square(out)), 1.0));
      break;
    case OpKind::kRelu:
      r[0] = mul(g, mask_where(in[0], 0.0));
      break;
    case OpKind::kClampMin:
      r[0] = mul(g, mask_where(in[0], at.scalar));
      break;
    case OpKind::kLog:
      r[0] = div(g, in[0]);
      break;
    case OpKind::kExp:
      r[0] = mul(g, out);
      break;
    case OpKind::kSoftmax: {
      std::size_t n = in[0].dim(at.axis);
      r[0] = mul(out, sub(g, expand(sum(mul(g, out), at.axis), at.axis, n)));
      break;
    }
    case OpKind::kSquare:
      r[0] = scale(mul(g, in[0]), 2.0);
      break;
    case OpKind::kSqrt:
      r[0] = mul(g, scale(reciprocal(out), 0.5));
      break;
    case OpKind::kL2Norm:
      r[0] = mul(expand(mul(g, reciprocal(out)), at.axis, in[0].dim(at.axis)), in[0]);
      break;
    case OpKind::kReciprocal:
      r[0] = mul(g, neg(square(out)));
      break;
    case OpKind::kStopGradient:
      break;
    case OpKind::kCrossEntropy: {
      const Tensor& logits = in[0];
      std::size_t axis = logits.rank() - 1;
      std::size_t classes = logits.dim(axis);
      const auto& targets = *at.indices;
      std::vector<double> onehot(logits.numel(), 0.0);
      for (std::size_t row = 0; row < targets.size(); ++row) onehot[row * classes + targets[row]] = 1.0;
      Tensor diff = sub(softmax(logits, axis), Tensor(logits.shape(), std::move(onehot)));
      r[0] = scale(mul(broadcast_scalar(g, logits.shape()), diff),
                   1.0 / static_cast<double>(targets.size()));
      break;
    }
  }
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!want(i)) r[i].reset();
  }
  return r;
}

}  // namespace

bool Tape::replay_matches() const {
  const auto& st = *state_;
  std::vector<std::shared_ptr<const Array>> replayed(st.values.size());
  for (std::size_t n = 0; n < st.values.size(); ++n) {
    if (st.producer[n] < 0) replayed[n] = st.values[n];
  }
  for (const auto& rec : st.records) {
    std::vector<const Array*> arrays;
    arrays.reserve(rec.inputs.size());
    for (const auto& slot : rec.inputs) {
      arrays.push_back(slot.node >= 0 ? replayed[slot.node].get() : slot.value.get());
    }
    auto value = std::make_shared<const Array>(compute(rec.kind, rec.attrs, arrays));
    const Array& stored = *st.values[rec.output];
    if (value->shape != stored.shape ||
        std::memcmp(value->data.data(), stored.data.data(), stored.data.size() * sizeof(double)) != 0) {
      return false;
    }
    replayed[rec.output] = std::move(value);
  }
  return true;
}

// ---- public op wrappers --------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return apply2(OpKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply2(OpKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply2(OpKind::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return apply2(OpKind::kDiv, a, b); }
Tensor scale(const Tensor& x, double factor) { return apply1(OpKind::kScale, x, scalar_attrs(factor)); }
Tensor add_scalar(const Tensor& x, double value) {
  return apply1(OpKind::kAddScalar, x, scalar_attrs(value));
}
Tensor neg(const Tensor& x) { return scale(x, -1.0); }
Tensor matmul(const Tensor& a, const Tensor& b) { return apply2(OpKind::kMatMul, a, b); }
Tensor transpose(const Tensor& x) { return apply1(OpKind::kTranspose, x); }

Tensor reshape(const Tensor& x, Shape shape) {
  OpAttrs a;
  a.shape = std::move(shape);
  return apply1(OpKind::kReshape, x, std::move(a));
}

Tensor sum(const Tensor& x) { return apply1(OpKind::kSum, x); }
Tensor mean(const Tensor& x) { return apply1(OpKind::kMean, x); }
Tensor sum(const Tensor& x, std::size_t axis) { return apply1(OpKind::kSumAxis, x, axis_attrs(axis)); }
Tensor mean(const Tensor& x, std::size_t axis) { return apply1(OpKind::kMeanAxis, x, axis_attrs(axis)); }

Tensor broadcast_scalar(const Tensor& x, Shape shape) {
  OpAttrs a;
  a.shape = std::move(shape);
  return apply1(OpKind::kBroadcastScalar, x, std::move(a));
}

Tensor expand(const Tensor& x, std::size_t axis, std::size_t count) {
  OpAttrs a = axis_attrs(axis);
  a.count = count;
  return apply1(OpKind::kExpand, x, std::move(a));
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(parts.size());
  for (const auto& p : parts) ptrs.push_back(&p);
  return apply(OpKind::kConcat, axis_attrs(axis), ptrs);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  OpAttrs a = axis_attrs(axis);
  a.begin = begin;
  a.end = end;
  return apply1(OpKind::kSlice, x, std::move(a));
}

Tensor pad_slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t total) {
  OpAttrs a = axis_attrs(axis);
  a.begin = begin;
  a.count = total;
  return apply1(OpKind::kPadSlice, x, std::move(a));
}

Tensor gather(const Tensor& table, std::span<const std::size_t> indices) {
  return apply1(OpKind::kGather, table, index_attrs(indices));
}

Tensor scatter_add_rows(const Tensor& x, std::span<const std::size_t> indices, std::size_t rows) {
  return apply1(OpKind::kScatterAddRows, x, index_attrs(indices, rows));
}

Tensor sigmoid(const Tensor& x) { return apply1(OpKind::kSigmoid, x); }
Tensor tanh(const Tensor& x) { return apply1(OpKind::kTanh, x); }
Tensor relu(const Tensor& x) { return apply1(OpKind::kRelu, x); }
Tensor log(const Tensor& x) { return apply1(OpKind::kLog, x); }
Tensor exp(const Tensor& x) { return apply1(OpKind::kExp, x); }
Tensor softmax(const Tensor& x, std::size_t axis) { return apply1(OpKind::kSoftmax, x, axis_attrs(axis)); }
Tensor square(const Tensor& x) { return apply1(OpKind::kSquare, x); }
Tensor sqrt(const Tensor& x) { return apply1(OpKind::kSqrt, x); }
Tensor l2_norm(const Tensor& x, std::size_t axis) { return apply1(OpKind::kL2Norm, x, axis_attrs(axis)); }
Tensor reciprocal(const Tensor& x) { return apply1(OpKind::kReciprocal, x); }
Tensor clamp_min(const Tensor& x, double floor) {
  return apply1(OpKind::kClampMin, x, scalar_attrs(floor));
}
Tensor stop_gradient(const Tensor& x) { return apply1(OpKind::kStopGradient, x); }

Tensor straight_through(const Tensor& continuous, const Tensor& quantized) {
  return apply2(OpKind::kStraightThrough, continuous, quantized);
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  return apply1(OpKind::kCrossEntropy, logits, index_attrs(targets));
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
  if (a.numel() != b.numel()) {
    throw std::invalid_argument("cosine_similarity: length mismatch " + std::to_string(a.numel()) +
                                " vs " + std::to_string(b.numel()));
  }
  if (!(eps > 0.0)) throw std::invalid_argument("cosine_similarity: eps must be positive");
  Tensor fa = reshape(a, {a.numel()});
  Tensor fb = reshape(b, {b.numel()});
  Tensor dot = reshape(sum(mul(fa, fb)), {1});
  Tensor na = clamp_min(l2_norm(fa, 0), eps);
  Tensor nb = clamp_min(l2_norm(fb, 0), eps);
  return reshape(div(dot, mul(na, nb)), {});
}

// ---- grad ----------------------------------------------------------------

std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt, bool create_graph) {
  if (output.numel() != 1) {
    throw std::invalid_argument("grad: output of shape " + shape_str(output.shape()) + " is not a scalar");
  }
  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const auto& w : wrt) result.push_back(Tensor::zeros(w.shape()));

  auto tape = Access::tape_of(output);
  if (!tape) return result;

  const std::size_t n_nodes = tape->values.size();
  std::vector<char> relevant(n_nodes, 0);
  std::vector<char> is_wrt(n_nodes, 0);
  bool any = false;
  for (const auto& w : wrt) {
    if (Access::tape_of(w) == tape) {
      relevant[w.node()] = 1;
      is_wrt[w.node()] = 1;
      any = true;
    }
  }
  if (!any) return result;

  const auto out_node = output.node();
  const auto last = tape->producer[out_node];
  for (std::int64_t r = 0; r <= last; ++r) {
    const auto& rec = tape->records[r];
    if (relevant[rec.output]) continue;
    for (const auto& slot : rec.inputs) {
      if (slot.node >= 0 && relevant[slot.node]) {
        relevant[rec.output] = 1;
        break;
      }
    }
  }
  if (!relevant[out_node]) return result;

  auto as_tensor = [&](const std::shared_ptr<const Array>& value, std::int64_t node) {
    if (create_graph && node >= 0) return Access::make(value, tape, node);
    return Access::constant(value);
  };

  std::vector<std::optional<Tensor>> grads(n_nodes);
  grads[out_node] = Tensor::full(output.shape(), 1.0);
  for (std::int64_t r = last; r >= 0; --r) {
    const detail::Record rec = tape->records[r];
    if (!relevant[rec.output] || !grads[rec.output]) continue;
    Tensor g = *grads[rec.output];
    if (!is_wrt[rec.output]) grads[rec.output].reset();

    std::vector<char> need(rec.inputs.size(), 0);
    bool needed = false;
    for (std::size_t i = 0; i < rec.inputs.size(); ++i) {
      const auto node = rec.inputs[i].node;
      need[i] = node >= 0 && relevant[node];
      needed = needed || need[i];
    }
    if (!needed) continue;

    std::vector<Tensor> in;
    in.reserve(rec.inputs.size());
    for (const auto& slot : rec.inputs) in.push_back(as_tensor(slot.value, slot.node));
    Tensor out = as_tensor(tape->values[rec.output], rec.output);
    if (!create_graph) g = g.detach();

    auto gin = backward(rec, in, out, g, need);
    for (std::size_t i = 0; i < gin.size(); ++i) {
      if (!gin[i]) continue;
      auto node = rec.inputs[i].node;
      if (grads[node]) {
        grads[node] = add(*grads[node], *gin[i]);
      } else {
        grads[node] = std::move(*gin[i]);
      }
    }
  }

  for (std::size_t i = 0; i < wrt.size(); ++i) {
    if (Access::tape_of(wrt[i]) != tape) continue;
    const auto& g = grads[wrt[i].node()];
    if (g) result[i] = create_graph ? *g : g->detach();
  }
  return result;
}

Tensor grad(const Tensor& output, const Tensor& wrt, bool create_graph) {
  const Tensor w[] = {wrt};
  return grad(output, w, create_graph)[0];
}

}  // namespace metarec::ad
