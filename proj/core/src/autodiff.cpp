#include "zscr/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "zscr/error.hpp"

namespace zscr::ad {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Abs: return "abs";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Relu: return "relu";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::Softplus: return "softplus";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SumRows: return "sum_rows";
    case Op::AddRowVector: return "add_row_vector";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::CosineRows: return "cosine_rows";
  }
  return "?";
}

void require_same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw Error(ErrorKind::ShapeMismatch, "operands live on different tapes");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": " + shape_string(a.shape()) + " vs " +
                                              shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + " expects a matrix, got " + shape_string(t.shape()));
  }
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  const float* src = a.raw();
  float* dst = out.raw();
  for (std::size_t i = 0; i < a.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  const float* x = a.raw();
  const float* y = b.raw();
  float* dst = out.raw();
  for (std::size_t i = 0; i < a.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

float stable_softplus(float x) { return std::max(x, 0.0f) + std::log1p(std::exp(-std::fabs(x))); }

float sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

Tensor checked(Tensor value, Op op) {
  if (!value.all_finite()) {
    throw Error(ErrorKind::NonFinite, std::string("non-finite output from ") + op_name(op));
  }
  return value;
}

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }

// --- Tape -----------------------------------------------------------------

Var Tape::push_leaf(Tensor owned, const Tensor* borrowed, bool requires_grad) {
  Node node;
  node.op = Op::Leaf;
  node.owned = std::move(owned);
  node.borrowed = borrowed;
  node.requires_grad = requires_grad;
  if (!node.value().all_finite()) throw Error(ErrorKind::NonFinite, "non-finite leaf value");
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) { return push_leaf(std::move(value), nullptr, false); }
Var Tape::constant_ref(const Tensor& value) { return push_leaf(Tensor{}, &value, false); }
Var Tape::parameter(const Tensor& value) { return push_leaf(Tensor{}, &value, true); }
Var Tape::variable(Tensor value) { return push_leaf(std::move(value), nullptr, true); }

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id).value(); }

Var Tape::record(Op op, std::initializer_list<Var> inputs, Tensor value, Aux aux) {
  Node node;
  node.op = op;
  node.aux = aux;
  for (Var in : inputs) {
    node.inputs[node.input_count++] = in.id;
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  node.owned = checked(std::move(value), op);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_slot(std::uint32_t id) {
  Node& node = nodes_[id];
  if (node.grad.shape() != node.value().shape() || node.grad.size() != node.value().size()) {
    node.grad = Tensor::zeros(node.value().shape());
  }
  return node.grad;
}

const Tensor& Tape::grad(Var v) { return grad_slot(v.id); }

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error(ErrorKind::NonScalarLoss, "loss belongs to another tape");
  if (value(loss).size() != 1) {
    throw Error(ErrorKind::NonScalarLoss, "backward from tensor of shape " + shape_string(value(loss).shape()));
  }
  for (auto& node : nodes_) node.grad = Tensor{};
  grad_slot(loss.id)[0] = 1.0f;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (node.op == Op::Leaf || !node.requires_grad || node.grad.empty()) continue;
    backprop_node(id);
  }
}

void Tape::backprop_node(std::uint32_t id) {
  const Node& node = nodes_[id];
  const Tensor& out = node.value();
  const Tensor& g = node.grad;
  const std::uint32_t ia = node.inputs[0];
  const std::uint32_t ib = node.inputs[1];
  const bool need_a = node.input_count > 0 && nodes_[ia].requires_grad;
  const bool need_b = node.input_count > 1 && nodes_[ib].requires_grad;
  const float* gp = g.raw();

  switch (node.op) {
    case Op::Leaf:
      break;
    case Op::MatMul: {
      const Tensor& a = nodes_[ia].value();
      const Tensor& b = nodes_[ib].value();
      ConstMap gm(g.raw(), g.rows(), g.cols());
      if (need_a) {
        Tensor& ga = grad_slot(ia);
        MutMap(ga.raw(), a.rows(), a.cols()).noalias() += gm * ConstMap(b.raw(), b.rows(), b.cols()).transpose();
      }
      if (need_b) {
        Tensor& gb = grad_slot(ib);
        MutMap(gb.raw(), b.rows(), b.cols()).noalias() += ConstMap(a.raw(), a.rows(), a.cols()).transpose() * gm;
      }
      break;
    }
    case Op::Add:
    case Op::Sub: {
      const float sign_b = node.op == Op::Add ? 1.0f : -1.0f;
      if (need_a) {
        float* ga = grad_slot(ia).raw();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += gp[i];
      }
      if (need_b) {
        float* gb = grad_slot(ib).raw();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign_b * gp[i];
      }
      break;
    }
    case Op::Mul: {
      const float* a = nodes_[ia].value().raw();
      const float* b = nodes_[ib].value().raw();
      if (need_a) {
        float* ga = grad_slot(ia).raw();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += gp[i] * b[i];
      }
      if (need_b) {
        float* gb = grad_slot(ib).raw();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += gp[i] * a[i];
      }
      break;
    }
    case Op::Neg:
    case Op::Scale: {
      const float k = node.op == Op::Neg ? -1.0f : node.aux.scalar;
      float* ga = grad_slot(ia).raw();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += k * gp[i];
      break;
    }
    case Op::AddScalar: {
      float* ga = grad_slot(ia).raw();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += gp[i];
      break;
    }
    case Op::Exp: {
      const float* y = out.raw();
      float* ga = grad_slot(ia).raw();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += gp[i] * y[i];
      break;
    }
    case Op::Log: {
      const float* x = nodes_[ia].value().raw();
      float* ga = grad_slot(ia).raw();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += gp[i] / x[i];
      break;
    }
    case Op::Abs: {
      const float* x = nodes_[ia].value().raw();
      float* ga = grad_slot(ia).raw();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += x[i] > 0.0f ? gp[i] : (x[i] < 0.0f ? -gp[i] : 0.0f);
      }
      break;
    }
    case Op::Relu: {
      const float* x = nodes_[ia].value().raw();
      float* ga = grad_slot(ia).raw();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0f ? gp[i] : 0.0f;
      break;
    }
    case Op::LeakyRelu: {
      const float slope = node.aux.scalar;
      const float* x = nodes_[ia].value().raw();
      float* ga = grad_slot(ia).raw();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] >= 0.0f ? gp[i] : slope * gp[i];
      break;
    }
    case Op::Softplus: {
      const float* x = nodes_[ia].value().raw();
      float* ga = grad_slot(ia).raw();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += gp[i] * sigmoid(x[i]);
      break;
    }
    case Op::Sum:
    case Op::Mean: {
      Tensor& ga = grad_slot(ia);
      const float k = node.op == Op::Sum ? gp[0] : gp[0] / static_cast<float>(ga.size());
      for (float& v : ga.data()) v += k;
      break;
    }
    case Op::SumRows: {
      Tensor& ga = grad_slot(ia);
      const std::size_t rows = ga.rows();
      const std::size_t cols = ga.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        float* dst = ga.raw() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += gp[r];
      }
      break;
    }
    case Op::AddRowVector: {
      const std::size_t rows = g.rows();
      const std::size_t cols = g.cols();
      if (need_a) {
        float* ga = grad_slot(ia).raw();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += gp[i];
      }
      if (need_b) {
        float* gb = grad_slot(ib).raw();
        for (std::size_t c = 0; c < cols; ++c) {
          double acc = 0.0;
          for (std::size_t r = 0; r < rows; ++r) acc += gp[r * cols + c];
          gb[c] += static_cast<float>(acc);
        }
      }
      break;
    }
    case Op::ConcatCols: {
      const std::size_t rows = g.rows();
      const std::size_t cols = g.cols();
      const std::size_t left = nodes_[ia].value().cols();
      const std::size_t right = cols - left;
      if (need_a) {
        float* ga = grad_slot(ia).raw();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < left; ++c) ga[r * left + c] += gp[r * cols + c];
        }
      }
      if (need_b) {
        float* gb = grad_slot(ib).raw();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < right; ++c) gb[r * right + c] += gp[r * cols + left + c];
        }
      }
      break;
    }
    case Op::SliceCols: {
      Tensor& ga = grad_slot(ia);
      const std::size_t rows = ga.rows();
      const std::size_t src_cols = ga.cols();
      const std::size_t offset = node.aux.offset;
      const std::size_t count = node.aux.count;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < count; ++c) ga.raw()[r * src_cols + offset + c] += gp[r * count + c];
      }
      break;
    }
    case Op::CosineRows: {
      const Tensor& a = nodes_[ia].value();
      const Tensor& b = nodes_[ib].value();
      const std::size_t rows = a.rows();
      const std::size_t cols = a.cols();
      float* ga = need_a ? grad_slot(ia).raw() : nullptr;
      float* gb = need_b ? grad_slot(ib).raw() : nullptr;
      for (std::size_t r = 0; r < rows; ++r) {
        const float* x = a.raw() + r * cols;
        const float* y = b.raw() + r * cols;
        double xx = 0.0, yy = 0.0, xy = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          xx += double(x[c]) * x[c];
          yy += double(y[c]) * y[c];
          xy += double(x[c]) * y[c];
        }
        const double nx = std::sqrt(xx);
        const double ny = std::sqrt(yy);
        const double cos = xy / (nx * ny);
        const double up = gp[r];
        for (std::size_t c = 0; c < cols; ++c) {
          if (ga) ga[r * cols + c] += static_cast<float>(up * (y[c] / (nx * ny) - cos * x[c] / xx));
          if (gb) gb[r * cols + c] += static_cast<float>(up * (x[c] / (nx * ny) - cos * y[c] / yy));
        }
      }
      break;
    }
  }
}

// --- Ops ------------------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "matmul");
  require_matrix(y, "matmul");
  if (x.cols() != y.rows()) {
    throw Error(ErrorKind::ShapeMismatch,
                "matmul inner dimensions " + shape_string(x.shape()) + " x " + shape_string(y.shape()));
  }
  Tensor out({x.rows(), y.cols()});
  MutMap(out.raw(), x.rows(), y.cols()).noalias() =
      ConstMap(x.raw(), x.rows(), x.cols()) * ConstMap(y.raw(), y.rows(), y.cols());
  return a.tape->record(Op::MatMul, {a, b}, std::move(out));
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  return a.tape->record(Op::Add, {a, b}, map_binary(a.value(), b.value(), [](float x, float y) { return x + y; }));
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  return a.tape->record(Op::Sub, {a, b}, map_binary(a.value(), b.value(), [](float x, float y) { return x - y; }));
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  return a.tape->record(Op::Mul, {a, b}, map_binary(a.value(), b.value(), [](float x, float y) { return x * y; }));
}

Var neg(Var a) { return a.tape->record(Op::Neg, {a}, map_unary(a.value(), [](float x) { return -x; })); }

Var exp(Var a) {
  return a.tape->record(Op::Exp, {a}, map_unary(a.value(), [](float x) { return std::exp(x); }));
}

Var log(Var a) {
  for (float v : a.value().data()) {
    if (!(v > 0.0f)) throw Error(ErrorKind::DomainError, "log of non-positive entry " + std::to_string(v));
  }
  return a.tape->record(Op::Log, {a}, map_unary(a.value(), [](float x) { return std::log(x); }));
}

Var abs(Var a) {
  return a.tape->record(Op::Abs, {a}, map_unary(a.value(), [](float x) { return std::fabs(x); }));
}

Var scale(Var a, float factor) {
  return a.tape->record(Op::Scale, {a}, map_unary(a.value(), [factor](float x) { return factor * x; }),
                        Tape::Aux{factor});
}

Var add_scalar(Var a, float offset) {
  return a.tape->record(Op::AddScalar, {a}, map_unary(a.value(), [offset](float x) { return x + offset; }),
                        Tape::Aux{offset});
}

Var relu(Var x) {
  return x.tape->record(Op::Relu, {x}, map_unary(x.value(), [](float v) { return v > 0.0f ? v : 0.0f; }));
}

Var leaky_relu(Var x, float slope) {
  if (!(slope > 0.0f && slope < 1.0f)) {
    throw Error(ErrorKind::DomainError, "leaky_relu slope must lie in (0, 1), got " + std::to_string(slope));
  }
  return x.tape->record(Op::LeakyRelu, {x},
                        map_unary(x.value(), [slope](float v) { return v >= 0.0f ? v : slope * v; }),
                        Tape::Aux{slope});
}

Var softplus(Var x) { return x.tape->record(Op::Softplus, {x}, map_unary(x.value(), stable_softplus)); }

Var sum(Var x) {
  const Tensor& v = x.value();
  if (v.empty()) throw Error(ErrorKind::EmptyTensor, "sum of empty tensor");
  double acc = 0.0;
  for (float f : v.data()) acc += f;
  return x.tape->record(Op::Sum, {x}, Tensor::scalar(static_cast<float>(acc)));
}

Var mean(Var x) {
  const Tensor& v = x.value();
  if (v.empty()) throw Error(ErrorKind::EmptyTensor, "mean of empty tensor");
  double acc = 0.0;
  for (float f : v.data()) acc += f;
  return x.tape->record(Op::Mean, {x}, Tensor::scalar(static_cast<float>(acc / static_cast<double>(v.size()))));
}

Var sum_rows(Var x) {
  const Tensor& v = x.value();
  require_matrix(v, "sum_rows");
  if (v.empty()) throw Error(ErrorKind::EmptyTensor, "sum_rows of empty tensor");
  Tensor out({v.rows()});
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double acc = 0.0;
    for (float f : v.row(r)) acc += f;
    out[r] = static_cast<float>(acc);
  }
  return x.tape->record(Op::SumRows, {x}, std::move(out));
}

Var add_row_vector(Var x, Var bias) {
  require_same_tape(x, bias);
  const Tensor& m = x.value();
  const Tensor& b = bias.value();
  require_matrix(m, "add_row_vector");
  if (b.rank() != 1 || b.size() != m.cols()) {
    throw Error(ErrorKind::ShapeMismatch,
                "add_row_vector bias " + shape_string(b.shape()) + " for matrix " + shape_string(m.shape()));
  }
  Tensor out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    float* dst = out.raw() + r * m.cols();
    for (std::size_t c = 0; c < m.cols(); ++c) dst[c] += b[c];
  }
  return x.tape->record(Op::AddRowVector, {x, bias}, std::move(out));
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "concat_cols");
  require_matrix(y, "concat_cols");
  if (x.rows() != y.rows()) {
    throw Error(ErrorKind::ShapeMismatch,
                "concat_cols row counts " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  }
  const std::size_t cols = x.cols() + y.cols();
  Tensor out({x.rows(), cols});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy(x.row(r).begin(), x.row(r).end(), out.raw() + r * cols);
    std::copy(y.row(r).begin(), y.row(r).end(), out.raw() + r * cols + x.cols());
  }
  return a.tape->record(Op::ConcatCols, {a, b}, std::move(out));
}

Var slice_cols(Var x, std::size_t offset, std::size_t count) {
  const Tensor& v = x.value();
  require_matrix(v, "slice_cols");
  if (offset + count > v.cols() || count == 0) {
    throw Error(ErrorKind::ShapeMismatch, "slice_cols [" + std::to_string(offset) + ", " +
                                              std::to_string(offset + count) + ") of " + shape_string(v.shape()));
  }
  Tensor out({v.rows(), count});
  for (std::size_t r = 0; r < v.rows(); ++r) {
    const float* src = v.raw() + r * v.cols() + offset;
    std::copy(src, src + count, out.raw() + r * count);
  }
  return x.tape->record(Op::SliceCols, {x}, std::move(out), Tape::Aux{0.0f, offset, count});
}

Var cosine_rows(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "cosine_rows");
  require_same_shape(x, y, "cosine_rows");
  Tensor out({x.rows()});
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = static_cast<float>(cosine_sim(x.row(r), y.row(r)));
  return a.tape->record(Op::CosineRows, {a, b}, std::move(out));
}

Var l1_rows(Var a, Var b) { return sum_rows(abs(sub(a, b))); }

double cosine_sim(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::ShapeMismatch,
                "cosine_sim lengths " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa += double(a[i]) * a[i];
    bb += double(b[i]) * b[i];
    ab += double(a[i]) * b[i];
  }
  const double na = std::sqrt(aa);
  const double nb = std::sqrt(bb);
  if (na < kMinNorm) throw Error(ErrorKind::ZeroVector, "cosine_sim: first operand has zero norm");
  if (nb < kMinNorm) throw Error(ErrorKind::ZeroVector, "cosine_sim: second operand has zero norm");
  return ab / (na * nb);
}

double l1_dist(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::ShapeMismatch,
                "l1_dist lengths " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(double(a[i]) - double(b[i]));
  return acc;
}

// --- Gradient checking ----------------------------------------------------

GradCheckResult grad_check(const LossBuilder& build, std::vector<Tensor> params, float eps) {
  GradCheckResult result;

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.parameter(p));
    const Var loss = build(tape, leaves);
    tape.backward(loss);
    for (Var leaf : leaves) analytic.push_back(tape.grad(leaf));
  }

  auto evaluate = [&]() -> double {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.constant_ref(p));
    return build(tape, leaves).item();
  };

  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const float original = params[p][i];
      // The representable step can differ from 2 eps after rounding.
      const float hi = original + eps;
      const float lo = original - eps;
      params[p][i] = hi;
      const double up = evaluate();
      params[p][i] = lo;
      const double down = evaluate();
      params[p][i] = original;

      const double numeric = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double a = analytic[p][i];
      const double rel = std::fabs(a - numeric) / std::max(1e-6, std::fabs(a) + std::fabs(numeric));
      ++result.coordinates;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace zscr::ad
