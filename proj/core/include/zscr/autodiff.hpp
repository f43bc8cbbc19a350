#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "zscr/tensor.hpp"

namespace zscr::ad {

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Neg,
  Exp,
  Log,
  Abs,
  Scale,
  AddScalar,
  Relu,
  LeakyRelu,
  Softplus,
  Sum,
  Mean,
  SumRows,
  AddRowVector,
  ConcatCols,
  SliceCols,
  CosineRows,
};

/// Extra operands of a recorded op (scale factor, slice window).
struct OpAux {
  float scalar = 0.0f;
  std::size_t offset = 0;
  std::size_t count = 0;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
  /// Convenience for one-element nodes.
  float item() const { return value().item(); }
};

/// Append-only computation record for reverse-mode differentiation.
///
/// Every node is pushed after its inputs, so a single reverse sweep over the
/// node list visits consumers before producers. Leaves either own their value
/// or borrow it from storage that outlives the tape (model parameters), which
/// keeps large weight matrices from being copied on every step.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf without gradient tracking (data, sampled noise).
  Var constant(Tensor value);
  /// Borrowed leaf without gradient tracking; `value` must outlive the tape.
  Var constant_ref(const Tensor& value);
  Var constant_ref(Tensor&&) = delete;
  /// Borrowed leaf that receives a gradient; `value` must outlive the tape.
  Var parameter(const Tensor& value);
  Var parameter(Tensor&&) = delete;
  /// Owned leaf that receives a gradient.
  Var variable(Tensor value);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  Op op(Var v) const { return nodes_[v.id].op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse accumulation from a one-element loss node. Gradients of leaves
  /// the loss does not depend on are zero.
  void backward(Var loss);

  /// Gradient slot of a node after backward(); zeros if nothing flowed into it.
  const Tensor& grad(Var v);

  using Aux = OpAux;

  /// Records a computed node. Used by the op implementations.
  Var record(Op op, std::initializer_list<Var> inputs, Tensor value, Aux aux = {});

 private:
  struct Node {
    Op op = Op::Leaf;
    std::uint32_t inputs[2] = {0, 0};
    std::uint8_t input_count = 0;
    bool requires_grad = false;
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    Aux aux;

    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };

  Var push_leaf(Tensor owned, const Tensor* borrowed, bool requires_grad);
  Tensor& grad_slot(std::uint32_t id);
  void backprop_node(std::uint32_t id);

  std::vector<Node> nodes_;
};

// --- Linear algebra -------------------------------------------------------

/// [m x k] * [k x n] -> [m x n].
Var matmul(Var a, Var b);

// --- Elementwise ----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var exp(Var a);
/// DomainError for non-positive entries.
Var log(Var a);
Var abs(Var a);
Var scale(Var a, float factor);
Var add_scalar(Var a, float offset);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(float k, Var a) { return scale(a, k); }

// --- Activations ----------------------------------------------------------

Var relu(Var x);
/// x for x >= 0, slope * x otherwise; slope must lie in (0, 1).
Var leaky_relu(Var x, float slope);
/// log(1 + e^x), evaluated as max(x, 0) + log1p(e^-|x|).
Var softplus(Var x);

// --- Reductions (64-bit accumulation) -------------------------------------

/// Sum of all entries to a scalar. EmptyTensor on an empty input.
Var sum(Var x);
Var mean(Var x);
/// [m x n] -> [m].
Var sum_rows(Var x);

// --- Structural -----------------------------------------------------------

/// [m x n] + [n] added to every row. The only broadcasting form offered.
Var add_row_vector(Var x, Var bias);
/// [m x p], [m x q] -> [m x (p+q)].
Var concat_cols(Var a, Var b);
/// Columns [offset, offset + count) of an [m x n] matrix.
Var slice_cols(Var x, std::size_t offset, std::size_t count);

// --- Similarities and distances -------------------------------------------

/// Row-wise cosine similarity of two [m x n] matrices -> [m].
/// ZeroVector if any row has norm below 1e-12.
Var cosine_rows(Var a, Var b);
/// Row-wise Manhattan distance of two [m x n] matrices -> [m].
Var l1_rows(Var a, Var b);

/// Cosine similarity of two vectors. ZeroVector if either norm < 1e-12.
double cosine_sim(std::span<const float> a, std::span<const float> b);
/// Sum of absolute differences. ShapeMismatch on unequal lengths.
double l1_dist(std::span<const float> a, std::span<const float> b);

inline constexpr double kMinNorm = 1e-12;

// --- Gradient checking ----------------------------------------------------

/// Builds a scalar loss on `tape` from the given parameter leaves.
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients against central differences
/// (f(p + eps) - f(p - eps)) / (2 eps) on every coordinate of `params`.
/// Relative error per coordinate is |a - n| / max(1e-6, |a| + |n|).
/// `build` must be deterministic; any randomness it uses has to be reseeded
/// on every call.
GradCheckResult grad_check(const LossBuilder& build, std::vector<Tensor> params, float eps = 1e-3f);

}  // namespace zscr::ad
