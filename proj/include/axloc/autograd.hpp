#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "axloc/tensor.hpp"

namespace axloc {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Variable {
 public:
  Variable() = default;
  Variable(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] std::size_t id() const noexcept { return id_; }
  [[nodiscard]] Tape* tape() const noexcept { return tape_; }
  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Shape& shape() const;
  [[nodiscard]] std::size_t dim(std::size_t axis) const { return value().dim(axis); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of operations for reverse-mode differentiation.
///
/// Nodes are stored in creation order, which is a topological order since every
/// operation can only reference nodes that already exist. One tape per graph;
/// not thread-safe.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Variable leaf(Tensor value, bool requires_grad = true);
  Variable constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records the result of an operation. `backward` reads grad(self) and
  /// accumulates into the inputs' gradients.
  Variable record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of the last backward() target with respect to the node; zeros if unreachable.
  [[nodiscard]] Tensor grad(Variable v) const;

  /// Mutable gradient buffer, allocated on first use. Used by backward rules.
  Tensor& grad_buffer(std::size_t id);

  void backward(Variable loss);

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
};

namespace ops {

Variable add(Variable a, Variable b);
Variable sub(Variable a, Variable b);
Variable scale(Variable a, double factor);
Variable relu(Variable x);
Variable abs(Variable x);

/// Elementwise product; every extent of `b` equals the matching extent of `a` or 1.
Variable broadcast_mul(Variable a, Variable b);

/// Cross-correlation. input [B,Cin,H,W], kernel [Cout,Cin,kH,kW], bias [Cout].
Variable conv2d(Variable input, Variable kernel, Variable bias, std::size_t stride, std::size_t padding);

/// input [B,N], weight [M,N], bias [M] -> [B,M].
Variable linear(Variable input, Variable weight, Variable bias);

Variable concat_channels(Variable a, Variable b);
Variable slice_channels(Variable x, std::size_t begin, std::size_t count);

/// Per-channel spatial maximum, [B,C,H,W] -> [B,C,1,1]. Ties route the gradient
/// to the first maximum in row-major order.
Variable global_max_pool_spatial(Variable x);

/// Per-position mean over channels, [B,C,H,W] -> [B,1,H,W].
Variable global_avg_pool_channels(Variable x);

Variable upsample_nearest(Variable x, std::size_t factor);
Variable reshape(Variable x, Shape shape);

Variable sum(Variable x);
Variable mean(Variable x);

/// Euclidean norm of each row, [B,N] -> [B]. Subgradient 0 at the origin.
Variable row_norm(Variable x);

}  // namespace ops
}  // namespace axloc
