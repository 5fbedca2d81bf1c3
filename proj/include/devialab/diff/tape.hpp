#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "devialab/diff/tensor.hpp"

namespace devialab::diff {

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kMatmul,
  kRelu,
  kSigmoid,
  kLog,
  kExp,
  kSum,
  kMean,
  kConcatChannels,
  kReshape,
  kConv2d,
  kUpsampleBilinear,
  kTopkMean,
  kAbs,
  kAffine,
  kClamp,
  kSpatialMean,
  kCustom,
};

std::string_view op_name(OpKind kind);

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// tape that created it is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Arguments handed to a node's local gradient rule. `grad_inputs[i]` is
// nullptr when input i does not need a gradient; rules accumulate (+=).
struct BackwardArgs {
  std::span<const Tensor* const> inputs;
  const Tensor& output;
  const Tensor& grad_output;
  std::span<Tensor* const> grad_inputs;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

// Result of a reverse sweep. Leaves and explicitly retained nodes keep
// their gradient; anything the root does not depend on reports zeros.
class Gradients {
 public:
  Gradients(const Tape* tape, std::vector<Tensor> grads, std::vector<bool> present);
  Tensor of(const Var& v) const;
  bool has(const Var& v) const { return present_.at(v.id()); }

 private:
  const Tape* tape_;
  std::vector<Tensor> grads_;
  std::vector<bool> present_;
};

// Linear record of operations. Node ids are assigned in recording order,
// which is a topological order, so the reverse sweep walks ids backwards.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that receives a gradient (parameters, inputs under attribution).
  Var variable(Tensor value);
  // Leaf that never receives a gradient.
  Var constant(Tensor value);

  // Records an op output. `backward` is dropped when recording is off or
  // none of the inputs needs a gradient.
  Var record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool recording() const noexcept { return recording_; }

  // Reverse-mode sweep from a single-element root. Gradients of
  // intermediate nodes are released as the sweep passes them unless the
  // node is listed in `retain`.
  Gradients backward(const Var& root, std::span<const Var> retain = {}) const;

 private:
  struct Node {
    OpKind kind;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad;
  };
  std::vector<Node> nodes_;
  bool recording_;
};

}  // namespace devialab::diff
