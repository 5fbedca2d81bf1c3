#include "devialab/diff/tape.hpp"

#include "devialab/error.hpp"

namespace devialab::diff {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kLog: return "log";
    case OpKind::kExp: return "exp";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kConcatChannels: return "concat_channels";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kUpsampleBilinear: return "upsample_bilinear";
    case OpKind::kTopkMean: return "topk_mean";
    case OpKind::kAbs: return "abs";
    case OpKind::kAffine: return "affine";
    case OpKind::kClamp: return "clamp";
    case OpKind::kSpatialMean: return "spatial_mean";
    case OpKind::kCustom: return "custom";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Gradients::Gradients(const Tape* tape, std::vector<Tensor> grads, std::vector<bool> present)
    : tape_(tape), grads_(std::move(grads)), present_(std::move(present)) {}

Tensor Gradients::of(const Var& v) const {
  if (&v.tape() != tape_) throw ShapeError("gradient requested for a variable of another tape");
  if (present_.at(v.id())) return grads_[v.id()];
  return Tensor(tape_->value(v.id()).shape(), 0.0);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{OpKind::kLeaf, std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::kLeaf, std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  bool needs = false;
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) {
      throw ShapeError(std::string(op_name(kind)) + ": operand recorded on another tape");
    }
    ids.push_back(in.id());
    needs = needs || nodes_[in.id()].requires_grad;
  }
  needs = needs && recording_;
  if (!needs) {
    backward = nullptr;
    ids.clear();
  }
  nodes_.push_back(Node{kind, std::move(value), std::move(ids), std::move(backward), needs});
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& root, std::span<const Var> retain) const {
  if (&root.tape() != this) throw ShapeError("backward: root belongs to another tape");
  const Tensor& rv = nodes_.at(root.id()).value;
  if (rv.size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + shape_str(rv.shape()));
  }
  std::vector<bool> keep(nodes_.size(), false);
  for (const Var& v : retain) keep.at(v.id()) = true;

  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> present(nodes_.size(), false);
  grads[root.id()] = Tensor(rv.shape(), 1.0);
  present[root.id()] = true;

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    if (!present[id]) continue;
    const Node& node = nodes_[id];
    if (!node.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : node.inputs) {
      in_values.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (!present[in]) {
          grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
          present[in] = true;
        }
        in_grads.push_back(&grads[in]);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    node.backward(BackwardArgs{in_values, node.value, grads[id], in_grads});
    if (!keep[id] && id != root.id()) {
      grads[id] = Tensor();
      present[id] = false;
    }
  }
  return Gradients(this, std::move(grads), std::move(present));
}

}  // namespace devialab::diff
