#include "intent/tape.hpp"

#include <algorithm>

#include "intent/errors.hpp"

namespace intent {

GradTape::NodeId GradTape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, nullptr});
  return last();
}

GradTape::NodeId GradTape::record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [&](NodeId i) {
    if (i < 0 || i > last()) throw ContractError("GradTape::record: input id out of range");
    return requires_grad(i);
  });
  nodes_.push_back(Node{std::move(value), Tensor(), needs, needs ? std::move(backward) : nullptr});
  return last();
}

void GradTape::accumulate(NodeId id, const Tensor& g) {
  Node& node = nodes_.at(static_cast<std::size_t>(id));
  if (!node.requires_grad) return;
  if (node.grad.empty()) {
    require_same_shape(node.value, g, "GradTape::accumulate");
    node.grad = g;
    return;
  }
  require_same_shape(node.grad, g, "GradTape::accumulate");
  float* dst = node.grad.data();
  const float* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void GradTape::backward() {
  if (nodes_.empty()) throw ContractError("GradTape::backward: empty tape");
  Node& root = nodes_.back();
  if (root.value.size() != 1) {
    throw ContractError("GradTape::backward: tape must end in a scalar, last node has shape " +
                        shape_str(root.value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  trace_.clear();
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.shape(), 1.0f);
  for (NodeId id = last(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.backward || n.grad.empty()) continue;
    trace_.push_back(id);
    n.backward(*this, id);
  }
}

}  // namespace intent
