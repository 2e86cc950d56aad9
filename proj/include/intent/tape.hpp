#pragma once

#include <functional>
#include <vector>

#include "intent/tensor.hpp"

namespace intent {

// Reverse-mode record of executed operations. Every node owns its forward value; nodes
// created from inputs that require gradients also own a backward closure that reads the
// node's gradient and accumulates into its inputs. Not thread-safe; one tape per forward.
class GradTape {
 public:
  using NodeId = int;
  using BackwardFn = std::function<void(GradTape&, NodeId self)>;

  NodeId leaf(Tensor value, bool requires_grad);
  // Records an op result. The closure is kept only if some input requires a gradient.
  NodeId record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  // Empty tensor when no gradient reached the node.
  const Tensor& grad(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).grad; }
  bool requires_grad(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

  // Adds `g` into the node's gradient; ignored for nodes that do not require one.
  void accumulate(NodeId id, const Tensor& g);

  // Seeds d(last)/d(last) = 1 and replays the tape in reverse execution order.
  // Throws ContractError unless the final node is a scalar.
  void backward();

  std::size_t size() const { return nodes_.size(); }
  NodeId last() const { return static_cast<NodeId>(nodes_.size()) - 1; }
  // Node ids whose closures ran during the most recent backward(), in visit order.
  const std::vector<NodeId>& backward_trace() const { return trace_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<NodeId> trace_;
};

}  // namespace intent
