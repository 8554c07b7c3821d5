#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "tweetlm/tensor.hpp"

namespace tweetlm::ad {

// Define-by-run reverse-mode tape over whole tensors. Each op computes its
// value eagerly through the kernels layer and records a closure that routes
// the output gradient to its inputs. Nodes are addressed by index so the
// tape can reallocate freely; closures never hold raw pointers into it.

template <typename T>
class Graph;

template <typename T>
struct Var {
  Graph<T>* g = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return g->val(id); }
  const Tensor<T>& grad() const { return g->grad_of(id); }
  bool valid() const { return g != nullptr && id >= 0; }
};

template <typename T>
class Graph {
 public:
  struct Node {
    Tensor<T> value;                    // owned value (computed nodes)
    const Tensor<T>* external = nullptr;  // leaves may alias caller storage
    Tensor<T> grad;                     // allocated on first touch
    bool requires_grad = false;
    std::function<void(Graph&, int)> backward;  // (graph, own node id)
  };

  // Leaf aliasing caller-owned storage; participates in backward.
  Var<T> param(const Tensor<T>& t) {
    Node n;
    n.external = &t;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  // Owned constant input; no gradient flows into it.
  Var<T> input(Tensor<T> t) {
    Node n;
    n.value = std::move(t);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<T> make_node(Tensor<T> value, bool requires_grad,
                   std::function<void(Graph&, int)> backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& val(int id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.external ? *n.external : n.value;
  }

  // Gradient accumulator for a node, zero-initialized on first use.
  Tensor<T>& grad_of(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty() && val(id).numel() > 0) n.grad = Tensor<T>(val(id).shape());
    return n.grad;
  }

  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  bool grad_touched(int id) const { return !nodes_[static_cast<size_t>(id)].grad.empty(); }

  // Reverse sweep from a scalar node. Creation order is a topological order,
  // so visiting nodes in reverse propagates every gradient exactly once.
  void backward(Var<T> loss) {
    if (val(loss.id).numel() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar");
    }
    grad_of(loss.id).fill(T(1));
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.backward && !n.grad.empty()) n.backward(*this, id);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

enum class Reduction { kMean, kSum };

template <typename T>
struct LossInfo {
  Var<T> loss;
  int64_t supervised = 0;  // number of positions contributing to the loss
  T weight_denom = T(0);   // sum of per-position weights (equals count when unweighted)
};

// ---- ops ----
// Shapes are validated on entry; all matrices are rank-2 unless noted.

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool ta = false, bool tb = false);

// 3D batched matmul over leading group dimension; only the (f,f) and (f,t)
// layouts used by attention are supported.
template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool ta, bool tb);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> add_rowbias(Var<T> x, Var<T> bias);

template <typename T>
Var<T> scale(Var<T> x, T c);

template <typename T>
Var<T> gelu(Var<T> x);

template <typename T>
Var<T> tanh_act(Var<T> x);

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps);

// Inverted dropout; scales kept activations by 1/(1-p). Callers skip this op
// entirely in eval mode.
template <typename T>
Var<T> dropout(Var<T> x, T p, std::mt19937_64& rng);

// scores (b*h, tq, tk) + key mask (b, tk) -> row-stochastic probs; masked
// keys get probability exactly 0 and a fully masked row is all zeros.
template <typename T>
Var<T> attn_softmax(Var<T> scores, Tensor<uint8_t> key_mask, int64_t b, int64_t h);

// (b*t, hid) <-> (b*heads, t, hid/heads) permutations.
template <typename T>
Var<T> split_heads(Var<T> x, int64_t b, int64_t t, int64_t heads);

template <typename T>
Var<T> merge_heads(Var<T> x, int64_t b, int64_t t, int64_t heads);

// out[r] = tok[ids[r]] + pos[r % t] + seg[seg_ids[r]]
template <typename T>
Var<T> embed_sum(Var<T> tok, Var<T> pos, Var<T> seg, Tensor<int32_t> ids,
                 Tensor<int32_t> seg_ids, int64_t t);

template <typename T>
Var<T> gather_rows(Var<T> x, Tensor<int32_t> ids);

// Mean over unmasked rows per batch element: x (b*t, cols), mask (b*t).
template <typename T>
Var<T> mean_pool_rows(Var<T> x, Tensor<uint8_t> mask, int64_t b, int64_t t);

// Cross entropy over rows of logits (n, v); labels equal to ignore_label are
// skipped. class_weights is either empty (uniform) or length v. Throws if no
// position is supervised.
template <typename T>
LossInfo<T> cross_entropy(Var<T> logits, Tensor<int32_t> labels, int32_t ignore_label,
                          Tensor<T> class_weights, Reduction reduction);

}  // namespace tweetlm::ad
