#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "sctkg/params.hpp"

namespace sctkg::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// Handle into a Tape. Values are computed eagerly at node creation, so a
// Var's value can be inspected (e.g. for greedy decoding) before any
// backward pass.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape over Eigen double matrices. The graph is rebuilt for
// every training step (define-by-run); ops append nodes whose ids are
// topologically ordered, so one reverse sweep backpropagates. Everything
// is single-threaded and allocation order is fixed, which makes repeated
// runs bitwise identical.
class Tape {
 public:
  // Constant leaf (no gradient tracked beyond the tape).
  Var input(Mat value);
  Var zeros(Eigen::Index rows, Eigen::Index cols = 1);

  // Trainable leaf. The current store value is copied onto the tape; the
  // backward pass adds the leaf's gradient into store.grad(param_id).
  // Repeated requests for the same parameter return the same node.
  Var param(ParamStore& store, int param_id);

  // --- elementwise / scalar ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);  // Hadamard
  Var scale(Var a, double k);
  Var add_scalar(Var a, double k);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var square(Var a);

  // --- linear algebra / shaping ---
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var concat_rows(std::span<const Var> parts);  // vertical stack, equal cols
  Var rows(Var a, Eigen::Index start, Eigen::Index n);
  Var col(Var table, int index);                       // single column
  Var gather_cols(Var table, std::span<const int> ids);  // selected columns
  Var im2col(Var a, int width);  // sliding windows of `width` columns, flattened
  Var add_col_broadcast(Var m, Var colvec);
  Var max_cols(Var m);  // row-wise max over columns -> column vector

  // --- reductions / losses ---
  Var sum(Var a);                            // 1x1
  Var add_many(std::span<const Var> terms);  // elementwise sum, equal shapes
  Var softmax(Var v);                        // column vector
  // Stable -log softmax(logits)[target], 1x1.
  Var cross_entropy_logits(Var logits, int target);
  // Sum over targets of -log softmax(logits)[t]; logits shared across the
  // bag, duplicated targets count multiply. 1x1.
  Var bag_nll(Var logits, std::span<const int> targets);
  // Sum over outputs of binary cross-entropy against targets in {0,1},
  // computed from logits in the stable max(x,0) - x*y + log1p(exp(-|x|))
  // form. 1x1.
  Var bce_logits(Var logits, const Mat& targets);

  const Mat& value(Var v) const;
  // Accumulates d(root)/d(node) for every node and flushes parameter-leaf
  // gradients into their stores. root must be 1x1.
  void backward(Var root);
  // Gradient of the last backward root w.r.t. v (zero matrix when the
  // node was not reached).
  Mat grad(Var v) const;

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool has_grad = false;
    int param_id = -1;
    ParamStore* store = nullptr;
    // Pulls this node's grad and pushes into parents; null for leaves.
    std::function<void(Tape&, int)> back;
  };

  int push(Mat value);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  // Gradient accumulator for `id`, allocated as zeros on first touch.
  Mat& acc(int id);

  std::vector<Node> nodes_;
  std::map<std::pair<ParamStore*, int>, int> param_cache_;
};

}  // namespace sctkg::ad
