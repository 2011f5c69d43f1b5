#pragma once

// Reverse-mode gradient tape over batched row-major matrices.
//
// Nodes are appended in evaluation order, so the node list is already a
// topological order and a reverse sweep visits every consumer before its
// producers. Parameters are not nodes: ops read them through ParamRef and
// accumulate directly into ParamRef::grad during backward().

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "skillrouter/numeric/param_store.hpp"
#include "skillrouter/numeric/tensor.hpp"

namespace skillrouter::numeric {

struct Var {
  std::size_t id = 0;
};

struct LstmRefs {
  ParamRef wx;
  ParamRef wh;
  ParamRef b;
};

// One (sample, head) evaluation of a per-domain classifier.
struct HeadPair {
  int sample = 0;
  int head = 0;
  double flag = 0.0;  // only read when the head has a trailing flag input
};

// Per-sample multitask targets. Indices refer to rows of the pair output.
struct MultitaskTarget {
  int positive_pair = 0;
  std::vector<int> negative_pairs;
  // Per-negative weights for the L^N sum. Empty means 1/|negatives| each;
  // sampled negatives pass importance weights instead.
  std::vector<double> negative_weights;
};

struct LossParts {
  double positive = 0.0;
  double negative = 0.0;
  double total = 0.0;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);

  // Rows of a parameter table, e.g. an embedding lookup.
  Var gather(ParamRef table, std::span<const int> rows);
  // Rows of an existing node.
  Var gather(Var x, std::span<const int> rows);

  Var concat_cols(std::span<const Var> parts);

  // Sums consecutive row groups: out[s] = sum of the lengths[s] rows of
  // segment s.
  Var segment_sum(Var x, std::span<const int> lengths);

  // x[n x d] * w[o x d]^T + b[o]
  Var affine(Var x, ParamRef w, const ParamRef* b);

  Var selu(Var x);
  Var add(Var a, Var b);
  Var scale(Var x, double factor);
  Var sum(Var x);
  // sum_ij w_ij x_ij for a constant weight tensor of the same size.
  Var weighted_sum(Var x, const Tensor& weights);

  // Unidirectional LSTM over packed sequences. `x` holds the rows of all
  // sequences back to back (sequence s occupies lengths[s] consecutive rows).
  // Output row r is the hidden state after consuming input row r. With
  // reverse=true each sequence is consumed from its last row to its first.
  // Initial states are zero.
  Var lstm_sequence(Var x, const LstmRefs& p, std::span<const int> lengths, bool reverse);

  // Dot-product attention of each h_bar row over the embeddings listed for
  // that row. Empty lists produce a zero context. Returns the [n x m] context.
  Var attend(Var h_bar, std::span<const ParamRef> embeddings,
             std::span<const std::vector<int>> lists);
  // Normalized weights from the most recent attend() node, one vector per row.
  const std::vector<std::vector<double>>& attention_weights(Var context) const;

  // Affine two-way outputs for (sample, head) pairs: w[head] is [2 x D] where
  // D is the feature width, or feature width + 1 when flags are appended.
  Var heads(Var features, std::span<const ParamRef> weights,
            std::span<const ParamRef> biases, std::span<const HeadPair> pairs,
            bool with_flag);

  // Mean over samples of -log p_IND(positive) - sum_j w_j log p_OOD(neg_j),
  // where p_IND = softmax over the pair's (IND, OOD) outputs.
  Var multitask_loss(Var z, std::span<const MultitaskTarget> targets);
  LossParts loss_parts(Var loss) const;

  // Mean k-way softmax cross-entropy.
  Var softmax_xent(Var logits, std::span<const int> targets);
  // Mean two-way cross-entropy with label 1 = IND (column 0), 0 = OOD.
  Var two_way_xent(Var z, std::span<const int> labels);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Accumulates d loss / d param into every reachable ParamRef::grad. The
  // loss must be a single scalar. A second call requires reset().
  void backward(Var loss);
  void reset();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    std::function<void(Tape&, Node&)> backprop;
  };

  Var push(Tensor value, std::vector<std::size_t> inputs, bool params_need_grad,
           std::function<void(Tape&, Node&)> backprop);
  Node& node(Var v);
  const Node& node(Var v) const;
  Tensor& grad_of(std::size_t id);
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }

  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, LossParts>> loss_parts_;
  std::vector<std::pair<std::size_t, std::vector<std::vector<double>>>> attention_;
  bool backward_done_ = false;
};

}  // namespace skillrouter::numeric
