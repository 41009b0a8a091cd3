#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "mmgcn/common.hpp"

namespace mmgcn {

class Tape;

// Lightweight handle to a tape node. Values are immutable once recorded.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape over dense matrices. Nodes are recorded in topological
// order by construction (an op can only consume already-created handles);
// backward walks the records once, in reverse. One tape serves one forward
// pass and a single backward() call.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf node. needs_grad marks trainable inputs; constants leave it false.
  Var leaf(Mat value, bool needs_grad = false);

  const Mat& val(Var v) const;
  bool needs_grad(Var v) const;

  // Gradient accumulated into v by backward(); zero matrix of the node's
  // shape when nothing reached it.
  Mat grad_or_zero(Var v) const;
  bool grad_touched(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and runs every recorded op once in reverse
  // creation order. loss must be 1x1. One-shot per tape.
  void backward(Var loss);

  int size() const { return static_cast<int>(nodes_.size()); }

  struct Record {
    const char* kind;
    std::vector<int> inputs;
    int output;
  };
  std::vector<Record> records() const;

  // Op construction; used by the free functions below. The closure receives
  // the tape and the id of the node it belongs to.
  using BackFn = std::function<void(Tape&, int)>;
  Var make(const char* kind, Mat value, std::vector<int> inputs, BackFn back);

  Mat& grad_ref(int id);
  const Mat& val_of(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool node_needs(int id) const { return nodes_[static_cast<size_t>(id)].needs; }

 private:
  struct Node {
    const char* kind;
    Mat value;
    Mat grad;
    bool has_grad = false;
    bool needs = false;
    std::vector<int> inputs;
    BackFn back;
  };
  // deque keeps val()/grad references stable while new nodes are recorded
  std::deque<Node> nodes_;
  bool ran_backward_ = false;

  const Node& node(Var v) const;
};

// ---- elementwise / linear ops ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var axpby(Scalar alpha, Var a, Scalar beta, Var b);  // alpha*a + beta*b
Var scale(Var a, Scalar c);
Var affine_const(Var a, Scalar mul, Scalar shift);   // mul*a + shift
Var add_rowvec(Var x, Var row);                      // x (m x n) + row (1 x n)
Var matmul(Var a, Var b);
Var hadamard(Var a, Var b);

// ---- activations ----
Var relu(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var softmax_rows(Var x);  // rows sum to 1; computed with per-row max shift

// ---- structure ops ----
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var x, int first, int count);
Var slice_cols(Var x, int first, int count);

// ---- normalization / regularization ----
// Per-row zero mean / unit variance (epsilon 1e-5 inside the square root),
// then an affine map with gain and bias (both 1 x d).
Var layer_norm(Var x, Var gain, Var bias);

// Inverted dropout: in training mode each entry is zeroed with probability
// rate and survivors are scaled by 1/(1-rate); in eval mode the input passes
// through untouched.
Var dropout(Var x, Scalar rate, bool training, Rng& rng);

// ---- reductions / losses (all produce 1x1) ----
Var sum_squares(Var x);
Var sqrt_scalar(Var x);

// Mean over rows of -log(probs[i, labels[i]]), probability floored at 1e-12.
Var ce_loss_mean(Var probs, const std::vector<int>& labels);

// Mean over rows of -w[y] * (1 - p)^gamma_f * log(p), p = probs[i, labels[i]].
Var focal_loss_mean(Var probs, const std::vector<int>& labels,
                    const std::vector<Scalar>& class_weights, Scalar gamma_f);

}  // namespace mmgcn
