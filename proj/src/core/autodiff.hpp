#pragma once

#include "core/common.hpp"

#include <vector>

namespace octcast::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// Handle to a node on a tape. Cheap to copy; owns nothing.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat& val() const;
  int rows() const { return static_cast<int>(val().rows()); }
  int cols() const { return static_cast<int>(val().cols()); }
};

// Reverse-mode tape. One tape per forward pass; values live as long as the
// tape does. Not thread-safe; build and differentiate on one thread.
class Tape {
 public:
  Var constant(Mat v);
  Var param(Mat v);

  /// Backpropagates from a 1x1 loss node through every dependent node.
  void backward(const Var& loss);
  const Mat& grad(const Var& v) const;
  bool has_grad(const Var& v) const;
  size_t size() const { return nodes_.size(); }

  // Node-level access used by the op implementations.
  const Mat& value_of(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Mat& grad_of(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
  bool node_requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  void accumulate(int id, const Mat& g);
  int push(Mat value, bool requires_grad, std::function<void(Tape&, int)> backprop);

  /// Hash of every ReLU sign pattern seen on this tape. Two forward passes
  /// with equal signatures lie on the same piecewise-linear region, which is
  /// what makes a finite-difference pair trustworthy.
  uint64_t activation_signature() const { return act_signature_; }
  void fold_activation_bit(bool active) {
    act_signature_ = (act_signature_ ^ (active ? 0x9e37ULL : 0x79b9ULL)) * 0x100000001b3ULL;
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(Tape&, int)> backprop;  // may be empty (leaves)
  };

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }

  std::vector<Node> nodes_;
  uint64_t act_signature_ = 1469598103934665603ULL;
};

// Elementwise and shape ops. All inputs must live on the same tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cwise_mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row_broadcast(Var x, Var row);
Var relu(Var a);
Var matmul(Var a, Var b);
/// a * b^T without materializing the transpose.
Var matmul_nt(Var a, Var b);
Var slice_cols(Var a, int start, int len);
Var select_rows(Var a, std::vector<int> index);
/// Places rows of `a` at `index` inside an otherwise-zero (total_rows x cols) matrix.
Var scatter_rows(Var a, std::vector<int> index, int total_rows);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);

/// Row-wise softmax of (scores + mask) * inv_scale. Rows whose mask entries
/// are all <= -1e8 yield zero rows (fully padded queries).
Var masked_softmax_rows(Var scores, Mat mask, double inv_scale);

/// Per-row layer norm with learned gain/bias (1 x D each), eps 1e-5.
Var layer_norm_rows(Var x, Var gain, Var bias);

/// Inverted dropout; identity when rate == 0. Mask drawn from rng.
Var dropout(Var x, double rate, Rng& rng);

Var sum_all(Var a);
Var mean_all(Var a);

/// sum(weight .* (pred - target).^2) / denom as a 1x1 node.
Var weighted_sse(Var pred, Mat target, Mat weight, double denom);

/// Mean over rows of 0.5 * sum_dims(mu^2 + exp(log_var) - 1 - log_var).
Var kl_gaussian(Var mu, Var log_var);

/// mu + exp(0.5 * log_var) .* noise.
Var reparameterize(Var mu, Var log_var, Mat noise);

/// Softmax cross entropy of a 1 x A logit row against a class index.
Var cross_entropy_logits(Var logits, int target);

}  // namespace octcast::ad
