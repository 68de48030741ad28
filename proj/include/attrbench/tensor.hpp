#ifndef ATTRBENCH_TENSOR_HPP
#define ATTRBENCH_TENSOR_HPP

#include <functional>
#include <memory>
#include <vector>

#include "attrbench/common.hpp"

namespace atb {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);

// One node of the reverse-mode tape: op tag, parent references, and a closure
// holding whatever the backward step needs. Built eagerly during forward
// evaluation; a graph is whatever is reachable from a loss tensor. Workers
// never share nodes, so evaluation is thread-compatible by construction.
struct TapeNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand during backward
  bool requires_grad = false;
  bool needs_grad = false;  // lies on a path to a requires_grad leaf
  const char* op = "leaf";
  std::vector<std::shared_ptr<TapeNode>> parents;
  std::function<void(TapeNode&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TapeNode> n) : node_(std::move(n)) {}
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  int64_t dim(size_t i) const { return node_->shape[i]; }
  const std::vector<double>& data() const { return node_->value; }
  // In-place access for parameter updates and buffer edits; never call while
  // a graph referencing this node is still pending backward.
  std::vector<double>& mutable_data() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  // leaves only: toggling also clears needs_grad so frozen params drop off the tape
  void set_requires_grad(bool v) {
    node_->requires_grad = v;
    node_->needs_grad = v;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad() { node_->grad.clear(); }

  double item() const;
  const char* op() const { return node_->op; }
  const std::shared_ptr<TapeNode>& node() const { return node_; }

 private:
  std::shared_ptr<TapeNode> node_;
};

// Thread-local autograd switch. Protocol loops run whole forward passes with
// recording off; per-thread so OpenMP workers do not interfere.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

enum class BatchNormMode { kTrain, kEval };

// --- forward ops (all record onto the tape when grad is enabled) ---

// x [N,Ci,H,W] (cross-correlation), w [Co,Ci,kh,kw], optional bias [Co]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride, int64_t pad);
// x [N,I], w [O,I], optional bias [O]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor max_pool2d(const Tensor& x, int64_t k);  // window k, stride k
Tensor avg_pool2d(const Tensor& x, int64_t k);
Tensor global_avg_pool(const Tensor& x);  // [N,C,H,W] -> [N,C]
// gamma/beta [C]; running stats [C] updated in-place in train mode.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                    Tensor& running_var, BatchNormMode mode, double momentum = 0.1,
                    double eps = 1e-5);
Tensor softmax(const Tensor& logits);  // over last dim of [K] or [N,K]
// mean over the batch of -log softmax(logits)[label]
Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);                              // scalar
Tensor select(const Tensor& x, int64_t row, int64_t col);  // scalar x[row,col] of 2-d x
Tensor col_sum(const Tensor& x, int64_t col);              // scalar sum_n x[n,col]

// Populates grads of every needs_grad node reachable from the scalar loss.
void backward(const Tensor& loss);

}  // namespace atb

#endif
