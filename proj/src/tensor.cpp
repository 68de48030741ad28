#include "attrbench/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "attrbench/kernels.hpp"

namespace atb {

namespace {

thread_local int g_no_grad_depth = 0;

void check_finite(const char* op, const std::vector<double>& v) {
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericFault(std::string(op) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

std::shared_ptr<TapeNode> make_node(const char* op, Shape shape, std::vector<double> value,
                                    std::vector<std::shared_ptr<TapeNode>> parents) {
  auto n = std::make_shared<TapeNode>();
  n->op = op;
  n->shape = std::move(shape);
  n->value = std::move(value);
  check_finite(op, n->value);
  if (grad_enabled()) {
    for (const auto& p : parents) {
      if (p && p->needs_grad) {
        n->needs_grad = true;
        break;
      }
    }
    if (n->needs_grad) n->parents = std::move(parents);
  }
  return n;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " expects " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  node_ = std::make_shared<TapeNode>();
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
  node_->needs_grad = requires_grad;
  check_finite("leaf", node_->value);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), 0.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double c, bool requires_grad) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), c);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) {
    throw Error(std::string("grad: no gradient recorded for node '") + node_->op +
                "' (was backward() run, and is this node on the tape?)");
  }
  return node_->grad;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor has shape " + shape_str(shape()) + ", expected one element");
  }
  return node_->value[0];
}

bool grad_enabled() { return g_no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

// ---------------------------------------------------------------- conv2d

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride, int64_t pad) {
  require(x.defined() && x.shape().size() == 4,
          "conv2d: input must be [N,C,H,W], got " + (x.defined() ? shape_str(x.shape()) : "<undefined>"));
  require(w.defined() && w.shape().size() == 4,
          "conv2d: kernel must be [Co,Ci,kh,kw], got " + (w.defined() ? shape_str(w.shape()) : "<undefined>"));
  Conv2dDims d;
  d.n = x.dim(0);
  d.ci = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.co = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  if (w.dim(1) != d.ci) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " and kernel " +
                     shape_str(w.shape()) + " disagree on channel count");
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (pad < 0) throw ShapeError("conv2d: pad must be >= 0, got " + std::to_string(pad));
  if (d.ho() < 1 || d.wo() < 1) {
    throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " does not fit input " +
                     shape_str(x.shape()) + " with stride " + std::to_string(stride) + ", pad " +
                     std::to_string(pad));
  }
  if (bias.defined()) {
    require(bias.shape().size() == 1 && bias.dim(0) == d.co,
            "conv2d: bias must be [" + std::to_string(d.co) + "], got " + shape_str(bias.shape()));
  }

  std::vector<double> y(static_cast<size_t>(d.n * d.co * d.ho() * d.wo()));
  kernels::conv2d_forward(x.data().data(), w.data().data(),
                          bias.defined() ? bias.data().data() : nullptr, y.data(), d);

  std::vector<std::shared_ptr<TapeNode>> parents = {x.node(), w.node()};
  if (bias.defined()) parents.push_back(bias.node());
  auto n = make_node("conv2d", {d.n, d.co, d.ho(), d.wo()}, std::move(y), std::move(parents));
  if (n->needs_grad) {
    TapeNode* xp = n->parents[0].get();
    TapeNode* wp = n->parents[1].get();
    TapeNode* bp = n->parents.size() > 2 ? n->parents[2].get() : nullptr;
    n->backward_fn = [xp, wp, bp, d](TapeNode& self) {
      if (xp->needs_grad) {
        xp->ensure_grad();
        kernels::conv2d_backward_input(self.grad.data(), wp->value.data(), xp->grad.data(), d);
      }
      if (wp->needs_grad) {
        wp->ensure_grad();
        kernels::conv2d_backward_weight(self.grad.data(), xp->value.data(), wp->grad.data(), d);
      }
      if (bp && bp->needs_grad) {
        bp->ensure_grad();
        kernels::conv2d_backward_bias(self.grad.data(), bp->grad.data(), d);
      }
    };
  }
  return Tensor(n);
}

// ---------------------------------------------------------------- linear

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(x.defined() && x.shape().size() == 2,
          "linear: input must be [N,I], got " + (x.defined() ? shape_str(x.shape()) : "<undefined>"));
  require(w.defined() && w.shape().size() == 2,
          "linear: weight must be [O,I], got " + (w.defined() ? shape_str(w.shape()) : "<undefined>"));
  int64_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " and weight " +
                     shape_str(w.shape()) + " disagree on feature count");
  }
  if (bias.defined()) {
    require(bias.shape().size() == 1 && bias.dim(0) == out,
            "linear: bias must be [" + std::to_string(out) + "], got " + shape_str(bias.shape()));
  }

  std::vector<double> y(static_cast<size_t>(n * out));
  kernels::linear_forward(x.data().data(), w.data().data(),
                          bias.defined() ? bias.data().data() : nullptr, y.data(), n, in, out);

  std::vector<std::shared_ptr<TapeNode>> parents = {x.node(), w.node()};
  if (bias.defined()) parents.push_back(bias.node());
  auto node = make_node("linear", {n, out}, std::move(y), std::move(parents));
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    TapeNode* wp = node->parents[1].get();
    TapeNode* bp = node->parents.size() > 2 ? node->parents[2].get() : nullptr;
    node->backward_fn = [xp, wp, bp, n, in, out](TapeNode& self) {
      if (xp->needs_grad) {
        xp->ensure_grad();
        kernels::linear_backward_input(self.grad.data(), wp->value.data(), xp->grad.data(), n, in,
                                       out);
      }
      if (wp->needs_grad) {
        wp->ensure_grad();
        kernels::linear_backward_weight(self.grad.data(), xp->value.data(), wp->grad.data(), n, in,
                                        out);
      }
      if (bp && bp->needs_grad) {
        bp->ensure_grad();
        kernels::linear_backward_bias(self.grad.data(), bp->grad.data(), n, out);
      }
    };
  }
  return Tensor(node);
}

// ---------------------------------------------------------------- relu

Tensor relu(const Tensor& x) {
  std::vector<double> y(x.data().size());
  const auto& v = x.data();
  for (size_t i = 0; i < v.size(); ++i) y[i] = v[i] > 0.0 ? v[i] : 0.0;
  auto node = make_node("relu", x.shape(), std::move(y), {x.node()});
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    // subgradient at 0 is 0
    node->backward_fn = [xp](TapeNode& self) {
      if (!xp->needs_grad) return;
      xp->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) {
        if (xp->value[i] > 0.0) xp->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(node);
}

// ---------------------------------------------------------------- pooling

Tensor max_pool2d(const Tensor& x, int64_t k) {
  require(x.shape().size() == 4, "max_pool2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k < 1 || h % k != 0 || w % k != 0) {
    throw ShapeError("max_pool2d: window " + std::to_string(k) + " must divide spatial dims of " +
                     shape_str(x.shape()));
  }
  int64_t ho = h / k, wo = w / k;
  std::vector<double> y(static_cast<size_t>(n * c * ho * wo));
  std::vector<int64_t> arg(y.size());
  const double* src = x.data().data();
  for (int64_t img = 0; img < n * c; ++img) {
    const double* plane = src + img * h * w;
    for (int64_t oy = 0; oy < ho; ++oy) {
      for (int64_t ox = 0; ox < wo; ++ox) {
        int64_t best = (oy * k) * w + ox * k;
        double bv = plane[best];
        for (int64_t dy = 0; dy < k; ++dy) {
          for (int64_t dx = 0; dx < k; ++dx) {
            int64_t idx = (oy * k + dy) * w + (ox * k + dx);
            if (plane[idx] > bv) {
              bv = plane[idx];
              best = idx;
            }
          }
        }
        size_t o = static_cast<size_t>((img * ho + oy) * wo + ox);
        y[o] = bv;
        arg[o] = img * h * w + best;
      }
    }
  }
  auto node = make_node("max_pool2d", {n, c, ho, wo}, std::move(y), {x.node()});
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    node->backward_fn = [xp, arg](TapeNode& self) {
      if (!xp->needs_grad) return;
      xp->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) xp->grad[arg[i]] += self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor avg_pool2d(const Tensor& x, int64_t k) {
  require(x.shape().size() == 4, "avg_pool2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k < 1 || h % k != 0 || w % k != 0) {
    throw ShapeError("avg_pool2d: window " + std::to_string(k) + " must divide spatial dims of " +
                     shape_str(x.shape()));
  }
  int64_t ho = h / k, wo = w / k;
  double inv = 1.0 / static_cast<double>(k * k);
  std::vector<double> y(static_cast<size_t>(n * c * ho * wo));
  const double* src = x.data().data();
  for (int64_t img = 0; img < n * c; ++img) {
    const double* plane = src + img * h * w;
    for (int64_t oy = 0; oy < ho; ++oy) {
      for (int64_t ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (int64_t dy = 0; dy < k; ++dy)
          for (int64_t dx = 0; dx < k; ++dx) acc += plane[(oy * k + dy) * w + (ox * k + dx)];
        y[static_cast<size_t>((img * ho + oy) * wo + ox)] = acc * inv;
      }
    }
  }
  auto node = make_node("avg_pool2d", {n, c, ho, wo}, std::move(y), {x.node()});
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    node->backward_fn = [xp, k, h, w, ho, wo, inv](TapeNode& self) {
      if (!xp->needs_grad) return;
      xp->ensure_grad();
      int64_t planes = static_cast<int64_t>(self.grad.size()) / (ho * wo);
      for (int64_t img = 0; img < planes; ++img) {
        for (int64_t oy = 0; oy < ho; ++oy) {
          for (int64_t ox = 0; ox < wo; ++ox) {
            double g = self.grad[static_cast<size_t>((img * ho + oy) * wo + ox)] * inv;
            for (int64_t dy = 0; dy < k; ++dy)
              for (int64_t dx = 0; dx < k; ++dx)
                xp->grad[img * h * w + (oy * k + dy) * w + (ox * k + dx)] += g;
          }
        }
      }
    };
  }
  return Tensor(node);
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.shape().size() == 4,
          "global_avg_pool: input must be [N,C,H,W], got " + shape_str(x.shape()));
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  double inv = 1.0 / static_cast<double>(h * w);
  std::vector<double> y(static_cast<size_t>(n * c));
  const double* src = x.data().data();
  for (int64_t p = 0; p < n * c; ++p) {
    double acc = 0.0;
    for (int64_t i = 0; i < h * w; ++i) acc += src[p * h * w + i];
    y[static_cast<size_t>(p)] = acc * inv;
  }
  auto node = make_node("global_avg_pool", {n, c}, std::move(y), {x.node()});
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    node->backward_fn = [xp, h, w, inv](TapeNode& self) {
      if (!xp->needs_grad) return;
      xp->ensure_grad();
      for (size_t p = 0; p < self.grad.size(); ++p) {
        double g = self.grad[p] * inv;
        for (int64_t i = 0; i < h * w; ++i) xp->grad[p * h * w + i] += g;
      }
    };
  }
  return Tensor(node);
}

// ---------------------------------------------------------------- batch norm

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                    Tensor& running_var, BatchNormMode mode, double momentum, double eps) {
  require(x.shape().size() == 4,
          "batch_norm2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(gamma.defined() && gamma.numel() == c && beta.defined() && beta.numel() == c,
          "batch_norm2d: gamma/beta must be [" + std::to_string(c) + "] for input " +
              shape_str(x.shape()));
  require(running_mean.defined() && running_mean.numel() == c && running_var.defined() &&
              running_var.numel() == c,
          "batch_norm2d: running stats must be [" + std::to_string(c) + "]");
  if (eps <= 0.0) throw ConfigError("batch_norm2d: eps must be > 0, got " + std::to_string(eps));

  int64_t m = n * h * w;  // reduction size per channel
  std::vector<double> mean(c), var(c);
  if (mode == BatchNormMode::kTrain) {
    const double* src = x.data().data();
    for (int64_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int64_t img = 0; img < n; ++img) {
        const double* plane = src + (img * c + ch) * h * w;
        for (int64_t i = 0; i < h * w; ++i) acc += plane[i];
      }
      mean[ch] = acc / static_cast<double>(m);
      double vacc = 0.0;
      for (int64_t img = 0; img < n; ++img) {
        const double* plane = src + (img * c + ch) * h * w;
        for (int64_t i = 0; i < h * w; ++i) {
          double d = plane[i] - mean[ch];
          vacc += d * d;
        }
      }
      var[ch] = vacc / static_cast<double>(m);  // biased, like the running buffer
    }
    auto& rm = running_mean.mutable_data();
    auto& rv = running_var.mutable_data();
    for (int64_t ch = 0; ch < c; ++ch) {
      rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mean[ch];
      rv[ch] = (1.0 - momentum) * rv[ch] + momentum * var[ch];
    }
  } else {
    mean = running_mean.data();
    var = running_var.data();
  }

  std::vector<double> inv_std(c), xhat(x.data().size()), y(x.data().size());
  for (int64_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
  const double* src = x.data().data();
  const double* g = gamma.data().data();
  const double* b = beta.data().data();
  for (int64_t img = 0; img < n; ++img) {
    for (int64_t ch = 0; ch < c; ++ch) {
      size_t base = static_cast<size_t>((img * c + ch) * h * w);
      for (int64_t i = 0; i < h * w; ++i) {
        double xh = (src[base + i] - mean[ch]) * inv_std[ch];
        xhat[base + i] = xh;
        y[base + i] = g[ch] * xh + b[ch];
      }
    }
  }

  auto node =
      make_node("batch_norm2d", x.shape(), std::move(y), {x.node(), gamma.node(), beta.node()});
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    TapeNode* gp = node->parents[1].get();
    TapeNode* bp = node->parents[2].get();
    bool train = mode == BatchNormMode::kTrain;
    node->backward_fn = [xp, gp, bp, xhat, inv_std, n, c, h, w, m, train](TapeNode& self) {
      std::vector<double> sum_gy(c, 0.0), sum_gy_xhat(c, 0.0);
      for (int64_t img = 0; img < n; ++img) {
        for (int64_t ch = 0; ch < c; ++ch) {
          size_t base = static_cast<size_t>((img * c + ch) * h * w);
          for (int64_t i = 0; i < h * w; ++i) {
            sum_gy[ch] += self.grad[base + i];
            sum_gy_xhat[ch] += self.grad[base + i] * xhat[base + i];
          }
        }
      }
      if (gp->needs_grad) {
        gp->ensure_grad();
        for (int64_t ch = 0; ch < c; ++ch) gp->grad[ch] += sum_gy_xhat[ch];
      }
      if (bp->needs_grad) {
        bp->ensure_grad();
        for (int64_t ch = 0; ch < c; ++ch) bp->grad[ch] += sum_gy[ch];
      }
      if (xp->needs_grad) {
        xp->ensure_grad();
        double invm = 1.0 / static_cast<double>(m);
        for (int64_t img = 0; img < n; ++img) {
          for (int64_t ch = 0; ch < c; ++ch) {
            double gam = gp->value[ch];
            size_t base = static_cast<size_t>((img * c + ch) * h * w);
            if (train) {
              // d/dx of gamma*(x-mu)/sqrt(var+eps) with mu, var batch statistics
              for (int64_t i = 0; i < h * w; ++i) {
                double gy = self.grad[base + i];
                xp->grad[base + i] += gam * inv_std[ch] *
                                      (gy - sum_gy[ch] * invm - xhat[base + i] * sum_gy_xhat[ch] * invm);
              }
            } else {
              for (int64_t i = 0; i < h * w; ++i)
                xp->grad[base + i] += gam * inv_std[ch] * self.grad[base + i];
            }
          }
        }
      }
    };
  }
  return Tensor(node);
}

// ---------------------------------------------------------------- softmax / loss

Tensor softmax(const Tensor& logits) {
  const Shape& s = logits.shape();
  require(s.size() == 1 || s.size() == 2,
          "softmax: input must be [K] or [N,K], got " + shape_str(s));
  int64_t rows = s.size() == 2 ? s[0] : 1;
  int64_t k = s.size() == 2 ? s[1] : s[0];
  std::vector<double> y(logits.data().size());
  const double* src = logits.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = src + r * k;
    double mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      double e = std::exp(row[j] - mx);
      y[r * k + j] = e;
      z += e;
    }
    for (int64_t j = 0; j < k; ++j) y[r * k + j] /= z;
  }
  auto node = make_node("softmax", s, std::move(y), {logits.node()});
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    node->backward_fn = [xp, rows, k](TapeNode& self) {
      if (!xp->needs_grad) return;
      xp->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (int64_t j = 0; j < k; ++j) dot += self.grad[r * k + j] * self.value[r * k + j];
        for (int64_t j = 0; j < k; ++j)
          xp->grad[r * k + j] += self.value[r * k + j] * (self.grad[r * k + j] - dot);
      }
    };
  }
  return Tensor(node);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels) {
  require(logits.shape().size() == 2,
          "cross_entropy: logits must be [N,K], got " + shape_str(logits.shape()));
  int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(n));
  }
  for (int64_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw ConfigError("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                        std::to_string(i) + " outside [0," + std::to_string(k) + ")");
    }
  }
  // log-sum-exp per row, probabilities retained for the backward step
  std::vector<double> probs(logits.data().size());
  const double* src = logits.data().data();
  double loss = 0.0;
  for (int64_t r = 0; r < n; ++r) {
    const double* row = src + r * k;
    double mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      double e = std::exp(row[j] - mx);
      probs[r * k + j] = e;
      z += e;
    }
    for (int64_t j = 0; j < k; ++j) probs[r * k + j] /= z;
    loss -= std::log(probs[r * k + labels[r]]);
  }
  loss /= static_cast<double>(n);
  auto node = make_node("cross_entropy", {1}, {loss}, {logits.node()});
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    node->backward_fn = [xp, probs, labels, n, k](TapeNode& self) {
      if (!xp->needs_grad) return;
      xp->ensure_grad();
      double g = self.grad[0] / static_cast<double>(n);
      for (int64_t r = 0; r < n; ++r) {
        for (int64_t j = 0; j < k; ++j) {
          double p = probs[r * k + j];
          xp->grad[r * k + j] += g * (p - (j == labels[r] ? 1.0 : 0.0));
        }
      }
    };
  }
  return Tensor(node);
}

// ---------------------------------------------------------------- elementwise etc.

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  std::vector<double> y(a.data().size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  auto node = make_node("add", a.shape(), std::move(y), {a.node(), b.node()});
  if (node->needs_grad) {
    TapeNode* ap = node->parents[0].get();
    TapeNode* bp = node->parents[1].get();
    node->backward_fn = [ap, bp](TapeNode& self) {
      for (TapeNode* p : {ap, bp}) {
        if (!p->needs_grad) continue;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(node);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  std::vector<double> y(a.data().size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  auto node = make_node("mul", a.shape(), std::move(y), {a.node(), b.node()});
  if (node->needs_grad) {
    TapeNode* ap = node->parents[0].get();
    TapeNode* bp = node->parents[1].get();
    node->backward_fn = [ap, bp](TapeNode& self) {
      if (ap->needs_grad) {
        ap->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) ap->grad[i] += self.grad[i] * bp->value[i];
      }
      if (bp->needs_grad) {
        bp->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) bp->grad[i] += self.grad[i] * ap->value[i];
      }
    };
  }
  return Tensor(node);
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> y(a.data().size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * c;
  auto node = make_node("scale", a.shape(), std::move(y), {a.node()});
  if (node->needs_grad) {
    TapeNode* ap = node->parents[0].get();
    node->backward_fn = [ap, c](TapeNode& self) {
      if (!ap->needs_grad) return;
      ap->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) ap->grad[i] += self.grad[i] * c;
    };
  }
  return Tensor(node);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto node = make_node("reshape", std::move(shape), x.data(), {x.node()});
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    node->backward_fn = [xp](TapeNode& self) {
      if (!xp->needs_grad) return;
      xp->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) xp->grad[i] += self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  auto node = make_node("sum", {1}, {acc}, {x.node()});
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    node->backward_fn = [xp](TapeNode& self) {
      if (!xp->needs_grad) return;
      xp->ensure_grad();
      for (size_t i = 0; i < xp->grad.size(); ++i) xp->grad[i] += self.grad[0];
    };
  }
  return Tensor(node);
}

Tensor select(const Tensor& x, int64_t row, int64_t col) {
  require(x.shape().size() == 2, "select: input must be 2-d, got " + shape_str(x.shape()));
  int64_t n = x.dim(0), k = x.dim(1);
  if (row < 0 || row >= n || col < 0 || col >= k) {
    throw ShapeError("select: index (" + std::to_string(row) + "," + std::to_string(col) +
                     ") outside " + shape_str(x.shape()));
  }
  size_t flat = static_cast<size_t>(row * k + col);
  auto node = make_node("select", {1}, {x.data()[flat]}, {x.node()});
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    node->backward_fn = [xp, flat](TapeNode& self) {
      if (!xp->needs_grad) return;
      xp->ensure_grad();
      xp->grad[flat] += self.grad[0];
    };
  }
  return Tensor(node);
}

Tensor col_sum(const Tensor& x, int64_t col) {
  require(x.shape().size() == 2, "col_sum: input must be 2-d, got " + shape_str(x.shape()));
  int64_t n = x.dim(0), k = x.dim(1);
  if (col < 0 || col >= k) {
    throw ShapeError("col_sum: column " + std::to_string(col) + " outside " + shape_str(x.shape()));
  }
  double acc = 0.0;
  for (int64_t r = 0; r < n; ++r) acc += x.data()[r * k + col];
  auto node = make_node("col_sum", {1}, {acc}, {x.node()});
  if (node->needs_grad) {
    TapeNode* xp = node->parents[0].get();
    node->backward_fn = [xp, n, k, col](TapeNode& self) {
      if (!xp->needs_grad) return;
      xp->ensure_grad();
      for (int64_t r = 0; r < n; ++r) xp->grad[r * k + col] += self.grad[0];
    };
  }
  return Tensor(node);
}

// ---------------------------------------------------------------- backward

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error("backward: loss must be a defined scalar tensor");
  }
  TapeNode* root = loss.node().get();
  if (!root->needs_grad) {
    throw Error("backward: loss does not depend on any requires_grad leaf");
  }
  // iterative post-order DFS; children (parents in tape terms) come out first,
  // so walking the list in reverse visits each node before its inputs
  std::vector<TapeNode*> order;
  std::unordered_set<TapeNode*> seen;
  std::vector<std::pair<TapeNode*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TapeNode* p = node->parents[idx++].get();
      if (p->needs_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TapeNode* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

}  // namespace atb
