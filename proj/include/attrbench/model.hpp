#ifndef ATTRBENCH_MODEL_HPP
#define ATTRBENCH_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "attrbench/serialize.hpp"
#include "attrbench/tensor.hpp"

namespace atb {

enum class Family { kMlp, kCnn, kBagnetLocal };
enum class SoftmaxMode { kPre, kPost };

Family parse_family(const std::string& text);
std::string family_name(Family f);
SoftmaxMode parse_softmax_mode(const std::string& text);

struct ModelConfig {
  Family family = Family::kCnn;
  int depth = 4;  // conv blocks / hidden layers; mlp depth 0 is a bare linear map
  double width_multiplier = 1.0;
  bool use_bias = true;
  bool use_batchnorm = true;  // conv families only
  int num_classes = 8;
  int64_t in_c = 3, in_h = 64, in_w = 64;
};

// Flat sequence of primitive blocks; a "conv layer" in the public sense is a
// conv block plus its optional BN and ReLU, and capture points sit after the
// block's activation.
struct Block {
  enum class Kind { kConv, kLinear, kBatchNorm, kRelu, kMaxPool, kGlobalAvgPool, kFlatten };
  Kind kind;
  std::string name;     // conv/linear/bn blocks only
  Tensor weight, bias;  // leaves with requires_grad
  Tensor running_mean, running_var;
  int64_t stride = 1, pad = 0, pool_k = 2;
  std::string capture_tag;  // output of this block is the capture point for that conv id
};

class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, uint64_t init_seed);

  // logits [N,K]; capture_layer (optional) must name a conv layer
  Tensor forward(const Tensor& x, BatchNormMode mode, const std::string& capture_layer = "",
                 Tensor* captured = nullptr);
  // bagnet_local only: per-location class logits [N,K,gh,gw] before pooling
  Tensor local_class_maps(const Tensor& x, BatchNormMode mode);

  const ModelConfig& config() const { return cfg_; }
  uint64_t init_seed() const { return init_seed_; }
  std::vector<Tensor> parameters();
  void zero_grad();
  std::vector<std::string> conv_layer_ids() const;
  std::string last_conv_id() const;
  int64_t param_count() const;

  std::vector<NamedTensor> named_tensors() const;  // weights + BN buffers
  Model clone() const;

  const std::vector<Block>& blocks() const { return blocks_; }
  std::vector<Block>& mutable_blocks() { return blocks_; }

 private:
  ModelConfig cfg_;
  uint64_t init_seed_ = 0;
  std::vector<Block> blocks_;
};

// analytic parameter count for a config; the oracle the builder is checked against
int64_t count_params(const ModelConfig& cfg);

// single-image convenience: no-grad eval forward, returns K logits or probabilities
std::vector<double> predict(Model& model, const std::vector<double>& pixels, SoftmaxMode mode);

uint64_t model_weight_hash(const Model& model);

// prefix.atb (tensors) + prefix.json (config, seed, provenance)
void save_model(const Model& model, const std::string& prefix, const std::string& provenance_json);
Model load_model(const std::string& prefix);

}  // namespace atb

#endif
