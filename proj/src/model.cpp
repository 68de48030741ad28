#include "attrbench/model.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "attrbench/common.hpp"

namespace atb {

namespace {

using json = nlohmann::json;

int64_t widen(int64_t base, double wm) {
  return std::max<int64_t>(1, std::llround(static_cast<double>(base) * wm));
}

int64_t cnn_channels(int block_1idx, double wm) {
  int64_t base = 8ll << std::min(block_1idx - 1, 2);  // 8, 16, 32, 32, ...
  return widen(base, wm);
}

int64_t mlp_hidden(double wm) { return widen(64, wm); }
int64_t bagnet_channels(double wm) { return widen(16, wm); }

void validate(const ModelConfig& cfg) {
  if (cfg.num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
  if (cfg.width_multiplier <= 0.0) throw ConfigError("model: width_multiplier must be > 0");
  if (cfg.in_c < 1 || cfg.in_h < 1 || cfg.in_w < 1)
    throw ConfigError("model: input shape must be positive");
  switch (cfg.family) {
    case Family::kMlp:
      if (cfg.depth < 0) throw ConfigError("model: mlp depth must be >= 0");
      break;
    case Family::kCnn:
      if (cfg.depth < 1) throw ConfigError("model: cnn depth must be >= 1");
      break;
    case Family::kBagnetLocal:
      if (cfg.depth < 1) throw ConfigError("model: bagnet_local depth must be >= 1");
      if (cfg.in_h != cfg.in_w || cfg.in_h % 8 != 0) {
        throw ConfigError("model: bagnet_local needs square input with side divisible by 8, got " +
                          std::to_string(cfg.in_h) + "x" + std::to_string(cfg.in_w));
      }
      break;
  }
}

Tensor init_weight(Shape shape, int64_t fan_in, uint64_t seed, uint64_t index) {
  RngStream rng(mix_seed({seed, 0x696e6974u, index}));
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor init_bias(int64_t n, int64_t fan_in, uint64_t seed, uint64_t index) {
  RngStream rng(mix_seed({seed, 0x696e6974u, index}));
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor({n}, std::move(v), true);
}

}  // namespace

Family parse_family(const std::string& text) {
  if (text == "mlp") return Family::kMlp;
  if (text == "cnn") return Family::kCnn;
  if (text == "bagnet_local") return Family::kBagnetLocal;
  throw ConfigError("unknown model family '" + text + "' (expected mlp | cnn | bagnet_local)");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::kMlp: return "mlp";
    case Family::kCnn: return "cnn";
    default: return "bagnet_local";
  }
}

SoftmaxMode parse_softmax_mode(const std::string& text) {
  if (text == "pre") return SoftmaxMode::kPre;
  if (text == "post") return SoftmaxMode::kPost;
  throw ConfigError("unknown softmax mode '" + text + "' (expected pre | post)");
}

Model::Model(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg), init_seed_(init_seed) {
  validate(cfg);
  uint64_t t = 0;  // tensor index for keyed init streams

  auto add_conv = [&](const std::string& name, int64_t ci, int64_t co, int64_t k, int64_t stride,
                      int64_t pad) {
    Block b;
    b.kind = Block::Kind::kConv;
    b.name = name;
    b.stride = stride;
    b.pad = pad;
    b.weight = init_weight({co, ci, k, k}, ci * k * k, init_seed, t++);
    if (cfg.use_bias) b.bias = init_bias(co, ci * k * k, init_seed, t++);
    blocks_.push_back(std::move(b));
  };
  auto add_bn = [&](const std::string& name, int64_t c) {
    Block b;
    b.kind = Block::Kind::kBatchNorm;
    b.name = name;
    b.weight = Tensor::full({c}, 1.0, true);   // gamma
    b.bias = Tensor::zeros({c}, true);         // beta
    b.running_mean = Tensor::zeros({c});
    b.running_var = Tensor::full({c}, 1.0);
    blocks_.push_back(std::move(b));
  };
  auto add_relu = [&](const std::string& capture_tag) {
    Block b;
    b.kind = Block::Kind::kRelu;
    b.capture_tag = capture_tag;
    blocks_.push_back(std::move(b));
  };
  auto add_linear = [&](const std::string& name, int64_t in, int64_t out) {
    Block b;
    b.kind = Block::Kind::kLinear;
    b.name = name;
    b.weight = init_weight({out, in}, in, init_seed, t++);
    if (cfg.use_bias) b.bias = init_bias(out, in, init_seed, t++);
    blocks_.push_back(std::move(b));
  };
  auto add_simple = [&](Block::Kind kind) {
    Block b;
    b.kind = kind;
    blocks_.push_back(std::move(b));
  };

  switch (cfg.family) {
    case Family::kMlp: {
      add_simple(Block::Kind::kFlatten);
      int64_t in = cfg.in_c * cfg.in_h * cfg.in_w;
      int64_t hidden = mlp_hidden(cfg.width_multiplier);
      for (int i = 1; i <= cfg.depth; ++i) {
        add_linear("fc" + std::to_string(i), in, hidden);
        add_relu("");
        in = hidden;
      }
      add_linear("fc_out", in, cfg.num_classes);
      break;
    }
    case Family::kCnn: {
      int64_t c = cfg.in_c, h = cfg.in_h, w = cfg.in_w;
      for (int i = 1; i <= cfg.depth; ++i) {
        std::string id = "conv" + std::to_string(i);
        int64_t co = cnn_channels(i, cfg.width_multiplier);
        add_conv(id, c, co, 3, 1, 1);
        if (cfg.use_batchnorm) add_bn("bn" + std::to_string(i), co);
        add_relu(id);
        c = co;
        if (h >= 8 && w >= 8 && h % 2 == 0 && w % 2 == 0) {
          Block b;
          b.kind = Block::Kind::kMaxPool;
          b.pool_k = 2;
          blocks_.push_back(std::move(b));
          h /= 2;
          w /= 2;
        }
      }
      add_simple(Block::Kind::kGlobalAvgPool);
      add_linear("fc", c, cfg.num_classes);
      break;
    }
    case Family::kBagnetLocal: {
      // Stem of non-overlapping g×g blocks (g = side/8) keeps every local
      // logit's receptive field inside one aligned block; 1×1 convs after it
      // never widen the field.
      int64_t g = cfg.in_h / 8;
      int64_t c = bagnet_channels(cfg.width_multiplier);
      add_conv("conv1", cfg.in_c, c, g, g, 0);
      if (cfg.use_batchnorm) add_bn("bn1", c);
      add_relu("conv1");
      for (int i = 2; i <= cfg.depth; ++i) {
        std::string id = "conv" + std::to_string(i);
        add_conv(id, c, c, 1, 1, 0);
        if (cfg.use_batchnorm) add_bn("bn" + std::to_string(i), c);
        add_relu(id);
      }
      add_conv("head", c, cfg.num_classes, 1, 1, 0);
      blocks_.back().capture_tag = "head";
      add_simple(Block::Kind::kGlobalAvgPool);
      break;
    }
  }
}

Tensor Model::forward(const Tensor& x, BatchNormMode mode, const std::string& capture_layer,
                      Tensor* captured) {
  if (!x.defined() || x.shape().size() != 4 || x.dim(1) != cfg_.in_c || x.dim(2) != cfg_.in_h ||
      x.dim(3) != cfg_.in_w) {
    throw ShapeError("forward: expected [N," + std::to_string(cfg_.in_c) + "," +
                     std::to_string(cfg_.in_h) + "," + std::to_string(cfg_.in_w) + "], got " +
                     (x.defined() ? shape_str(x.shape()) : "<undefined>"));
  }
  if (!capture_layer.empty()) {
    auto ids = conv_layer_ids();
    if (std::find(ids.begin(), ids.end(), capture_layer) == ids.end()) {
      std::string valid;
      for (const auto& id : ids) valid += (valid.empty() ? "" : ", ") + id;
      throw ConfigError("forward: unknown capture layer '" + capture_layer + "' (valid: " +
                        (valid.empty() ? "<none: model has no conv layers>" : valid) + ")");
    }
    if (!captured) throw Error("forward: capture layer given but no output slot");
  }

  Tensor cur = x;
  bool want_head_capture = capture_layer == "head";
  for (auto& b : blocks_) {
    switch (b.kind) {
      case Block::Kind::kConv:
        cur = conv2d(cur, b.weight, b.bias, b.stride, b.pad);
        break;
      case Block::Kind::kLinear:
        cur = linear(cur, b.weight, b.bias);
        break;
      case Block::Kind::kBatchNorm:
        cur = batch_norm2d(cur, b.weight, b.bias, b.running_mean, b.running_var, mode);
        break;
      case Block::Kind::kRelu:
        cur = relu(cur);
        break;
      case Block::Kind::kMaxPool:
        cur = max_pool2d(cur, b.pool_k);
        break;
      case Block::Kind::kGlobalAvgPool:
        cur = global_avg_pool(cur);
        break;
      case Block::Kind::kFlatten:
        cur = reshape(cur, {cur.dim(0), cur.numel() / cur.dim(0)});
        break;
    }
    if (captured && !capture_layer.empty() && b.capture_tag == capture_layer) {
      if (b.capture_tag != "head" || want_head_capture) *captured = cur;
    }
  }
  return cur;
}

Tensor Model::local_class_maps(const Tensor& x, BatchNormMode mode) {
  if (cfg_.family != Family::kBagnetLocal) {
    throw ConfigError("local_class_maps: model family is " + family_name(cfg_.family) +
                      ", only bagnet_local has per-location class logits");
  }
  Tensor maps;
  forward(x, mode, "head", &maps);
  return maps;
}

std::vector<Tensor> Model::parameters() {
  std::vector<Tensor> out;
  for (auto& b : blocks_) {
    if (b.weight.defined()) out.push_back(b.weight);
    if (b.bias.defined()) out.push_back(b.bias);
  }
  return out;
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

std::vector<std::string> Model::conv_layer_ids() const {
  std::vector<std::string> out;
  for (const auto& b : blocks_) {
    if (b.kind == Block::Kind::kConv) out.push_back(b.name);
  }
  return out;
}

std::string Model::last_conv_id() const {
  std::string last;
  for (const auto& b : blocks_) {
    if (b.kind == Block::Kind::kConv && b.name != "head") last = b.name;
  }
  if (last.empty()) {
    throw ConfigError("model family " + family_name(cfg_.family) +
                      " has no conv layers for CAM-style attribution");
  }
  return last;
}

int64_t Model::param_count() const {
  int64_t n = 0;
  for (const auto& b : blocks_) {
    if (b.weight.defined()) n += b.weight.numel();
    if (b.bias.defined()) n += b.bias.numel();
  }
  return n;
}

int64_t count_params(const ModelConfig& cfg) {
  validate(cfg);
  int64_t n = 0;
  auto conv = [&](int64_t ci, int64_t co, int64_t k) {
    n += co * ci * k * k + (cfg.use_bias ? co : 0);
  };
  auto lin = [&](int64_t in, int64_t out) { n += out * in + (cfg.use_bias ? out : 0); };
  auto bn = [&](int64_t c) {
    if (cfg.use_batchnorm) n += 2 * c;
  };
  switch (cfg.family) {
    case Family::kMlp: {
      int64_t in = cfg.in_c * cfg.in_h * cfg.in_w;
      int64_t hidden = mlp_hidden(cfg.width_multiplier);
      for (int i = 0; i < cfg.depth; ++i) {
        lin(in, hidden);
        in = hidden;
      }
      lin(in, cfg.num_classes);
      break;
    }
    case Family::kCnn: {
      int64_t c = cfg.in_c;
      for (int i = 1; i <= cfg.depth; ++i) {
        int64_t co = cnn_channels(i, cfg.width_multiplier);
        conv(c, co, 3);
        bn(co);
        c = co;
      }
      lin(c, cfg.num_classes);
      break;
    }
    case Family::kBagnetLocal: {
      int64_t g = cfg.in_h / 8;
      int64_t c = bagnet_channels(cfg.width_multiplier);
      conv(cfg.in_c, c, g);
      bn(c);
      for (int i = 2; i <= cfg.depth; ++i) {
        conv(c, c, 1);
        bn(c);
      }
      conv(c, cfg.num_classes, 1);
      break;
    }
  }
  return n;
}

std::vector<double> predict(Model& model, const std::vector<double>& pixels, SoftmaxMode mode) {
  const auto& cfg = model.config();
  NoGradGuard ng;
  Tensor x({1, cfg.in_c, cfg.in_h, cfg.in_w}, pixels);
  Tensor logits = model.forward(x, BatchNormMode::kEval);
  if (mode == SoftmaxMode::kPost) logits = softmax(logits);
  return logits.data();
}

std::vector<NamedTensor> Model::named_tensors() const {
  std::vector<NamedTensor> out;
  auto push = [&](const std::string& name, const Tensor& t) {
    if (t.defined()) out.push_back({name, t.shape(), t.data()});
  };
  for (const auto& b : blocks_) {
    if (b.kind == Block::Kind::kBatchNorm) {
      push(b.name + ".gamma", b.weight);
      push(b.name + ".beta", b.bias);
      push(b.name + ".running_mean", b.running_mean);
      push(b.name + ".running_var", b.running_var);
    } else if (b.kind == Block::Kind::kConv || b.kind == Block::Kind::kLinear) {
      push(b.name + ".weight", b.weight);
      push(b.name + ".bias", b.bias);
    }
  }
  return out;
}

Model Model::clone() const {
  Model copy(cfg_, init_seed_);
  auto src = named_tensors();
  size_t i = 0;
  for (auto& b : copy.blocks_) {
    auto fill = [&](Tensor& t) {
      if (t.defined()) t.mutable_data() = src[i++].data;
    };
    if (b.kind == Block::Kind::kBatchNorm) {
      fill(b.weight);
      fill(b.bias);
      fill(b.running_mean);
      fill(b.running_var);
    } else if (b.kind == Block::Kind::kConv || b.kind == Block::Kind::kLinear) {
      fill(b.weight);
      fill(b.bias);
    }
  }
  return copy;
}

uint64_t model_weight_hash(const Model& model) {
  uint64_t h = 1469598103934665603ull;
  for (const auto& t : model.named_tensors()) {
    h = fnv1a64(t.name.data(), t.name.size(), h);
    h = fnv1a64(t.data.data(), t.data.size() * sizeof(double), h);
  }
  return h;
}

void save_model(const Model& model, const std::string& prefix, const std::string& provenance_json) {
  write_tensor_file(prefix + ".atb", model.named_tensors());
  const auto& cfg = model.config();
  json j;
  j["family"] = family_name(cfg.family);
  j["depth"] = cfg.depth;
  j["width_multiplier"] = cfg.width_multiplier;
  j["use_bias"] = cfg.use_bias;
  j["use_batchnorm"] = cfg.use_batchnorm;
  j["num_classes"] = cfg.num_classes;
  j["input"] = {cfg.in_c, cfg.in_h, cfg.in_w};
  j["init_seed"] = model.init_seed();
  j["weight_hash"] = hex64(model_weight_hash(model));
  j["provenance"] = provenance_json.empty() ? json::object() : json::parse(provenance_json);
  write_file_text(prefix + ".json", j.dump(2) + "\n");
}

Model load_model(const std::string& prefix) {
  json j = json::parse(read_file_text(prefix + ".json"));
  ModelConfig cfg;
  cfg.family = parse_family(j.at("family").get<std::string>());
  cfg.depth = j.at("depth").get<int>();
  cfg.width_multiplier = j.at("width_multiplier").get<double>();
  cfg.use_bias = j.at("use_bias").get<bool>();
  cfg.use_batchnorm = j.at("use_batchnorm").get<bool>();
  cfg.num_classes = j.at("num_classes").get<int>();
  auto in = j.at("input").get<std::vector<int64_t>>();
  cfg.in_c = in[0];
  cfg.in_h = in[1];
  cfg.in_w = in[2];

  Model model(cfg, j.at("init_seed").get<uint64_t>());
  auto tensors = read_tensor_file(prefix + ".atb");
  auto find = [&](const std::string& name) -> const NamedTensor& {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    throw FormatError(prefix + ".atb: missing tensor '" + name + "'");
  };
  for (auto& b : model.mutable_blocks()) {
    auto fill = [&](Tensor& t, const std::string& name) {
      if (!t.defined()) return;
      const NamedTensor& src = find(name);
      if (src.shape != t.shape()) {
        throw FormatError(prefix + ".atb: tensor '" + name + "' has shape " +
                          shape_str(src.shape) + ", model expects " + shape_str(t.shape()));
      }
      t.mutable_data() = src.data;
    };
    if (b.kind == Block::Kind::kBatchNorm) {
      fill(b.weight, b.name + ".gamma");
      fill(b.bias, b.name + ".beta");
      fill(b.running_mean, b.name + ".running_mean");
      fill(b.running_var, b.name + ".running_var");
    } else if (b.kind == Block::Kind::kConv || b.kind == Block::Kind::kLinear) {
      fill(b.weight, b.name + ".weight");
      fill(b.bias, b.name + ".bias");
    }
  }
  std::string expect = j.at("weight_hash").get<std::string>();
  std::string got = hex64(model_weight_hash(model));
  if (expect != got) {
    throw FormatError(prefix + ": weight hash mismatch (manifest " + expect + ", file " + got + ")");
  }
  return model;
}

}  // namespace atb
