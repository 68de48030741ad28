#include "attrbench/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "attrbench/common.hpp"
#include "attrbench/serialize.hpp"

namespace atb {

namespace {

using Base = MethodSpec::Base;
using Wrapper = MethodSpec::Wrapper;

constexpr int64_t kForwardChunk = 16;  // batch rows per forward in step/mask loops

// attribute() flips these off so backward passes skip weight-gradient work;
// concurrent callers therefore need private model clones.
struct FreezeParams {
  std::vector<Tensor> params;
  explicit FreezeParams(Model& m) : params(m.parameters()) {
    for (auto& p : params) p.set_requires_grad(false);
  }
  ~FreezeParams() {
    for (auto& p : params) p.set_requires_grad(true);
  }
};

struct AliasEntry {
  const char* name;
  Base base;
  bool ig_uniform;
  bool rise_uniform;
  const char* wrappers;  // encoded chain: "s"=smoothgrad, "q"=smoothgrad_sq, "a"=abs
};

constexpr AliasEntry kAliases[] = {
    {"gradient", Base::kGradient, false, false, ""},
    {"saliency", Base::kGradient, false, false, "a"},
    {"ixg", Base::kInputXGradient, false, false, ""},
    {"ixg_abs", Base::kInputXGradient, false, false, "a"},
    {"ixg_sg", Base::kInputXGradient, false, false, "s"},
    {"ixg_sg_abs", Base::kInputXGradient, false, false, "sa"},
    {"ig", Base::kIntegratedGradients, false, false, ""},
    {"ig_abs", Base::kIntegratedGradients, false, false, "a"},
    {"ig_sg", Base::kIntegratedGradients, false, false, "s"},
    {"ig_sg_abs", Base::kIntegratedGradients, false, false, "sa"},
    {"ig_sg_sq", Base::kIntegratedGradients, false, false, "q"},
    {"ig_u", Base::kIntegratedGradients, true, false, ""},
    {"ig_u_abs", Base::kIntegratedGradients, true, false, "a"},
    {"grad_cam", Base::kGradCam, false, false, ""},
    {"grad_cam_pp", Base::kGradCamPp, false, false, ""},
    {"sg_cam_pp", Base::kGradCamPp, false, false, "s"},
    {"xgrad_cam", Base::kXGradCam, false, false, ""},
    {"layer_cam", Base::kLayerCam, false, false, ""},
    {"occlusion", Base::kOcclusion, false, false, ""},
    {"rise", Base::kRise, false, false, ""},
    {"rise_u", Base::kRise, false, true, ""},
    {"bagnet", Base::kBagnetNative, false, false, ""},
    {"random", Base::kRandom, false, false, ""},
};

void validate_spec(const MethodSpec& spec) {
  if (spec.base == Base::kIntegratedGradients && spec.ig_steps < 8) {
    throw ConfigError("method '" + spec.id + "': integrated_gradients steps must be >= 8, got " +
                      std::to_string(spec.ig_steps));
  }
  if (spec.base == Base::kRise) {
    if (spec.rise_masks < 10) {
      throw ConfigError("method '" + spec.id + "': rise needs >= 10 masks, got " +
                        std::to_string(spec.rise_masks));
    }
    if (!(spec.rise_keep > 0.0 && spec.rise_keep <= 1.0)) {
      throw ConfigError("method '" + spec.id + "': rise keep_prob must be in (0,1]");
    }
    if (spec.rise_grid < 1) throw ConfigError("method '" + spec.id + "': rise grid must be >= 1");
  }
  int sg_count = 0;
  for (size_t i = 0; i < spec.wrappers.size(); ++i) {
    const Wrapper& w = spec.wrappers[i];
    if (w.kind == Wrapper::Kind::kAbs) {
      if (i + 1 != spec.wrappers.size()) {
        throw ConfigError("method '" + spec.id + "': abs wrapper must come last in the chain");
      }
    } else {
      ++sg_count;
      if (w.n < 1) throw ConfigError("method '" + spec.id + "': smoothgrad n must be >= 1");
      if (w.sigma < 0.0) throw ConfigError("method '" + spec.id + "': smoothgrad sigma must be >= 0");
    }
  }
  if (sg_count > 1) {
    throw ConfigError("method '" + spec.id + "': nested smoothgrad wrappers are not supported");
  }
}

}  // namespace

MethodSpec parse_method(const std::string& text) {
  std::string alias = text, params;
  auto paren = text.find('(');
  if (paren != std::string::npos) {
    if (text.back() != ')') throw ConfigError("method '" + text + "': unbalanced parentheses");
    alias = text.substr(0, paren);
    params = text.substr(paren + 1, text.size() - paren - 2);
  }

  const AliasEntry* entry = nullptr;
  for (const auto& a : kAliases) {
    if (alias == a.name) {
      entry = &a;
      break;
    }
  }
  if (!entry) {
    std::string known;
    for (const auto& a : kAliases) known += (known.empty() ? "" : ", ") + std::string(a.name);
    throw ConfigError("unknown attribution method '" + alias + "' (registry: " + known + ")");
  }

  MethodSpec spec;
  spec.id = text;
  spec.base = entry->base;
  spec.ig_uniform_baseline = entry->ig_uniform;
  spec.rise_uniform_baseline = entry->rise_uniform;
  for (const char* c = entry->wrappers; *c; ++c) {
    Wrapper w;
    w.kind = *c == 'a' ? Wrapper::Kind::kAbs
                       : (*c == 's' ? Wrapper::Kind::kSmoothGrad : Wrapper::Kind::kSmoothGradSq);
    spec.wrappers.push_back(w);
  }

  // k=v parameters, applied after the alias defaults
  size_t pos = 0;
  while (pos < params.size()) {
    size_t comma = params.find(',', pos);
    std::string kv = params.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    pos = comma == std::string::npos ? params.size() : comma + 1;
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("method '" + text + "': expected key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    try {
      if (key == "steps") {
        spec.ig_steps = std::stoi(val);
      } else if (key == "layer") {
        spec.layer = val;
      } else if (key == "masks") {
        spec.rise_masks = std::stoi(val);
      } else if (key == "grid") {
        spec.rise_grid = std::stoi(val);
      } else if (key == "keep") {
        spec.rise_keep = std::stod(val);
      } else if (key == "window") {
        spec.occ_window = std::stoi(val);
      } else if (key == "stride") {
        spec.occ_stride = std::stoi(val);
      } else if (key == "n") {
        bool hit = false;
        for (auto& w : spec.wrappers) {
          if (w.kind != Wrapper::Kind::kAbs) {
            w.n = std::stoi(val);
            hit = true;
          }
        }
        if (!hit) throw ConfigError("method '" + text + "': 'n' given but no smoothgrad wrapper");
      } else if (key == "sigma") {
        bool hit = false;
        for (auto& w : spec.wrappers) {
          if (w.kind != Wrapper::Kind::kAbs) {
            w.sigma = std::stod(val);
            hit = true;
          }
        }
        if (!hit) throw ConfigError("method '" + text + "': 'sigma' given but no smoothgrad wrapper");
      } else {
        throw ConfigError("method '" + text + "': unknown parameter '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("method '" + text + "': cannot parse value '" + val + "' for '" + key + "'");
    }
  }
  validate_spec(spec);
  return spec;
}

std::vector<std::string> registry_aliases() {
  std::vector<std::string> out;
  for (const auto& a : kAliases) out.push_back(a.name);
  return out;
}

std::vector<std::string> default_roster(Family family) {
  std::vector<std::string> roster = {
      "saliency", "ixg",         "ixg_abs",   "ixg_sg",    "ixg_sg_abs", "ig",  "ig_abs",
      "ig_u",     "ig_u_abs",    "ig_sg",     "ig_sg_abs", "ig_sg_sq",   "grad_cam",
      "grad_cam_pp", "sg_cam_pp", "xgrad_cam", "layer_cam", "rise",       "rise_u",
  };
  if (family == Family::kBagnetLocal) roster.push_back("bagnet");
  return roster;
}

std::string method_class(const MethodSpec& spec) {
  switch (spec.base) {
    case Base::kBagnetNative:
      return "intrinsic";
    case Base::kOcclusion:
    case Base::kRise:
      return "perturbation";
    case Base::kGradCam:
    case Base::kGradCamPp:
    case Base::kXGradCam:
    case Base::kLayerCam:
      return "cam";
    case Base::kRandom:
      return "other";  // the null method belongs to no family
    default:
      break;
  }
  for (const auto& w : spec.wrappers) {
    if (w.kind == Wrapper::Kind::kAbs || w.kind == Wrapper::Kind::kSmoothGradSq) return "absolute";
  }
  return "raw";
}

std::vector<double> bilinear_upsample(const double* src, int64_t sh, int64_t sw, int64_t dh,
                                      int64_t dw) {
  std::vector<double> out(static_cast<size_t>(dh * dw));
  double sy = static_cast<double>(sh) / static_cast<double>(dh);
  double sx = static_cast<double>(sw) / static_cast<double>(dw);
  for (int64_t y = 0; y < dh; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    int64_t y0 = static_cast<int64_t>(std::floor(fy));
    double wy = fy - static_cast<double>(y0);
    int64_t y0c = std::clamp<int64_t>(y0, 0, sh - 1);
    int64_t y1c = std::clamp<int64_t>(y0 + 1, 0, sh - 1);
    for (int64_t x = 0; x < dw; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      int64_t x0 = static_cast<int64_t>(std::floor(fx));
      double wx = fx - static_cast<double>(x0);
      int64_t x0c = std::clamp<int64_t>(x0, 0, sw - 1);
      int64_t x1c = std::clamp<int64_t>(x0 + 1, 0, sw - 1);
      double top = src[y0c * sw + x0c] * (1.0 - wx) + src[y0c * sw + x1c] * wx;
      double bot = src[y1c * sw + x0c] * (1.0 - wx) + src[y1c * sw + x1c] * wx;
      out[y * dw + x] = top * (1.0 - wy) + bot * wy;
    }
  }
  return out;
}

std::vector<double> cam_combine(Base variant, const std::vector<double>& acts,
                                const std::vector<double>& grads, int64_t channels, int64_t h,
                                int64_t w) {
  int64_t plane = h * w;
  std::vector<double> cam(static_cast<size_t>(plane), 0.0);
  for (int64_t k = 0; k < channels; ++k) {
    const double* a = acts.data() + k * plane;
    const double* g = grads.data() + k * plane;
    switch (variant) {
      case Base::kGradCam: {
        double wk = 0.0;
        for (int64_t i = 0; i < plane; ++i) wk += g[i];
        wk /= static_cast<double>(plane);
        for (int64_t i = 0; i < plane; ++i) cam[i] += wk * a[i];
        break;
      }
      case Base::kXGradCam: {
        // weights sum_ij (A_ij / (sum A + eps)) * G_ij
        double s = 0.0;
        for (int64_t i = 0; i < plane; ++i) s += a[i];
        double wk = 0.0;
        for (int64_t i = 0; i < plane; ++i) wk += a[i] / (s + 1e-12) * g[i];
        for (int64_t i = 0; i < plane; ++i) cam[i] += wk * a[i];
        break;
      }
      case Base::kLayerCam: {
        for (int64_t i = 0; i < plane; ++i) cam[i] += std::max(g[i], 0.0) * a[i];
        break;
      }
      case Base::kGradCamPp: {
        // exp-output reduction: with S = exp(y), dS/dA = S*g, so the 2nd/3rd
        // order terms collapse to powers of g: alpha = g^2 / (2 g^2 + sumA * g^3)
        double s = 0.0;
        for (int64_t i = 0; i < plane; ++i) s += a[i];
        double wk = 0.0;
        for (int64_t i = 0; i < plane; ++i) {
          double den = 2.0 * g[i] * g[i] + s * g[i] * g[i] * g[i];
          if (std::abs(den) < 1e-12) continue;
          double alpha = g[i] * g[i] / den;
          wk += alpha * std::max(g[i], 0.0);
        }
        for (int64_t i = 0; i < plane; ++i) cam[i] += wk * a[i];
        break;
      }
      default:
        throw Error("cam_combine: not a CAM variant");
    }
  }
  for (auto& v : cam) v = std::max(v, 0.0);
  return cam;
}

namespace {

std::vector<double> channel_sum(const std::vector<double>& v, int64_t c, int64_t plane) {
  std::vector<double> out(static_cast<size_t>(plane), 0.0);
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < plane; ++i) out[i] += v[ch * plane + i];
  return out;
}

Tensor scalar_output(const Tensor& logits, int64_t t, SoftmaxMode mode) {
  return mode == SoftmaxMode::kPost ? select(softmax(logits), 0, t) : select(logits, 0, t);
}

std::vector<double> input_gradient(Model& model, const std::vector<double>& px, int64_t t,
                                   SoftmaxMode mode) {
  const auto& cfg = model.config();
  Tensor x({1, cfg.in_c, cfg.in_h, cfg.in_w}, px, true);
  Tensor y = scalar_output(model.forward(x, BatchNormMode::kEval), t, mode);
  backward(y);
  return x.grad();
}

double forward_value(Model& model, const std::vector<double>& px, int64_t t, SoftmaxMode mode) {
  NoGradGuard ng;
  const auto& cfg = model.config();
  Tensor x({1, cfg.in_c, cfg.in_h, cfg.in_w}, px);
  Tensor logits = model.forward(x, BatchNormMode::kEval);
  if (mode == SoftmaxMode::kPost) logits = softmax(logits);
  return logits.data()[t];
}

// batched no-grad forward over many variants of one image
std::vector<double> forward_values(Model& model, const std::vector<std::vector<double>>& rows,
                                   int64_t t, SoftmaxMode mode) {
  NoGradGuard ng;
  const auto& cfg = model.config();
  int64_t px = cfg.in_c * cfg.in_h * cfg.in_w;
  std::vector<double> out;
  out.reserve(rows.size());
  for (size_t start = 0; start < rows.size(); start += kForwardChunk) {
    int64_t bsz = std::min<int64_t>(kForwardChunk, static_cast<int64_t>(rows.size() - start));
    std::vector<double> batch(static_cast<size_t>(bsz * px));
    for (int64_t b = 0; b < bsz; ++b)
      std::copy(rows[start + b].begin(), rows[start + b].end(), batch.begin() + b * px);
    Tensor x({bsz, cfg.in_c, cfg.in_h, cfg.in_w}, std::move(batch));
    Tensor logits = model.forward(x, BatchNormMode::kEval);
    if (mode == SoftmaxMode::kPost) logits = softmax(logits);
    for (int64_t b = 0; b < bsz; ++b)
      out.push_back(logits.data()[b * cfg.num_classes + t]);
  }
  return out;
}

std::vector<double> eval_gradient(Model& model, const std::vector<double>& px, int64_t t,
                                  SoftmaxMode mode) {
  const auto& cfg = model.config();
  return channel_sum(input_gradient(model, px, t, mode), cfg.in_c, cfg.in_h * cfg.in_w);
}

std::vector<double> eval_ixg(Model& model, const std::vector<double>& px, int64_t t,
                             SoftmaxMode mode) {
  std::vector<double> g = input_gradient(model, px, t, mode);
  for (size_t i = 0; i < g.size(); ++i) g[i] *= px[i];
  const auto& cfg = model.config();
  return channel_sum(g, cfg.in_c, cfg.in_h * cfg.in_w);
}

std::vector<double> eval_ig(Model& model, const std::vector<double>& px, int64_t t,
                            SoftmaxMode mode, const MethodSpec& spec, uint64_t draw_key) {
  const auto& cfg = model.config();
  int64_t numel = cfg.in_c * cfg.in_h * cfg.in_w;
  std::vector<double> base(static_cast<size_t>(numel), 0.0);
  if (spec.ig_uniform_baseline) {
    RngStream rng(mix_seed({draw_key, 0x69677562u}));
    for (auto& v : base) v = rng.uniform(-1.0, 1.0);
  }
  std::vector<double> grad_sum(static_cast<size_t>(numel), 0.0);
  int steps = spec.ig_steps;
  for (int start = 0; start < steps; start += static_cast<int>(kForwardChunk)) {
    int bsz = std::min<int>(static_cast<int>(kForwardChunk), steps - start);
    std::vector<double> batch(static_cast<size_t>(bsz) * numel);
    for (int b = 0; b < bsz; ++b) {
      double alpha = (static_cast<double>(start + b) + 0.5) / static_cast<double>(steps);
      for (int64_t i = 0; i < numel; ++i)
        batch[static_cast<size_t>(b) * numel + i] = base[i] + alpha * (px[i] - base[i]);
    }
    Tensor x({bsz, cfg.in_c, cfg.in_h, cfg.in_w}, std::move(batch), true);
    Tensor logits = model.forward(x, BatchNormMode::kEval);
    if (mode == SoftmaxMode::kPost) logits = softmax(logits);
    Tensor y = col_sum(logits, t);
    backward(y);
    const auto& g = x.grad();
    for (int b = 0; b < bsz; ++b)
      for (int64_t i = 0; i < numel; ++i) grad_sum[i] += g[static_cast<size_t>(b) * numel + i];
  }
  for (int64_t i = 0; i < numel; ++i)
    grad_sum[i] = (px[i] - base[i]) * grad_sum[i] / static_cast<double>(steps);
  return channel_sum(grad_sum, cfg.in_c, cfg.in_h * cfg.in_w);
}

std::vector<double> eval_cam(Model& model, const std::vector<double>& px, int64_t t,
                             SoftmaxMode mode, const MethodSpec& spec, bool* warning) {
  const auto& cfg = model.config();
  std::string layer = spec.layer.empty() ? model.last_conv_id() : spec.layer;
  Tensor x({1, cfg.in_c, cfg.in_h, cfg.in_w}, px, true);
  Tensor act;
  Tensor logits = model.forward(x, BatchNormMode::kEval, layer, &act);
  if (!act.defined()) throw Error("cam: capture of layer '" + layer + "' produced nothing");
  Tensor y = scalar_output(logits, t, mode);
  backward(y);

  int64_t k = act.dim(1), ah = act.dim(2), aw = act.dim(3);
  bool all_zero = true;
  for (double v : act.data()) {
    if (v != 0.0) {
      all_zero = false;
      break;
    }
  }
  if (all_zero) {
    *warning = true;
    return std::vector<double>(static_cast<size_t>(cfg.in_h * cfg.in_w), 0.0);
  }
  std::vector<double> cam = cam_combine(spec.base, act.data(), act.grad(), k, ah, aw);
  return bilinear_upsample(cam.data(), ah, aw, cfg.in_h, cfg.in_w);
}

std::vector<double> eval_occlusion(Model& model, const std::vector<double>& px, int64_t image_id,
                                   int64_t t, SoftmaxMode mode, const MethodSpec& spec,
                                   uint64_t draw_key) {
  const auto& cfg = model.config();
  int64_t h = cfg.in_h, w = cfg.in_w;
  // auto window stays below the h/4 evaluation patch: a window that tiles the
  // patch grid exactly would just re-measure the single-deletion drops
  int64_t window = spec.occ_window > 0 ? spec.occ_window : std::max<int64_t>(1, h / 8);
  int64_t stride = spec.occ_stride > 0 ? spec.occ_stride : std::max<int64_t>(1, window / 2);
  if (window > h || window > w) {
    throw ConfigError("occlusion: window " + std::to_string(window) + " larger than image " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
  Baseline base_spec = spec.occ_baseline;
  base_spec.seed = mix_seed({draw_key, 0x6f636342u});
  std::vector<double> base = baseline_image(px, cfg.in_c, h, w, base_spec, image_id);

  auto positions = [](int64_t extent, int64_t win, int64_t step) {
    std::vector<int64_t> p;
    for (int64_t v = 0; v + win <= extent; v += step) p.push_back(v);
    if (p.empty() || p.back() + win < extent) p.push_back(extent - win);
    return p;
  };
  std::vector<int64_t> ys = positions(h, window, stride), xs = positions(w, window, stride);

  double f0 = forward_value(model, px, t, mode);
  std::vector<std::vector<double>> rows;
  rows.reserve(ys.size() * xs.size());
  for (int64_t y0 : ys) {
    for (int64_t x0 : xs) {
      std::vector<double> occluded = px;
      for (int64_t ch = 0; ch < cfg.in_c; ++ch)
        for (int64_t y = y0; y < y0 + window; ++y)
          for (int64_t x = x0; x < x0 + window; ++x)
            occluded[(ch * h + y) * w + x] = base[(ch * h + y) * w + x];
      rows.push_back(std::move(occluded));
    }
  }
  std::vector<double> f = forward_values(model, rows, t, mode);

  std::vector<double> sum(static_cast<size_t>(h * w), 0.0), count(static_cast<size_t>(h * w), 0.0);
  size_t idx = 0;
  for (int64_t y0 : ys) {
    for (int64_t x0 : xs) {
      double drop = f0 - f[idx++];
      for (int64_t y = y0; y < y0 + window; ++y) {
        for (int64_t x = x0; x < x0 + window; ++x) {
          sum[y * w + x] += drop;
          count[y * w + x] += 1.0;
        }
      }
    }
  }
  for (size_t i = 0; i < sum.size(); ++i) sum[i] /= count[i];
  return sum;
}

std::vector<double> eval_rise(Model& model, const std::vector<double>& px, int64_t t,
                              SoftmaxMode mode, const MethodSpec& spec, uint64_t draw_key) {
  const auto& cfg = model.config();
  int64_t h = cfg.in_h, w = cfg.in_w;
  int g = spec.rise_grid;
  int64_t cell_h = (h + g - 1) / g, cell_w = (w + g - 1) / g;
  RngStream rng(mix_seed({draw_key, 0x72697365u}));

  std::vector<double> fill(px.size(), 0.0);
  if (spec.rise_uniform_baseline) {
    for (auto& v : fill) v = rng.uniform(-1.0, 1.0);
  }

  std::vector<double> acc(static_cast<size_t>(h * w), 0.0);
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<double>> masks;
  auto flush = [&]() {
    if (rows.empty()) return;
    std::vector<double> f = forward_values(model, rows, t, mode);
    for (size_t i = 0; i < masks.size(); ++i)
      for (int64_t p = 0; p < h * w; ++p) acc[p] += f[i] * masks[i][p];
    rows.clear();
    masks.clear();
  };

  int side = g + 1;  // one extra cell row/col so the shifted window stays inside
  for (int mi = 0; mi < spec.rise_masks; ++mi) {
    std::vector<double> low(static_cast<size_t>(side * side));
    for (auto& v : low) v = rng.uniform() < spec.rise_keep ? 1.0 : 0.0;
    int64_t oy = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(cell_h)));
    int64_t ox = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(cell_w)));

    std::vector<double> mask(static_cast<size_t>(h * w));
    for (int64_t y = 0; y < h; ++y) {
      double u = static_cast<double>(y + oy) / static_cast<double>(cell_h);
      int64_t i0 = static_cast<int64_t>(std::floor(u));
      double wy = u - static_cast<double>(i0);
      int64_t i1 = std::min<int64_t>(i0 + 1, side - 1);
      i0 = std::min<int64_t>(i0, side - 1);
      for (int64_t x = 0; x < w; ++x) {
        double v = static_cast<double>(x + ox) / static_cast<double>(cell_w);
        int64_t j0 = static_cast<int64_t>(std::floor(v));
        double wx = v - static_cast<double>(j0);
        int64_t j1 = std::min<int64_t>(j0 + 1, side - 1);
        j0 = std::min<int64_t>(j0, side - 1);
        double top = low[i0 * side + j0] * (1.0 - wx) + low[i0 * side + j1] * wx;
        double bot = low[i1 * side + j0] * (1.0 - wx) + low[i1 * side + j1] * wx;
        mask[y * w + x] = top * (1.0 - wy) + bot * wy;
      }
    }
    std::vector<double> masked(px.size());
    for (int64_t ch = 0; ch < cfg.in_c; ++ch) {
      for (int64_t p = 0; p < h * w; ++p) {
        double m = mask[p];
        masked[ch * h * w + p] = px[ch * h * w + p] * m + fill[ch * h * w + p] * (1.0 - m);
      }
    }
    rows.push_back(std::move(masked));
    masks.push_back(std::move(mask));
    if (static_cast<int64_t>(rows.size()) >= kForwardChunk) flush();
  }
  flush();

  double norm = spec.rise_keep * static_cast<double>(spec.rise_masks);
  for (auto& v : acc) v /= norm;
  return acc;
}

std::vector<double> eval_bagnet(Model& model, const std::vector<double>& px, int64_t t) {
  const auto& cfg = model.config();
  NoGradGuard ng;
  Tensor x({1, cfg.in_c, cfg.in_h, cfg.in_w}, px);
  Tensor maps = model.local_class_maps(x, BatchNormMode::kEval);
  int64_t gh = maps.dim(2), gw = maps.dim(3);
  int64_t bh = cfg.in_h / gh, bw = cfg.in_w / gw;
  double scale = 1.0 / (static_cast<double>(gh * gw) * static_cast<double>(bh * bw));
  const double* l = maps.data().data() + t * gh * gw;
  std::vector<double> out(static_cast<size_t>(cfg.in_h * cfg.in_w));
  for (int64_t y = 0; y < cfg.in_h; ++y)
    for (int64_t x2 = 0; x2 < cfg.in_w; ++x2)
      out[y * cfg.in_w + x2] = l[(y / bh) * gw + (x2 / bw)] * scale;
  return out;
}

}  // namespace

AttributionResult attribute(Model& model, const std::vector<double>& pixels, int64_t image_id,
                            int64_t target, const MethodSpec& spec, SoftmaxMode mode,
                            uint64_t seed) {
  validate_spec(spec);
  const auto& cfg = model.config();
  if (target < 0 || target >= cfg.num_classes) {
    throw ConfigError("attribute: target class " + std::to_string(target) + " outside [0," +
                      std::to_string(cfg.num_classes) + ")");
  }
  if (static_cast<int64_t>(pixels.size()) != cfg.in_c * cfg.in_h * cfg.in_w) {
    throw ShapeError("attribute: " + std::to_string(pixels.size()) + " pixels for model input " +
                     std::to_string(cfg.in_c) + "x" + std::to_string(cfg.in_h) + "x" +
                     std::to_string(cfg.in_w));
  }
  if (spec.base == Base::kBagnetNative && cfg.family != Family::kBagnetLocal) {
    throw ConfigError("attribute: method '" + spec.id + "' requires a bagnet_local model, got " +
                      family_name(cfg.family));
  }

  uint64_t rng_key = mix_seed({seed, fnv1a64(spec.id.data(), spec.id.size()),
                               static_cast<uint64_t>(image_id)});
  FreezeParams freeze(model);

  AttributionResult result;
  result.h = cfg.in_h;
  result.w = cfg.in_w;
  result.method = spec.id;
  result.target = target;
  result.mode = mode;

  auto eval_base = [&](const std::vector<double>& px, uint64_t draw_key) {
    switch (spec.base) {
      case Base::kGradient:
        return eval_gradient(model, px, target, mode);
      case Base::kInputXGradient:
        return eval_ixg(model, px, target, mode);
      case Base::kIntegratedGradients:
        return eval_ig(model, px, target, mode, spec, draw_key);
      case Base::kGradCam:
      case Base::kGradCamPp:
      case Base::kXGradCam:
      case Base::kLayerCam:
        return eval_cam(model, px, target, mode, spec, &result.warning);
      case Base::kOcclusion:
        return eval_occlusion(model, px, image_id, target, mode, spec, draw_key);
      case Base::kRise:
        return eval_rise(model, px, target, mode, spec, draw_key);
      case Base::kBagnetNative:
        return eval_bagnet(model, px, target);
      default: {  // kRandom
        RngStream rng(mix_seed({draw_key, 0x726e6421u}));
        std::vector<double> m(static_cast<size_t>(cfg.in_h * cfg.in_w));
        for (auto& v : m) v = rng.uniform(-1.0, 1.0);
        return m;
      }
    }
  };

  std::vector<double> map;
  const Wrapper* sg = nullptr;
  for (const auto& w : spec.wrappers) {
    if (w.kind != Wrapper::Kind::kAbs) sg = &w;
  }
  if (!sg) {
    map = eval_base(pixels, mix_seed({rng_key, 0}));
  } else {
    double lo = pixels[0], hi = pixels[0];
    for (double v : pixels) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    double noise_scale = sg->sigma * (hi - lo);
    bool squared = sg->kind == Wrapper::Kind::kSmoothGradSq;
    map.assign(static_cast<size_t>(cfg.in_h * cfg.in_w), 0.0);
    for (int d = 0; d < sg->n; ++d) {
      std::vector<double> noisy = pixels;
      if (noise_scale > 0.0) {
        RngStream rng(mix_seed({rng_key, 0x6e6f6973u, static_cast<uint64_t>(d)}));
        for (auto& v : noisy) v += noise_scale * rng.normal();
      }
      std::vector<double> m = eval_base(noisy, mix_seed({rng_key, static_cast<uint64_t>(d)}));
      for (size_t i = 0; i < map.size(); ++i) map[i] += squared ? m[i] * m[i] : m[i];
    }
    for (auto& v : map) v /= static_cast<double>(sg->n);
  }
  if (!spec.wrappers.empty() && spec.wrappers.back().kind == Wrapper::Kind::kAbs) {
    for (auto& v : map) v = std::abs(v);
  }
  result.map = std::move(map);
  return result;
}

void export_map(const AttributionResult& result, const std::string& prefix) {
  write_file_bytes(prefix + ".bin", result.map.data(), result.map.size() * sizeof(double));

  double lo = result.map.empty() ? 0.0 : result.map[0], hi = lo;
  for (double v : result.map) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  nlohmann::json j;
  j["method"] = result.method;
  j["target"] = result.target;
  j["softmax_mode"] = result.mode == SoftmaxMode::kPost ? "post" : "pre";
  j["height"] = result.h;
  j["width"] = result.w;
  j["min"] = lo;
  j["max"] = hi;
  j["warning"] = result.warning;
  j["dtype"] = "f64-le";
  write_file_text(prefix + ".json", j.dump(2) + "\n");

  std::string pgm = "P5\n" + std::to_string(result.w) + " " + std::to_string(result.h) + "\n255\n";
  double span = hi - lo;
  for (double v : result.map) {
    int byte = span > 0.0 ? static_cast<int>(std::lround((v - lo) / span * 255.0)) : 0;
    pgm.push_back(static_cast<char>(byte));
  }
  write_file_bytes(prefix + ".pgm", pgm.data(), pgm.size());
}

}  // namespace atb
