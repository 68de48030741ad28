#ifndef ATTRBENCH_ATTRIBUTION_HPP
#define ATTRBENCH_ATTRIBUTION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "attrbench/model.hpp"
#include "attrbench/patch.hpp"

namespace atb {

struct MethodSpec {
  enum class Base {
    kGradient,
    kInputXGradient,
    kIntegratedGradients,
    kGradCam,
    kGradCamPp,
    kXGradCam,
    kLayerCam,
    kOcclusion,
    kRise,
    kBagnetNative,
    kRandom,  // uniform-noise null method for sanity baselines
  };
  struct Wrapper {
    enum class Kind { kSmoothGrad, kSmoothGradSq, kAbs };
    Kind kind = Kind::kAbs;
    int n = 8;
    double sigma = 0.1;
  };

  std::string id;  // canonical alias this spec was parsed from
  Base base = Base::kGradient;
  std::vector<Wrapper> wrappers;

  // integrated gradients
  bool ig_uniform_baseline = false;  // false: zero baseline
  int ig_steps = 64;
  // cam family
  std::string layer;  // empty: model's last conv
  // occlusion; 0 resolves against the image: window side/8, stride window/2,
  // deliberately finer than the side/4 evaluation patches
  int occ_window = 0, occ_stride = 0;
  Baseline occ_baseline;
  // rise
  int rise_masks = 500, rise_grid = 7;
  double rise_keep = 0.5;
  bool rise_uniform_baseline = false;
};

// Accepts a registry alias with optional parameters, e.g. "ig_sg(n=16,sigma=0.2)",
// "ig(steps=128)", "rise(masks=100,grid=7,keep=0.5)", "grad_cam(layer=conv2)",
// "occlusion(window=16,stride=8)". Unknown alias -> config error listing the registry.
MethodSpec parse_method(const std::string& text);
std::vector<std::string> registry_aliases();
// roster used by compare runs; bagnet is appended for bagnet_local models
std::vector<std::string> default_roster(Family family);
// raw | absolute | cam | perturbation | intrinsic | other (null methods)
std::string method_class(const MethodSpec& spec);

struct AttributionResult {
  std::vector<double> map;  // h*w, signed
  int64_t h = 0, w = 0;
  std::string method;
  int64_t target = 0;
  SoftmaxMode mode = SoftmaxMode::kPre;
  bool warning = false;  // e.g. all-zero CAM feature maps
};

// Pure given (model, pixels, target, seed): internal draws come from a stream
// keyed by (seed, image_id, method id), so parallel callers cannot perturb
// each other.
AttributionResult attribute(Model& model, const std::vector<double>& pixels, int64_t image_id,
                            int64_t target, const MethodSpec& spec, SoftmaxMode mode,
                            uint64_t seed);

// exposed for unit tests: post-ReLU low-res CAM map before upsampling
std::vector<double> cam_combine(MethodSpec::Base variant, const std::vector<double>& acts,
                                const std::vector<double>& grads, int64_t channels, int64_t h,
                                int64_t w);

std::vector<double> bilinear_upsample(const double* src, int64_t sh, int64_t sw, int64_t dh,
                                      int64_t dw);

// prefix.bin (raw f64) + prefix.json (metadata) + prefix.pgm (preview)
void export_map(const AttributionResult& result, const std::string& prefix);

}  // namespace atb

#endif
