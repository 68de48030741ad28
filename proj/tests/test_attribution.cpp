// Attribution methods. The linear-model identities give exact oracles for the
// gradient family; CAM reductions and the bilinear upsampler are checked
// against hand-computed values frozen below.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "attrbench/attribution.hpp"
#include "attrbench/common.hpp"
#include "attrbench/model.hpp"
#include "attrbench/serialize.hpp"

using namespace atb;
namespace fs = std::filesystem;

namespace {

ModelConfig make_cfg(Family fam, int depth, bool bias, bool bn, int64_t side, int classes = 4) {
  ModelConfig c;
  c.family = fam;
  c.depth = depth;
  c.width_multiplier = 1.0;
  c.use_bias = bias;
  c.use_batchnorm = bn;
  c.num_classes = classes;
  c.in_c = 3;
  c.in_h = side;
  c.in_w = side;
  return c;
}

// bare linear map (mlp depth 0, no bias) with weights we control exactly
Model linear_model(int64_t side, int classes, uint64_t seed) {
  Model m(make_cfg(Family::kMlp, 0, false, false, side, classes), seed);
  return m;
}

// weight row of the head for class t, as [3*side*side]
std::vector<double> head_row(Model& m, int64_t t) {
  for (const auto& nt : m.named_tensors()) {
    if (nt.name == "fc_out.weight") {
      int64_t in = nt.shape[1];
      return std::vector<double>(nt.data.begin() + t * in, nt.data.begin() + (t + 1) * in);
    }
  }
  throw Error("no fc_out.weight");
}

std::vector<double> rand_image(int64_t side, uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> px(3 * side * side);
  for (auto& v : px) v = rng.uniform(-1.0, 1.0);
  return px;
}

double map_sum(const std::vector<double>& m) {
  double s = 0.0;
  for (double v : m) s += v;
  return s;
}

}  // namespace

TEST_CASE("method parsing and validation") {
  MethodSpec ig = parse_method("ig(steps=128)");
  CHECK(ig.base == MethodSpec::Base::kIntegratedGradients);
  CHECK(ig.ig_steps == 128);
  CHECK_FALSE(ig.ig_uniform_baseline);
  CHECK(parse_method("ig_u").ig_uniform_baseline);

  MethodSpec sga = parse_method("ixg_sg_abs(n=4,sigma=0.2)");
  REQUIRE(sga.wrappers.size() == 2);
  CHECK(sga.wrappers[0].kind == MethodSpec::Wrapper::Kind::kSmoothGrad);
  CHECK(sga.wrappers[0].n == 4);
  CHECK(sga.wrappers[1].kind == MethodSpec::Wrapper::Kind::kAbs);  // abs stays last

  MethodSpec occ = parse_method("occlusion(window=16,stride=8)");
  CHECK(occ.occ_window == 16);
  CHECK(occ.occ_stride == 8);

  try {
    parse_method("gradcam");  // not an alias (it's grad_cam)
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("grad_cam") != std::string::npos);  // registry listed
    CHECK(msg.find("rise") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_method("ig(steps=4)"), ConfigError);       // too coarse
  CHECK_THROWS_AS(parse_method("ig(bogus=1)"), ConfigError);       // unknown param
  CHECK_THROWS_AS(parse_method("rise(keep=0)"), ConfigError);      // keep in (0,1]
  CHECK_THROWS_AS(parse_method("rise(keep=1.5)"), ConfigError);
  CHECK_THROWS_AS(parse_method("rise(masks=5)"), ConfigError);
  CHECK_THROWS_AS(parse_method("ixg_sg(n=0)"), ConfigError);
  CHECK(parse_method("rise(keep=1)").rise_keep == 1.0);  // boundary stays legal
}

TEST_CASE("registry and default rosters") {
  auto aliases = registry_aliases();
  CHECK(aliases.size() >= 20);
  for (const auto& a : aliases) CHECK_NOTHROW(parse_method(a));

  auto cnn_roster = default_roster(Family::kCnn);
  CHECK(cnn_roster.size() >= 19);
  CHECK(std::find(cnn_roster.begin(), cnn_roster.end(), "bagnet") == cnn_roster.end());
  auto bag_roster = default_roster(Family::kBagnetLocal);
  CHECK(std::find(bag_roster.begin(), bag_roster.end(), "bagnet") != bag_roster.end());

  CHECK(method_class(parse_method("gradient")) == "raw");
  CHECK(method_class(parse_method("saliency")) == "absolute");
  CHECK(method_class(parse_method("ig_abs")) == "absolute");
  CHECK(method_class(parse_method("grad_cam_pp")) == "cam");
  CHECK(method_class(parse_method("occlusion")) == "perturbation");
  CHECK(method_class(parse_method("rise")) == "perturbation");
  CHECK(method_class(parse_method("bagnet")) == "intrinsic");
  CHECK(method_class(parse_method("random")) == "other");
}

TEST_CASE("linear model: gradient family identities are exact") {
  Model m = linear_model(8, 4, 301);
  std::vector<double> px = rand_image(8, 302);
  int64_t t = 2;
  std::vector<double> w = head_row(m, t);

  auto grad = attribute(m, px, 0, t, parse_method("gradient"), SoftmaxMode::kPre, 1).map;
  REQUIRE(grad.size() == 64);
  for (int64_t p = 0; p < 64; ++p) {
    double want = w[p] + w[64 + p] + w[128 + p];  // summed over channels
    CHECK(grad[p] == doctest::Approx(want).epsilon(1e-12));
  }

  auto sal = attribute(m, px, 0, t, parse_method("saliency"), SoftmaxMode::kPre, 1).map;
  for (int64_t p = 0; p < 64; ++p) CHECK(sal[p] == doctest::Approx(std::abs(grad[p])).epsilon(1e-12));

  auto ixg = attribute(m, px, 0, t, parse_method("ixg"), SoftmaxMode::kPre, 1).map;
  for (int64_t p = 0; p < 64; ++p) {
    double want = px[p] * w[p] + px[64 + p] * w[64 + p] + px[128 + p] * w[128 + p];
    CHECK(ixg[p] == doctest::Approx(want).epsilon(1e-12));
  }

  // constant integrand: IG with zero baseline equals input x gradient at any step count
  auto ig = attribute(m, px, 0, t, parse_method("ig(steps=8)"), SoftmaxMode::kPre, 1).map;
  for (int64_t p = 0; p < 64; ++p) CHECK(ig[p] == doctest::Approx(ixg[p]).epsilon(1e-9));

  // non-overlapping occlusion windows: each pixel's value is its window's drop
  auto occ = attribute(m, px, 0, t, parse_method("occlusion(window=2,stride=2)"),
                       SoftmaxMode::kPre, 1)
                 .map;
  for (int64_t wy = 0; wy < 4; ++wy)
    for (int64_t wx = 0; wx < 4; ++wx) {
      double drop = 0.0;
      for (int64_t c = 0; c < 3; ++c)
        for (int64_t dy = 0; dy < 2; ++dy)
          for (int64_t dx = 0; dx < 2; ++dx) {
            int64_t p = (wy * 2 + dy) * 8 + (wx * 2 + dx);
            drop += w[c * 64 + p] * px[c * 64 + p];
          }
      for (int64_t dy = 0; dy < 2; ++dy)
        for (int64_t dx = 0; dx < 2; ++dx)
          CHECK(occ[(wy * 2 + dy) * 8 + wx * 2 + dx] == doctest::Approx(drop).epsilon(1e-9));
    }
}

TEST_CASE("integrated gradients completeness on a cnn") {
  Model m(make_cfg(Family::kCnn, 2, true, false, 16), 311);
  for (uint64_t s : {401u, 402u, 403u}) {
    std::vector<double> px = rand_image(16, s);
    int64_t t = static_cast<int64_t>(s % 4);
    auto ig = attribute(m, px, s, t, parse_method("ig(steps=128)"), SoftmaxMode::kPre, 1).map;

    double fx = predict(m, px, SoftmaxMode::kPre)[t];
    double f0 = predict(m, std::vector<double>(px.size(), 0.0), SoftmaxMode::kPre)[t];
    double target = fx - f0;
    CHECK(std::abs(map_sum(ig) - target) <= 1e-3 * std::max(1.0, std::abs(target)));
  }
}

TEST_CASE("wrappers: smoothgrad degenerate settings, abs, squared variant") {
  Model m(make_cfg(Family::kCnn, 2, true, false, 16), 321);
  std::vector<double> px = rand_image(16, 322);

  auto base = attribute(m, px, 5, 1, parse_method("ixg"), SoftmaxMode::kPre, 9).map;
  auto sg0 = attribute(m, px, 5, 1, parse_method("ixg_sg(n=1,sigma=0)"), SoftmaxMode::kPre, 9).map;
  for (size_t p = 0; p < base.size(); ++p) CHECK(sg0[p] == doctest::Approx(base[p]).epsilon(1e-12));

  auto sg = attribute(m, px, 5, 1, parse_method("ixg_sg(n=4)"), SoftmaxMode::kPre, 9).map;
  auto sg2 = attribute(m, px, 5, 1, parse_method("ixg_sg(n=4)"), SoftmaxMode::kPre, 9).map;
  CHECK(sg == sg2);  // keyed noise, not global state
  auto sg_other = attribute(m, px, 5, 1, parse_method("ixg_sg(n=4)"), SoftmaxMode::kPre, 10).map;
  CHECK(sg != sg_other);

  auto abs_map = attribute(m, px, 5, 1, parse_method("ixg_abs"), SoftmaxMode::kPre, 9).map;
  for (size_t p = 0; p < base.size(); ++p)
    CHECK(abs_map[p] == doctest::Approx(std::abs(base[p])).epsilon(1e-12));

  auto sq = attribute(m, px, 5, 1, parse_method("ig_sg_sq(n=2)"), SoftmaxMode::kPre, 9).map;
  for (double v : sq) CHECK(v >= 0.0);
}

TEST_CASE("cam_combine matches hand-computed values") {
  // two 2x2 channels
  std::vector<double> A = {1, 2, 3, 4, /*ch1*/ 2, 0, 0, 2};
  std::vector<double> G = {0.5, -0.5, 1, 0, /*ch1*/ 1, 1, -1, 0};

  auto gc = cam_combine(MethodSpec::Base::kGradCam, A, G, 2, 2, 2);
  std::vector<double> gc_want = {0.75, 0.5, 0.75, 1.5};
  for (int i = 0; i < 4; ++i) CHECK(gc[i] == doctest::Approx(gc_want[i]).epsilon(1e-12));

  auto xg = cam_combine(MethodSpec::Base::kXGradCam, A, G, 2, 2, 2);
  std::vector<double> xg_want = {1.25, 0.5, 0.75, 2.0};
  for (int i = 0; i < 4; ++i) CHECK(xg[i] == doctest::Approx(xg_want[i]).epsilon(1e-9));

  auto lc = cam_combine(MethodSpec::Base::kLayerCam, A, G, 2, 2, 2);
  std::vector<double> lc_want = {2.5, 0, 3, 0};
  for (int i = 0; i < 4; ++i) CHECK(lc[i] == doctest::Approx(lc_want[i]).epsilon(1e-12));

  auto pp = cam_combine(MethodSpec::Base::kGradCamPp, A, G, 2, 2, 2);
  // w0 = 1/14 + 1/12 = 13/84, w1 = 1/6 + 1/6 = 1/3
  std::vector<double> pp_want = {23.0 / 28, 13.0 / 42, 13.0 / 28, 9.0 / 7};
  for (int i = 0; i < 4; ++i) CHECK(pp[i] == doctest::Approx(pp_want[i]).epsilon(1e-9));

  // negative combinations clamp to zero
  std::vector<double> A1 = {1, 0, 0, 0}, G1 = {-1, -1, -1, -1};
  auto neg = cam_combine(MethodSpec::Base::kGradCam, A1, G1, 1, 2, 2);
  for (double v : neg) CHECK(v == 0.0);

  // xgrad-cam reduces to grad-cam when channels are constant with equal sums
  std::vector<double> Ac = {2, 2, 2, 2, 3, 3, 3, 3};  // constant per channel...
  std::vector<double> Gc = {0.1, 0.4, -0.2, 0.3, 0.2, 0.2, 0.2, 0.2};
  // ...but equal sums are required, so scale channel 1 to sum 8 as well
  for (int i = 4; i < 8; ++i) Ac[i] = 2.0;
  auto xg2 = cam_combine(MethodSpec::Base::kXGradCam, Ac, Gc, 2, 2, 2);
  auto gc2 = cam_combine(MethodSpec::Base::kGradCam, Ac, Gc, 2, 2, 2);
  for (int i = 0; i < 4; ++i) CHECK(xg2[i] == doctest::Approx(gc2[i]).epsilon(1e-9));
}

TEST_CASE("bilinear upsample, align_corners=false, 2x2 -> 4x4") {
  std::vector<double> src = {0, 1, 2, 3};
  auto up = bilinear_upsample(src.data(), 2, 2, 4, 4);
  std::vector<double> want = {0.0, 0.25, 0.75, 1.0,  0.5, 0.75, 1.25, 1.5,
                              1.5, 1.75, 2.25, 2.5,  2.0, 2.25, 2.75, 3.0};
  REQUIRE(up.size() == want.size());
  for (size_t i = 0; i < want.size(); ++i) CHECK(up[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // identity when sizes match
  auto same = bilinear_upsample(src.data(), 2, 2, 2, 2);
  CHECK(same == src);
}

TEST_CASE("cam methods end-to-end: shape, sign, warning on dead activations") {
  Model m(make_cfg(Family::kCnn, 2, true, true, 16), 331);
  std::vector<double> px = rand_image(16, 332);

  for (const char* name : {"grad_cam", "grad_cam_pp", "xgrad_cam", "layer_cam"}) {
    AttributionResult r = attribute(m, px, 7, 0, parse_method(name), SoftmaxMode::kPre, 3);
    CHECK(r.h == 16);
    CHECK(r.w == 16);
    REQUIRE(r.map.size() == 256);
    for (double v : r.map) CHECK(v >= 0.0);
  }

  // explicit layer selection works; bogus layer is rejected
  CHECK_NOTHROW(attribute(m, px, 7, 0, parse_method("grad_cam(layer=conv1)"),
                          SoftmaxMode::kPre, 3));
  CHECK_THROWS_AS(attribute(m, px, 7, 0, parse_method("grad_cam(layer=conv9)"),
                            SoftmaxMode::kPre, 3),
                  ConfigError);
  // no conv layers on an mlp
  Model mlp = linear_model(16, 4, 333);
  CHECK_THROWS_AS(attribute(mlp, px, 7, 0, parse_method("grad_cam"), SoftmaxMode::kPre, 3),
                  ConfigError);

  // a no-bias net on a zero image has all-zero activations -> flagged, zero map
  Model dead(make_cfg(Family::kCnn, 2, false, false, 16), 334);
  std::vector<double> zeros(3 * 16 * 16, 0.0);
  AttributionResult r = attribute(dead, zeros, 7, 0, parse_method("grad_cam"),
                                  SoftmaxMode::kPre, 3);
  CHECK(r.warning);
  for (double v : r.map) CHECK(v == 0.0);
}

TEST_CASE("rise: keep=1 gives the constant f_t map; draws are keyed") {
  Model m(make_cfg(Family::kCnn, 2, true, false, 16), 341);
  std::vector<double> px = rand_image(16, 342);
  int64_t t = 3;

  auto flat = attribute(m, px, 11, t, parse_method("rise(keep=1,masks=16)"),
                        SoftmaxMode::kPre, 5)
                  .map;
  double ft = predict(m, px, SoftmaxMode::kPre)[t];
  for (double v : flat) CHECK(v == doctest::Approx(ft).epsilon(1e-9));

  auto a = attribute(m, px, 11, t, parse_method("rise(masks=32)"), SoftmaxMode::kPre, 5).map;
  auto b = attribute(m, px, 11, t, parse_method("rise(masks=32)"), SoftmaxMode::kPre, 5).map;
  CHECK(a == b);
  auto c = attribute(m, px, 12, t, parse_method("rise(masks=32)"), SoftmaxMode::kPre, 5).map;
  CHECK(a != c);  // image id keys the mask stream
}

TEST_CASE("bagnet native maps sum to the logit exactly and stay block-constant") {
  Model m(make_cfg(Family::kBagnetLocal, 2, true, false, 16), 351);
  std::vector<double> px = rand_image(16, 352);
  int64_t t = 1;

  auto map = attribute(m, px, 13, t, parse_method("bagnet"), SoftmaxMode::kPre, 1).map;
  double ft = predict(m, px, SoftmaxMode::kPre)[t];
  CHECK(map_sum(map) == doctest::Approx(ft).epsilon(1e-9));

  // nearest upsample of the 8x8 location grid: constant within each 2x2 block
  for (int64_t by = 0; by < 8; ++by)
    for (int64_t bx = 0; bx < 8; ++bx) {
      double v = map[(by * 2) * 16 + bx * 2];
      CHECK(map[(by * 2) * 16 + bx * 2 + 1] == v);
      CHECK(map[(by * 2 + 1) * 16 + bx * 2] == v);
      CHECK(map[(by * 2 + 1) * 16 + bx * 2 + 1] == v);
    }

  Model cnn(make_cfg(Family::kCnn, 2, true, false, 16), 353);
  CHECK_THROWS_AS(attribute(cnn, px, 13, t, parse_method("bagnet"), SoftmaxMode::kPre, 1),
                  ConfigError);
}

TEST_CASE("occlusion window validation and patch-size default") {
  Model m(make_cfg(Family::kCnn, 1, true, false, 16), 361);
  std::vector<double> px = rand_image(16, 362);
  CHECK_THROWS_AS(attribute(m, px, 0, 0, parse_method("occlusion(window=32)"),
                            SoftmaxMode::kPre, 1),
                  ConfigError);
  // default window = side/4; just has to run and fill the full map
  auto map = attribute(m, px, 0, 0, parse_method("occlusion"), SoftmaxMode::kPre, 1).map;
  CHECK(map.size() == 256);
}

TEST_CASE("post-softmax gradients match finite differences") {
  Model m(make_cfg(Family::kCnn, 2, true, false, 8), 371);
  std::vector<double> px = rand_image(8, 372);
  int64_t t = 2;
  auto map = attribute(m, px, 0, t, parse_method("gradient"), SoftmaxMode::kPost, 1).map;

  RngStream pick(373);
  for (int trial = 0; trial < 4; ++trial) {
    int64_t p = static_cast<int64_t>(pick.uniform_int(64));
    double fd_sum = 0.0;
    for (int64_t c = 0; c < 3; ++c) {
      std::vector<double> hi = px, lo = px;
      hi[c * 64 + p] += 1e-5;
      lo[c * 64 + p] -= 1e-5;
      fd_sum += (predict(m, hi, SoftmaxMode::kPost)[t] - predict(m, lo, SoftmaxMode::kPost)[t]) /
                2e-5;
    }
    CHECK(std::abs(map[p] - fd_sum) < 1e-6);
  }
}

TEST_CASE("attribute validates the target and leaves the model untouched") {
  Model m(make_cfg(Family::kCnn, 1, true, false, 16), 381);
  std::vector<double> px = rand_image(16, 382);
  CHECK_THROWS_AS(attribute(m, px, 0, 99, parse_method("gradient"), SoftmaxMode::kPre, 1),
                  ConfigError);
  CHECK_THROWS_AS(attribute(m, px, 0, -1, parse_method("gradient"), SoftmaxMode::kPre, 1),
                  ConfigError);
  std::vector<double> short_px(8, 0.0);
  CHECK_THROWS_AS(attribute(m, short_px, 0, 0, parse_method("gradient"), SoftmaxMode::kPre, 1),
                  ShapeError);

  uint64_t before = model_weight_hash(m);
  attribute(m, px, 0, 0, parse_method("ig(steps=8)"), SoftmaxMode::kPre, 1);
  CHECK(model_weight_hash(m) == before);
  for (auto& p : m.parameters()) CHECK(p.requires_grad());  // freeze guard restored
}

TEST_CASE("random method is a keyed, target-independent null") {
  Model m(make_cfg(Family::kCnn, 1, true, false, 16), 391);
  std::vector<double> px = rand_image(16, 392);
  auto a = attribute(m, px, 21, 0, parse_method("random"), SoftmaxMode::kPre, 4).map;
  auto b = attribute(m, px, 21, 3, parse_method("random"), SoftmaxMode::kPre, 4).map;
  CHECK(a == b);  // ignores the target
  auto c = attribute(m, px, 22, 0, parse_method("random"), SoftmaxMode::kPre, 4).map;
  CHECK(a != c);  // but not the image id
}

TEST_CASE("export writes raw payload, metadata, and preview") {
  Model m(make_cfg(Family::kCnn, 1, true, false, 16), 395);
  std::vector<double> px = rand_image(16, 396);
  AttributionResult r = attribute(m, px, 1, 0, parse_method("ixg"), SoftmaxMode::kPre, 1);

  fs::path dir = fs::temp_directory_path() / "atb_attr_tests";
  fs::create_directories(dir);
  std::string prefix = (dir / "map").string();
  export_map(r, prefix);

  auto bin = read_file_bytes(prefix + ".bin");
  CHECK(bin.size() == r.map.size() * sizeof(double));
  std::vector<double> payload(r.map.size());
  std::memcpy(payload.data(), bin.data(), bin.size());
  CHECK(payload == r.map);

  auto meta = nlohmann::json::parse(read_file_text(prefix + ".json"));
  CHECK(meta["method"] == "ixg");
  CHECK(meta["height"] == 16);
  CHECK(meta["dtype"] == "f64-le");

  auto pgm = read_file_text(prefix + ".pgm");
  CHECK(pgm.substr(0, 2) == "P5");
}
