// Acceptance gate: twelve end-to-end criteria, one [PASS]/[FAIL] line each.
// Everything runs at desk scale (16x16 / 32x32 synthetic scenes) on a single
// core; tolerances are pinned in the checks themselves. Set ACCEPT_ONLY to a
// comma-separated list of criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "json.hpp"

#include "attrbench/attribution.hpp"
#include "attrbench/common.hpp"
#include "attrbench/data.hpp"
#include "attrbench/model.hpp"
#include "attrbench/patch.hpp"
#include "attrbench/protocols.hpp"
#include "attrbench/report.hpp"
#include "attrbench/serialize.hpp"
#include "attrbench/tensor.hpp"
#include "attrbench/train.hpp"

using namespace atb;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---- fixtures --------------------------------------------------------------

ModelConfig make_cfg(Family fam, int depth, bool bn, int64_t side, int classes = 8) {
  ModelConfig c;
  c.family = fam;
  c.depth = depth;
  c.width_multiplier = 1.0;
  c.use_bias = true;
  c.use_batchnorm = bn;
  c.num_classes = classes;
  c.in_c = 3;
  c.in_h = side;
  c.in_w = side;
  return c;
}

TrainConfig make_train(int epochs, double lr, int batch, uint64_t seed) {
  TrainConfig t;
  t.epochs = epochs;
  t.lr = lr;
  t.batch_size = batch;
  t.seed = seed;
  return t;
}

SyntheticBundle& bundle16() {
  static SyntheticBundle b = [] {
    SyntheticSpec spec;
    spec.height = 16;
    spec.width = 16;
    spec.num_classes = 8;
    spec.cells_per_side = 4;
    spec.distractor_density = 0.2;
    spec.noise_sigma = 0.05;
    spec.train_count = 384;
    spec.eval_count = 96;
    spec.seed = 9;
    return generate(spec);
  }();
  return b;
}

// Redundant evidence: every class shows its glyph in two fixed cells, so
// deleting the worst patch still leaves the class recoverable. That is the
// regime where alignment fine-tuning can matter at all; with single random
// evidence the worst deletion removes the only signal and no training helps.
SyntheticBundle& bundle32() {
  static SyntheticBundle b = [] {
    SyntheticSpec spec;
    spec.height = 32;
    spec.width = 32;
    spec.num_classes = 8;
    spec.cells_per_side = 4;
    spec.placements.resize(8);
    for (int k = 0; k < 8; ++k) {
      spec.placements[k].push_back({k, k, k % palette_size()});
      spec.placements[k].push_back({(k + 5) % 16, k, (k + 1) % palette_size()});
    }
    spec.distractor_density = 0.2;
    spec.noise_sigma = 0.05;
    spec.train_count = 512;
    spec.eval_count = 128;
    spec.seed = 7;
    return generate(spec);
  }();
  return b;
}

Dataset subset(const Dataset& ds, int64_t n) {
  Dataset out = ds;
  if (n < static_cast<int64_t>(out.images.size())) out.images.resize(n);
  return out;
}

struct TrainedPair {
  Model base;
  Model ft;
};

TrainedPair train_pair(const SyntheticBundle& b, const ModelConfig& mc, uint64_t init_seed,
                       const TrainConfig& pre, const TrainConfig& fine) {
  Model base(mc, init_seed);
  train(base, pre, b.train);
  Model ft = base.clone();
  PatchGrid grid(4, mc.in_h, mc.in_w);
  Baseline zero;
  TrainConfig fcfg = fine;
  fcfg.augmentation.kind = Augmentation::Kind::kPatchDelete;
  fcfg.augmentation.grid_side = 4;
  fcfg.augmentation.probability = 0.5;
  finetune_in_domain(ft, fcfg, b.train, grid, zero);
  return {std::move(base), std::move(ft)};
}

TrainedPair& cnn32() {
  static TrainedPair p = train_pair(bundle32(), make_cfg(Family::kCnn, 4, true, 32), 1,
                                    make_train(14, 0.02, 32, 3), make_train(4, 0.005, 32, 5));
  return p;
}

TrainedPair& cnn16() {
  static TrainedPair p = train_pair(bundle16(), make_cfg(Family::kCnn, 4, true, 16), 21,
                                    make_train(12, 0.02, 32, 3), make_train(3, 0.005, 32, 5));
  return p;
}

TrainedPair& bag16() {
  static TrainedPair p = train_pair(bundle16(), make_cfg(Family::kBagnetLocal, 2, false, 16), 31,
                                    make_train(12, 0.02, 32, 3), make_train(3, 0.005, 32, 5));
  return p;
}

// independent average-rank + Pearson oracle for criterion 2
double rank_pearson_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t p, size_t q) { return v[p] < v[q]; });
    std::vector<double> r(n, 0.0);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> ra = ranks(a), rb = ranks(b);
  double n = static_cast<double>(a.size());
  double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---- criteria --------------------------------------------------------------

// 1. linear no-bias model, zero baseline: I x G and IG score exactly 1
Outcome criterion1() {
  Clock::time_point t0 = Clock::now();
  Model m(make_cfg(Family::kMlp, 0, false, 16), 101);
  Dataset ds = subset(bundle16().train, 200);
  PatchGrid grid(4, 16, 16);
  Baseline zero;

  ProtocolReport ixg = idsds(m, ds, parse_method("ixg"), grid, zero, SoftmaxMode::kPre, 99);
  ProtocolReport ig =
      idsds(m, ds, parse_method("ig(steps=16)"), grid, zero, SoftmaxMode::kPre, 99);
  double el = seconds_since(t0);

  bool ok = std::abs(ixg.aggregate - 1.0) <= 1e-9 && std::abs(ig.aggregate - 1.0) <= 1e-9 &&
            ixg.degenerate_count == 0 && ig.degenerate_count == 0 && el < 60.0;
  return {ok, fmt("ixg=%.12f ig=%.12f images=%zu elapsed=%.1fs", ixg.aggregate, ig.aggregate,
                  ixg.records.size(), el)};
}

// 2. spearman vs closed form (ties-free) and vs an average-rank oracle (ties)
Outcome criterion2() {
  RngStream rng(202);
  double worst_free = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    int n = 32;
    std::vector<double> a(n), b(n);
    std::iota(a.begin(), a.end(), 0.0);
    std::iota(b.begin(), b.end(), 0.0);
    for (int i = n - 1; i > 0; --i) {
      std::swap(a[i], a[rng.uniform_int(static_cast<uint64_t>(i + 1))]);
      std::swap(b[i], b[rng.uniform_int(static_cast<uint64_t>(i + 1))]);
    }
    double sum_d2 = 0.0;
    for (int i = 0; i < n; ++i) sum_d2 += (a[i] - b[i]) * (a[i] - b[i]);
    double closed = 1.0 - 6.0 * sum_d2 / (n * (double(n) * n - 1.0));
    worst_free = std::max(worst_free, std::abs(spearman(a, b).r - closed));
  }

  double worst_tied = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    int n = 16;
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = std::round(rng.uniform(0.0, 5.0));  // coarse values force ties
      b[i] = std::round(rng.uniform(0.0, 5.0));
    }
    bool const_a = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; });
    bool const_b = std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
    if (const_a || const_b) continue;  // degenerate by contract, scored 0
    worst_tied = std::max(worst_tied, std::abs(spearman(a, b).r - rank_pearson_oracle(a, b)));
  }

  bool ok = worst_free <= 1e-12 && worst_tied <= 1e-12;
  return {ok, fmt("max|err| ties-free=%.2e tied=%.2e", worst_free, worst_tied)};
}

// 3. integrated gradients completeness on the toy CNN. The midpoint rule at a
// fixed 128 steps keeps the gap under 1e-3 on the one-block CNN; deeper stacks
// need more steps for the same bound (quadrature error, not bias: the sum
// converges to the exact difference as steps grow).
Outcome criterion3() {
  Model m(make_cfg(Family::kCnn, 1, true, 16), 103);
  RngStream rng(104);
  MethodSpec ig = parse_method("ig(steps=128)");
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> px(3 * 16 * 16);
    for (auto& v : px) v = rng.uniform(-1.0, 1.0);
    int64_t t = i % 8;
    auto map = attribute(m, px, i, t, ig, SoftmaxMode::kPre, 1).map;
    double sum = std::accumulate(map.begin(), map.end(), 0.0);
    double delta = predict(m, px, SoftmaxMode::kPre)[t] -
                   predict(m, std::vector<double>(px.size(), 0.0), SoftmaxMode::kPre)[t];
    worst = std::max(worst, std::abs(sum - delta) / std::max(1.0, std::abs(delta)));
  }
  return {worst <= 1e-3, fmt("max relative gap %.2e over 50 images", worst)};
}

// 4. autodiff input gradients vs central finite differences, all families
Outcome criterion4() {
  double worst = 0.0;
  std::string worst_family = "-";
  for (auto fam : {Family::kMlp, Family::kCnn, Family::kBagnetLocal}) {
    ModelConfig mc = make_cfg(fam, 2, fam == Family::kCnn, 16);
    Model m(mc, 105 + static_cast<int>(fam));
    RngStream rng(205 + static_cast<uint64_t>(fam));
    std::vector<double> px(3 * 16 * 16);
    for (auto& v : px) v = rng.uniform(-1.0, 1.0);
    int64_t t = 1;

    Tensor x({1, 3, 16, 16}, px, true);
    Tensor y = select(m.forward(x, BatchNormMode::kEval), 0, t);
    backward(y);
    std::vector<double> ad = x.grad();
    double gmax = 0.0;
    for (double v : ad) gmax = std::max(gmax, std::abs(v));

    for (int trial = 0; trial < 100; ++trial) {
      size_t i = static_cast<size_t>(rng.uniform_int(px.size()));
      double eps = 1e-4 * std::max(1.0, std::abs(px[i]));
      std::vector<double> hi = px, lo = px;
      hi[i] += eps;
      lo[i] -= eps;
      double fd =
          (predict(m, hi, SoftmaxMode::kPre)[t] - predict(m, lo, SoftmaxMode::kPre)[t]) / (2 * eps);
      double rel = std::abs(ad[i] - fd) / std::max(std::abs(fd), 1e-3 * gmax);
      if (rel > worst) {
        worst = rel;
        worst_family = family_name(fam);
      }
    }
  }
  return {worst <= 1e-4, fmt("max rel err %.2e (%s), 100 coords/family", worst,
                             worst_family.c_str())};
}

// 5. augmentation masks carry no class information; a planted leak is caught
Outcome criterion5() {
  std::vector<int64_t> labels(8);
  std::iota(labels.begin(), labels.end(), 0);

  auto trainer_draw = [](int64_t, uint64_t d) {
    return augmentation_draw(2024, static_cast<int>(d % 6), static_cast<int64_t>(d), 0.5, 16);
  };
  double clean = leakage_audit(trainer_draw, labels, 100000, 8, 16);

  auto planted = [](int64_t label, uint64_t d) {
    return d % 2 == 0 ? static_cast<int>(label % 16) + 1 : 0;
  };
  double leaky = leakage_audit(planted, labels, 100000, 8, 16);

  bool ok = clean <= 0.01 && leaky > 0.5;
  return {ok, fmt("trainer MI %.5f nats, planted MI %.3f nats", clean, leaky)};
}

// 6. patch-deletion fine-tuning repairs worst-case corrupted accuracy
Outcome criterion6() {
  Clock::time_point t0 = Clock::now();
  TrainedPair& p = cnn32();
  PatchGrid grid(4, 32, 32);
  Baseline zero;
  CorruptedAccuracy base = corrupted_accuracy(p.base, bundle32().eval, grid, zero, 55);
  CorruptedAccuracy ft = corrupted_accuracy(p.ft, bundle32().eval, grid, zero, 55);
  double el = seconds_since(t0);

  double worst_gain = ft.worst_patch - base.worst_patch;
  double clean_shift = std::abs(ft.uncorrupted - base.uncorrupted);
  bool ok = worst_gain >= 0.03 && clean_shift <= 0.05 && el < 900.0;
  return {ok, fmt("worst %.3f->%.3f (gain %+.3f), clean %.3f->%.3f (shift %.3f), %.0fs",
                  base.worst_patch, ft.worst_patch, worst_gain, base.uncorrupted, ft.uncorrupted,
                  clean_shift, el)};
}

// 7. the intrinsically explainable model dominates every post-hoc method
Outcome criterion7() {
  Dataset ev = subset(bundle16().eval, 64);
  PatchGrid grid(4, 16, 16);
  Baseline zero;

  double bag_score = idsds(bag16().ft, ev, parse_method("bagnet"), grid, zero, SoftmaxMode::kPre,
                           99)
                         .aggregate;

  double best = -2.0;
  std::string best_name = "-";
  for (const auto& name : default_roster(Family::kCnn)) {
    double s = idsds(cnn16().ft, ev, parse_method(name), grid, zero, SoftmaxMode::kPre, 99)
                   .aggregate;
    if (s > best) {
      best = s;
      best_name = name;
    }
  }
  bool ok = bag_score >= 0.9 && bag_score - best >= 0.15;
  return {ok, fmt("bagnet %.3f on own model; best post-hoc on cnn %s=%.3f (margin %.3f)",
                  bag_score, best_name.c_str(), best, bag_score - best)};
}

// Stability fixture: one color for every class, so class identity lives in
// glyph shape alone. A Gaussian-blur deletion then removes real evidence;
// with color-coded classes the blurred patch keeps the color and the blur
// baseline stops deleting anything.
SyntheticBundle& bundle_shape() {
  static SyntheticBundle b = [] {
    SyntheticSpec spec;
    spec.height = 16;
    spec.width = 16;
    spec.num_classes = 8;
    spec.cells_per_side = 4;
    spec.placements.resize(8);
    for (int k = 0; k < 8; ++k) spec.placements[k].push_back({-1, k, 0});
    spec.distractor_density = 0.2;
    spec.noise_sigma = 0.05;
    spec.train_count = 384;
    spec.eval_count = 96;
    spec.seed = 15;
    return generate(spec);
  }();
  return b;
}

// shared stability run for criteria 8 and 9
const StabilityReport& stability_run() {
  static Dataset ev = bundle_shape().eval;
  static StabilityReport rep = [] {
    StabilityConfig cfg;
    cfg.model = make_cfg(Family::kCnn, 2, true, 16);
    cfg.pretrain = make_train(14, 0.02, 32, 0);
    cfg.finetune = make_train(4, 0.005, 32, 0);
    cfg.train = &bundle_shape().train;
    cfg.eval = &ev;
    cfg.roster = {"saliency",      "ixg",       "ixg_abs",   "ixg_sg(n=8)",
                  "ig(steps=24)",  "ig_abs(steps=24)",       "grad_cam",
                  "grad_cam_pp",   "xgrad_cam", "layer_cam", "rise(masks=300)",
                  "random"};
    cfg.seeds = {3, 4};
    cfg.grid_sides = {4};
    cfg.baselines = {parse_baseline("zero"), parse_baseline("random_uniform"),
                     parse_baseline("gaussian_blur")};
    cfg.eval_seed = 99;
    return stability_suite(cfg);
  }();
  return rep;
}

// 8. method ranking is stable across training seeds
Outcome criterion8() {
  const StabilityReport& rep = stability_run();
  const StabilityAxis* seed_axis = nullptr;
  for (const auto& ax : rep.axes)
    if (ax.axis == "seed") seed_axis = &ax;
  if (!seed_axis || rep.roster.size() < 10) return {false, "seed axis missing or roster < 10"};
  double corr = seed_axis->rank_corr[0][1];
  return {corr >= 0.9, fmt("rank corr %.4f across 2 seeds, %zu methods", corr,
                           rep.roster.size())};
}

// 9. method ranking is stable across deletion baselines
Outcome criterion9() {
  const StabilityReport& rep = stability_run();
  const StabilityAxis* ax = nullptr;
  for (const auto& a : rep.axes)
    if (a.axis == "baseline") ax = &a;
  if (!ax) return {false, "baseline axis missing"};
  double zero_rand = ax->rank_corr[0][1];
  double zero_blur = ax->rank_corr[0][2];
  bool ok = zero_rand >= 0.8 && zero_blur >= 0.8;
  return {ok, fmt("zero-vs-random %.4f, zero-vs-blur %.4f", zero_rand, zero_blur)};
}

// 10. incremental deletion: exact-drop ordering beats random; both modes run
Outcome criterion10() {
  Dataset ev = subset(bundle16().eval, 32);
  PatchGrid grid(4, 16, 16);
  Baseline zero;
  Model& m = bag16().ft;

  AttributionFn fn = make_oracle_fn(grid, zero, SoftmaxMode::kPre);
  double oracle = ids_with_fn(m, ev, "oracle", fn, &grid, zero, 8, IdsMode::kFixed,
                              SoftmaxMode::kPre, 3)
                      .aggregate;
  double rnd = ids(m, ev, parse_method("random"), &grid, zero, 8, IdsMode::kFixed,
                   SoftmaxMode::kPre, 3)
                   .aggregate;

  std::printf("       ids comparison (32 images, 8 steps, bagnet_local)\n");
  std::printf("       %-12s %8s %8s\n", "method", "fixed", "updated");
  bool table_ok = true;
  for (const char* name : {"ixg", "grad_cam"}) {
    double fx = ids(m, ev, parse_method(name), &grid, zero, 8, IdsMode::kFixed, SoftmaxMode::kPre,
                    3)
                    .aggregate;
    double up = ids(m, ev, parse_method(name), &grid, zero, 8, IdsMode::kUpdated,
                    SoftmaxMode::kPre, 3)
                    .aggregate;
    table_ok = table_ok && std::isfinite(fx) && std::isfinite(up);
    std::printf("       %-12s %8.3f %8.3f\n", name, fx, up);
  }
  bool ok = (oracle - rnd) >= 0.1 && table_ok;
  return {ok, fmt("oracle %.3f vs random %.3f (margin %.3f)", oracle, rnd, oracle - rnd)};
}

// 11. two full tool invocations produce byte-identical artifacts
Outcome criterion11() {
  fs::path root = fs::temp_directory_path() / "atb_accept_repro";
  fs::remove_all(root);

  auto run_pipeline = [&](const std::string& name) -> bool {
    fs::path d = root / name;
    fs::create_directories(d);
    nlohmann::json cfg;
    cfg["schema_version"] = 1;
    cfg["data"] = {{"dir", "data/synth"},  {"height", 16},    {"width", 16},
                   {"classes", 4},         {"cells_per_side", 4},
                   {"train_count", 60},    {"eval_count", 16},
                   {"distractor_density", 0.05},              {"noise_sigma", 0.02},
                   {"seed", 7}};
    cfg["model"] = {{"family", "cnn"}, {"depth", 1}, {"init_seed", 1}};
    cfg["train"] = {{"epochs", 1}, {"lr", 0.02}, {"batch_size", 16}, {"seed", 3}};
    cfg["methods"] = nlohmann::json::array({"gradient", "ixg", "grad_cam"});
    cfg["eval"] = {{"images", 8}};
    write_file_text((d / "cfg.json").string(), cfg.dump(2) + "\n");
    std::string cmd = "cd '" + d.string() + "' && '" + ATTRBENCH_BIN +
                      "' -c cfg.json gen-data > log.txt 2>&1 && '" + ATTRBENCH_BIN +
                      "' -c cfg.json train >> log.txt 2>&1 && '" + ATTRBENCH_BIN +
                      "' -c cfg.json eval >> log.txt 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) && WEXITSTATUS(status) == 0;
  };

  if (!run_pipeline("a") || !run_pipeline("b")) return {false, "pipeline invocation failed"};

  bool all_equal = true;
  std::string diff = "none";
  for (const char* f : {"report.json", "ranking.csv", "plot.svg"}) {
    std::string fa = read_file_text((root / "a/runs/run" / f).string());
    std::string fb = read_file_text((root / "b/runs/run" / f).string());
    if (fa != fb) {
      all_equal = false;
      diff = f;
    }
  }
  return {all_equal, fmt("report.json/ranking.csv/plot.svg byte-compared, first diff: %s",
                         diff.c_str())};
}

// 12. best-method idsds does not grow with depth
Outcome criterion12() {
  std::vector<int> depths = {2, 4, 6, 8};
  std::vector<uint64_t> seeds = {11, 12, 13};
  std::vector<std::string> roster = {"saliency", "ixg", "grad_cam", "layer_cam"};
  Dataset ev = subset(bundle16().eval, 48);
  PatchGrid grid(4, 16, 16);
  Baseline zero;

  std::vector<double> best_by_depth;
  for (int d : depths) {
    std::vector<double> method_mean(roster.size(), 0.0);
    for (uint64_t s : seeds) {
      TrainedPair p = train_pair(bundle16(), make_cfg(Family::kCnn, d, true, 16), 40 + s,
                                 make_train(8, 0.02, 32, s), make_train(2, 0.005, 32, s + 1));
      for (size_t mi = 0; mi < roster.size(); ++mi) {
        method_mean[mi] += idsds(p.ft, ev, parse_method(roster[mi]), grid, zero,
                                 SoftmaxMode::kPre, 99)
                               .aggregate;
      }
    }
    for (auto& v : method_mean) v /= static_cast<double>(seeds.size());
    best_by_depth.push_back(*std::max_element(method_mean.begin(), method_mean.end()));
  }

  int inversions = 0;
  double worst_inv = 0.0;
  for (size_t i = 0; i + 1 < best_by_depth.size(); ++i) {
    double rise = best_by_depth[i + 1] - best_by_depth[i];
    if (rise > 1e-12) {
      ++inversions;
      worst_inv = std::max(worst_inv, rise);
    }
  }
  bool ok = inversions <= 1 && worst_inv <= 0.02;
  return {ok, fmt("best idsds by depth {2,4,6,8} = %.3f %.3f %.3f %.3f; inversions %d (max %+.3f)",
                  best_by_depth[0], best_by_depth[1], best_by_depth[2], best_by_depth[3],
                  inversions, worst_inv)};
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "single-deletion exactness oracle", criterion1},
      {2, "rank correlation oracle", criterion2},
      {3, "integrated-gradients completeness", criterion3},
      {4, "gradient fidelity vs finite differences", criterion4},
      {5, "augmentation leakage audit", criterion5},
      {6, "fine-tuning repairs corrupted accuracy", criterion6},
      {7, "intrinsic model dominance", criterion7},
      {8, "seed stability of method ranking", criterion8},
      {9, "baseline stability of method ranking", criterion9},
      {10, "incremental deletion sanity", criterion10},
      {11, "byte-identical reruns", criterion11},
      {12, "depth direction", criterion12},
  };

  std::vector<int> only;
  if (const char* env = std::getenv("ACCEPT_ONLY")) {
    std::string s = env;
    size_t pos = 0;
    while (pos < s.size()) {
      size_t comma = s.find(',', pos);
      only.push_back(std::atoi(s.substr(pos, comma - pos).c_str()));
      pos = comma == std::string::npos ? s.size() : comma + 1;
    }
  }

  int failures = 0;
  for (const auto& e : entries) {
    if (!only.empty() && std::find(only.begin(), only.end(), e.id) == only.end()) continue;
    Clock::time_point t0 = Clock::now();
    Outcome out;
    try {
      out = e.fn();
    } catch (const std::exception& ex) {
      out = {false, std::string("exception: ") + ex.what()};
    }
    if (!out.ok) ++failures;
    std::printf("[%s] %02d %-42s %s (%.1fs)\n", out.ok ? "PASS" : "FAIL", e.id, e.name,
                out.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
