#include "attrbench/protocols.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "attrbench/common.hpp"

namespace atb {

namespace {

using json = nlohmann::json;

// Per-image jobs with private model clones (attribute() toggles grad flags on
// the model it is handed, so threads must not share one). First exception wins
// and is rethrown after the region.
template <typename Body>
void for_each_image(Model& model, int64_t n, const Body& body) {
  std::exception_ptr eptr = nullptr;
  std::atomic<bool> failed{false};
#pragma omp parallel
  {
    Model local = model.clone();
#pragma omp for schedule(dynamic)
    for (int64_t i = 0; i < n; ++i) {
      if (failed.load(std::memory_order_relaxed)) continue;
      try {
        body(local, i);
      } catch (...) {
#pragma omp critical(atb_for_each_image)
        {
          if (!failed.exchange(true)) eptr = std::current_exception();
        }
      }
    }
  }
  if (eptr) std::rethrow_exception(eptr);
}

double forward_value(Model& model, const std::vector<double>& px, int64_t t, SoftmaxMode mode) {
  NoGradGuard ng;
  const auto& cfg = model.config();
  Tensor x({1, cfg.in_c, cfg.in_h, cfg.in_w}, px);
  Tensor logits = model.forward(x, BatchNormMode::kEval);
  if (mode == SoftmaxMode::kPost) logits = softmax(logits);
  return logits.data()[t];
}

// full logits for many variants of one image, batched
std::vector<double> batched_logits(Model& model, const std::vector<std::vector<double>>& rows) {
  NoGradGuard ng;
  const auto& cfg = model.config();
  int64_t px = cfg.in_c * cfg.in_h * cfg.in_w;
  int64_t k = cfg.num_classes;
  constexpr int64_t kChunk = 16;
  std::vector<double> out(rows.size() * static_cast<size_t>(k));
  for (size_t start = 0; start < rows.size(); start += kChunk) {
    int64_t bsz = std::min<int64_t>(kChunk, static_cast<int64_t>(rows.size() - start));
    std::vector<double> batch(static_cast<size_t>(bsz * px));
    for (int64_t b = 0; b < bsz; ++b)
      std::copy(rows[start + b].begin(), rows[start + b].end(), batch.begin() + b * px);
    Tensor x({bsz, cfg.in_c, cfg.in_h, cfg.in_w}, std::move(batch));
    Tensor logits = model.forward(x, BatchNormMode::kEval);
    std::copy(logits.data().begin(), logits.data().end(),
              out.begin() + static_cast<int64_t>(start) * k);
  }
  return out;
}

std::vector<double> softmax_row(const double* logits, int64_t k) {
  double mx = logits[0];
  for (int64_t j = 1; j < k; ++j) mx = std::max(mx, logits[j]);
  double z = 0.0;
  std::vector<double> p(static_cast<size_t>(k));
  for (int64_t j = 0; j < k; ++j) {
    p[j] = std::exp(logits[j] - mx);
    z += p[j];
  }
  for (auto& v : p) v /= z;
  return p;
}

std::vector<double> patch_sums(const std::vector<double>& map, const PatchGrid& grid) {
  std::vector<double> sums(static_cast<size_t>(grid.patch_count()), 0.0);
  for (int m = 1; m <= grid.patch_count(); ++m) {
    int64_t y0, y1, x0, x1;
    grid.bounds(m, y0, y1, x0, x1);
    double acc = 0.0;
    for (int64_t y = y0; y < y1; ++y)
      for (int64_t x = x0; x < x1; ++x) acc += map[y * grid.w + x];
    sums[m - 1] = acc;
  }
  return sums;
}

void check_grid(const Dataset& ds, const PatchGrid& grid) {
  if (grid.h != ds.h || grid.w != ds.w) {
    throw ConfigError("protocol: grid is " + std::to_string(grid.h) + "x" + std::to_string(grid.w) +
                      ", dataset images are " + std::to_string(ds.h) + "x" + std::to_string(ds.w));
  }
}

std::string fingerprint(const Model& model, const std::string& protocol, const std::string& method,
                        const PatchGrid* grid, const Baseline& baseline, SoftmaxMode mode,
                        uint64_t seed, json extra = json::object()) {
  json j;
  j["protocol"] = protocol;
  j["method"] = method;
  if (grid) j["grid_side"] = grid->side;
  j["baseline"] = baseline.describe();
  j["softmax_mode"] = mode == SoftmaxMode::kPost ? "post" : "pre";
  j["seed"] = seed;
  j["model_weight_hash"] = hex64(model_weight_hash(model));
  for (auto& [k, v] : extra.items()) j[k] = v;
  return j.dump();
}

std::vector<double> rankify(const std::vector<double>& v) {
  int64_t n = static_cast<int64_t>(v.size());
  std::vector<int64_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;  // ranks 1..n
    for (int64_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ConfigError("spearman: length mismatch, " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  }
  if (a.size() < 2) throw ConfigError("spearman: need at least 2 values");
  for (double v : a)
    if (!std::isfinite(v)) throw NumericFault("spearman: non-finite value in first argument");
  for (double v : b)
    if (!std::isfinite(v)) throw NumericFault("spearman: non-finite value in second argument");

  std::vector<double> ra = rankify(a), rb = rankify(b);
  int64_t n = static_cast<int64_t>(a.size());
  double mean = (static_cast<double>(n) + 1.0) / 2.0;  // rank mean is exact
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double da = ra[i] - mean, db = rb[i] - mean;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) return {0.0, true};
  return {cov / std::sqrt(va * vb), false};
}

ProtocolReport idsds(Model& model, const Dataset& ds, const MethodSpec& method,
                     const PatchGrid& grid, const Baseline& baseline, SoftmaxMode mode,
                     uint64_t seed, const std::string& label) {
  check_grid(ds, grid);
  if (ds.images.empty()) throw ConfigError("idsds: dataset is empty");
  int64_t n = static_cast<int64_t>(ds.images.size());
  int p = grid.patch_count();

  ProtocolReport report;
  report.protocol = label;
  report.method = method.id;
  report.records.resize(n);
  report.fingerprint_json = fingerprint(model, label, method.id, &grid, baseline, mode, seed);

  for_each_image(model, n, [&](Model& local, int64_t i) {
    const LabeledImage& im = ds.images[i];
    AttributionResult att = attribute(local, im.pixels, im.id, im.label, method, mode, seed);

    double f0 = forward_value(local, im.pixels, im.label, mode);
    std::vector<std::vector<double>> rows;
    rows.reserve(p);
    for (int m = 1; m <= p; ++m)
      rows.push_back(delete_patch(im.pixels, ds.c, grid, m, baseline, im.id));
    std::vector<double> logits = batched_logits(local, rows);

    ImageRecord rec;
    rec.image_id = im.id;
    rec.patch_attr = patch_sums(att.map, grid);
    rec.patch_drop.resize(p);
    int64_t k = local.config().num_classes;
    for (int m = 0; m < p; ++m) {
      double fm = mode == SoftmaxMode::kPost ? softmax_row(logits.data() + m * k, k)[im.label]
                                             : logits[m * k + im.label];
      rec.patch_drop[m] = f0 - fm;
    }
    SpearmanResult sr = spearman(rec.patch_attr, rec.patch_drop);
    rec.r = sr.r;
    rec.degenerate = sr.degenerate;
    report.records[i] = std::move(rec);
  });

  double acc = 0.0;
  for (const auto& rec : report.records) {
    acc += rec.r;
    report.degenerate_count += rec.degenerate ? 1 : 0;
  }
  report.aggregate = acc / static_cast<double>(n);
  return report;
}

std::vector<double> oracle_attribution_map(Model& model, const std::vector<double>& pixels,
                                           int64_t image_id, int64_t target,
                                           const PatchGrid& grid, const Baseline& baseline,
                                           SoftmaxMode mode) {
  const auto& cfg = model.config();
  double f0 = forward_value(model, pixels, target, mode);
  std::vector<std::vector<double>> rows;
  for (int m = 1; m <= grid.patch_count(); ++m)
    rows.push_back(delete_patch(pixels, cfg.in_c, grid, m, baseline, image_id));
  std::vector<double> logits = batched_logits(model, rows);
  int64_t k = cfg.num_classes;

  std::vector<double> map(static_cast<size_t>(grid.h * grid.w));
  double inv_px = 1.0 / static_cast<double>(grid.patch_h() * grid.patch_w());
  for (int m = 1; m <= grid.patch_count(); ++m) {
    double fm = mode == SoftmaxMode::kPost
                    ? softmax_row(logits.data() + (m - 1) * k, k)[target]
                    : logits[(m - 1) * k + target];
    double drop = f0 - fm;
    int64_t y0, y1, x0, x1;
    grid.bounds(m, y0, y1, x0, x1);
    for (int64_t y = y0; y < y1; ++y)
      for (int64_t x = x0; x < x1; ++x) map[y * grid.w + x] = drop * inv_px;
  }
  return map;
}

AttributionFn make_oracle_fn(const PatchGrid& grid, const Baseline& baseline, SoftmaxMode mode) {
  return [grid, baseline, mode](Model& m, const std::vector<double>& px, int64_t image_id,
                                int64_t target) {
    return oracle_attribution_map(m, px, image_id, target, grid, baseline, mode);
  };
}

ProtocolReport ids_with_fn(Model& model, const Dataset& ds, const std::string& method_label,
                           const AttributionFn& fn, const PatchGrid* grid,
                           const Baseline& baseline, int steps, IdsMode ids_mode, SoftmaxMode mode,
                           uint64_t seed) {
  if (ds.images.empty()) throw ConfigError("ids: dataset is empty");
  if (steps < 2) throw ConfigError("ids: steps must be >= 2, got " + std::to_string(steps));
  int64_t hw = ds.h * ds.w;
  if (!grid && steps > hw) {
    throw ConfigError("ids: " + std::to_string(steps) + " steps exceed " + std::to_string(hw) +
                      " pixels");
  }
  if (grid) {
    check_grid(ds, *grid);
    if (steps > grid->patch_count()) {
      throw ConfigError("ids: " + std::to_string(steps) + " steps exceed " +
                        std::to_string(grid->patch_count()) + " patches");
    }
  }
  int64_t n = static_cast<int64_t>(ds.images.size());

  ProtocolReport report;
  report.protocol = ids_mode == IdsMode::kFixed ? "ids_fixed" : "ids_updated";
  report.method = method_label;
  report.records.resize(n);
  report.fingerprint_json =
      fingerprint(model, report.protocol, method_label, grid, baseline, mode, seed,
                  json{{"steps", steps}, {"unit", grid ? "patch" : "pixel"}});

  for_each_image(model, n, [&](Model& local, int64_t i) {
    const LabeledImage& im = ds.images[i];
    const auto& cfg = local.config();
    std::vector<double> base = baseline_image(im.pixels, cfg.in_c, ds.h, ds.w, baseline, im.id);

    double f0 = forward_value(local, im.pixels, im.label, mode);
    double fb = forward_value(local, base, im.label, mode);
    double denom = f0 - fb;

    ImageRecord rec;
    rec.image_id = im.id;
    if (std::abs(denom) < 1e-9) {
      rec.degenerate = true;
      rec.r = 0.0;
      report.records[i] = std::move(rec);
      return;
    }

    // deletion units: flat spatial pixels, or whole patches when grid given
    int64_t units = grid ? grid->patch_count() : hw;
    int64_t chunk = (units + steps - 1) / steps;

    auto unit_scores = [&](const std::vector<double>& map) {
      // per-unit attribution values: pixel value or patch sum
      if (!grid) return map;
      return patch_sums(map, *grid);
    };
    auto delete_unit = [&](std::vector<double>& px, int64_t unit) {
      if (grid) {
        int64_t y0, y1, x0, x1;
        grid->bounds(static_cast<int>(unit) + 1, y0, y1, x0, x1);
        for (int64_t ch = 0; ch < cfg.in_c; ++ch)
          for (int64_t y = y0; y < y1; ++y)
            for (int64_t x = x0; x < x1; ++x)
              px[(ch * ds.h + y) * ds.w + x] = base[(ch * ds.h + y) * ds.w + x];
      } else {
        for (int64_t ch = 0; ch < cfg.in_c; ++ch) px[ch * hw + unit] = base[ch * hw + unit];
      }
    };
    auto order_desc = [](const std::vector<double>& vals, std::vector<int64_t>& idx) {
      std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
        if (vals[a] != vals[b]) return vals[a] > vals[b];
        return a < b;
      });
    };

    std::vector<double> cur = im.pixels;
    double score_acc = 0.0;
    if (ids_mode == IdsMode::kFixed) {
      std::vector<double> vals = unit_scores(fn(local, im.pixels, im.id, im.label));
      std::vector<int64_t> idx(units);
      std::iota(idx.begin(), idx.end(), 0);
      order_desc(vals, idx);
      std::vector<std::vector<double>> rows;
      rows.reserve(steps);
      for (int s = 0; s < steps; ++s) {
        int64_t from = static_cast<int64_t>(s) * chunk;
        int64_t to = std::min<int64_t>(from + chunk, units);
        for (int64_t u = from; u < to; ++u) delete_unit(cur, idx[u]);
        rows.push_back(cur);
      }
      std::vector<double> logits = batched_logits(local, rows);
      int64_t k = cfg.num_classes;
      for (int s = 0; s < steps; ++s) {
        double fs = mode == SoftmaxMode::kPost ? softmax_row(logits.data() + s * k, k)[im.label]
                                               : logits[s * k + im.label];
        score_acc += std::clamp((f0 - fs) / denom, -1.0, 2.0);
      }
    } else {
      std::vector<char> deleted(static_cast<size_t>(units), 0);
      int64_t left = units;
      for (int s = 0; s < steps; ++s) {
        int64_t take = std::min<int64_t>(chunk, left);
        if (take > 0) {
          std::vector<double> vals = unit_scores(fn(local, cur, im.id, im.label));
          std::vector<int64_t> idx;
          idx.reserve(left);
          for (int64_t u = 0; u < units; ++u)
            if (!deleted[u]) idx.push_back(u);
          order_desc(vals, idx);
          for (int64_t u = 0; u < take; ++u) {
            delete_unit(cur, idx[u]);
            deleted[idx[u]] = 1;
          }
          left -= take;
        }
        double fs = forward_value(local, cur, im.label, mode);
        score_acc += std::clamp((f0 - fs) / denom, -1.0, 2.0);
      }
    }
    rec.r = score_acc / static_cast<double>(steps);
    report.records[i] = std::move(rec);
  });

  double acc = 0.0;
  for (const auto& rec : report.records) {
    acc += rec.r;
    report.degenerate_count += rec.degenerate ? 1 : 0;
  }
  report.aggregate = acc / static_cast<double>(n);
  return report;
}

ProtocolReport ids(Model& model, const Dataset& ds, const MethodSpec& method,
                   const PatchGrid* grid, const Baseline& baseline, int steps, IdsMode ids_mode,
                   SoftmaxMode mode, uint64_t seed) {
  AttributionFn fn = [&method, mode, seed](Model& m, const std::vector<double>& px,
                                           int64_t image_id, int64_t target) {
    return attribute(m, px, image_id, target, method, mode, seed).map;
  };
  return ids_with_fn(model, ds, method.id, fn, grid, baseline, steps, ids_mode, mode, seed);
}

CorruptedAccuracy corrupted_accuracy(Model& model, const Dataset& ds, const PatchGrid& grid,
                                     const Baseline& baseline, uint64_t seed) {
  check_grid(ds, grid);
  if (ds.images.empty()) throw ConfigError("corrupted_accuracy: dataset is empty");
  int64_t n = static_cast<int64_t>(ds.images.size());
  int p = grid.patch_count();
  int64_t k = model.config().num_classes;

  std::vector<int> unc(n, 0), worst(n, 0), rnd(n, 0);
  for_each_image(model, n, [&](Model& local, int64_t i) {
    const LabeledImage& im = ds.images[i];
    std::vector<double> clean = predict(local, im.pixels, SoftmaxMode::kPre);
    int64_t pred = 0;
    for (int64_t j = 1; j < k; ++j)
      if (clean[j] > clean[pred]) pred = j;
    unc[i] = pred == im.label ? 1 : 0;

    std::vector<std::vector<double>> rows;
    rows.reserve(p);
    for (int m = 1; m <= p; ++m)
      rows.push_back(delete_patch(im.pixels, ds.c, grid, m, baseline, im.id));
    std::vector<double> logits = batched_logits(local, rows);

    int worst_m = 0;
    double worst_prob = 2.0;
    for (int m = 0; m < p; ++m) {
      double prob = softmax_row(logits.data() + m * k, k)[im.label];
      if (prob < worst_prob) {
        worst_prob = prob;
        worst_m = m;
      }
    }
    auto argmax_row = [&](int m) {
      const double* row = logits.data() + m * k;
      int64_t a = 0;
      for (int64_t j = 1; j < k; ++j)
        if (row[j] > row[a]) a = j;
      return a;
    };
    worst[i] = argmax_row(worst_m) == im.label ? 1 : 0;

    RngStream rng(mix_seed({seed, 0x72706174u, static_cast<uint64_t>(im.id)}));
    int random_m = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(p)));
    rnd[i] = argmax_row(random_m) == im.label ? 1 : 0;
  });

  CorruptedAccuracy out;
  for (int64_t i = 0; i < n; ++i) {
    out.uncorrupted += unc[i];
    out.worst_patch += worst[i];
    out.random_patch += rnd[i];
  }
  out.uncorrupted /= static_cast<double>(n);
  out.worst_patch /= static_cast<double>(n);
  out.random_patch /= static_cast<double>(n);
  return out;
}

double leakage_audit(const std::function<int(int64_t label, uint64_t draw)>& sampler,
                     const std::vector<int64_t>& labels, int64_t draws, int num_classes,
                     int patch_count) {
  if (labels.empty()) throw ConfigError("leakage_audit: label pool is empty");
  if (draws < 1) throw ConfigError("leakage_audit: draws must be >= 1");
  if (num_classes < 1 || patch_count < 1)
    throw ConfigError("leakage_audit: class and patch counts must be >= 1");

  int states = patch_count + 1;  // 0 = no deletion
  std::vector<int64_t> joint(static_cast<size_t>(num_classes) * states, 0);
  for (int64_t d = 0; d < draws; ++d) {
    int64_t label = labels[d % labels.size()];
    if (label < 0 || label >= num_classes) {
      throw ConfigError("leakage_audit: label " + std::to_string(label) + " outside [0," +
                        std::to_string(num_classes) + ")");
    }
    int m = sampler(label, static_cast<uint64_t>(d));
    if (m < 0 || m > patch_count) {
      throw ConfigError("leakage_audit: sampler returned mask " + std::to_string(m) +
                        " outside [0," + std::to_string(patch_count) + "]");
    }
    ++joint[label * states + m];
  }

  std::vector<double> pc(num_classes, 0.0), pm(states, 0.0);
  for (int c = 0; c < num_classes; ++c)
    for (int m = 0; m < states; ++m) {
      double pj = static_cast<double>(joint[c * states + m]) / static_cast<double>(draws);
      pc[c] += pj;
      pm[m] += pj;
    }
  double mi = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    for (int m = 0; m < states; ++m) {
      double pj = static_cast<double>(joint[c * states + m]) / static_cast<double>(draws);
      if (pj > 0.0) mi += pj * std::log(pj / (pc[c] * pm[m]));
    }
  }
  return mi;
}

NetworkSimilarity network_similarity(Model& model_a, Model& model_b, const Dataset& ds,
                                     const MethodSpec& method, SoftmaxMode mode, uint64_t seed) {
  if (ds.images.empty()) throw ConfigError("network_similarity: dataset is empty");
  int64_t n = static_cast<int64_t>(ds.images.size());
  std::vector<double> mad_soft(n, 0.0), mad_attr(n, 0.0);

  std::exception_ptr eptr = nullptr;
  std::atomic<bool> failed{false};
#pragma omp parallel
  {
    Model la = model_a.clone();
    Model lb = model_b.clone();
#pragma omp for schedule(dynamic)
    for (int64_t i = 0; i < n; ++i) {
      if (failed.load(std::memory_order_relaxed)) continue;
      try {
        const LabeledImage& im = ds.images[i];
        std::vector<double> pa = predict(la, im.pixels, SoftmaxMode::kPost);
        std::vector<double> pb = predict(lb, im.pixels, SoftmaxMode::kPost);
        mad_soft[i] = std::abs(pa[im.label] - pb[im.label]);

        auto norm = [](std::vector<double> m) {
          double mx = 0.0;
          for (double v : m) mx = std::max(mx, std::abs(v));
          if (mx > 0.0)
            for (auto& v : m) v /= mx;
          return m;
        };
        std::vector<double> aa =
            norm(attribute(la, im.pixels, im.id, im.label, method, mode, seed).map);
        std::vector<double> ab =
            norm(attribute(lb, im.pixels, im.id, im.label, method, mode, seed).map);
        double acc = 0.0;
        for (size_t p = 0; p < aa.size(); ++p) acc += std::abs(aa[p] - ab[p]);
        mad_attr[i] = acc / static_cast<double>(aa.size());
      } catch (...) {
#pragma omp critical(atb_netsim)
        {
          if (!failed.exchange(true)) eptr = std::current_exception();
        }
      }
    }
  }
  if (eptr) std::rethrow_exception(eptr);

  NetworkSimilarity out;
  for (int64_t i = 0; i < n; ++i) {
    out.mad_softmax += mad_soft[i];
    out.mad_attribution += mad_attr[i];
  }
  out.mad_softmax /= static_cast<double>(n);
  out.mad_attribution /= static_cast<double>(n);
  return out;
}

std::vector<int64_t> top_activating(Model& model, const std::string& layer, int64_t channel,
                                    const Dataset& ds, int64_t k) {
  if (k < 1 || k > static_cast<int64_t>(ds.images.size())) {
    throw ConfigError("top_activating: k = " + std::to_string(k) + " outside [1," +
                      std::to_string(ds.images.size()) + "]");
  }
  int64_t n = static_cast<int64_t>(ds.images.size());
  std::vector<double> scores(n, 0.0);
  for_each_image(model, n, [&](Model& local, int64_t i) {
    NoGradGuard ng;
    const auto& cfg = local.config();
    Tensor x({1, cfg.in_c, cfg.in_h, cfg.in_w}, ds.images[i].pixels);
    Tensor act;
    local.forward(x, BatchNormMode::kEval, layer, &act);
    if (channel < 0 || channel >= act.dim(1)) {
      throw ConfigError("top_activating: channel " + std::to_string(channel) + " outside [0," +
                        std::to_string(act.dim(1)) + ") for layer '" + layer + "'");
    }
    int64_t plane = act.dim(2) * act.dim(3);
    const double* a = act.data().data() + channel * plane;
    double best = a[0];
    for (int64_t p = 1; p < plane; ++p) best = std::max(best, a[p]);
    scores[i] = best;
  });

  std::vector<int64_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ds.images[a].id < ds.images[b].id;
  });
  std::vector<int64_t> out;
  out.reserve(k);
  for (int64_t i = 0; i < k; ++i) out.push_back(ds.images[idx[i]].id);
  return out;
}

StabilityReport stability_suite(const StabilityConfig& cfg) {
  if (!cfg.train || !cfg.eval) throw ConfigError("stability: train and eval datasets required");
  if (cfg.roster.empty()) throw ConfigError("stability: method roster is empty");
  if (cfg.seeds.empty() || cfg.grid_sides.empty() || cfg.baselines.empty()) {
    throw ConfigError("stability: every axis needs at least one value (first entry = base)");
  }
  std::vector<MethodSpec> specs;
  for (const auto& name : cfg.roster) specs.push_back(parse_method(name));

  PatchGrid base_grid(cfg.grid_sides[0], cfg.eval->h, cfg.eval->w);
  const Baseline& base_baseline = cfg.baselines[0];

  auto scores_for = [&](Model& model, const PatchGrid& grid, const Baseline& baseline) {
    std::vector<double> out;
    out.reserve(specs.size());
    for (const auto& spec : specs)
      out.push_back(
          idsds(model, *cfg.eval, spec, grid, baseline, cfg.mode, cfg.eval_seed).aggregate);
    return out;
  };
  auto trained_base = [&](uint64_t seed) {
    Model model(cfg.model, seed);
    TrainConfig tc = cfg.pretrain;
    tc.seed = seed;
    train(model, tc, *cfg.train);
    return model;
  };
  auto finetuned = [&](const Model& base, uint64_t seed, const PatchGrid& grid,
                       const Baseline& baseline) {
    Model model = base.clone();
    TrainConfig tc = cfg.finetune;
    tc.seed = seed;
    finetune_in_domain(model, tc, *cfg.train, grid, baseline);
    return model;
  };

  StabilityReport report;
  report.roster = cfg.roster;

  Model base_pre = trained_base(cfg.seeds[0]);

  auto corr_matrix = [&](const std::vector<std::vector<double>>& scores) {
    size_t v = scores.size();
    std::vector<std::vector<double>> m(v, std::vector<double>(v, 1.0));
    for (size_t i = 0; i < v; ++i)
      for (size_t j = 0; j < v; ++j) m[i][j] = i == j ? 1.0 : spearman(scores[i], scores[j]).r;
    return m;
  };

  {
    StabilityAxis axis;
    axis.axis = "seed";
    for (uint64_t s : cfg.seeds) {
      Model pre = s == cfg.seeds[0] ? base_pre.clone() : trained_base(s);
      Model ft = finetuned(pre, s + 1, base_grid, base_baseline);
      axis.labels.push_back("seed=" + std::to_string(s));
      axis.scores.push_back(scores_for(ft, base_grid, base_baseline));
    }
    axis.rank_corr = corr_matrix(axis.scores);
    report.axes.push_back(std::move(axis));
  }
  {
    StabilityAxis axis;
    axis.axis = "grid";
    for (int side : cfg.grid_sides) {
      PatchGrid grid(side, cfg.eval->h, cfg.eval->w);
      Model ft = finetuned(base_pre, cfg.seeds[0] + 1, grid, base_baseline);
      axis.labels.push_back("P=" + std::to_string(side * side));
      axis.scores.push_back(scores_for(ft, grid, base_baseline));
    }
    axis.rank_corr = corr_matrix(axis.scores);
    report.axes.push_back(std::move(axis));
  }
  {
    StabilityAxis axis;
    axis.axis = "baseline";
    for (const Baseline& b : cfg.baselines) {
      Model ft = finetuned(base_pre, cfg.seeds[0] + 1, base_grid, b);
      axis.labels.push_back("baseline=" + b.describe());
      axis.scores.push_back(scores_for(ft, base_grid, b));
    }
    axis.rank_corr = corr_matrix(axis.scores);
    report.axes.push_back(std::move(axis));
  }
  return report;
}

}  // namespace atb
