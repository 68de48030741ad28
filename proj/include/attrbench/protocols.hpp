#ifndef ATTRBENCH_PROTOCOLS_HPP
#define ATTRBENCH_PROTOCOLS_HPP

#include <functional>
#include <string>
#include <vector>

#include "attrbench/attribution.hpp"
#include "attrbench/data.hpp"
#include "attrbench/model.hpp"
#include "attrbench/patch.hpp"
#include "attrbench/train.hpp"

namespace atb {

struct SpearmanResult {
  double r = 0.0;
  bool degenerate = false;  // a rank vector was constant; r forced to 0
};

// average ranks for ties, then Pearson over the rank vectors
SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b);

struct ImageRecord {
  int64_t image_id = 0;
  double r = 0.0;  // per-image correlation (single-deletion) or mean drop (incremental)
  bool degenerate = false;
  std::vector<double> patch_attr;  // single-deletion protocols only
  std::vector<double> patch_drop;
};

struct ProtocolReport {
  std::string protocol;  // idsds | sds | ids_fixed | ids_updated
  std::string method;
  std::string model_tag;  // campaign label, set by callers running a model set
  double aggregate = 0.0;
  int degenerate_count = 0;
  std::vector<ImageRecord> records;
  std::string fingerprint_json;  // grid, baseline, method, model hash, seed, mode
};

// Single-deletion score, Eq. style: one attribution per clean image, P+1
// forwards, per-image Spearman between patch attribution sums and target
// drops, mean over the dataset. The same computation on a model without
// aligning fine-tuning is conventionally labeled "sds".
ProtocolReport idsds(Model& model, const Dataset& ds, const MethodSpec& method,
                     const PatchGrid& grid, const Baseline& baseline, SoftmaxMode mode,
                     uint64_t seed, const std::string& label = "idsds");

// map provider for incremental deletion; recomputed per step in updated mode
using AttributionFn =
    std::function<std::vector<double>(Model&, const std::vector<double>& pixels, int64_t image_id,
                                      int64_t target)>;

enum class IdsMode { kFixed, kUpdated };

// Incremental deletion: pixels (or whole patches if grid != nullptr) removed
// in descending attribution order over `steps` rounds; per-image score is the
// mean over rounds of (f(x) - f(x_s)) / (f(x) - f(baseline image)), clamped
// to [-1, 2]. A |denominator| < 1e-9 flags the image degenerate with score 0.
ProtocolReport ids(Model& model, const Dataset& ds, const MethodSpec& method,
                   const PatchGrid* grid, const Baseline& baseline, int steps, IdsMode ids_mode,
                   SoftmaxMode mode, uint64_t seed);
ProtocolReport ids_with_fn(Model& model, const Dataset& ds, const std::string& method_label,
                           const AttributionFn& fn, const PatchGrid* grid,
                           const Baseline& baseline, int steps, IdsMode ids_mode, SoftmaxMode mode,
                           uint64_t seed);

// per-pixel map whose patch sums equal the measured single-deletion drops
// exactly (drop spread uniformly inside its patch)
std::vector<double> oracle_attribution_map(Model& model, const std::vector<double>& pixels,
                                           int64_t image_id, int64_t target,
                                           const PatchGrid& grid, const Baseline& baseline,
                                           SoftmaxMode mode);
AttributionFn make_oracle_fn(const PatchGrid& grid, const Baseline& baseline, SoftmaxMode mode);

struct CorruptedAccuracy {
  double uncorrupted = 0.0;
  double worst_patch = 0.0;   // patch chosen per image to minimize target softmax
  double random_patch = 0.0;  // uniformly random patch, keyed per image
};
CorruptedAccuracy corrupted_accuracy(Model& model, const Dataset& ds, const PatchGrid& grid,
                                     const Baseline& baseline, uint64_t seed);

// plug-in mutual information (nats) of the discrete joint (class, mask index);
// mask index 0 means "no deletion"
double leakage_audit(const std::function<int(int64_t label, uint64_t draw)>& sampler,
                     const std::vector<int64_t>& labels, int64_t draws, int num_classes,
                     int patch_count);

struct NetworkSimilarity {
  double mad_softmax = 0.0;
  double mad_attribution = 0.0;  // maps max-normalized before differencing
};
NetworkSimilarity network_similarity(Model& model_a, Model& model_b, const Dataset& ds,
                                     const MethodSpec& method, SoftmaxMode mode, uint64_t seed);

std::vector<int64_t> top_activating(Model& model, const std::string& layer, int64_t channel,
                                    const Dataset& ds, int64_t k);

struct StabilityConfig {
  ModelConfig model;
  TrainConfig pretrain;
  TrainConfig finetune;
  const Dataset* train = nullptr;
  const Dataset* eval = nullptr;
  std::vector<std::string> roster;
  std::vector<uint64_t> seeds;     // first entry is the base setting
  std::vector<int> grid_sides;     // P = side^2
  std::vector<Baseline> baselines;
  SoftmaxMode mode = SoftmaxMode::kPre;
  uint64_t eval_seed = 99;
};

struct StabilityAxis {
  std::string axis;  // seed | grid | baseline
  std::vector<std::string> labels;
  std::vector<std::vector<double>> scores;     // [axis value][method]
  std::vector<std::vector<double>> rank_corr;  // pairwise Spearman between value rankings
};

struct StabilityReport {
  std::vector<std::string> roster;
  std::vector<StabilityAxis> axes;
};

// For each value on each axis: train (seed axis) or reuse the base model,
// fine-tune with the axis' grid/baseline, run idsds over the roster, and
// correlate the method rankings.
StabilityReport stability_suite(const StabilityConfig& cfg);

}  // namespace atb

#endif
