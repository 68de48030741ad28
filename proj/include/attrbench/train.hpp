#ifndef ATTRBENCH_TRAIN_HPP
#define ATTRBENCH_TRAIN_HPP

#include <cstdint>
#include <vector>

#include "attrbench/data.hpp"
#include "attrbench/model.hpp"
#include "attrbench/patch.hpp"

namespace atb {

struct Augmentation {
  enum class Kind { kNone, kPatchDelete };
  Kind kind = Kind::kNone;
  int grid_side = 4;
  double probability = 0.5;
  Baseline baseline;  // substitute values for deleted patches
};

struct TrainConfig {
  int epochs = 20;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_decay = 0.1;
  int lr_decay_every = 8;
  int batch_size = 64;
  uint64_t seed = 0;
  Augmentation augmentation;
};

struct EpochStats {
  int epoch;
  double lr;
  double loss;
  double accuracy;  // on the (possibly augmented) training inputs
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

// SGD with momentum, weight decay, step lr decay. Updates the model in place.
// Fully determined by cfg.seed: init aside, every shuffle and augmentation
// draw is keyed by (seed, epoch, sample index).
TrainLog train(Model& model, const TrainConfig& cfg, const Dataset& ds);

// Domain-aligning pass: with probability cfg.augmentation.probability (0.5 in
// the canonical protocol) one patch index drawn uniformly from {1..P} is
// deleted; the draw never looks at label or content.
TrainLog finetune_in_domain(Model& model, TrainConfig cfg, const Dataset& ds,
                            const PatchGrid& grid, const Baseline& baseline);

double accuracy(Model& model, const Dataset& ds);  // eval mode, batched

// The masking strategy itself, factored out so the leakage audit can probe the
// exact draw the trainer uses. Returns 0 (no deletion) or a patch index 1..P.
// Depends only on (seed, epoch, sample_index) — never on label or content.
int augmentation_draw(uint64_t seed, int epoch, int64_t sample_index, double probability,
                      int patch_count);

}  // namespace atb

#endif
