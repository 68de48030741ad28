#include "attrbench/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attrbench/common.hpp"

namespace atb {

namespace {

void validate(const TrainConfig& cfg, const Dataset& ds, const Model& model) {
  if (ds.images.empty()) throw ConfigError("train: dataset is empty");
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (cfg.lr_decay_every < 1) throw ConfigError("train: lr_decay_every must be >= 1");
  if (cfg.augmentation.kind == Augmentation::Kind::kPatchDelete &&
      (cfg.augmentation.probability < 0.0 || cfg.augmentation.probability > 1.0)) {
    throw ConfigError("train: augmentation probability " +
                      std::to_string(cfg.augmentation.probability) + " outside [0,1]");
  }
  const auto& mc = model.config();
  for (const auto& im : ds.images) {
    if (im.label < 0 || im.label >= mc.num_classes) {
      throw ConfigError("train: image id " + std::to_string(im.id) + " has label " +
                        std::to_string(im.label) + ", model expects < " +
                        std::to_string(mc.num_classes));
    }
  }
  if (ds.c != mc.in_c || ds.h != mc.in_h || ds.w != mc.in_w) {
    throw ConfigError("train: dataset images are " + std::to_string(ds.c) + "x" +
                      std::to_string(ds.h) + "x" + std::to_string(ds.w) + ", model expects " +
                      std::to_string(mc.in_c) + "x" + std::to_string(mc.in_h) + "x" +
                      std::to_string(mc.in_w));
  }
}

}  // namespace

TrainLog train(Model& model, const TrainConfig& cfg, const Dataset& ds) {
  validate(cfg, ds, model);
  TrainLog log;
  int64_t n = static_cast<int64_t>(ds.images.size());
  int64_t px = ds.c * ds.h * ds.w;

  std::vector<Tensor> params = model.parameters();
  std::vector<std::vector<double>> velocity(params.size());
  for (size_t i = 0; i < params.size(); ++i) velocity[i].assign(params[i].numel(), 0.0);

  bool augment = cfg.augmentation.kind == Augmentation::Kind::kPatchDelete;
  PatchGrid grid;
  if (augment) grid = PatchGrid(cfg.augmentation.grid_side, ds.h, ds.w);

  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
    RngStream shuffle_rng(mix_seed({cfg.seed, 0x73687566u, static_cast<uint64_t>(epoch)}));
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t correct = 0;
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
      int64_t bsz = std::min<int64_t>(cfg.batch_size, n - start);
      std::vector<double> batch(static_cast<size_t>(bsz * px));
      std::vector<int64_t> labels(bsz);
      for (int64_t b = 0; b < bsz; ++b) {
        const LabeledImage& im = ds.images[order[start + b]];
        labels[b] = im.label;
        const std::vector<double>* src = &im.pixels;
        std::vector<double> corrupted;
        if (augment) {
          int m = augmentation_draw(cfg.seed, epoch, order[start + b],
                                    cfg.augmentation.probability, grid.patch_count());
          if (m > 0) {
            corrupted = delete_patch(im.pixels, ds.c, grid, m, cfg.augmentation.baseline, im.id);
            src = &corrupted;
          }
        }
        std::copy(src->begin(), src->end(), batch.begin() + b * px);
      }

      try {
        Tensor x({bsz, ds.c, ds.h, ds.w}, std::move(batch));
        Tensor logits = model.forward(x, BatchNormMode::kTrain);
        Tensor loss = cross_entropy(logits, labels);
        model.zero_grad();
        backward(loss);

        loss_sum += loss.item() * static_cast<double>(bsz);
        for (int64_t b = 0; b < bsz; ++b) {
          const double* row = logits.data().data() + b * model.config().num_classes;
          int64_t arg = 0;
          for (int k = 1; k < model.config().num_classes; ++k)
            if (row[k] > row[arg]) arg = k;
          if (arg == labels[b]) ++correct;
        }

        for (size_t i = 0; i < params.size(); ++i) {
          const auto& g = params[i].grad();
          auto& w = params[i].mutable_data();
          auto& v = velocity[i];
          for (size_t j = 0; j < v.size(); ++j) {
            v[j] = cfg.momentum * v[j] + g[j] + cfg.weight_decay * w[j];
            w[j] -= lr * v[j];
          }
        }
      } catch (const NumericFault& e) {
        throw NumericFault("train diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(start / cfg.batch_size) + ": " + e.what());
      }
    }
    log.epochs.push_back({epoch, lr, loss_sum / static_cast<double>(n),
                          static_cast<double>(correct) / static_cast<double>(n)});
  }
  return log;
}

TrainLog finetune_in_domain(Model& model, TrainConfig cfg, const Dataset& ds,
                            const PatchGrid& grid, const Baseline& baseline) {
  if (cfg.augmentation.kind == Augmentation::Kind::kNone) {
    cfg.augmentation.kind = Augmentation::Kind::kPatchDelete;
    cfg.augmentation.probability = 0.5;
  }
  cfg.augmentation.grid_side = grid.side;
  cfg.augmentation.baseline = baseline;
  return train(model, cfg, ds);
}

int augmentation_draw(uint64_t seed, int epoch, int64_t sample_index, double probability,
                      int patch_count) {
  // keyed by (seed, epoch, dataset index): immune to loader reordering
  RngStream rng(mix_seed({seed, 0x61756721u, static_cast<uint64_t>(epoch),
                          static_cast<uint64_t>(sample_index)}));
  if (rng.uniform() >= probability) return 0;
  return 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(patch_count)));
}

double accuracy(Model& model, const Dataset& ds) {
  if (ds.images.empty()) throw ConfigError("accuracy: dataset is empty");
  NoGradGuard ng;
  int64_t n = static_cast<int64_t>(ds.images.size());
  int64_t px = ds.c * ds.h * ds.w;
  int k = model.config().num_classes;
  int64_t correct = 0;
  constexpr int64_t kBatch = 64;
  for (int64_t start = 0; start < n; start += kBatch) {
    int64_t bsz = std::min<int64_t>(kBatch, n - start);
    std::vector<double> batch(static_cast<size_t>(bsz * px));
    for (int64_t b = 0; b < bsz; ++b) {
      const auto& im = ds.images[start + b];
      std::copy(im.pixels.begin(), im.pixels.end(), batch.begin() + b * px);
    }
    Tensor x({bsz, ds.c, ds.h, ds.w}, std::move(batch));
    Tensor logits = model.forward(x, BatchNormMode::kEval);
    for (int64_t b = 0; b < bsz; ++b) {
      const double* row = logits.data().data() + b * k;
      int arg = 0;
      for (int j = 1; j < k; ++j)
        if (row[j] > row[arg]) arg = j;
      if (arg == ds.images[start + b].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace atb
