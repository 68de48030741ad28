#include "attrbench/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "json.hpp"

#include "attrbench/common.hpp"
#include "attrbench/serialize.hpp"

namespace atb {

namespace {

using json = nlohmann::json;

// 6 vivid colors; background is mid gray. Evidence and distractors draw from
// the same palette so color histograms alone cannot separate the classes.
constexpr double kPalette[6][3] = {
    {1.0, 0.15, 0.15}, {0.15, 1.0, 0.15}, {0.2, 0.35, 1.0},
    {1.0, 1.0, 0.2},   {1.0, 0.3, 1.0},  {0.2, 1.0, 1.0},
};
constexpr double kBackground = 0.5;
constexpr int kNumGlyphs = 16;  // 0..7 evidence, 8..15 distractor

// 8x8 binary stencils, defined procedurally and sampled nearest-neighbor
// into whatever the cell size is.
bool stencil(int g, int y, int x) {
  int cy = y - 3, cx = x - 3;  // rough center offsets
  switch (g) {
    case 0: return y == 0 || y == 7 || x == 0 || x == 7;              // border
    case 1: return x == y || x + y == 7;                              // X
    case 2: return y == 3 || y == 4 || x == 3 || x == 4;              // plus
    case 3: return std::abs(2 * y - 7) + std::abs(2 * x - 7) <= 7;    // diamond
    case 4: return y % 2 == 0;                                        // h-stripes
    case 5: return x % 2 == 0;                                        // v-stripes
    case 6: return (x + y) % 2 == 0;                                  // checker
    case 7: return x <= y;                                            // triangle
    case 8: return y < 4;                                             // top half
    case 9: return x < 4;                                             // left half
    case 10: return y >= 2 && y <= 5 && x >= 2 && x <= 5;             // block
    case 11: return cy * cy + cx * cx >= 4 && cy * cy + cx * cx <= 13;  // ring
    case 12: return y % 4 < 2;                                        // double bars
    case 13: return (y < 3 && x < 3) || (y > 4 && x > 4);             // two corners
    case 14: return std::abs(x + y - 7) <= 1;                         // anti-diag band
    default: return std::abs(x - y) <= 1;                             // diag band
  }
}

void paint_glyph(std::vector<double>& raw, int64_t h, int64_t w, int cells_per_side, int cell,
                 int glyph, int color) {
  int64_t cell_h = h / cells_per_side, cell_w = w / cells_per_side;
  int64_t y0 = (cell / cells_per_side) * cell_h;
  int64_t x0 = (cell % cells_per_side) * cell_w;
  for (int64_t dy = 0; dy < cell_h; ++dy) {
    for (int64_t dx = 0; dx < cell_w; ++dx) {
      if (!stencil(glyph, static_cast<int>(dy * 8 / cell_h), static_cast<int>(dx * 8 / cell_w)))
        continue;
      for (int ch = 0; ch < 3; ++ch)
        raw[(ch * h + y0 + dy) * w + x0 + dx] = kPalette[color][ch];
    }
  }
}

std::vector<std::vector<SyntheticSpec::Placement>> resolve_placements(const SyntheticSpec& spec) {
  if (!spec.placements.empty()) {
    if (static_cast<int>(spec.placements.size()) != spec.num_classes) {
      throw ConfigError("generate: " + std::to_string(spec.placements.size()) +
                        " placement lists for " + std::to_string(spec.num_classes) + " classes");
    }
    return spec.placements;
  }
  if (spec.num_classes > 8) {
    throw ConfigError("generate: default layout supports at most 8 classes, got " +
                      std::to_string(spec.num_classes) + "; pass explicit placements");
  }
  std::vector<std::vector<SyntheticSpec::Placement>> out(spec.num_classes);
  for (int k = 0; k < spec.num_classes; ++k) {
    out[k].push_back({-1, k, k % palette_size()});
  }
  return out;
}

void validate(const SyntheticSpec& spec,
              const std::vector<std::vector<SyntheticSpec::Placement>>& placements) {
  if (spec.num_classes < 2) throw ConfigError("generate: need at least 2 classes");
  if (spec.cells_per_side < 1) throw ConfigError("generate: cells_per_side must be >= 1");
  int n_cells = spec.cells_per_side * spec.cells_per_side;
  if (spec.height % spec.cells_per_side != 0 || spec.width % spec.cells_per_side != 0) {
    throw ConfigError("generate: image " + std::to_string(spec.height) + "x" +
                      std::to_string(spec.width) + " not divisible into " +
                      std::to_string(spec.cells_per_side) + " cells per side");
  }
  if (spec.distractor_density < 0.0 || spec.distractor_density > 1.0) {
    throw ConfigError("generate: distractor_density must be in [0,1]");
  }
  if (spec.noise_sigma < 0.0) throw ConfigError("generate: noise_sigma must be >= 0");
  for (int k = 0; k < spec.num_classes; ++k) {
    if (placements[k].empty()) {
      throw ConfigError("generate: class " + std::to_string(k) + " has no evidence placement");
    }
    std::vector<int> used;
    for (const auto& p : placements[k]) {
      if (p.cell < -1 || p.cell >= n_cells) {
        throw ConfigError("generate: class " + std::to_string(k) + " evidence cell " +
                          std::to_string(p.cell) + " outside grid of " + std::to_string(n_cells));
      }
      if (p.glyph < 0 || p.glyph >= 8) {
        throw ConfigError("generate: evidence glyph " + std::to_string(p.glyph) +
                          " outside evidence stencil set [0,8)");
      }
      if (p.color < 0 || p.color >= palette_size()) {
        throw ConfigError("generate: color " + std::to_string(p.color) + " outside palette of " +
                          std::to_string(palette_size()));
      }
      if (p.cell >= 0) {
        if (std::find(used.begin(), used.end(), p.cell) != used.end()) {
          throw ConfigError("generate: class " + std::to_string(k) +
                            " places two evidence glyphs on cell " + std::to_string(p.cell));
        }
        used.push_back(p.cell);
      }
    }
    if (placements[k].size() > 1) {
      for (const auto& p : placements[k]) {
        if (p.cell == -1) {
          throw ConfigError("generate: class " + std::to_string(k) +
                            " mixes random-cell evidence with multiple placements");
        }
      }
    }
  }
}

std::vector<uint8_t> quantize(const std::vector<double>& raw) {
  std::vector<uint8_t> q(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    double v = std::min(1.0, std::max(0.0, raw[i]));
    q[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return q;
}

struct RawSplit {
  std::vector<std::vector<uint8_t>> pixels;  // per image, quantized
  std::vector<int64_t> labels;
  std::vector<int64_t> ids;
  std::vector<std::vector<int>> evidence;
};

RawSplit render_split(const SyntheticSpec& spec,
                      const std::vector<std::vector<SyntheticSpec::Placement>>& placements,
                      int64_t count, uint64_t split_tag, int64_t id_base) {
  int n_cells = spec.cells_per_side * spec.cells_per_side;
  int64_t h = spec.height, w = spec.width;
  RawSplit out;
  out.pixels.resize(count);
  out.labels.resize(count);
  out.ids.resize(count);
  out.evidence.resize(count);
  for (int64_t i = 0; i < count; ++i) {
    RngStream rng(mix_seed({spec.seed, 0x64617461u, split_tag, static_cast<uint64_t>(i)}));
    int64_t label = i % spec.num_classes;
    std::vector<double> raw(static_cast<size_t>(3 * h * w), kBackground);

    std::vector<int> ev_cells;
    for (const auto& p : placements[label]) {
      int cell = p.cell >= 0 ? p.cell : static_cast<int>(rng.uniform_int(n_cells));
      ev_cells.push_back(cell);
      paint_glyph(raw, h, w, spec.cells_per_side, cell, p.glyph, p.color);
    }

    std::vector<int> free_cells;
    for (int cidx = 0; cidx < n_cells; ++cidx) {
      if (std::find(ev_cells.begin(), ev_cells.end(), cidx) == ev_cells.end())
        free_cells.push_back(cidx);
    }
    int n_distract =
        static_cast<int>(std::lround(spec.distractor_density * static_cast<double>(free_cells.size())));
    rng.shuffle(free_cells);
    for (int d = 0; d < n_distract; ++d) {
      int glyph = 8 + static_cast<int>(rng.uniform_int(8));
      int color = static_cast<int>(rng.uniform_int(palette_size()));
      paint_glyph(raw, h, w, spec.cells_per_side, free_cells[d], glyph, color);
    }

    if (spec.noise_sigma > 0.0) {
      for (auto& v : raw) v += spec.noise_sigma * rng.normal();
    }
    out.pixels[i] = quantize(raw);
    out.labels[i] = label;
    out.ids[i] = id_base + i;
    std::sort(ev_cells.begin(), ev_cells.end());
    out.evidence[i] = std::move(ev_cells);
  }
  return out;
}

Dataset assemble(const SyntheticSpec& spec, const RawSplit& split, const std::vector<double>& mean,
                 const std::vector<double>& sd) {
  Dataset ds;
  ds.c = 3;
  ds.h = spec.height;
  ds.w = spec.width;
  ds.num_classes = spec.num_classes;
  ds.mean = mean;
  ds.std = sd;
  ds.normalized = true;
  int64_t plane = ds.h * ds.w;
  ds.images.resize(split.pixels.size());
  for (size_t i = 0; i < split.pixels.size(); ++i) {
    LabeledImage& im = ds.images[i];
    im.label = split.labels[i];
    im.id = split.ids[i];
    im.evidence_cells = split.evidence[i];
    im.pixels.resize(split.pixels[i].size());
    for (int64_t ch = 0; ch < 3; ++ch) {
      for (int64_t p = 0; p < plane; ++p) {
        double raw = static_cast<double>(split.pixels[i][ch * plane + p]) / 255.0;
        im.pixels[ch * plane + p] = (raw - mean[ch]) / sd[ch];
      }
    }
  }
  return ds;
}

json spec_to_json(const SyntheticSpec& s) {
  json j;
  j["height"] = s.height;
  j["width"] = s.width;
  j["num_classes"] = s.num_classes;
  j["cells_per_side"] = s.cells_per_side;
  j["distractor_density"] = s.distractor_density;
  j["noise_sigma"] = s.noise_sigma;
  j["train_count"] = s.train_count;
  j["eval_count"] = s.eval_count;
  j["seed"] = s.seed;
  json pls = json::array();
  for (const auto& cls : s.placements) {
    json row = json::array();
    for (const auto& p : cls) row.push_back({{"cell", p.cell}, {"glyph", p.glyph}, {"color", p.color}});
    pls.push_back(row);
  }
  j["placements"] = pls;
  return j;
}

SyntheticSpec spec_from_json(const json& j) {
  SyntheticSpec s;
  s.height = j.at("height").get<int64_t>();
  s.width = j.at("width").get<int64_t>();
  s.num_classes = j.at("num_classes").get<int>();
  s.cells_per_side = j.at("cells_per_side").get<int>();
  s.distractor_density = j.at("distractor_density").get<double>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.train_count = j.at("train_count").get<int64_t>();
  s.eval_count = j.at("eval_count").get<int64_t>();
  s.seed = j.at("seed").get<uint64_t>();
  for (const auto& cls : j.at("placements")) {
    std::vector<SyntheticSpec::Placement> row;
    for (const auto& p : cls)
      row.push_back({p.at("cell").get<int>(), p.at("glyph").get<int>(), p.at("color").get<int>()});
    s.placements.push_back(std::move(row));
  }
  return s;
}

}  // namespace

int palette_size() { return 6; }
int glyph_count() { return kNumGlyphs; }

SyntheticBundle generate(const SyntheticSpec& spec) {
  auto placements = resolve_placements(spec);
  validate(spec, placements);

  RawSplit train = render_split(spec, placements, spec.train_count, 0, 0);
  RawSplit eval = render_split(spec, placements, spec.eval_count, 1, spec.train_count);

  // per-channel stats over the train split, population variance
  int64_t plane = spec.height * spec.width;
  std::vector<double> mean(3, 0.0), sd(3, 0.0);
  double denom = static_cast<double>(spec.train_count * plane);
  for (const auto& px : train.pixels)
    for (int64_t ch = 0; ch < 3; ++ch)
      for (int64_t p = 0; p < plane; ++p) mean[ch] += static_cast<double>(px[ch * plane + p]) / 255.0;
  for (auto& m : mean) m /= denom;
  for (const auto& px : train.pixels) {
    for (int64_t ch = 0; ch < 3; ++ch) {
      for (int64_t p = 0; p < plane; ++p) {
        double d = static_cast<double>(px[ch * plane + p]) / 255.0 - mean[ch];
        sd[ch] += d * d;
      }
    }
  }
  for (auto& s : sd) s = std::max(std::sqrt(s / denom), 1e-6);

  SyntheticBundle bundle;
  bundle.spec = spec;
  bundle.spec.placements = placements;  // resolved layout, echoed into the manifest
  bundle.train = assemble(spec, train, mean, sd);
  bundle.eval = assemble(spec, eval, mean, sd);
  return bundle;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  IdxImages img = read_idx_images(images_path);
  std::vector<uint8_t> labels = read_idx_labels(labels_path);
  if (static_cast<int64_t>(labels.size()) != img.n) {
    throw FormatError(images_path + " has " + std::to_string(img.n) + " images but " +
                      labels_path + " has " + std::to_string(labels.size()) + " labels");
  }
  Dataset ds;
  ds.c = img.c;
  ds.h = img.h;
  ds.w = img.w;
  ds.mean.assign(img.c, 0.0);
  ds.std.assign(img.c, 1.0);
  ds.normalized = false;
  int64_t numel = img.c * img.h * img.w;
  ds.images.resize(img.n);
  int64_t max_label = 0;
  for (int64_t i = 0; i < img.n; ++i) {
    LabeledImage& im = ds.images[i];
    im.id = i;
    im.label = labels[i];
    max_label = std::max<int64_t>(max_label, labels[i]);
    im.pixels.resize(numel);
    for (int64_t p = 0; p < numel; ++p)
      im.pixels[p] = static_cast<double>(img.pixels[i * numel + p]) / 255.0;
  }
  ds.num_classes = max_label + 1;
  return ds;
}

void normalize(Dataset& ds, const std::vector<double>& mean, const std::vector<double>& std_dev) {
  if (static_cast<int64_t>(mean.size()) != ds.c || static_cast<int64_t>(std_dev.size()) != ds.c) {
    throw ConfigError("normalize: need " + std::to_string(ds.c) + " per-channel values, got " +
                      std::to_string(mean.size()) + " means / " + std::to_string(std_dev.size()) +
                      " stds");
  }
  for (double s : std_dev) {
    if (!(s > 0.0)) throw ConfigError("normalize: std must be > 0");
  }
  if (ds.normalized) {
    // undo the previous affine map first
    for (auto& im : ds.images) {
      int64_t plane = ds.h * ds.w;
      for (int64_t ch = 0; ch < ds.c; ++ch)
        for (int64_t p = 0; p < plane; ++p)
          im.pixels[ch * plane + p] = im.pixels[ch * plane + p] * ds.std[ch] + ds.mean[ch];
    }
  }
  int64_t plane = ds.h * ds.w;
  for (auto& im : ds.images) {
    for (int64_t ch = 0; ch < ds.c; ++ch)
      for (int64_t p = 0; p < plane; ++p)
        im.pixels[ch * plane + p] = (im.pixels[ch * plane + p] - mean[ch]) / std_dev[ch];
  }
  ds.mean = mean;
  ds.std = std_dev;
  ds.normalized = true;
}

std::vector<double> denormalize_image(const Dataset& ds, const std::vector<double>& pixels) {
  std::vector<double> raw(pixels.size());
  int64_t plane = ds.h * ds.w;
  for (int64_t ch = 0; ch < ds.c; ++ch)
    for (int64_t p = 0; p < plane; ++p)
      raw[ch * plane + p] = ds.normalized ? pixels[ch * plane + p] * ds.std[ch] + ds.mean[ch]
                                          : pixels[ch * plane + p];
  return raw;
}

namespace {

IdxImages to_idx(const Dataset& ds) {
  IdxImages img;
  img.n = static_cast<int64_t>(ds.images.size());
  img.c = ds.c;
  img.h = ds.h;
  img.w = ds.w;
  img.pixels.reserve(img.n * img.c * img.h * img.w);
  for (const auto& im : ds.images) {
    std::vector<double> raw = denormalize_image(ds, im.pixels);
    for (double v : raw) {
      double clamped = std::min(1.0, std::max(0.0, v));
      img.pixels.push_back(static_cast<uint8_t>(std::lround(clamped * 255.0)));
    }
  }
  return img;
}

std::vector<uint8_t> labels_of(const Dataset& ds) {
  std::vector<uint8_t> out;
  out.reserve(ds.images.size());
  for (const auto& im : ds.images) out.push_back(static_cast<uint8_t>(im.label));
  return out;
}

}  // namespace

void save_synthetic(const SyntheticBundle& bundle, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_idx_images(dir + "/train-images.idx", to_idx(bundle.train));
  write_idx_labels(dir + "/train-labels.idx", labels_of(bundle.train));
  write_idx_images(dir + "/eval-images.idx", to_idx(bundle.eval));
  write_idx_labels(dir + "/eval-labels.idx", labels_of(bundle.eval));

  json j;
  j["spec"] = spec_to_json(bundle.spec);
  j["mean"] = bundle.train.mean;
  j["std"] = bundle.train.std;
  json cls = json::array();
  for (const auto& row : bundle.spec.placements) {
    json cells = json::array();
    for (const auto& p : row) cells.push_back(p.cell);
    cls.push_back(cells);
  }
  j["class_cells"] = cls;  // -1 marks per-image random placement
  json ev = json::object();
  for (const auto& ds : {&bundle.train, &bundle.eval})
    for (const auto& im : ds->images) ev[std::to_string(im.id)] = im.evidence_cells;
  j["image_evidence"] = ev;
  write_file_text(dir + "/manifest.json", j.dump(2) + "\n");
}

SyntheticBundle load_synthetic(const std::string& dir) {
  json j = json::parse(read_file_text(dir + "/manifest.json"));
  SyntheticBundle bundle;
  bundle.spec = spec_from_json(j.at("spec"));
  std::vector<double> mean = j.at("mean").get<std::vector<double>>();
  std::vector<double> sd = j.at("std").get<std::vector<double>>();

  auto load_split = [&](const std::string& stem, int64_t id_base) {
    Dataset ds = load_idx(dir + "/" + stem + "-images.idx", dir + "/" + stem + "-labels.idx");
    ds.num_classes = bundle.spec.num_classes;
    normalize(ds, mean, sd);
    const json& ev = j.at("image_evidence");
    for (size_t i = 0; i < ds.images.size(); ++i) {
      ds.images[i].id = id_base + static_cast<int64_t>(i);
      auto it = ev.find(std::to_string(ds.images[i].id));
      if (it != ev.end()) ds.images[i].evidence_cells = it->get<std::vector<int>>();
    }
    return ds;
  };
  bundle.train = load_split("train", 0);
  bundle.eval = load_split("eval", bundle.spec.train_count);
  return bundle;
}

}  // namespace atb
