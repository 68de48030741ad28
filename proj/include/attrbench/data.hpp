#ifndef ATTRBENCH_DATA_HPP
#define ATTRBENCH_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace atb {

struct LabeledImage {
  std::vector<double> pixels;  // C*H*W, normalized space
  int64_t label = 0;
  int64_t id = 0;
  std::vector<int> evidence_cells;  // ground-truth important cells; empty for external data
};

struct Dataset {
  int64_t c = 0, h = 0, w = 0;
  int64_t num_classes = 0;
  bool normalized = false;
  std::vector<double> mean, std;  // per channel, raw [0,1] units
  std::vector<LabeledImage> images;
};

// Synthetic scene: a cells_per_side × cells_per_side grid over a gray
// background. Each image carries one glyph per evidence placement of its
// class (the only class-informative content) plus class-independent
// distractor glyphs and pixel noise. cell == -1 places the evidence in a
// uniformly random cell per image, so deleting it leaves nothing for any
// classifier to use.
struct SyntheticSpec {
  int64_t height = 64, width = 64;  // channels fixed at 3
  int num_classes = 8;
  int cells_per_side = 4;
  struct Placement {
    int cell = -1;  // -1: uniform random per image
    int glyph = 0;  // evidence stencils 0..7
    int color = 0;  // palette index
  };
  std::vector<std::vector<Placement>> placements;  // per class; empty -> default layout
  double distractor_density = 0.3;
  double noise_sigma = 0.05;
  int64_t train_count = 6000, eval_count = 1000;
  uint64_t seed = 1;
};

struct SyntheticBundle {
  Dataset train, eval;
  SyntheticSpec spec;
};

SyntheticBundle generate(const SyntheticSpec& spec);

// idx ingestion; pixels come out as k/255 in [0,1] with mean=0, std=1 markers.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// (x - mean) / std per channel, applied to the raw [0,1] values.
void normalize(Dataset& ds, const std::vector<double>& mean, const std::vector<double>& std_dev);
// inverse map of a single image back to raw [0,1] units
std::vector<double> denormalize_image(const Dataset& ds, const std::vector<double>& pixels);

// dataset directory: {train,eval}-{images,labels}.idx + manifest.json
void save_synthetic(const SyntheticBundle& bundle, const std::string& dir);
SyntheticBundle load_synthetic(const std::string& dir);

// number of palette colors / glyph stencils available to specs
int palette_size();
int glyph_count();

}  // namespace atb

#endif
