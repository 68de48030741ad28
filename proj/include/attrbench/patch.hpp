#ifndef ATTRBENCH_PATCH_HPP
#define ATTRBENCH_PATCH_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace atb {

// Non-overlapping s×s tiling of an H×W image; P = s² patches indexed 1..P
// row-major at the public API (0 is reserved for "no patch" in mask codes).
struct PatchGrid {
  int side = 4;
  int64_t h = 0, w = 0;

  PatchGrid() = default;
  PatchGrid(int side_count, int64_t height, int64_t width);

  int patch_count() const { return side * side; }
  int64_t patch_h() const { return h / side; }
  int64_t patch_w() const { return w / side; }
  // bounds of patch m in [1,P]: y0,y1,x0,x1 half-open
  void bounds(int m, int64_t& y0, int64_t& y1, int64_t& x0, int64_t& x1) const;
};

struct Baseline {
  enum class Kind { kZero, kRandomUniform, kGaussianBlur };
  Kind kind = Kind::kZero;
  // random_uniform: values drawn in (lo, hi) in normalized space
  double lo = -1.0, hi = 1.0;
  uint64_t seed = 0;
  // gaussian_blur: kernel size (odd) and sigma
  int kernel = 9;
  double sigma = 4.0;

  std::string describe() const;
};

Baseline parse_baseline(const std::string& text);  // "zero" | "random_uniform" | "gaussian_blur"

// separable Gaussian, replicate border, per channel
std::vector<double> gaussian_blur(const std::vector<double>& pixels, int64_t c, int64_t h,
                                  int64_t w, int kernel, double sigma);

// the full substitute image b for a given input (zero field / keyed noise /
// blur of the input itself)
std::vector<double> baseline_image(const std::vector<double>& pixels, int64_t c, int64_t h,
                                   int64_t w, const Baseline& b, int64_t image_id);

// x with patch m replaced by the baseline's values; everything else bit-identical
std::vector<double> delete_patch(const std::vector<double>& pixels, int64_t c,
                                 const PatchGrid& grid, int m, const Baseline& b,
                                 int64_t image_id);

}  // namespace atb

#endif
