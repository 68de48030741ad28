#include "attrbench/patch.hpp"

#include <cmath>

#include "attrbench/common.hpp"

namespace atb {

PatchGrid::PatchGrid(int side_count, int64_t height, int64_t width)
    : side(side_count), h(height), w(width) {
  if (side < 1) throw ConfigError("patch grid: side count must be >= 1, got " + std::to_string(side));
  if (h % side != 0 || w % side != 0) {
    throw ConfigError("patch grid: side count " + std::to_string(side) + " does not divide image " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
}

void PatchGrid::bounds(int m, int64_t& y0, int64_t& y1, int64_t& x0, int64_t& x1) const {
  if (m < 1 || m > patch_count()) {
    throw ConfigError("patch index " + std::to_string(m) + " outside [1," +
                      std::to_string(patch_count()) + "]");
  }
  int row = (m - 1) / side, col = (m - 1) % side;
  y0 = row * patch_h();
  y1 = y0 + patch_h();
  x0 = col * patch_w();
  x1 = x0 + patch_w();
}

std::string Baseline::describe() const {
  char buf[96];
  switch (kind) {
    case Kind::kZero:
      return "zero";
    case Kind::kRandomUniform:
      std::snprintf(buf, sizeof buf, "random_uniform(%g,%g,seed=%llu)", lo, hi,
                    static_cast<unsigned long long>(seed));
      return buf;
    default:
      std::snprintf(buf, sizeof buf, "gaussian_blur(%dx%d,sigma=%g)", kernel, kernel, sigma);
      return buf;
  }
}

Baseline parse_baseline(const std::string& text) {
  Baseline b;
  if (text == "zero") {
    b.kind = Baseline::Kind::kZero;
  } else if (text == "random_uniform") {
    b.kind = Baseline::Kind::kRandomUniform;
  } else if (text == "gaussian_blur") {
    b.kind = Baseline::Kind::kGaussianBlur;
  } else {
    throw ConfigError("unknown baseline '" + text +
                      "' (expected zero | random_uniform | gaussian_blur)");
  }
  return b;
}

std::vector<double> gaussian_blur(const std::vector<double>& pixels, int64_t c, int64_t h,
                                  int64_t w, int kernel, double sigma) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("gaussian_blur: kernel must be odd and >= 1, got " + std::to_string(kernel));
  }
  if (!(sigma > 0.0)) throw ConfigError("gaussian_blur: sigma must be > 0");
  int r = kernel / 2;
  std::vector<double> k(kernel);
  double norm = 0.0;
  for (int i = 0; i < kernel; ++i) {
    double d = static_cast<double>(i - r);
    k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    norm += k[i];
  }
  for (auto& v : k) v /= norm;

  std::vector<double> tmp(pixels.size()), out(pixels.size());
  auto clampi = [](int64_t v, int64_t n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
  for (int64_t ch = 0; ch < c; ++ch) {
    const double* src = pixels.data() + ch * h * w;
    double* t = tmp.data() + ch * h * w;
    for (int64_t y = 0; y < h; ++y) {  // horizontal pass
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * src[y * w + clampi(x + i, w)];
        t[y * w + x] = acc;
      }
    }
    double* dst = out.data() + ch * h * w;
    for (int64_t y = 0; y < h; ++y) {  // vertical pass
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * t[clampi(y + i, h) * w + x];
        dst[y * w + x] = acc;
      }
    }
  }
  return out;
}

std::vector<double> baseline_image(const std::vector<double>& pixels, int64_t c, int64_t h,
                                   int64_t w, const Baseline& b, int64_t image_id) {
  switch (b.kind) {
    case Baseline::Kind::kZero:
      return std::vector<double>(pixels.size(), 0.0);
    case Baseline::Kind::kRandomUniform: {
      // keyed by (seed, image id): parallel evaluation order cannot change draws
      RngStream rng(mix_seed({b.seed, 0x62617365u, static_cast<uint64_t>(image_id)}));
      std::vector<double> out(pixels.size());
      for (auto& v : out) v = rng.uniform(b.lo, b.hi);
      return out;
    }
    default:
      return gaussian_blur(pixels, c, h, w, b.kernel, b.sigma);
  }
}

std::vector<double> delete_patch(const std::vector<double>& pixels, int64_t c,
                                 const PatchGrid& grid, int m, const Baseline& b,
                                 int64_t image_id) {
  if (static_cast<int64_t>(pixels.size()) != c * grid.h * grid.w) {
    throw ConfigError("delete_patch: pixel buffer of " + std::to_string(pixels.size()) +
                      " does not match " + std::to_string(c) + "x" + std::to_string(grid.h) + "x" +
                      std::to_string(grid.w));
  }
  int64_t y0, y1, x0, x1;
  grid.bounds(m, y0, y1, x0, x1);
  std::vector<double> base = baseline_image(pixels, c, grid.h, grid.w, b, image_id);
  std::vector<double> out = pixels;
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t y = y0; y < y1; ++y) {
      for (int64_t x = x0; x < x1; ++x) {
        out[(ch * grid.h + y) * grid.w + x] = base[(ch * grid.h + y) * grid.w + x];
      }
    }
  }
  return out;
}

}  // namespace atb
