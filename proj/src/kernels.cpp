#include "attrbench/kernels.hpp"

#include <cstring>

namespace atb {
namespace kernels {

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  const int64_t rows = d.n * d.co * ho;
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < rows; ++row) {
    const int64_t oy = row % ho;
    const int64_t co = (row / ho) % d.co;
    const int64_t n = row / (ho * d.co);
    const double* wbase = w + co * d.ci * d.kh * d.kw;
    double* ybase = y + ((n * d.co + co) * ho + oy) * wo;
    const double b = bias ? bias[co] : 0.0;
    for (int64_t ox = 0; ox < wo; ++ox) ybase[ox] = b;
    for (int64_t ci = 0; ci < d.ci; ++ci) {
      const double* xc = x + (n * d.ci + ci) * d.h * d.w;
      const double* wc = wbase + ci * d.kh * d.kw;
      for (int64_t ky = 0; ky < d.kh; ++ky) {
        const int64_t iy = oy * d.stride + ky - d.pad;
        if (iy < 0 || iy >= d.h) continue;
        const double* xr = xc + iy * d.w;
        for (int64_t kx = 0; kx < d.kw; ++kx) {
          const double wv = wc[ky * d.kw + kx];
          const int64_t off = kx - d.pad;
          for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t ix = ox * d.stride + off;
            if (ix < 0 || ix >= d.w) continue;
            ybase[ox] += wv * xr[ix];
          }
        }
      }
    }
  }
}

// Gather form: every input coordinate sums its downstream contributions, so
// threads never write the same element.
void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  const int64_t rows = d.n * d.ci * d.h;
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < rows; ++row) {
    const int64_t iy = row % d.h;
    const int64_t ci = (row / d.h) % d.ci;
    const int64_t n = row / (d.h * d.ci);
    double* gxr = gx + row * d.w;
    for (int64_t ix = 0; ix < d.w; ++ix) {
      double acc = 0.0;
      for (int64_t co = 0; co < d.co; ++co) {
        const double* gyc = gy + (n * d.co + co) * ho * wo;
        const double* wc = w + (co * d.ci + ci) * d.kh * d.kw;
        for (int64_t ky = 0; ky < d.kh; ++ky) {
          const int64_t ty = iy + d.pad - ky;
          if (ty < 0 || ty % d.stride) continue;
          const int64_t oy = ty / d.stride;
          if (oy >= ho) continue;
          for (int64_t kx = 0; kx < d.kw; ++kx) {
            const int64_t tx = ix + d.pad - kx;
            if (tx < 0 || tx % d.stride) continue;
            const int64_t ox = tx / d.stride;
            if (ox >= wo) continue;
            acc += gyc[oy * wo + ox] * wc[ky * d.kw + kx];
          }
        }
      }
      gxr[ix] = acc;
    }
  }
}

void conv2d_backward_weight(const double* gy, const double* x, double* gw, const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  const int64_t nw = d.co * d.ci * d.kh * d.kw;
#pragma omp parallel for schedule(static)
  for (int64_t wi = 0; wi < nw; ++wi) {
    const int64_t kx = wi % d.kw;
    const int64_t ky = (wi / d.kw) % d.kh;
    const int64_t ci = (wi / (d.kw * d.kh)) % d.ci;
    const int64_t co = wi / (d.kw * d.kh * d.ci);
    double acc = 0.0;
    for (int64_t n = 0; n < d.n; ++n) {
      const double* gyc = gy + (n * d.co + co) * ho * wo;
      const double* xc = x + (n * d.ci + ci) * d.h * d.w;
      for (int64_t oy = 0; oy < ho; ++oy) {
        const int64_t iy = oy * d.stride + ky - d.pad;
        if (iy < 0 || iy >= d.h) continue;
        const double* xr = xc + iy * d.w;
        const double* gyr = gyc + oy * wo;
        for (int64_t ox = 0; ox < wo; ++ox) {
          const int64_t ix = ox * d.stride + kx - d.pad;
          if (ix < 0 || ix >= d.w) continue;
          acc += gyr[ox] * xr[ix];
        }
      }
    }
    gw[wi] = acc;
  }
}

void conv2d_backward_bias(const double* gy, double* gb, const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
#pragma omp parallel for schedule(static)
  for (int64_t co = 0; co < d.co; ++co) {
    double acc = 0.0;
    for (int64_t n = 0; n < d.n; ++n) {
      const double* gyc = gy + (n * d.co + co) * ho * wo;
      for (int64_t i = 0; i < ho * wo; ++i) acc += gyc[i];
    }
    gb[co] = acc;
  }
}

void linear_forward(const double* x, const double* w, const double* bias, double* y, int64_t n,
                    int64_t in, int64_t out) {
  const int64_t rows = n * out;
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < rows; ++row) {
    const int64_t o = row % out;
    const int64_t i = row / out;
    const double* xr = x + i * in;
    const double* wr = w + o * in;
    double acc = bias ? bias[o] : 0.0;
    for (int64_t k = 0; k < in; ++k) acc += xr[k] * wr[k];
    y[row] = acc;
  }
}

void linear_backward_input(const double* gy, const double* w, double* gx, int64_t n, int64_t in,
                           int64_t out) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double* gyr = gy + i * out;
    double* gxr = gx + i * in;
    for (int64_t k = 0; k < in; ++k) {
      double acc = 0.0;
      for (int64_t o = 0; o < out; ++o) acc += gyr[o] * w[o * in + k];
      gxr[k] = acc;
    }
  }
}

void linear_backward_weight(const double* gy, const double* x, double* gw, int64_t n, int64_t in,
                            int64_t out) {
  const int64_t nw = out * in;
#pragma omp parallel for schedule(static)
  for (int64_t wi = 0; wi < nw; ++wi) {
    const int64_t k = wi % in;
    const int64_t o = wi / in;
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += gy[i * out + o] * x[i * in + k];
    gw[wi] = acc;
  }
}

void linear_backward_bias(const double* gy, double* gb, int64_t n, int64_t out) {
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < out; ++o) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += gy[i * out + o];
    gb[o] = acc;
  }
}

}  // namespace kernels

namespace serial {

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t co = 0; co < d.co; ++co)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          double acc = bias ? bias[co] : 0.0;
          for (int64_t ci = 0; ci < d.ci; ++ci)
            for (int64_t ky = 0; ky < d.kh; ++ky)
              for (int64_t kx = 0; kx < d.kw; ++kx) {
                const int64_t iy = oy * d.stride + ky - d.pad;
                const int64_t ix = ox * d.stride + kx - d.pad;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                acc += x[((n * d.ci + ci) * d.h + iy) * d.w + ix] *
                       w[((co * d.ci + ci) * d.kh + ky) * d.kw + kx];
              }
          y[((n * d.co + co) * ho + oy) * wo + ox] = acc;
        }
}

// Scatter form (loops over outputs, accumulates into gx).
void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  std::memset(gx, 0, sizeof(double) * d.n * d.ci * d.h * d.w);
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t co = 0; co < d.co; ++co)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          const double g = gy[((n * d.co + co) * ho + oy) * wo + ox];
          for (int64_t ci = 0; ci < d.ci; ++ci)
            for (int64_t ky = 0; ky < d.kh; ++ky)
              for (int64_t kx = 0; kx < d.kw; ++kx) {
                const int64_t iy = oy * d.stride + ky - d.pad;
                const int64_t ix = ox * d.stride + kx - d.pad;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                gx[((n * d.ci + ci) * d.h + iy) * d.w + ix] +=
                    g * w[((co * d.ci + ci) * d.kh + ky) * d.kw + kx];
              }
        }
}

void conv2d_backward_weight(const double* gy, const double* x, double* gw, const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  std::memset(gw, 0, sizeof(double) * d.co * d.ci * d.kh * d.kw);
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t co = 0; co < d.co; ++co)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          const double g = gy[((n * d.co + co) * ho + oy) * wo + ox];
          for (int64_t ci = 0; ci < d.ci; ++ci)
            for (int64_t ky = 0; ky < d.kh; ++ky)
              for (int64_t kx = 0; kx < d.kw; ++kx) {
                const int64_t iy = oy * d.stride + ky - d.pad;
                const int64_t ix = ox * d.stride + kx - d.pad;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                gw[((co * d.ci + ci) * d.kh + ky) * d.kw + kx] +=
                    g * x[((n * d.ci + ci) * d.h + iy) * d.w + ix];
              }
        }
}

void linear_forward(const double* x, const double* w, const double* bias, double* y, int64_t n,
                    int64_t in, int64_t out) {
  for (int64_t i = 0; i < n; ++i)
    for (int64_t o = 0; o < out; ++o) {
      double acc = bias ? bias[o] : 0.0;
      for (int64_t k = 0; k < in; ++k) acc += x[i * in + k] * w[o * in + k];
      y[i * out + o] = acc;
    }
}

}  // namespace serial
}  // namespace atb
