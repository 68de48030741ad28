#ifndef ATTRBENCH_KERNELS_HPP
#define ATTRBENCH_KERNELS_HPP

#include <cstdint>

// Dense f64 kernels in NCHW / row-major layout.
//
// atb::kernels   - OpenMP-parallel versions used by the tensor ops.
// atb::serial    - naive reference implementations kept for testing and for
//                  the kernel benchmark. Different loop structure on purpose
//                  (scatter vs gather for conv backward) so the two sides
//                  cross-check each other.
//
// Both sides accumulate each output element in a fixed serial order, so
// results are bit-identical for any thread count.

namespace atb {

struct Conv2dDims {
  int64_t n, ci, h, w;  // input  [n, ci, h, w]
  int64_t co, kh, kw;   // kernel [co, ci, kh, kw]
  int64_t stride = 1, pad = 0;
  int64_t ho() const { return (h + 2 * pad - kh) / stride + 1; }
  int64_t wo() const { return (w + 2 * pad - kw) / stride + 1; }
};

namespace kernels {

// bias may be nullptr
void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d);
// all backward kernels overwrite their output buffer; no pre-zeroing needed
void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d);
void conv2d_backward_weight(const double* gy, const double* x, double* gw, const Conv2dDims& d);
void conv2d_backward_bias(const double* gy, double* gb, const Conv2dDims& d);

// x [n, in], w [out, in], y [n, out]
void linear_forward(const double* x, const double* w, const double* bias, double* y, int64_t n,
                    int64_t in, int64_t out);
void linear_backward_input(const double* gy, const double* w, double* gx, int64_t n, int64_t in,
                           int64_t out);
void linear_backward_weight(const double* gy, const double* x, double* gw, int64_t n, int64_t in,
                            int64_t out);
void linear_backward_bias(const double* gy, double* gb, int64_t n, int64_t out);

}  // namespace kernels

namespace serial {

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d);
void conv2d_backward_weight(const double* gy, const double* x, double* gw, const Conv2dDims& d);

void linear_forward(const double* x, const double* w, const double* bias, double* y, int64_t n,
                    int64_t in, int64_t out);

}  // namespace serial

}  // namespace atb

#endif
