#pragma once

// Dense compute kernels over raw row-major buffers. Each kernel has a serial
// reference in `serial::`; the OpenMP variants in `omp::` parallelise the
// outermost independent loop and must agree with the reference bit-for-bit
// (every output element is reduced in the same order).

#include <span>

namespace smart::kernels {

struct Conv2dShape {
  int in_c, in_h, in_w;
  int out_c, kernel, stride, pad;
  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

namespace serial {

// y[o] = b[o] + sum_i w[o*in + i] x[i]; b may be empty.
void linear_forward(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                    std::span<double> y);
// Accumulates dW += dy x^T, db += dy, and writes dx = W^T dy when dx is non-empty.
void linear_backward(std::span<const double> w, std::span<const double> x, std::span<const double> dy,
                     std::span<double> dw, std::span<double> db, std::span<double> dx);

// Weights out_c x in_c x k x k, input in_c x H x W.
void conv2d_forward(const Conv2dShape& s, std::span<const double> w, std::span<const double> b,
                    std::span<const double> x, std::span<double> y);
void conv2d_backward(const Conv2dShape& s, std::span<const double> w, std::span<const double> x,
                     std::span<const double> dy, std::span<double> dw, std::span<double> db, std::span<double> dx);

// Same-padded temporal convolution over a time-major T x C signal.
// Weights out_c x in_c x k.
void conv1d_forward(int frames, int in_c, int out_c, int kernel, std::span<const double> w,
                    std::span<const double> b, std::span<const double> x, std::span<double> y);
void conv1d_backward(int frames, int in_c, int out_c, int kernel, std::span<const double> w,
                     std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                     std::span<double> db, std::span<double> dx);

}  // namespace serial

namespace omp {

void linear_forward(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                    std::span<double> y);
void conv2d_forward(const Conv2dShape& s, std::span<const double> w, std::span<const double> b,
                    std::span<const double> x, std::span<double> y);
void conv2d_backward(const Conv2dShape& s, std::span<const double> w, std::span<const double> x,
                     std::span<const double> dy, std::span<double> dw, std::span<double> db, std::span<double> dx);

}  // namespace omp

}  // namespace smart::kernels
