#include "smart/kernels.hpp"

#include <cstddef>

#include "smart/parallel.hpp"

namespace smart::kernels {

namespace {

// Loop bodies shared by the serial and OpenMP drivers so both perform the
// same floating-point operations in the same order.

inline void linear_row(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                       std::span<double> y, std::size_t o) {
  const std::size_t in = x.size();
  const double* row = w.data() + o * in;
  double acc = b.empty() ? 0.0 : b[o];
  for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
  y[o] = acc;
}

inline void conv2d_out_channel(const Conv2dShape& s, std::span<const double> w, std::span<const double> b,
                               std::span<const double> x, std::span<double> y, int o) {
  const int oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double acc = b.empty() ? 0.0 : b[o];
      for (int c = 0; c < s.in_c; ++c) {
        const double* wk = w.data() + ((static_cast<std::size_t>(o) * s.in_c + c) * k) * k;
        const double* xc = x.data() + static_cast<std::size_t>(c) * s.in_h * s.in_w;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.in_h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.in_w) continue;
            acc += wk[ky * k + kx] * xc[iy * s.in_w + ix];
          }
        }
      }
      y[(static_cast<std::size_t>(o) * oh + oy) * ow + ox] = acc;
    }
  }
}

inline void conv2d_weight_grad(const Conv2dShape& s, std::span<const double> x, std::span<const double> dy,
                               std::span<double> dw, std::span<double> db, int o) {
  const int oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  const double* dyo = dy.data() + static_cast<std::size_t>(o) * oh * ow;
  if (!db.empty())
    for (int i = 0; i < oh * ow; ++i) db[o] += dyo[i];
  for (int c = 0; c < s.in_c; ++c) {
    const double* xc = x.data() + static_cast<std::size_t>(c) * s.in_h * s.in_w;
    double* dwk = dw.data() + ((static_cast<std::size_t>(o) * s.in_c + c) * k) * k;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double acc = 0.0;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.in_h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.in_w) continue;
            acc += dyo[oy * ow + ox] * xc[iy * s.in_w + ix];
          }
        }
        dwk[ky * k + kx] += acc;
      }
  }
}

inline void conv2d_input_grad(const Conv2dShape& s, std::span<const double> w, std::span<const double> dy,
                              std::span<double> dx, int c) {
  const int oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  double* dxc = dx.data() + static_cast<std::size_t>(c) * s.in_h * s.in_w;
  for (int i = 0; i < s.in_h * s.in_w; ++i) dxc[i] = 0.0;
  for (int o = 0; o < s.out_c; ++o) {
    const double* wk = w.data() + ((static_cast<std::size_t>(o) * s.in_c + c) * k) * k;
    const double* dyo = dy.data() + static_cast<std::size_t>(o) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const double g = dyo[oy * ow + ox];
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.in_h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.in_w) continue;
            dxc[iy * s.in_w + ix] += wk[ky * k + kx] * g;
          }
        }
      }
  }
}

}  // namespace

namespace serial {

void linear_forward(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                    std::span<double> y) {
  for (std::size_t o = 0; o < y.size(); ++o) linear_row(w, b, x, y, o);
}

void linear_backward(std::span<const double> w, std::span<const double> x, std::span<const double> dy,
                     std::span<double> dw, std::span<double> db, std::span<double> dx) {
  const std::size_t in = x.size(), out = dy.size();
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    if (!db.empty()) db[o] += g;
    double* row = dw.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) row[i] += g * x[i];
  }
  if (!dx.empty()) {
    for (std::size_t i = 0; i < in; ++i) dx[i] = 0.0;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dy[o];
      const double* row = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) dx[i] += row[i] * g;
    }
  }
}

void conv2d_forward(const Conv2dShape& s, std::span<const double> w, std::span<const double> b,
                    std::span<const double> x, std::span<double> y) {
  for (int o = 0; o < s.out_c; ++o) conv2d_out_channel(s, w, b, x, y, o);
}

void conv2d_backward(const Conv2dShape& s, std::span<const double> w, std::span<const double> x,
                     std::span<const double> dy, std::span<double> dw, std::span<double> db, std::span<double> dx) {
  for (int o = 0; o < s.out_c; ++o) conv2d_weight_grad(s, x, dy, dw, db, o);
  if (!dx.empty())
    for (int c = 0; c < s.in_c; ++c) conv2d_input_grad(s, w, dy, dx, c);
}

void conv1d_forward(int frames, int in_c, int out_c, int kernel, std::span<const double> w,
                    std::span<const double> b, std::span<const double> x, std::span<double> y) {
  const int pad = (kernel - 1) / 2;
  for (int t = 0; t < frames; ++t)
    for (int o = 0; o < out_c; ++o) {
      double acc = b.empty() ? 0.0 : b[o];
      for (int j = 0; j < kernel; ++j) {
        const int ti = t + j - pad;
        if (ti < 0 || ti >= frames) continue;
        const double* xt = x.data() + static_cast<std::size_t>(ti) * in_c;
        const double* wo = w.data() + static_cast<std::size_t>(o) * in_c * kernel;
        for (int c = 0; c < in_c; ++c) acc += wo[c * kernel + j] * xt[c];
      }
      y[static_cast<std::size_t>(t) * out_c + o] = acc;
    }
}

void conv1d_backward(int frames, int in_c, int out_c, int kernel, std::span<const double> w,
                     std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                     std::span<double> db, std::span<double> dx) {
  const int pad = (kernel - 1) / 2;
  if (!dx.empty())
    for (auto& v : dx) v = 0.0;
  for (int t = 0; t < frames; ++t)
    for (int o = 0; o < out_c; ++o) {
      const double g = dy[static_cast<std::size_t>(t) * out_c + o];
      if (!db.empty()) db[o] += g;
      double* dwo = dw.data() + static_cast<std::size_t>(o) * in_c * kernel;
      const double* wo = w.data() + static_cast<std::size_t>(o) * in_c * kernel;
      for (int j = 0; j < kernel; ++j) {
        const int ti = t + j - pad;
        if (ti < 0 || ti >= frames) continue;
        const double* xt = x.data() + static_cast<std::size_t>(ti) * in_c;
        for (int c = 0; c < in_c; ++c) dwo[c * kernel + j] += g * xt[c];
        if (!dx.empty()) {
          double* dxt = dx.data() + static_cast<std::size_t>(ti) * in_c;
          for (int c = 0; c < in_c; ++c) dxt[c] += wo[c * kernel + j] * g;
        }
      }
    }
}

}  // namespace serial

namespace omp {

void linear_forward(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                    std::span<double> y) {
  parallel_for(static_cast<std::ptrdiff_t>(y.size()), [&](std::ptrdiff_t o) { linear_row(w, b, x, y, o); });
}

void conv2d_forward(const Conv2dShape& s, std::span<const double> w, std::span<const double> b,
                    std::span<const double> x, std::span<double> y) {
  parallel_for(s.out_c, [&](std::ptrdiff_t o) { conv2d_out_channel(s, w, b, x, y, static_cast<int>(o)); });
}

void conv2d_backward(const Conv2dShape& s, std::span<const double> w, std::span<const double> x,
                     std::span<const double> dy, std::span<double> dw, std::span<double> db, std::span<double> dx) {
  parallel_for(s.out_c, [&](std::ptrdiff_t o) { conv2d_weight_grad(s, x, dy, dw, db, static_cast<int>(o)); });
  if (!dx.empty())
    parallel_for(s.in_c, [&](std::ptrdiff_t c) { conv2d_input_grad(s, w, dy, dx, static_cast<int>(c)); });
}

}  // namespace omp

}  // namespace smart::kernels
