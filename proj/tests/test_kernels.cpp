#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <stdexcept>

#include "smart/kernels.hpp"
#include "smart/parallel.hpp"
#include "support.hpp"

using namespace smart;
using namespace smart::kernels;
using smart::testing::random_vector;

namespace {

// Several workers even on a single-core host, so the OpenMP paths really split.
struct ForceThreads {
  ForceThreads() { setenv("SMART_THREADS", "4", 1); }
  ~ForceThreads() { unsetenv("SMART_THREADS"); }
};

std::vector<double> naive_conv2d(const Conv2dShape& s, const std::vector<double>& w, const std::vector<double>& b,
                                 const std::vector<double>& x) {
  std::vector<double> y(static_cast<std::size_t>(s.out_c) * s.out_h() * s.out_w(), 0.0);
  for (int o = 0; o < s.out_c; ++o)
    for (int oy = 0; oy < s.out_h(); ++oy)
      for (int ox = 0; ox < s.out_w(); ++ox) {
        double acc = b[o];
        for (int c = 0; c < s.in_c; ++c)
          for (int ky = 0; ky < s.kernel; ++ky)
            for (int kx = 0; kx < s.kernel; ++kx) {
              const int iy = oy * s.stride - s.pad + ky, ix = ox * s.stride - s.pad + kx;
              if (iy >= 0 && iy < s.in_h && ix >= 0 && ix < s.in_w)
                acc += w[((o * s.in_c + c) * s.kernel + ky) * s.kernel + kx] * x[(c * s.in_h + iy) * s.in_w + ix];
            }
        y[(o * s.out_h() + oy) * s.out_w() + ox] = acc;
      }
  return y;
}

const Conv2dShape kShapes[] = {
    {1, 8, 8, 2, 3, 1, 1},
    {2, 9, 7, 3, 3, 2, 1},
    {3, 16, 16, 4, 3, 2, 1},
    {2, 5, 6, 5, 1, 1, 0},
};

bool same(std::span<const double> a, std::span<const double> b) { return std::equal(a.begin(), a.end(), b.begin(), b.end()); }

}  // namespace

TEST_CASE("linear forward matches the naive product and the OpenMP variant bit for bit") {
  ForceThreads threads;
  std::mt19937_64 rng(1);
  for (auto [in, out] : {std::pair{1, 1}, std::pair{7, 3}, std::pair{64, 33}}) {
    const auto w = random_vector(static_cast<std::size_t>(in) * out, rng), b = random_vector(out, rng),
               x = random_vector(in, rng);
    std::vector<double> ys(out), yo(out), expect(out);
    serial::linear_forward(w, b, x, ys);
    omp::linear_forward(w, b, x, yo);
    for (int o = 0; o < out; ++o) {
      expect[o] = b[o];
      for (int i = 0; i < in; ++i) expect[o] += w[o * in + i] * x[i];
    }
    CHECK(same(ys, yo));
    CHECK(same(ys, expect));
    serial::linear_forward(w, {}, x, ys);
    for (int o = 0; o < out; ++o) CHECK(ys[o] == doctest::Approx(expect[o] - b[o]).epsilon(1e-12));
  }
}

TEST_CASE("linear backward accumulates the outer product and writes W^T dy") {
  std::mt19937_64 rng(2);
  const int in = 5, out = 4;
  const auto w = random_vector(in * out, rng), x = random_vector(in, rng), dy = random_vector(out, rng);
  std::vector<double> dw(in * out, 1.0), db(out, 1.0), dx(in, 99.0);
  serial::linear_backward(w, x, dy, dw, db, dx);
  for (int o = 0; o < out; ++o) {
    CHECK(db[o] == 1.0 + dy[o]);
    for (int i = 0; i < in; ++i) CHECK(dw[o * in + i] == doctest::Approx(1.0 + dy[o] * x[i]).epsilon(1e-14));
  }
  for (int i = 0; i < in; ++i) {
    double e = 0;
    for (int o = 0; o < out; ++o) e += w[o * in + i] * dy[o];
    CHECK(dx[i] == doctest::Approx(e).epsilon(1e-14));
  }
}

TEST_CASE("conv2d forward matches a naive loop and the OpenMP variant bit for bit") {
  ForceThreads threads;
  std::mt19937_64 rng(3);
  for (const auto& s : kShapes) {
    const auto w = random_vector(static_cast<std::size_t>(s.out_c) * s.in_c * s.kernel * s.kernel, rng);
    const auto b = random_vector(s.out_c, rng);
    const auto x = random_vector(static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w, rng);
    std::vector<double> ys(static_cast<std::size_t>(s.out_c) * s.out_h() * s.out_w()), yo(ys.size());
    serial::conv2d_forward(s, w, b, x, ys);
    omp::conv2d_forward(s, w, b, x, yo);
    CHECK(same(ys, yo));
    const auto expect = naive_conv2d(s, w, b, x);
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(ys[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d backward matches finite differences and the OpenMP variant bit for bit") {
  ForceThreads threads;
  std::mt19937_64 rng(4);
  for (const auto& s : kShapes) {
    auto w = random_vector(static_cast<std::size_t>(s.out_c) * s.in_c * s.kernel * s.kernel, rng);
    auto b = random_vector(s.out_c, rng);
    auto x = random_vector(static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w, rng);
    const auto dy = random_vector(static_cast<std::size_t>(s.out_c) * s.out_h() * s.out_w(), rng);
    std::vector<double> dws(w.size(), 0.0), dbs(b.size(), 0.0), dxs(x.size(), 0.0);
    std::vector<double> dwo(w.size(), 0.0), dbo(b.size(), 0.0), dxo(x.size(), 0.0);
    serial::conv2d_backward(s, w, x, dy, dws, dbs, dxs);
    omp::conv2d_backward(s, w, x, dy, dwo, dbo, dxo);
    CHECK(same(dws, dwo));
    CHECK(same(dbs, dbo));
    CHECK(same(dxs, dxo));

    auto loss = [&] { return testing::weighted_sum(dy, naive_conv2d(s, w, b, x)); };
    CHECK(testing::check_input_gradient(w, dws, loss, "w").max_rel < 1e-6);
    CHECK(testing::check_input_gradient(b, dbs, loss, "b").max_rel < 1e-6);
    CHECK(testing::check_input_gradient(x, dxs, loss, "x").max_rel < 1e-6);
  }
}

TEST_CASE("same-padded conv1d forward and backward") {
  std::mt19937_64 rng(5);
  for (auto [frames, in_c, out_c, kernel] : {std::tuple{1, 2, 3, 3}, std::tuple{6, 3, 2, 3}, std::tuple{9, 2, 4, 5}}) {
    auto w = random_vector(static_cast<std::size_t>(out_c) * in_c * kernel, rng);
    auto b = random_vector(out_c, rng);
    auto x = random_vector(static_cast<std::size_t>(frames) * in_c, rng);
    const int pad = (kernel - 1) / 2;
    auto forward = [&] {
      std::vector<double> y(static_cast<std::size_t>(frames) * out_c);
      serial::conv1d_forward(frames, in_c, out_c, kernel, w, b, x, y);
      return y;
    };
    const auto y = forward();
    for (int t = 0; t < frames; ++t)
      for (int o = 0; o < out_c; ++o) {
        double e = b[o];
        for (int j = 0; j < kernel; ++j)
          for (int c = 0; c < in_c; ++c) {
            const int ti = t + j - pad;
            if (ti >= 0 && ti < frames) e += w[(o * in_c + c) * kernel + j] * x[ti * in_c + c];
          }
        CHECK(y[t * out_c + o] == doctest::Approx(e).epsilon(1e-12));
      }
    const auto dy = random_vector(y.size(), rng);
    std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0), dx(x.size(), 0.0);
    serial::conv1d_backward(frames, in_c, out_c, kernel, w, x, dy, dw, db, dx);
    auto loss = [&] { return testing::weighted_sum(dy, forward()); };
    CHECK(testing::check_input_gradient(w, dw, loss, "w").max_rel < 1e-6);
    CHECK(testing::check_input_gradient(b, db, loss, "b").max_rel < 1e-6);
    CHECK(testing::check_input_gradient(x, dx, loss, "x").max_rel < 1e-6);
  }
}

TEST_CASE("parallel_for visits every index once and rethrows the lowest failing index") {
  ForceThreads threads;
  CHECK(thread_count() == 4);
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(1000, [&](std::ptrdiff_t i) { ++hits[static_cast<std::size_t>(i)]; });
  for (const auto& h : hits) CHECK(h.load() == 1);

  try {
    parallel_for(100, [](std::ptrdiff_t i) {
      if (i == 71 || i == 13 || i == 40) throw std::runtime_error("index " + std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "index 13");
  }
  parallel_for(0, [](std::ptrdiff_t) { FAIL("no iterations expected"); });
}

TEST_CASE("SMART_THREADS falls back to the default on bad values") {
  setenv("SMART_THREADS", "zero", 1);
  const int fallback = thread_count();
  CHECK(fallback >= 1);
  setenv("SMART_THREADS", "-3", 1);
  CHECK(thread_count() == fallback);
  setenv("SMART_THREADS", "2", 1);
  CHECK(thread_count() == 2);
  unsetenv("SMART_THREADS");
}
