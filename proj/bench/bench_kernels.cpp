// Serial reference vs OpenMP timings for the dense kernels and the
// sample-parallel loops (batch gradient, preprocessing, generation).
// Also confirms each pair produces identical results.
//
//   bench_kernels [--reps N] [--threads N]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "smart/kernels.hpp"
#include "smart/model.hpp"
#include "smart/nn.hpp"
#include "smart/parallel.hpp"
#include "smart/synthgen.hpp"

using namespace smart;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Best-of-N wall time in milliseconds.
double time_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const std::string& name, double serial_ms, double omp_ms, bool identical) {
  std::printf("%-34s %10.3f %10.3f %8.2fx  %s\n", name.c_str(), serial_ms, omp_ms, serial_ms / omp_ms,
              identical ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP benchmark"};
  int reps = 5, threads = 0;
  app.add_option("--reps", reps, "repetitions per measurement (best is reported)")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "worker count (sets SMART_THREADS)")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) setenv("SMART_THREADS", std::to_string(threads).c_str(), 1);

  std::printf("workers: %d\n", thread_count());
  std::printf("%-34s %10s %10s %9s\n", "case", "serial ms", "omp ms", "speedup");
  std::mt19937_64 rng(1);

  {
    const int in = 1024, out = 1024;
    const auto w = random_vector(static_cast<std::size_t>(in) * out, rng), b = random_vector(out, rng),
               x = random_vector(in, rng);
    std::vector<double> ys(out), yo(out);
    const double s = time_ms(reps, [&] { kernels::serial::linear_forward(w, b, x, ys); });
    const double o = time_ms(reps, [&] { kernels::omp::linear_forward(w, b, x, yo); });
    row("linear forward 1024x1024", s, o, ys == yo);
  }

  {
    const kernels::Conv2dShape shape{8, 64, 64, 16, 3, 1, 1};
    const auto w = random_vector(static_cast<std::size_t>(shape.out_c) * shape.in_c * 9, rng);
    const auto b = random_vector(shape.out_c, rng);
    const auto x = random_vector(static_cast<std::size_t>(shape.in_c) * shape.in_h * shape.in_w, rng);
    const std::size_t ny = static_cast<std::size_t>(shape.out_c) * shape.out_h() * shape.out_w();
    std::vector<double> ys(ny), yo(ny);
    const double s = time_ms(reps, [&] { kernels::serial::conv2d_forward(shape, w, b, x, ys); });
    const double o = time_ms(reps, [&] { kernels::omp::conv2d_forward(shape, w, b, x, yo); });
    row("conv2d forward 8x64x64 -> 16", s, o, ys == yo);

    const auto dy = random_vector(ny, rng);
    std::vector<double> dws(w.size()), dbs(b.size()), dxs(x.size()), dwo(w.size()), dbo(b.size()), dxo(x.size());
    auto reset = [](std::vector<double>& a, std::vector<double>& b2, std::vector<double>& c) {
      std::fill(a.begin(), a.end(), 0.0);
      std::fill(b2.begin(), b2.end(), 0.0);
      std::fill(c.begin(), c.end(), 0.0);
    };
    const double sb = time_ms(reps, [&] {
      reset(dws, dbs, dxs);
      kernels::serial::conv2d_backward(shape, w, x, dy, dws, dbs, dxs);
    });
    const double ob = time_ms(reps, [&] {
      reset(dwo, dbo, dxo);
      kernels::omp::conv2d_backward(shape, w, x, dy, dwo, dbo, dxo);
    });
    row("conv2d backward 8x64x64 -> 16", sb, ob, dws == dwo && dbs == dbo && dxs == dxo);
  }

  GeneratorConfig gc;
  gc.clips_per_class = 4;
  Dataset ds;
  {
    Dataset serial_ds;
    const double s = time_ms(1, [&] { serial_ds = generate_dataset_serial(gc); });
    const double o = time_ms(1, [&] { ds = generate_dataset(gc); });
    row("generate dataset (" + std::to_string(ds.samples.size()) + " clips)", s, o, serial_ds == ds);
  }

  const ModelConfig mc;
  std::vector<int> ids;
  for (std::size_t i = 0; i < ds.samples.size() && ids.size() < 64; i += 3) ids.push_back(ds.samples[i].sequence_id);
  std::vector<SampleInputs> inputs;
  {
    std::vector<SampleInputs> serial_inputs;
    const double s = time_ms(1, [&] { serial_inputs = prepare_samples_serial(ds, ids, mc); });
    const double o = time_ms(1, [&] { inputs = prepare_samples(ds, ids, mc); });
    bool same = serial_inputs.size() == inputs.size();
    for (std::size_t i = 0; same && i < inputs.size(); ++i)
      same = serial_inputs[i].skeleton == inputs[i].skeleton && serial_inputs[i].trajectory == inputs[i].trajectory;
    row("prepare 64 samples", s, o, same);
  }

  {
    const SmartModel model = SmartModel::create(mc, 7);
    std::vector<const SampleInputs*> batch;
    for (std::size_t i = 0; i < 16; ++i) batch.push_back(&inputs[i]);
    nn::Grads gs(model.params()), go(model.params());
    double ls = 0, lo = 0;
    const double s = time_ms(reps, [&] { ls = batch_loss_and_grad_serial(model, batch, gs); });
    const double o = time_ms(reps, [&] { lo = batch_loss_and_grad(model, batch, go); });
    bool same = ls == lo;
    for (std::size_t t = 0; same && t < model.params().size(); ++t) {
      const auto a = gs[static_cast<int>(t)], b = go[static_cast<int>(t)];
      same = std::equal(a.begin(), a.end(), b.begin(), b.end());
    }
    row("batch loss+grad (16 samples)", s, o, same);
  }
  return 0;
}
