// Rough forward/backward throughput probe for sizing experiments.
#include <chrono>
#include <cstdio>

#include "paser/adam.hpp"
#include "paser/eval.hpp"
#include "paser/flops.hpp"
#include "paser/graph.hpp"

using namespace paser;

namespace {

template <typename T>
double time_loop(int iters, T&& fn) {
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / iters;
}

void bench_conv(int cin, int cout, int h, int w) {
  Rng rng(1);
  Graph<float> g;
  int x = g.add_input("x", {cin, h, w});
  int wp = g.add_param("w", he_conv_init<float>(cout, cin, 3, 3, rng, "w"));
  int bp = g.add_param("b", Tensor<float>::zeros({cout}));
  int y = conv2d(g, x, wp, bp, 1, 1);
  int labels = g.add_input("l", {h, w});
  int z = conv2d(g, y, g.add_param("w2", he_conv_init<float>(3, cout, 1, 1, rng, "w2")), -1, 1, 0);
  int loss = cross_entropy(g, z, labels);

  Tensor<float> img({cin, h, w});
  for (std::int64_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<float>(rng.uniform());
  Tensor<float> lab({h, w});

  Eval<float> ev;
  auto fwd_flops = count_flops(g, {y});
  double fwd = time_loop(20, [&] { forward(g, ev, {{"x", &img}, {"l", &lab}}, {y}, Mode::kEval, Rng(0)); });
  double fb = time_loop(20, [&] {
    forward(g, ev, {{"x", &img}, {"l", &lab}}, {loss}, Mode::kTrain, Rng(0));
    auto grads = backward(g, ev, loss);
  });
  std::printf("conv %3dx%-3d %3dx%-3d  fwd %8.3f ms  %6.2f GF/s   fwd+bwd %8.3f ms\n", cin, cout,
              h, w, fwd * 1e3, fwd_flops / fwd / 1e9, fb * 1e3);
}

}  // namespace

int main() {
  bench_conv(24, 24, 64, 64);
  bench_conv(64, 64, 16, 16);
  bench_conv(128, 128, 8, 8);
  bench_conv(256, 256, 4, 4);
  bench_conv(6, 6, 64, 64);
  return 0;
}
