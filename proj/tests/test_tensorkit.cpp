#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "paser/adam.hpp"
#include "paser/eval.hpp"
#include "paser/flops.hpp"
#include "paser/graph.hpp"
#include "paser/rng.hpp"
#include "paser/tensor.hpp"

using namespace paser;
using paser::testing::gradcheck;
using paser::testing::gradcheck_all;
using paser::testing::random_tensor;

namespace {

template <typename T>
T run_scalar(Graph<T>& g, const Feed<T>& feed, int node, Mode mode = Mode::kEval,
             std::uint64_t seed = 0) {
  Eval<T> ev;
  forward(g, ev, feed, {node}, mode, Rng(seed));
  return output_value(g, ev, node).value();
}

}  // namespace

TEST_SUITE_BEGIN("tensorkit");

TEST_CASE("identity graph passes input through") {
  Graph<float> g;
  int x = g.add_input("x", {2, 2});
  g.mark_output("y", x);
  Tensor<float> t = Tensor<float>::from({2, 2}, {1.f, 2.f, 3.f, 4.f});
  Eval<float> ev;
  forward(g, ev, {{"x", &t}}, {x}, Mode::kEval, Rng(0));
  const auto& y = output_value(g, ev, x);
  CHECK(y.shape == Shape{2, 2});
  for (int i = 0; i < 4; ++i) CHECK(y.data[i] == t.data[i]);
}

TEST_CASE("relu forward") {
  Graph<float> g;
  int x = g.add_input("x", {2});
  int y = relu(g, x);
  Tensor<float> t = Tensor<float>::from({2}, {-1.f, 2.f});
  Eval<float> ev;
  forward(g, ev, {{"x", &t}}, {y}, Mode::kEval, Rng(0));
  CHECK(output_value(g, ev, y).data[0] == 0.f);
  CHECK(output_value(g, ev, y).data[1] == 2.f);
}

TEST_CASE("softmax of zero logits is uniform") {
  Graph<float> g;
  int x = g.add_input("x", {3});
  int y = softmax_channels(g, x);
  Tensor<float> t = Tensor<float>::zeros({3});
  Eval<float> ev;
  forward(g, ev, {{"x", &t}}, {y}, Mode::kEval, Rng(0));
  for (int i = 0; i < 3; ++i)
    CHECK(output_value(g, ev, y).data[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("softmax rows sum to one for random CHW logits") {
  Rng rng(11);
  Graph<double> g;
  int x = g.add_input("x", {5, 4, 6});
  int y = softmax_channels(g, x);
  Tensor<double> t = random_tensor({5, 4, 6}, rng, -8.0, 8.0);
  Eval<double> ev;
  forward(g, ev, {{"x", &t}}, {y}, Mode::kEval, Rng(0));
  const auto& p = output_value(g, ev, y);
  for (int px = 0; px < 24; ++px) {
    double s = 0;
    for (int c = 0; c < 5; ++c) s += p.data[c * 24 + px];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("backward of x squared") {
  Graph<double> g;
  int x = g.add_param("x", Tensor<double>::scalar(3.0));
  int y = mul(g, x, x);
  Eval<double> ev;
  forward(g, ev, {}, {y}, Mode::kTrain, Rng(0));
  auto grads = backward(g, ev, y);
  CHECK(grads.at("x").value() == doctest::Approx(6.0));
}

TEST_CASE("relu gradient is a step") {
  for (double v : {1.0, -1.0}) {
    Graph<double> g;
    int x = g.add_param("x", Tensor<double>::scalar(v));
    int y = sum_all(g, relu(g, x));
    Eval<double> ev;
    forward(g, ev, {}, {y}, Mode::kTrain, Rng(0));
    auto grads = backward(g, ev, y);
    CHECK(grads.at("x").value() == (v > 0 ? 1.0 : 0.0));
  }
}

TEST_CASE("cross entropy is nonnegative and vanishes on confident truth") {
  Graph<double> g;
  int z = g.add_input("z", {3, 2, 2});
  int y = g.add_input("y", {2, 2});
  int loss = cross_entropy(g, z, y);
  Rng rng(3);
  Tensor<double> labels = Tensor<double>::from({2, 2}, {0, 1, 2, 1});

  Tensor<double> logits = random_tensor({3, 2, 2}, rng, -3.0, 3.0);
  double l = run_scalar(g, {{"z", &logits}, {"y", &labels}}, loss);
  CHECK(l > 0.0);

  // one-hot in the limit: huge margin on the true class
  Tensor<double> confident = Tensor<double>::zeros({3, 2, 2});
  for (int px = 0; px < 4; ++px) {
    int cls = static_cast<int>(labels.data[px]);
    confident.data[cls * 4 + px] = 50.0;
  }
  double l0 = run_scalar(g, {{"z", &confident}, {"y", &labels}}, loss);
  CHECK(l0 == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("dropout active only in train and mc modes") {
  Graph<float> g;
  int x = g.add_input("x", {1, 8, 8});
  int d = dropout(g, x, 0.5);
  Tensor<float> t = Tensor<float>::constant({1, 8, 8}, 1.f);
  Eval<float> ev;

  forward(g, ev, {{"x", &t}}, {d}, Mode::kEval, Rng(7));
  CHECK((output_value(g, ev, d).data == 1.f).all());

  for (Mode m : {Mode::kTrain, Mode::kMcDropout}) {
    forward(g, ev, {{"x", &t}}, {d}, m, Rng(7));
    const auto& y = output_value(g, ev, d);
    int zeros = 0;
    for (std::int64_t i = 0; i < y.size(); ++i) {
      CHECK((y.data[i] == 0.f || y.data[i] == doctest::Approx(2.f)));
      zeros += y.data[i] == 0.f;
    }
    CHECK(zeros > 0);
    CHECK(zeros < 64);
  }

  // same stream, same mask
  forward(g, ev, {{"x", &t}}, {d}, Mode::kMcDropout, Rng(7));
  Tensor<float> first = output_value(g, ev, d);
  forward(g, ev, {{"x", &t}}, {d}, Mode::kMcDropout, Rng(7));
  CHECK((output_value(g, ev, d).data == first.data).all());
}

TEST_CASE("non-finite values are an error state") {
  Graph<float> g;
  int x = g.add_input("x", {2});
  int y = relu(g, x);
  Tensor<float> bad = Tensor<float>::from({2}, {1.f, std::numeric_limits<float>::infinity()});
  Eval<float> ev;
  CHECK_THROWS_AS(forward(g, ev, {{"x", &bad}}, {y}, Mode::kEval, Rng(0)), NumericalError);

  // log of a huge scale overflows float -> flagged at the producing node
  Graph<float> g2;
  int a = g2.add_input("a", {1});
  int s = scale(g2, a, 1e30);
  int m = mul(g2, s, s);
  Tensor<float> t = Tensor<float>::from({1}, {1e10f});
  Eval<float> ev2;
  CHECK_THROWS_AS(forward(g2, ev2, {{"a", &t}}, {m}, Mode::kEval, Rng(0)), NumericalError);
}

TEST_CASE("shape and state errors") {
  Graph<float> g;
  int x = g.add_input("x", {3});
  int y = relu(g, x);
  Tensor<float> wrong = Tensor<float>::zeros({4});
  Eval<float> ev;
  CHECK_THROWS_AS(forward(g, ev, {{"x", &wrong}}, {y}, Mode::kEval, Rng(0)),
                  std::invalid_argument);

  // backward requires an evaluated scalar loss in train mode
  Tensor<float> ok = Tensor<float>::zeros({3});
  forward(g, ev, {{"x", &ok}}, {y}, Mode::kTrain, Rng(0));
  CHECK_THROWS_AS(backward(g, ev, y), std::invalid_argument);  // not scalar

  Graph<double> g2;
  int p = g2.add_param("p", Tensor<double>::scalar(1.0));
  int l = mul(g2, p, p);
  Eval<double> ev2;
  CHECK_THROWS_AS(backward(g2, ev2, l), std::logic_error);  // never evaluated
  forward(g2, ev2, {}, {l}, Mode::kEval, Rng(0));
  CHECK_THROWS_AS(backward(g2, ev2, l), std::logic_error);  // eval mode
}

TEST_CASE("graph builders reject incompatible shapes") {
  Graph<float> g;
  int x = g.add_input("x", {3, 8, 8});
  int w = g.add_param("w", Tensor<float>::zeros({4, 2, 3, 3}));  // Cin mismatch
  CHECK_THROWS_AS(conv2d(g, x, w, -1, 1, 1), std::invalid_argument);
  int odd = g.add_input("odd", {1, 5, 6});
  CHECK_THROWS_AS(max_pool2x2(g, odd), std::invalid_argument);
  int a = g.add_input("a", {2});
  int b = g.add_input("b", {3});
  CHECK_THROWS_AS(add(g, a, b), std::invalid_argument);
}

// ---- gradient correctness: every differentiable op, finite differences ----

namespace {

struct OpCase {
  std::string name;
  Graph<double> g;
  Feed<double> feed;
  int loss = -1;
  std::vector<Tensor<double>> feed_storage;
};

}  // namespace

TEST_CASE("gradcheck: conv2d variants") {
  for (auto [stride, pad, bias] : {std::tuple{1, 1, true}, {2, 1, true}, {1, 0, false}}) {
    Rng rng(100 + stride * 10 + pad);
    Graph<double> g;
    int x = g.add_param("x", random_tensor({3, 6, 8}, rng));
    int w = g.add_param("w", random_tensor({4, 3, 3, 3}, rng, -0.5, 0.5));
    int b = bias ? g.add_param("b", random_tensor({4}, rng)) : -1;
    int y = conv2d(g, x, w, b, stride, pad);
    int loss = mean_all(g, mul(g, y, y));
    auto rep = gradcheck(g, {}, loss, 60, Rng(1), 42);
    CAPTURE(rep.worst);
    CHECK(rep.max_rel_err <= 1e-4);
  }
}

TEST_CASE("gradcheck: dense") {
  Rng rng(7);
  Graph<double> g;
  int x = g.add_param("x", random_tensor({5}, rng));
  int w = g.add_param("w", random_tensor({3, 5}, rng));
  int b = g.add_param("b", random_tensor({3}, rng));
  int loss = sum_all(g, mul(g, dense(g, x, w, b), dense(g, x, w, b)));
  auto rep = gradcheck_all(g, {}, loss, 42);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("gradcheck: pool, upsample, concat, relu") {
  Rng rng(8);
  Graph<double> g;
  int x = g.add_param("x", random_tensor({2, 4, 4}, rng));
  int y = g.add_param("y", random_tensor({3, 8, 8}, rng));
  int up = upsample2x(g, x);           // (2,8,8)
  int cat = concat_channels(g, up, y); // (5,8,8)
  int r = relu(g, cat);
  int pooled = max_pool2x2(g, r);      // (5,4,4)
  int loss = mean_all(g, mul(g, pooled, pooled));
  auto rep = gradcheck_all(g, {}, loss, 42);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("gradcheck: softmax, log, scale, add, sum") {
  Rng rng(9);
  Graph<double> g;
  int x = g.add_param("x", random_tensor({4, 3, 3}, rng, -2.0, 2.0));
  int sm = softmax_channels(g, x);
  int lg = log_clamped(g, sm);
  int msk = g.add_input("mask", {4, 3, 3});
  int picked = mul(g, lg, msk);
  int loss = add(g, sum_all(g, picked), scale(g, mean_all(g, x), 0.3));
  Tensor<double> mask = random_tensor({4, 3, 3}, rng, 0.0, 1.0);
  auto rep = gradcheck_all(g, {{"mask", &mask}}, loss, 42);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("gradcheck: cross entropy and mse") {
  Rng rng(10);
  Graph<double> g;
  int z = g.add_param("z", random_tensor({3, 4, 4}, rng, -2.0, 2.0));
  int t = g.add_param("t", random_tensor({3, 4, 4}, rng, -2.0, 2.0));
  int labels = g.add_input("y", {4, 4});
  int loss = add(g, cross_entropy(g, z, labels), scale(g, mse(g, z, t), 0.5));
  Tensor<double> y({4, 4});
  for (int i = 0; i < 16; ++i) y.data[i] = i % 3;
  auto rep = gradcheck_all(g, {{"y", &y}}, loss, 42);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("gradcheck: dropout with a replayed stream") {
  Rng rng(12);
  Graph<double> g;
  int x = g.add_param("x", random_tensor({2, 6, 6}, rng));
  int d = dropout(g, x, 0.3);
  int loss = mean_all(g, mul(g, d, d));
  auto rep = gradcheck_all(g, {}, loss, 777);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("gradcheck: random two-layer conv net probes") {
  Rng rng(13);
  Graph<double> g;
  int x = g.add_param("x", random_tensor({1, 8, 8}, rng));
  int w1 = g.add_param("w1", random_tensor({4, 1, 3, 3}, rng, -0.5, 0.5));
  int b1 = g.add_param("b1", random_tensor({4}, rng, -0.1, 0.1));
  int w2 = g.add_param("w2", random_tensor({3, 4, 3, 3}, rng, -0.5, 0.5));
  int b2 = g.add_param("b2", random_tensor({3}, rng, -0.1, 0.1));
  int h = relu(g, conv2d(g, x, w1, b1, 1, 1));
  int z = conv2d(g, h, w2, b2, 1, 1);
  int labels = g.add_input("y", {8, 8});
  int loss = cross_entropy(g, z, labels);
  Tensor<double> y({8, 8});
  for (int i = 0; i < 64; ++i) y.data[i] = (i * 7) % 3;
  auto rep = gradcheck(g, {{"y", &y}}, loss, 10, Rng(5), 42);
  CAPTURE(rep.worst);
  CHECK(rep.max_rel_err <= 1e-4);
}

// ---- optimizer ----

TEST_CASE("adam: zero gradients leave parameters bit-identical") {
  Graph<float> g;
  g.add_param("w", Tensor<float>::from({3}, {0.5f, -1.f, 2.f}));
  Tensor<float> before = g.param_value("w");
  auto st = AdamState<float>::init(g, 1e-4);
  GradMap<float> grads;
  grads["w"] = Tensor<float>::zeros({3});
  for (int i = 0; i < 5; ++i) adam_step(g, st, grads);
  CHECK((g.param_value("w").data == before.data).all());
  CHECK(st.step == 5);
}

TEST_CASE("adam: first-step magnitude is the learning rate") {
  // hand-evaluated recurrence at t=1 with g=1: m_hat = 1, v_hat = 1,
  // delta = -lr / (1 + eps)
  Graph<double> g;
  g.add_param("w", Tensor<double>::scalar(0.0));
  auto st = AdamState<double>::init(g, 1e-4);
  GradMap<double> grads;
  grads["w"] = Tensor<double>::scalar(1.0);
  adam_step(g, st, grads);
  CHECK(g.param_value("w").value() == doctest::Approx(-1e-4).epsilon(1e-6));
}

TEST_CASE("adam: drives theta squared to zero, matching a scalar simulation") {
  Graph<double> g;
  int th = g.add_param("theta", Tensor<double>::scalar(1.0));
  int loss = mul(g, th, th);
  auto st = AdamState<double>::init(g, 0.05);
  Eval<double> ev;

  // independent scalar simulation of the same recurrence
  double sim_theta = 1.0, sim_m = 0.0, sim_v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    forward(g, ev, {}, {loss}, Mode::kTrain, Rng(0));
    auto grads = backward(g, ev, loss);
    adam_step(g, st, grads);

    double sg = 2.0 * sim_theta;
    sim_m = 0.9 * sim_m + 0.1 * sg;
    sim_v = 0.999 * sim_v + 0.001 * sg * sg;
    double mhat = sim_m / (1.0 - std::pow(0.9, t));
    double vhat = sim_v / (1.0 - std::pow(0.999, t));
    sim_theta -= 0.05 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(g.param_value("theta").value() == doctest::Approx(sim_theta).epsilon(1e-9));
  }
  CHECK(std::abs(g.param_value("theta").value()) < 0.5);
}

TEST_CASE("adam: rejects missing and extra gradient entries") {
  Graph<float> g;
  g.add_param("a", Tensor<float>::scalar(0.f));
  g.add_param("b", Tensor<float>::scalar(0.f));
  auto st = AdamState<float>::init(g, 1e-4);
  GradMap<float> missing;
  missing["a"] = Tensor<float>::scalar(1.f);
  CHECK_THROWS_AS(adam_step(g, st, missing), std::invalid_argument);
  GradMap<float> extra = missing;
  extra["b"] = Tensor<float>::scalar(1.f);
  extra["c"] = Tensor<float>::scalar(1.f);
  CHECK_THROWS_AS(adam_step(g, st, extra), std::invalid_argument);
}

// ---- accounting ----

TEST_CASE("count_params matches closed forms") {
  Graph<float> g;
  int x = g.add_input("x", {3});
  int w = g.add_param("w", Tensor<float>::zeros({2, 3}));
  int b = g.add_param("b", Tensor<float>::zeros({2}));
  dense(g, x, w, b);
  CHECK(count_params(g) == 8);  // 3*2 + 2

  Graph<float> g2;
  int x2 = g2.add_input("x", {1, 8, 8});
  int w2 = g2.add_param("w", Tensor<float>::zeros({8, 1, 3, 3}));
  int b2 = g2.add_param("b", Tensor<float>::zeros({8}));
  conv2d(g2, x2, w2, b2, 1, 1);
  CHECK(count_params(g2) == 80);  // 9*8 + 8
}

TEST_CASE("count_flops: conv and relu anchors") {
  Graph<float> g;
  int x = g.add_input("x", {1, 32, 32});
  int w = g.add_param("w", Tensor<float>::zeros({8, 1, 3, 3}));
  int y = conv2d(g, x, w, -1, 1, 1);  // output 8x32x32
  CHECK(count_flops(g, {y}) == 147456);  // 2*9*1*8*1024

  Graph<float> g2;
  int a = g2.add_input("a", {100});
  int r = relu(g2, a);
  CHECK(count_flops(g2, {r}) == 100);
}

TEST_CASE("count_flops is additive and parameter-independent") {
  Rng rng(20);
  Graph<float> g;
  int x = g.add_input("x", {1, 16, 16});
  int w1 = g.add_param("w1", Tensor<float>::zeros({4, 1, 3, 3}));
  int c1 = conv2d(g, x, w1, -1, 1, 1);
  std::int64_t f1 = count_flops(g, {c1});
  int r1 = relu(g, c1);
  int p1 = max_pool2x2(g, r1);
  std::int64_t composed = count_flops(g, {p1});
  // additivity over composition
  CHECK(composed == f1 + shape_size(g.node(r1).shape) + shape_size(g.node(p1).shape));

  // invariant under parameter values
  for (std::int64_t i = 0; i < g.param_value(0).size(); ++i)
    g.param_value(0).data[i] = static_cast<float>(rng.normal());
  CHECK(count_flops(g, {p1}) == composed);
}

TEST_CASE("count_flops: dropout counted only when active") {
  Graph<float> g;
  int x = g.add_input("x", {1, 10, 10});
  int d = dropout(g, x, 0.1);
  CHECK(count_flops(g, {d}, Mode::kEval) == 0);
  CHECK(count_flops(g, {d}, Mode::kMcDropout) == 100);
  CHECK(count_flops(g, {d}, Mode::kTrain) == 100);
}

// ---- determinism ----

TEST_CASE("identical seeds give bit-identical parameters after training") {
  auto train_once = [](std::uint64_t seed) {
    Rng rng(seed);
    Graph<float> g;
    int x = g.add_input("x", {1, 8, 8});
    int w1 = g.add_param("c1.w", he_conv_init<float>(4, 1, 3, 3, rng, "c1.w"));
    int b1 = g.add_param("c1.b", Tensor<float>::zeros({4}));
    int w2 = g.add_param("c2.w", he_conv_init<float>(2, 4, 3, 3, rng, "c2.w"));
    int b2 = g.add_param("c2.b", Tensor<float>::zeros({2}));
    int h = dropout(g, relu(g, conv2d(g, x, w1, b1, 1, 1)), 0.1);
    int z = conv2d(g, h, w2, b2, 1, 1);
    int labels = g.add_input("y", {8, 8});
    int loss = cross_entropy(g, z, labels);

    auto st = AdamState<float>::init(g, 1e-3);
    Eval<float> ev;
    Rng data_rng = rng.split("data");
    for (int step = 0; step < 10; ++step) {
      Tensor<float> img({1, 8, 8});
      Tensor<float> y({8, 8});
      Rng s = data_rng.split(step);
      for (int i = 0; i < 64; ++i) {
        img.data[i] = static_cast<float>(s.uniform());
        y.data[i] = static_cast<float>(s.uniform_int(2));
      }
      forward(g, ev, {{"x", &img}, {"y", &y}}, {loss}, Mode::kTrain, rng.split(step));
      auto grads = backward(g, ev, loss);
      adam_step(g, st, grads);
    }
    std::vector<float> flat;
    for (int i = 0; i < g.num_params(); ++i)
      flat.insert(flat.end(), g.param_value(i).data.data(),
                  g.param_value(i).data.data() + g.param_value(i).size());
    return flat;
  };
  auto a = train_once(123);
  auto b = train_once(123);
  auto c = train_once(124);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("rng streams are independent and reproducible") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng base(7);
  Rng s1 = base.split(1);
  Rng s1_again = base.split(1);
  Rng s2 = base.split(2);
  CHECK(s1.next_u64() == s1_again.next_u64());
  CHECK(s1.next_u64() != s2.next_u64());

  // uniform stays in [0,1), uniform_int in range
  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    int k = u.uniform_int(5);
    CHECK(k >= 0);
    CHECK(k < 5);
  }
}

TEST_SUITE_END();
