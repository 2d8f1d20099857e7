#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "paser/eval.hpp"
#include "paser/flops.hpp"
#include "paser/graph.hpp"
#include "paser/rng.hpp"

namespace paser {

/// Architecture of one task model. Input H,W must be divisible by 2^depth.
struct UNetSpec {
  int depth = 2;
  int base_channels = 6;
  int in_channels = 1;
  int num_classes = 3;
  double dropout_rate = 0.0;
};

/// A task model: its graph plus the node ids of the interesting surfaces.
/// The same parameters describe the network at any resolution; `height` and
/// `width` are the resolution this graph instance was built for.
template <typename T>
struct Model {
  std::string name;
  UNetSpec spec;
  int height = 0, width = 0;
  Graph<T> graph;
  int input = -1, labels = -1, teacher = -1, kd_beta = -1;
  int logits = -1, probs = -1, loss_ce = -1, loss_kd = -1;
  bool trained = false;
};

namespace detail {

template <typename T>
int conv_block(Graph<T>& g, int x, const std::string& prefix, int cin, int cout, const Rng& rng,
               double dropout_rate) {
  int w1 = g.add_param(prefix + ".c1.w", he_conv_init<T>(cout, cin, 3, 3, rng, prefix + ".c1.w"));
  int b1 = g.add_param(prefix + ".c1.b", Tensor<T>::zeros({cout}));
  int h = relu(g, conv2d(g, x, w1, b1, 1, 1));
  int w2 = g.add_param(prefix + ".c2.w", he_conv_init<T>(cout, cout, 3, 3, rng, prefix + ".c2.w"));
  int b2 = g.add_param(prefix + ".c2.b", Tensor<T>::zeros({cout}));
  int out = relu(g, conv2d(g, h, w2, b2, 1, 1));
  if (dropout_rate > 0.0) out = dropout(g, out, dropout_rate);
  return out;
}

}  // namespace detail

/// Standard UNet: double-conv encoder levels with 2x2 max pooling, a
/// bottleneck, nearest-upsample decoder levels with skip concatenation, and a
/// 1x1 classification head. Dropout (when enabled) follows every double-conv
/// block, which is what makes the model usable as an MC-dropout uncertainty
/// source.
template <typename T>
Model<T> build_unet(const std::string& name, const UNetSpec& spec, int height, int width,
                    const Rng& rng) {
  if (spec.depth < 1 || spec.base_channels < 1 || spec.in_channels < 1 || spec.num_classes < 2)
    throw std::invalid_argument("build_unet: bad spec");
  int div = 1 << spec.depth;
  if (height % div != 0 || width % div != 0)
    throw std::invalid_argument("build_unet: input " + std::to_string(height) + "x" +
                                std::to_string(width) + " not divisible by 2^depth");

  Model<T> m;
  m.name = name;
  m.spec = spec;
  m.height = height;
  m.width = width;
  Graph<T>& g = m.graph;
  Rng init = rng.split(name);

  m.input = g.add_input("x", {spec.in_channels, height, width});

  std::vector<int> skips;
  int x = m.input;
  int cin = spec.in_channels;
  for (int level = 0; level < spec.depth; ++level) {
    int cout = spec.base_channels << level;
    x = detail::conv_block(g, x, "enc" + std::to_string(level), cin, cout, init,
                           spec.dropout_rate);
    skips.push_back(x);
    x = max_pool2x2(g, x);
    cin = cout;
  }
  x = detail::conv_block(g, x, "bott", cin, spec.base_channels << spec.depth, init,
                         spec.dropout_rate);
  cin = spec.base_channels << spec.depth;
  for (int level = spec.depth - 1; level >= 0; --level) {
    int cout = spec.base_channels << level;
    x = concat_channels(g, upsample2x(g, x), skips[static_cast<std::size_t>(level)]);
    x = detail::conv_block(g, x, "dec" + std::to_string(level), cin + cout, cout, init,
                           spec.dropout_rate);
    cin = cout;
  }
  int hw = g.add_param("head.w",
                       he_conv_init<T>(spec.num_classes, cin, 1, 1, init, "head.w"));
  int hb = g.add_param("head.b", Tensor<T>::zeros({spec.num_classes}));
  m.logits = conv2d(g, x, hw, hb, 1, 0);
  m.probs = softmax_channels(g, m.logits);

  m.labels = g.add_input("y", {height, width});
  m.loss_ce = cross_entropy(g, m.logits, m.labels);

  // distillation head: plain loss plus beta * mean squared logit difference
  // to a teacher's logits; evaluated only when requested
  m.teacher = g.add_input("teacher", {spec.num_classes, height, width});
  m.kd_beta = g.add_input("kd_beta", {});
  m.loss_kd = add(g, m.loss_ce, mul(g, mse(g, m.logits, m.teacher), m.kd_beta));

  g.mark_output("logits", m.logits);
  g.mark_output("probs", m.probs);
  g.mark_output("loss", m.loss_ce);
  g.mark_output("loss_kd", m.loss_kd);
  return m;
}

/// Per-pixel argmax over the channel axis; ties break toward the smallest
/// class index.
template <typename T>
std::vector<std::uint8_t> argmax_channels(const Tensor<T>& t) {
  if (t.rank() != 3) throw std::invalid_argument("argmax_channels: want KxHxW");
  int k = t.dim(0);
  std::int64_t pixels = static_cast<std::int64_t>(t.dim(1)) * t.dim(2);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(pixels));
  for (std::int64_t px = 0; px < pixels; ++px) {
    int best = 0;
    T bv = t.data[px];
    for (int c = 1; c < k; ++c) {
      if (t.data[c * pixels + px] > bv) {
        bv = t.data[c * pixels + px];
        best = c;
      }
    }
    out[static_cast<std::size_t>(px)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template <typename T>
struct Prediction {
  std::vector<std::uint8_t> labels;
  Tensor<T> logits;
};

/// Deterministic (dropout-free) forward pass: label map plus raw logits.
template <typename T>
Prediction<T> predict(const Model<T>& model, const Tensor<T>& image, Eval<T>& ev) {
  forward(model.graph, ev, {{"x", &image}}, {model.logits}, Mode::kEval, Rng(0));
  Prediction<T> p;
  p.logits = output_value(model.graph, ev, model.logits);
  p.labels = argmax_channels(p.logits);
  return p;
}

template <typename T>
Prediction<T> predict(const Model<T>& model, const Tensor<T>& image) {
  Eval<T> ev;
  return predict(model, image, ev);
}

}  // namespace paser
