#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "paser/flops.hpp"
#include "paser/unet.hpp"

namespace paser {

/// Normalized parameter-count cost over all models of a suite: each entry is
/// numParams(f_i) / sum_j numParams(f_j), so entries lie in (0,1) and sum to 1.
inline Eigen::ArrayXd cost_vector(const std::vector<std::int64_t>& params) {
  if (params.size() < 2) throw std::invalid_argument("cost_vector: need at least two models");
  double total = 0;
  for (auto p : params) {
    if (p <= 0) throw std::invalid_argument("cost_vector: nonpositive parameter count");
    total += static_cast<double>(p);
  }
  Eigen::ArrayXd c(static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    c[static_cast<Eigen::Index>(i)] = static_cast<double>(params[i]) / total;
  return c;
}

/// The ordered task-model family f_0..f_m. f_0 is built at full image
/// resolution (it always sees the whole input); the larger models are built
/// at patch resolution. Per-invocation flop costs are precomputed per model.
template <typename T>
struct ModelSuite {
  std::vector<Model<T>> models;
  std::vector<std::int64_t> param_counts;
  Eigen::ArrayXd cost;

  int image_h = 0, image_w = 0;
  int patches = 0;      // P
  int grid = 0;         // sqrt(P)
  int patch_h = 0, patch_w = 0;

  std::int64_t f0_mc_sample_flops = 0;          // one stochastic forward to probs
  std::vector<std::int64_t> patch_logit_flops;  // index 0 unused (f_0 is sliced, not re-run)
  std::vector<std::int64_t> patch_prob_flops;   // logits + softmax, for entropy consumers

  int num_models() const { return static_cast<int>(models.size()); }
  const Model<T>& f0() const { return models.front(); }
  Model<T>& f0() { return models.front(); }
};

/// Builds the suite and its cost vector. Parameter counts must be strictly
/// increasing from f_0 up; P must be a perfect square tiling the image.
template <typename T>
ModelSuite<T> build_suite(const std::vector<UNetSpec>& specs, int image_h, int image_w,
                          int patches, const Rng& rng) {
  if (specs.size() < 2) throw std::invalid_argument("build_suite: need at least two models");
  int grid = static_cast<int>(std::llround(std::sqrt(static_cast<double>(patches))));
  if (grid * grid != patches) throw std::invalid_argument("build_suite: P must be a perfect square");
  if (image_h % grid != 0 || image_w % grid != 0)
    throw std::invalid_argument("build_suite: image dims not divisible by sqrt(P)");

  ModelSuite<T> s;
  s.image_h = image_h;
  s.image_w = image_w;
  s.patches = patches;
  s.grid = grid;
  s.patch_h = image_h / grid;
  s.patch_w = image_w / grid;

  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::string name = "f" + std::to_string(i);
    int h = i == 0 ? image_h : s.patch_h;
    int w = i == 0 ? image_w : s.patch_w;
    s.models.push_back(build_unet<T>(name, specs[i], h, w, rng));
    s.param_counts.push_back(count_params(s.models.back().graph));
    if (i > 0 && s.param_counts[i] <= s.param_counts[i - 1])
      throw std::invalid_argument("build_suite: parameter counts must be strictly increasing (" +
                                  std::to_string(s.param_counts[i - 1]) + " then " +
                                  std::to_string(s.param_counts[i]) + ")");
  }
  s.cost = cost_vector(s.param_counts);

  s.f0_mc_sample_flops = count_flops(s.f0().graph, {s.f0().probs}, Mode::kMcDropout);
  s.patch_logit_flops.resize(s.models.size(), 0);
  s.patch_prob_flops.resize(s.models.size(), 0);
  for (std::size_t i = 1; i < s.models.size(); ++i) {
    s.patch_logit_flops[i] = count_flops(s.models[i].graph, {s.models[i].logits}, Mode::kEval);
    s.patch_prob_flops[i] = count_flops(s.models[i].graph, {s.models[i].probs}, Mode::kEval);
  }
  return s;
}

/// Monte Carlo dropout summary for one image: per-pixel mean softmax, its
/// predictive entropy (in nats, clamped to [0, ln K]) and the argmax labels.
template <typename T>
struct McResult {
  Tensor<T> mean_probs;  // (K,H,W)
  Tensor<T> entropy;     // (H,W)
  std::vector<std::uint8_t> labels;
  int samples = 0;
};

/// Runs S stochastic forward passes of a dropout-equipped model and averages
/// the softmax outputs. Each sample draws from an independent child stream,
/// so sample order (or parallel evaluation) cannot change the result.
template <typename T>
McResult<T> mc_entropy(const Model<T>& model, const Tensor<T>& image, int samples, const Rng& rng,
                       Eval<T>& ev) {
  if (samples < 2) throw std::invalid_argument("mc_entropy: need at least 2 samples");
  if (model.spec.dropout_rate <= 0.0)
    throw std::invalid_argument("mc_entropy: model has no dropout");

  McResult<T> r;
  r.samples = samples;
  int k = model.spec.num_classes;
  r.mean_probs = Tensor<T>::zeros({k, model.height, model.width});
  for (int s = 0; s < samples; ++s) {
    forward(model.graph, ev, {{"x", &image}}, {model.probs}, Mode::kMcDropout, rng.split(s));
    r.mean_probs.data += output_value(model.graph, ev, model.probs).data;
  }
  r.mean_probs.data /= static_cast<T>(samples);

  std::int64_t pixels = static_cast<std::int64_t>(model.height) * model.width;
  r.entropy = Tensor<T>::zeros({model.height, model.width});
  const T ln_k = static_cast<T>(std::log(static_cast<double>(k)));
  for (std::int64_t px = 0; px < pixels; ++px) {
    double h = 0;
    for (int c = 0; c < k; ++c) {
      double p = static_cast<double>(r.mean_probs.data[c * pixels + px]);
      if (p > 0) h -= p * std::log(p);
    }
    T hv = static_cast<T>(h);
    r.entropy.data[px] = std::min(std::max(hv, T(0)), ln_k);
  }
  r.labels = argmax_channels(r.mean_probs);
  return r;
}

template <typename T>
McResult<T> mc_entropy(const Model<T>& model, const Tensor<T>& image, int samples,
                       const Rng& rng) {
  Eval<T> ev;
  return mc_entropy(model, image, samples, rng, ev);
}

}  // namespace paser
