#pragma once

#include <stdexcept>
#include <string>

#include "paser/eval.hpp"
#include "paser/flops.hpp"
#include "paser/suite.hpp"

namespace paser {

/// Routing network: strided 3x3 convolutions halve the spatial resolution
/// until it equals the patch grid, then a zero-initialized 1x1 head emits one
/// logit row per patch cell. Zero head logits make a freshly built policy
/// exactly uniform over actions.
struct PolicySpec {
  int in_channels = 4;  // K probability channels + 1 entropy channel
  int height = 64, width = 64;
  int grid = 4;         // sqrt(P)
  int actions = 3;      // m+1
  int base_channels = 8;
  int channel_step = 8;
};

template <typename T>
struct PolicyModel {
  PolicySpec spec;
  Graph<T> graph;
  int state = -1, adv = -1;
  int logits = -1, probs = -1, loss = -1;
  std::int64_t forward_flops = 0;
  bool trained = false;
};

template <typename T>
PolicyModel<T> build_policy(const PolicySpec& spec, const Rng& rng) {
  if (spec.height != spec.width)
    throw std::invalid_argument("build_policy: square inputs only");
  int stages = 0;
  for (int r = spec.height / spec.grid; r > 1; r /= 2) {
    if (r % 2 != 0) throw std::invalid_argument("build_policy: height/grid must be a power of two");
    ++stages;
  }
  if (spec.grid << stages != spec.height)
    throw std::invalid_argument("build_policy: height/grid must be a power of two");

  PolicyModel<T> m;
  m.spec = spec;
  Graph<T>& g = m.graph;
  Rng init = rng.split("policy");

  m.state = g.add_input("state", {spec.in_channels, spec.height, spec.width});
  int x = m.state;
  int cin = spec.in_channels;
  for (int i = 0; i < stages; ++i) {
    int cout = spec.base_channels + spec.channel_step * i;
    std::string p = "s" + std::to_string(i);
    int w = g.add_param(p + ".w", he_conv_init<T>(cout, cin, 3, 3, init, p + ".w"));
    int b = g.add_param(p + ".b", Tensor<T>::zeros({cout}));
    x = relu(g, conv2d(g, x, w, b, 2, 1));
    cin = cout;
  }
  int hw = g.add_param("head.w", Tensor<T>::zeros({spec.actions, cin, 1, 1}));
  int hb = g.add_param("head.b", Tensor<T>::zeros({spec.actions}));
  m.logits = conv2d(g, x, hw, hb, 1, 0);
  m.probs = softmax_channels(g, m.logits);

  // REINFORCE surrogate: sum over patch cells of log pi(a_p | s) times the
  // (negated) reward placed at the taken action's cell
  m.adv = g.add_input("adv", {spec.actions, spec.grid, spec.grid});
  m.loss = sum_all(g, mul(g, log_clamped(g, m.probs), m.adv));

  g.mark_output("logits", m.logits);
  g.mark_output("probs", m.probs);
  g.mark_output("loss", m.loss);
  m.forward_flops = count_flops(g, {m.probs}, Mode::kEval);
  return m;
}

/// Assembles the policy state from f_0's MC summary: the K-channel mean
/// softmax map concatenated with the entropy map.
template <typename T>
Tensor<T> make_state(const McResult<T>& mc) {
  int k = mc.mean_probs.dim(0);
  int h = mc.mean_probs.dim(1);
  int w = mc.mean_probs.dim(2);
  Tensor<T> state({k + 1, h, w});
  state.data.head(mc.mean_probs.size()) = mc.mean_probs.data;
  state.data.tail(mc.entropy.size()) = mc.entropy.data;
  return state;
}

/// Per-patch action distribution for a state: a (m+1) x grid x grid tensor
/// whose per-cell rows are valid categorical distributions.
template <typename T>
Tensor<T> policy_forward(const PolicyModel<T>& policy, const Tensor<T>& state, Eval<T>& ev) {
  forward(policy.graph, ev, {{"state", &state}}, {policy.probs}, Mode::kEval, Rng(0));
  return output_value(policy.graph, ev, policy.probs);
}

template <typename T>
Tensor<T> policy_forward(const PolicyModel<T>& policy, const Tensor<T>& state) {
  Eval<T> ev;
  return policy_forward(policy, state, ev);
}

/// Greedy routing: per-cell argmax of the policy distribution, row-major
/// patch order. Ties break toward the smaller model index.
template <typename T>
std::vector<int> greedy_action(const Tensor<T>& probs) {
  auto labels = argmax_channels(probs);
  return std::vector<int>(labels.begin(), labels.end());
}

}  // namespace paser
