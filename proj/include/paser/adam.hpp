#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "paser/eval.hpp"
#include "paser/graph.hpp"

namespace paser {

/// Adam with bias correction. Moment tensors mirror the parameter shapes of
/// one graph; the step counter advances by exactly one per update.
template <typename T>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  std::vector<Tensor<T>> m, v;

  static AdamState init(const Graph<T>& g, double lr) {
    AdamState s;
    s.lr = lr;
    s.m.reserve(static_cast<std::size_t>(g.num_params()));
    s.v.reserve(static_cast<std::size_t>(g.num_params()));
    for (int i = 0; i < g.num_params(); ++i) {
      s.m.emplace_back(g.param_value(i).shape);
      s.v.emplace_back(g.param_value(i).shape);
    }
    return s;
  }
};

/// One Adam update. `grads` must cover exactly the graph's parameters;
/// missing or extra entries are an error.
template <typename T>
void adam_step(Graph<T>& g, AdamState<T>& state, const GradMap<T>& grads) {
  if (static_cast<int>(grads.size()) != g.num_params())
    throw std::invalid_argument("adam_step: gradient map has " + std::to_string(grads.size()) +
                                " entries for " + std::to_string(g.num_params()) + " parameters");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (int i = 0; i < g.num_params(); ++i) {
    const std::string& name = g.param_name(i);
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("adam_step: missing gradient for " + name);
    const Tensor<T>& grad = it->second;
    Tensor<T>& theta = g.param_value(i);
    if (grad.shape != theta.shape)
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
    auto& m = state.m[static_cast<std::size_t>(i)].data;
    auto& v = state.v[static_cast<std::size_t>(i)].data;
    m = static_cast<T>(state.beta1) * m + static_cast<T>(1.0 - state.beta1) * grad.data;
    v = static_cast<T>(state.beta2) * v + static_cast<T>(1.0 - state.beta2) * grad.data.square();
    theta.data -= static_cast<T>(state.lr) * (m / static_cast<T>(bc1)) /
                  ((v / static_cast<T>(bc2)).sqrt() + static_cast<T>(state.eps));
  }
}

}  // namespace paser
