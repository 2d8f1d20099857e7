#pragma once

// Central finite-difference gradient oracle, independent of the backward
// pass it checks. Always runs in 64-bit mode.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "paser/eval.hpp"
#include "paser/graph.hpp"

namespace paser::testing {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;  // "param[index]"
  int probes = 0;
};

inline double rel_err(double a, double b) {
  // The 1e-2 denominator floor turns the comparison into an absolute bound
  // of 1e-6 for near-zero gradients, where the finite-difference estimate
  // itself carries ~1e-8 truncation noise.
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2});
}

/// Probes `n_probes` random parameter entries of a double graph: analytic
/// gradient from backward() vs (L(x+eps) - L(x-eps)) / (2 eps), with every
/// forward pass replaying the same RNG stream.
inline GradCheckReport gradcheck(Graph<double>& g, const Feed<double>& inputs, int loss_node,
                                 int n_probes, Rng probe_rng, std::uint64_t forward_seed,
                                 double eps = 1e-4) {
  Eval<double> ev;
  auto loss_of = [&]() {
    forward(g, ev, inputs, {loss_node}, Mode::kTrain, Rng(forward_seed));
    return output_value(g, ev, loss_node).value();
  };

  loss_of();
  GradMap<double> analytic = backward(g, ev, loss_node);

  GradCheckReport report;
  for (int probe = 0; probe < n_probes; ++probe) {
    int pi = probe_rng.uniform_int(g.num_params());
    Tensor<double>& theta = g.param_value(pi);
    auto idx = static_cast<std::int64_t>(probe_rng.uniform_int(static_cast<int>(theta.size())));
    double orig = theta.data[idx];
    theta.data[idx] = orig + eps;
    double lp = loss_of();
    theta.data[idx] = orig - eps;
    double lm = loss_of();
    theta.data[idx] = orig;
    double fd = (lp - lm) / (2.0 * eps);
    double an = analytic.at(g.param_name(pi)).data[idx];
    double err = rel_err(fd, an);
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst = g.param_name(pi) + "[" + std::to_string(idx) + "]";
    }
    ++report.probes;
  }
  return report;
}

/// Exhaustive variant: probes every entry of every parameter.
inline GradCheckReport gradcheck_all(Graph<double>& g, const Feed<double>& inputs, int loss_node,
                                     std::uint64_t forward_seed, double eps = 1e-4) {
  Eval<double> ev;
  auto loss_of = [&]() {
    forward(g, ev, inputs, {loss_node}, Mode::kTrain, Rng(forward_seed));
    return output_value(g, ev, loss_node).value();
  };
  loss_of();
  GradMap<double> analytic = backward(g, ev, loss_node);

  GradCheckReport report;
  for (int pi = 0; pi < g.num_params(); ++pi) {
    Tensor<double>& theta = g.param_value(pi);
    for (std::int64_t idx = 0; idx < theta.size(); ++idx) {
      double orig = theta.data[idx];
      theta.data[idx] = orig + eps;
      double lp = loss_of();
      theta.data[idx] = orig - eps;
      double lm = loss_of();
      theta.data[idx] = orig;
      double fd = (lp - lm) / (2.0 * eps);
      double an = analytic.at(g.param_name(pi)).data[idx];
      double err = rel_err(fd, an);
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst = g.param_name(pi) + "[" + std::to_string(idx) + "]";
      }
      ++report.probes;
    }
  }
  return report;
}

inline Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.data[i] = lo + (hi - lo) * rng.uniform();
  return t;
}

}  // namespace paser::testing
