#pragma once

#include <cstdint>
#include <span>

#include "paser/eval.hpp"
#include "paser/graph.hpp"

namespace paser {

/// Number of learnable scalars: sum of product(shape) over parameter leaves.
template <typename T>
std::int64_t count_params(const Graph<T>& g) {
  std::int64_t n = 0;
  for (int i = 0; i < g.num_params(); ++i) n += g.param_value(i).size();
  return n;
}

// Flop convention (one documented convention so IoU/GigaFlop is comparable
// across models):
//   - a multiply-accumulate counts as 2 flops;
//   - conv2d: 2*Kh*Kw*Cin*Cout*Hout*Wout, plus Cout*Hout*Wout if biased;
//   - dense: 2*in*out, plus out if biased;
//   - elementwise ops: 1 flop per element; reductions likewise;
//   - pooling/upsampling: 1 flop per output element;
//   - softmax 3/element, cross-entropy 5/logit, mse 3/element;
//   - dropout costs 1/element only in modes where it is active;
//   - concatenation and data movement are free.
inline std::int64_t node_flops(const Node& n, Mode mode, std::span<const Shape> in_shapes) {
  const auto out_size = shape_size(n.shape);
  switch (n.op) {
    case Op::kConv2d: {
      const Shape& w = in_shapes[1];
      std::int64_t macs = 2LL * w[2] * w[3] * w[1] * w[0] * n.shape[1] * n.shape[2];
      return macs + (n.n_in == 3 ? out_size : 0);
    }
    case Op::kDense: {
      const Shape& w = in_shapes[1];
      return 2LL * w[0] * w[1] + (n.n_in == 3 ? out_size : 0);
    }
    case Op::kRelu:
    case Op::kAdd:
    case Op::kMul:
    case Op::kScale:
    case Op::kLog:
      return out_size;
    case Op::kSum:
    case Op::kMean:
      return shape_size(in_shapes[0]);
    case Op::kMaxPool2x2:
    case Op::kUpsample2x:
      return out_size;
    case Op::kDropout:
      return dropout_active(mode) && n.rate > 0.0 ? out_size : 0;
    case Op::kSoftmaxChannels:
      return 3 * out_size;
    case Op::kCrossEntropy:
      return 5 * shape_size(in_shapes[0]);
    case Op::kMse:
      return 3 * shape_size(in_shapes[0]);
    case Op::kConcatChannels:
    case Op::kInput:
    case Op::kParam:
      return 0;
  }
  return 0;
}

/// Analytic flops of one forward pass over the subgraph needed for `outputs`.
/// Shapes are static, so the count is exact, additive over composition, and
/// independent of parameter values.
template <typename T>
std::int64_t count_flops(const Graph<T>& g, std::span<const int> outputs, Mode mode = Mode::kEval) {
  auto need = ancestor_mask(g, outputs);
  std::int64_t total = 0;
  for (int id = 0; id < g.num_nodes(); ++id) {
    if (!need[static_cast<std::size_t>(id)]) continue;
    const Node& n = g.node(id);
    Shape in_shapes[3];
    for (int i = 0; i < n.n_in; ++i) in_shapes[i] = g.node(n.in[i]).shape;
    total += node_flops(n, mode, std::span<const Shape>(in_shapes, static_cast<std::size_t>(n.n_in)));
  }
  return total;
}

template <typename T>
std::int64_t count_flops(const Graph<T>& g, std::initializer_list<int> outputs,
                         Mode mode = Mode::kEval) {
  return count_flops(g, std::span<const int>(outputs.begin(), outputs.size()), mode);
}

}  // namespace paser
