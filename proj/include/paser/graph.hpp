#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "paser/rng.hpp"
#include "paser/tensor.hpp"

namespace paser {

/// Fixed operation set of the compute kernel. Only the ops the segmentation
/// models, the policy network and the training losses need; no general
/// broadcasting, no dynamic shapes.
enum class Op : std::uint8_t {
  kInput,
  kParam,
  kConv2d,          // (x, w[, b]) w: (Cout,Cin,Kh,Kw), attrs stride/pad
  kDense,           // (x, w[, b]) w: (out,in), x: rank-1
  kRelu,
  kMaxPool2x2,      // stride-2 2x2 max pool, dims must be even
  kUpsample2x,      // nearest-neighbour 2x upsample
  kConcatChannels,  // (a, b) along channel axis of CHW tensors
  kDropout,         // inverted scaling; active in Train and McDropout modes
  kSoftmaxChannels, // per-pixel softmax over the channel axis (axis 0)
  kCrossEntropy,    // (logits KxHxW, labels HxW) -> scalar mean over pixels
  kMse,             // (a, b) -> scalar mean of squared differences
  kAdd,             // elementwise, same shape
  kMul,             // elementwise, same shape
  kScale,           // x * attr factor
  kLog,             // ln(max(x, 1e-8))
  kSum,             // full reduction -> scalar
  kMean,            // full reduction -> scalar
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParam: return "param";
    case Op::kConv2d: return "conv2d";
    case Op::kDense: return "dense";
    case Op::kRelu: return "relu";
    case Op::kMaxPool2x2: return "maxpool2x2";
    case Op::kUpsample2x: return "upsample2x";
    case Op::kConcatChannels: return "concat";
    case Op::kDropout: return "dropout";
    case Op::kSoftmaxChannels: return "softmax";
    case Op::kCrossEntropy: return "cross_entropy";
    case Op::kMse: return "mse";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kLog: return "log";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
  }
  return "?";
}

struct Node {
  Op op{};
  Shape shape;  // output shape
  std::array<int, 3> in{-1, -1, -1};
  int n_in = 0;
  // op attributes
  int stride = 1;
  int pad = 0;
  double rate = 0.0;    // dropout probability
  double factor = 1.0;  // scale factor
  int param_index = -1;
};

enum class Mode { kTrain, kEval, kMcDropout };

inline bool dropout_active(Mode m) { return m != Mode::kEval; }

/// Operation DAG with named inputs, named parameter leaves and named outputs.
/// Node ids are topologically ordered by construction (an op may only consume
/// already existing nodes), so execution walks ids in ascending order.
///
/// A Graph owns its parameter values and is single-writer: training mutates
/// parameters from one logical thread. Forward evaluation stores activations
/// in a separate Eval workspace, so a frozen graph can be evaluated
/// concurrently with one workspace per thread.
template <typename T>
class Graph {
 public:
  int add_input(const std::string& name, Shape shape) {
    if (inputs_.count(name)) throw std::invalid_argument("duplicate input name: " + name);
    Node n;
    n.op = Op::kInput;
    n.shape = std::move(shape);
    int id = push(n);
    inputs_[name] = id;
    return id;
  }

  int add_param(const std::string& name, Tensor<T> init) {
    if (param_ids_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Node n;
    n.op = Op::kParam;
    n.shape = init.shape;
    n.param_index = static_cast<int>(params_.size());
    int id = push(n);
    param_ids_[name] = id;
    param_names_.push_back(name);
    params_.push_back(std::move(init));
    return id;
  }

  void mark_output(const std::string& name, int node) {
    check_id(node);
    outputs_[name] = node;
  }

  int push(const Node& n) {
    for (int i = 0; i < n.n_in; ++i) check_id(n.in[i]);
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Node& node(int id) const {
    check_id(id);
    return nodes_[static_cast<std::size_t>(id)];
  }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  int input_id(const std::string& name) const { return at_or_throw(inputs_, name, "input"); }
  int output_id(const std::string& name) const { return at_or_throw(outputs_, name, "output"); }
  bool has_output(const std::string& name) const { return outputs_.count(name) != 0; }
  const std::map<std::string, int>& inputs() const { return inputs_; }
  const std::map<std::string, int>& outputs() const { return outputs_; }

  int num_params() const { return static_cast<int>(params_.size()); }
  const std::string& param_name(int i) const { return param_names_.at(static_cast<std::size_t>(i)); }
  Tensor<T>& param_value(int i) { return params_.at(static_cast<std::size_t>(i)); }
  const Tensor<T>& param_value(int i) const { return params_.at(static_cast<std::size_t>(i)); }
  Tensor<T>& param_value(const std::string& name) {
    return params_.at(static_cast<std::size_t>(node(at_or_throw(param_ids_, name, "param")).param_index));
  }
  const std::vector<std::string>& param_names() const { return param_names_; }

 private:
  static int at_or_throw(const std::map<std::string, int>& m, const std::string& k, const char* kind) {
    auto it = m.find(k);
    if (it == m.end()) throw std::invalid_argument(std::string("unknown ") + kind + ": " + k);
    return it->second;
  }
  void check_id(int id) const {
    if (id < 0 || id >= num_nodes()) throw std::invalid_argument("node id out of range");
  }

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> params_;
  std::vector<std::string> param_names_;
  std::map<std::string, int> inputs_;
  std::map<std::string, int> param_ids_;
  std::map<std::string, int> outputs_;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <typename T>
const Shape& nshape(const Graph<T>& g, int id) {
  return g.node(id).shape;
}

}  // namespace detail

// ---- graph builders ----
// Free functions appending one node each; they validate input shapes and
// infer the output shape, so an ill-formed graph fails at build time.

template <typename T>
int conv2d(Graph<T>& g, int x, int w, int b, int stride = 1, int pad = 0) {
  const Shape& xs = detail::nshape(g, x);
  const Shape& ws = detail::nshape(g, w);
  detail::require(xs.size() == 3, "conv2d: input must be CxHxW");
  detail::require(ws.size() == 4, "conv2d: weight must be (Cout,Cin,Kh,Kw)");
  detail::require(ws[1] == xs[0], "conv2d: Cin mismatch between input " + shape_str(xs) +
                                      " and weight " + shape_str(ws));
  detail::require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  int ho = (xs[1] + 2 * pad - ws[2]) / stride + 1;
  int wo = (xs[2] + 2 * pad - ws[3]) / stride + 1;
  detail::require(ho > 0 && wo > 0, "conv2d: kernel larger than padded input");
  Node n;
  n.op = Op::kConv2d;
  n.in = {x, w, b};
  n.n_in = b >= 0 ? 3 : 2;
  n.stride = stride;
  n.pad = pad;
  n.shape = {ws[0], ho, wo};
  if (b >= 0) {
    const Shape& bs = detail::nshape(g, b);
    detail::require(bs.size() == 1 && bs[0] == ws[0], "conv2d: bias must be (Cout)");
  }
  return g.push(n);
}

template <typename T>
int dense(Graph<T>& g, int x, int w, int b) {
  const Shape& xs = detail::nshape(g, x);
  const Shape& ws = detail::nshape(g, w);
  detail::require(xs.size() == 1, "dense: input must be rank-1");
  detail::require(ws.size() == 2 && ws[1] == xs[0], "dense: weight must be (out,in) with in = input size");
  Node n;
  n.op = Op::kDense;
  n.in = {x, w, b};
  n.n_in = b >= 0 ? 3 : 2;
  n.shape = {ws[0]};
  if (b >= 0) {
    const Shape& bs = detail::nshape(g, b);
    detail::require(bs.size() == 1 && bs[0] == ws[0], "dense: bias must be (out)");
  }
  return g.push(n);
}

template <typename T>
int relu(Graph<T>& g, int x) {
  Node n;
  n.op = Op::kRelu;
  n.in = {x, -1, -1};
  n.n_in = 1;
  n.shape = detail::nshape(g, x);
  return g.push(n);
}

template <typename T>
int max_pool2x2(Graph<T>& g, int x) {
  const Shape& xs = detail::nshape(g, x);
  detail::require(xs.size() == 3, "max_pool2x2: input must be CxHxW");
  detail::require(xs[1] % 2 == 0 && xs[2] % 2 == 0, "max_pool2x2: H and W must be even, got " + shape_str(xs));
  Node n;
  n.op = Op::kMaxPool2x2;
  n.in = {x, -1, -1};
  n.n_in = 1;
  n.shape = {xs[0], xs[1] / 2, xs[2] / 2};
  return g.push(n);
}

template <typename T>
int upsample2x(Graph<T>& g, int x) {
  const Shape& xs = detail::nshape(g, x);
  detail::require(xs.size() == 3, "upsample2x: input must be CxHxW");
  Node n;
  n.op = Op::kUpsample2x;
  n.in = {x, -1, -1};
  n.n_in = 1;
  n.shape = {xs[0], xs[1] * 2, xs[2] * 2};
  return g.push(n);
}

template <typename T>
int concat_channels(Graph<T>& g, int a, int b) {
  const Shape& as = detail::nshape(g, a);
  const Shape& bs = detail::nshape(g, b);
  detail::require(as.size() == 3 && bs.size() == 3 && as[1] == bs[1] && as[2] == bs[2],
                  "concat_channels: inputs must be CxHxW with equal H,W");
  Node n;
  n.op = Op::kConcatChannels;
  n.in = {a, b, -1};
  n.n_in = 2;
  n.shape = {as[0] + bs[0], as[1], as[2]};
  return g.push(n);
}

template <typename T>
int dropout(Graph<T>& g, int x, double rate) {
  detail::require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  Node n;
  n.op = Op::kDropout;
  n.in = {x, -1, -1};
  n.n_in = 1;
  n.rate = rate;
  n.shape = detail::nshape(g, x);
  return g.push(n);
}

template <typename T>
int softmax_channels(Graph<T>& g, int x) {
  const Shape& xs = detail::nshape(g, x);
  detail::require(xs.size() == 1 || xs.size() == 3, "softmax: input must be rank-1 or CxHxW");
  Node n;
  n.op = Op::kSoftmaxChannels;
  n.in = {x, -1, -1};
  n.n_in = 1;
  n.shape = xs;
  return g.push(n);
}

template <typename T>
int cross_entropy(Graph<T>& g, int logits, int labels) {
  const Shape& zs = detail::nshape(g, logits);
  const Shape& ys = detail::nshape(g, labels);
  detail::require(zs.size() == 3, "cross_entropy: logits must be KxHxW");
  detail::require(ys.size() == 2 && ys[0] == zs[1] && ys[1] == zs[2],
                  "cross_entropy: labels must be HxW matching logits");
  Node n;
  n.op = Op::kCrossEntropy;
  n.in = {logits, labels, -1};
  n.n_in = 2;
  n.shape = {};
  return g.push(n);
}

template <typename T>
int mse(Graph<T>& g, int a, int b) {
  detail::require(detail::nshape(g, a) == detail::nshape(g, b), "mse: shape mismatch");
  Node n;
  n.op = Op::kMse;
  n.in = {a, b, -1};
  n.n_in = 2;
  n.shape = {};
  return g.push(n);
}

template <typename T>
int add(Graph<T>& g, int a, int b) {
  detail::require(detail::nshape(g, a) == detail::nshape(g, b), "add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.in = {a, b, -1};
  n.n_in = 2;
  n.shape = detail::nshape(g, a);
  return g.push(n);
}

template <typename T>
int mul(Graph<T>& g, int a, int b) {
  detail::require(detail::nshape(g, a) == detail::nshape(g, b), "mul: shape mismatch");
  Node n;
  n.op = Op::kMul;
  n.in = {a, b, -1};
  n.n_in = 2;
  n.shape = detail::nshape(g, a);
  return g.push(n);
}

template <typename T>
int scale(Graph<T>& g, int x, double factor) {
  Node n;
  n.op = Op::kScale;
  n.in = {x, -1, -1};
  n.n_in = 1;
  n.factor = factor;
  n.shape = detail::nshape(g, x);
  return g.push(n);
}

template <typename T>
int log_clamped(Graph<T>& g, int x) {
  Node n;
  n.op = Op::kLog;
  n.in = {x, -1, -1};
  n.n_in = 1;
  n.shape = detail::nshape(g, x);
  return g.push(n);
}

template <typename T>
int sum_all(Graph<T>& g, int x) {
  Node n;
  n.op = Op::kSum;
  n.in = {x, -1, -1};
  n.n_in = 1;
  n.shape = {};
  return g.push(n);
}

template <typename T>
int mean_all(Graph<T>& g, int x) {
  Node n;
  n.op = Op::kMean;
  n.in = {x, -1, -1};
  n.n_in = 1;
  n.shape = {};
  return g.push(n);
}

// ---- parameter initialization ----

/// He-normal conv weight (Cout,Cin,Kh,Kw); the stream is derived from the
/// parameter name so initialization does not depend on creation order.
template <typename T>
Tensor<T> he_conv_init(int cout, int cin, int kh, int kw, const Rng& rng, const std::string& name) {
  Tensor<T> w({cout, cin, kh, kw});
  Rng r = rng.split(name);
  double stddev = std::sqrt(2.0 / (static_cast<double>(cin) * kh * kw));
  for (std::int64_t i = 0; i < w.size(); ++i) w.data[i] = static_cast<T>(r.normal() * stddev);
  return w;
}

template <typename T>
Tensor<T> he_dense_init(int out, int in, const Rng& rng, const std::string& name) {
  Tensor<T> w({out, in});
  Rng r = rng.split(name);
  double stddev = std::sqrt(2.0 / static_cast<double>(in));
  for (std::int64_t i = 0; i < w.size(); ++i) w.data[i] = static_cast<T>(r.normal() * stddev);
  return w;
}

}  // namespace paser
