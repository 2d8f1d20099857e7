#pragma once

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "paser/graph.hpp"
#include "paser/rng.hpp"
#include "paser/tensor.hpp"

namespace paser {

/// Thrown when a forward or backward pass produces NaN/Inf.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
using Feed = std::vector<std::pair<std::string, const Tensor<T>*>>;

/// Gradients keyed by parameter name. std::map keeps iteration order
/// deterministic, which keeps batched accumulation deterministic.
template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

/// Per-evaluation workspace: activations, gradients and op scratch
/// (dropout masks, im2col buffers, pooling argmax indices). A frozen graph
/// plus one Eval per thread supports concurrent read-only inference.
template <typename T>
struct Eval {
  Mode mode = Mode::kEval;
  std::vector<Tensor<T>> values;
  std::vector<Tensor<T>> grads;
  std::vector<Tensor<T>> aux;
  std::vector<std::vector<int>> aux_idx;
  std::vector<char> computed, needed, has_grad;

  void reset(const Graph<T>& g) {
    std::size_t n = static_cast<std::size_t>(g.num_nodes());
    values.resize(n);
    grads.resize(n);
    aux.resize(n);
    aux_idx.resize(n);
    computed.assign(n, 0);
    needed.assign(n, 0);
    has_grad.assign(n, 0);
  }
};

/// Flags all ancestors (inclusive) of the given nodes.
template <typename T>
std::vector<char> ancestor_mask(const Graph<T>& g, std::span<const int> roots) {
  std::vector<char> mask(static_cast<std::size_t>(g.num_nodes()), 0);
  std::vector<int> stack(roots.begin(), roots.end());
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    if (id < 0 || mask[static_cast<std::size_t>(id)]) continue;
    mask[static_cast<std::size_t>(id)] = 1;
    const Node& n = g.node(id);
    for (int i = 0; i < n.n_in; ++i) stack.push_back(n.in[i]);
  }
  return mask;
}

namespace detail {

constexpr double kLogEps = 1e-8;  // probability floor before log

// cols: (Cin*Kh*Kw) x (Ho*Wo), row-major.
template <typename T>
void im2col(const T* x, int cin, int h, int w, int kh, int kw, int stride, int pad, int ho,
            int wo, T* cols) {
  for (int c = 0; c < cin; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = cols + (static_cast<std::int64_t>((c * kh + ki) * kw + kj)) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ki;
          T* dst = row + static_cast<std::int64_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::int64_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int cin, int h, int w, int kh, int kw, int stride, int pad,
                int ho, int wo, T* dx) {
  for (int c = 0; c < cin; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = cols + (static_cast<std::int64_t>((c * kh + ki) * kw + kj)) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          T* dst = dx + (static_cast<std::int64_t>(c) * h + iy) * w;
          const T* src = row + static_cast<std::int64_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void softmax_channels_inplace(const T* z, T* y, int k, std::int64_t pixels) {
  for (std::int64_t px = 0; px < pixels; ++px) {
    T m = z[px];
    for (int c = 1; c < k; ++c) m = std::max(m, z[c * pixels + px]);
    T s = T(0);
    for (int c = 0; c < k; ++c) {
      T e = std::exp(z[c * pixels + px] - m);
      y[c * pixels + px] = e;
      s += e;
    }
    for (int c = 0; c < k; ++c) y[c * pixels + px] /= s;
  }
}

template <typename T>
int label_at(const Tensor<T>& labels, std::int64_t px, int k) {
  int y = static_cast<int>(std::llround(static_cast<double>(labels.data[px])));
  if (y < 0 || y >= k)
    throw std::invalid_argument("cross_entropy: label " + std::to_string(y) + " out of range ");
  return y;
}

}  // namespace detail

template <typename T>
class Executor {
 public:
  Executor(const Graph<T>& g, Eval<T>& ev) : g_(g), ev_(ev) {}

  const Tensor<T>& val(int id) const {
    const Node& n = g_.node(id);
    if (n.op == Op::kParam) return g_.param_value(n.param_index);
    return ev_.values[static_cast<std::size_t>(id)];
  }

  Tensor<T>& grad(int id) {
    auto& t = ev_.grads[static_cast<std::size_t>(id)];
    if (!ev_.has_grad[static_cast<std::size_t>(id)]) {
      const Shape& s = g_.node(id).shape;
      if (t.shape != s || t.data.size() != shape_size(s))
        t = Tensor<T>(s);
      else
        t.data.setZero();
      ev_.has_grad[static_cast<std::size_t>(id)] = 1;
    }
    return t;
  }

  void bind(const Feed<T>& feed) {
    for (const auto& [name, tensor] : feed) {
      int id = g_.input_id(name);
      if (tensor->shape != g_.node(id).shape)
        throw std::invalid_argument("input '" + name + "' shape " + shape_str(tensor->shape) +
                                    " does not match graph signature " +
                                    shape_str(g_.node(id).shape));
      if (!tensor->all_finite())
        throw NumericalError("input '" + name + "' contains non-finite values");
      ev_.values[static_cast<std::size_t>(id)] = *tensor;
      ev_.computed[static_cast<std::size_t>(id)] = 1;
    }
  }

  void run(std::span<const int> wanted, Rng& rng) {
    auto need = ancestor_mask(g_, wanted);
    for (int id = 0; id < g_.num_nodes(); ++id) {
      auto uid = static_cast<std::size_t>(id);
      if (!need[uid]) continue;
      ev_.needed[uid] = 1;
      if (ev_.computed[uid]) continue;
      const Node& n = g_.node(id);
      if (n.op == Op::kParam) {
        ev_.computed[uid] = 1;
        continue;
      }
      if (n.op == Op::kInput)
        throw std::invalid_argument("graph input node " + std::to_string(id) + " was not fed");
      compute(id, n, rng);
      if (!ev_.values[uid].all_finite())
        throw NumericalError(std::string("non-finite output of ") + op_name(n.op) + " node " +
                             std::to_string(id));
      ev_.computed[uid] = 1;
    }
  }

  void backprop(int loss_id) {
    auto uloss = static_cast<std::size_t>(loss_id);
    if (uloss >= ev_.computed.size() || !ev_.computed[uloss])
      throw std::logic_error("backward: graph has not been evaluated to the loss node");
    if (ev_.mode != Mode::kTrain) throw std::logic_error("backward: forward pass was not in train mode");
    if (shape_size(g_.node(loss_id).shape) != 1)
      throw std::invalid_argument("backward: loss node is not scalar");

    auto anc = ancestor_mask(g_, std::span<const int>(&loss_id, 1));
    grad(loss_id).data.setConstant(T(1));
    for (int id = loss_id; id >= 0; --id) {
      auto uid = static_cast<std::size_t>(id);
      if (!anc[uid] || !ev_.computed[uid] || !ev_.has_grad[uid]) continue;
      const Node& n = g_.node(id);
      if (n.op == Op::kInput || n.op == Op::kParam) continue;
      compute_grad(id, n);
    }
  }

 private:
  Tensor<T>& out(int id) {
    auto& t = ev_.values[static_cast<std::size_t>(id)];
    const Shape& s = g_.node(id).shape;
    if (t.shape != s || t.data.size() != shape_size(s)) t = Tensor<T>(s);
    return t;
  }

  void compute(int id, const Node& n, Rng& rng) {
    switch (n.op) {
      case Op::kConv2d: {
        const Tensor<T>& x = val(n.in[0]);
        const Tensor<T>& w = val(n.in[1]);
        int cin = x.dim(0), h = x.dim(1), wdt = x.dim(2);
        int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
        int ho = n.shape[1], wo = n.shape[2];
        Tensor<T>& cols = ev_.aux[static_cast<std::size_t>(id)];
        Shape cshape = {cin * kh * kw, ho * wo};
        if (cols.shape != cshape) cols = Tensor<T>(cshape);
        detail::im2col(x.data.data(), cin, h, wdt, kh, kw, n.stride, n.pad, ho, wo,
                       cols.data.data());
        Tensor<T>& y = out(id);
        auto wm = as_matrix(w, cout, cin * kh * kw);
        auto cm = as_matrix(cols, cin * kh * kw, static_cast<Eigen::Index>(ho) * wo);
        auto ym = as_matrix(y, cout, static_cast<Eigen::Index>(ho) * wo);
        ym.noalias() = wm * cm;
        if (n.n_in == 3) {
          const Tensor<T>& b = val(n.in[2]);
          ym.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(b.data.data(),
                                                                                cout);
        }
        break;
      }
      case Op::kDense: {
        const Tensor<T>& x = val(n.in[0]);
        const Tensor<T>& w = val(n.in[1]);
        Tensor<T>& y = out(id);
        auto wm = as_matrix(w, w.dim(0), w.dim(1));
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(x.data.data(), x.size());
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yv(y.data.data(), y.size());
        yv.noalias() = wm * xv;
        if (n.n_in == 3) yv += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(
            val(n.in[2]).data.data(), y.size());
        break;
      }
      case Op::kRelu:
        out(id).data = val(n.in[0]).data.max(T(0));
        break;
      case Op::kMaxPool2x2: {
        const Tensor<T>& x = val(n.in[0]);
        Tensor<T>& y = out(id);
        int c = n.shape[0], ho = n.shape[1], wo = n.shape[2], h = x.dim(1), w = x.dim(2);
        auto& idx = ev_.aux_idx[static_cast<std::size_t>(id)];
        idx.assign(static_cast<std::size_t>(y.size()), 0);
        std::int64_t o = 0;
        for (int ch = 0; ch < c; ++ch) {
          const T* xp = x.data.data() + static_cast<std::int64_t>(ch) * h * w;
          for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox, ++o) {
              int base = (oy * 2) * w + ox * 2;
              int best = base;
              T bv = xp[base];
              // ties keep the first candidate in row-major scan order
              if (xp[base + 1] > bv) { bv = xp[base + 1]; best = base + 1; }
              if (xp[base + w] > bv) { bv = xp[base + w]; best = base + w; }
              if (xp[base + w + 1] > bv) { bv = xp[base + w + 1]; best = base + w + 1; }
              y.data[o] = bv;
              idx[static_cast<std::size_t>(o)] = static_cast<int>(ch * h * w + best);
            }
          }
        }
        break;
      }
      case Op::kUpsample2x: {
        const Tensor<T>& x = val(n.in[0]);
        Tensor<T>& y = out(id);
        int c = n.shape[0], ho = n.shape[1], wo = n.shape[2];
        for (int ch = 0; ch < c; ++ch)
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) y.at(ch, oy, ox) = x.at(ch, oy / 2, ox / 2);
        break;
      }
      case Op::kConcatChannels: {
        const Tensor<T>& a = val(n.in[0]);
        const Tensor<T>& b = val(n.in[1]);
        Tensor<T>& y = out(id);
        y.data.head(a.size()) = a.data;
        y.data.tail(b.size()) = b.data;
        break;
      }
      case Op::kDropout: {
        const Tensor<T>& x = val(n.in[0]);
        Tensor<T>& y = out(id);
        if (!dropout_active(ev_.mode) || n.rate == 0.0) {
          y.data = x.data;
          break;
        }
        Tensor<T>& mask = ev_.aux[static_cast<std::size_t>(id)];
        if (mask.shape != n.shape) mask = Tensor<T>(n.shape);
        const double keep = 1.0 - n.rate;
        const T inv = static_cast<T>(1.0 / keep);
        for (std::int64_t i = 0; i < mask.size(); ++i)
          mask.data[i] = rng.uniform() < keep ? inv : T(0);
        y.data = x.data * mask.data;
        break;
      }
      case Op::kSoftmaxChannels: {
        const Tensor<T>& x = val(n.in[0]);
        Tensor<T>& y = out(id);
        int k = n.shape.size() == 3 ? n.shape[0] : n.shape[0];
        std::int64_t pixels = n.shape.size() == 3
                                  ? static_cast<std::int64_t>(n.shape[1]) * n.shape[2]
                                  : 1;
        detail::softmax_channels_inplace(x.data.data(), y.data.data(), k, pixels);
        break;
      }
      case Op::kCrossEntropy: {
        const Tensor<T>& z = val(n.in[0]);
        const Tensor<T>& labels = val(n.in[1]);
        int k = z.dim(0);
        std::int64_t pixels = static_cast<std::int64_t>(z.dim(1)) * z.dim(2);
        Tensor<T>& probs = ev_.aux[static_cast<std::size_t>(id)];
        if (probs.shape != z.shape) probs = Tensor<T>(z.shape);
        detail::softmax_channels_inplace(z.data.data(), probs.data.data(), k, pixels);
        double acc = 0.0;
        for (std::int64_t px = 0; px < pixels; ++px) {
          int y = detail::label_at(labels, px, k);
          double p = std::max(static_cast<double>(probs.data[y * pixels + px]), detail::kLogEps);
          acc -= std::log(p);
        }
        Tensor<T>& o = out(id);
        o.data[0] = static_cast<T>(acc / static_cast<double>(pixels));
        break;
      }
      case Op::kMse: {
        const Tensor<T>& a = val(n.in[0]);
        const Tensor<T>& b = val(n.in[1]);
        Tensor<T>& o = out(id);
        o.data[0] = static_cast<T>((a.data - b.data).square().sum() /
                                   static_cast<double>(a.size()));
        break;
      }
      case Op::kAdd:
        out(id).data = val(n.in[0]).data + val(n.in[1]).data;
        break;
      case Op::kMul:
        out(id).data = val(n.in[0]).data * val(n.in[1]).data;
        break;
      case Op::kScale:
        out(id).data = val(n.in[0]).data * static_cast<T>(n.factor);
        break;
      case Op::kLog:
        out(id).data = val(n.in[0]).data.max(static_cast<T>(detail::kLogEps)).log();
        break;
      case Op::kSum:
        out(id).data[0] = val(n.in[0]).data.sum();
        break;
      case Op::kMean:
        out(id).data[0] = val(n.in[0]).data.mean();
        break;
      case Op::kInput:
      case Op::kParam:
        break;
    }
  }

  void compute_grad(int id, const Node& n) {
    const Tensor<T>& g = ev_.grads[static_cast<std::size_t>(id)];
    switch (n.op) {
      case Op::kConv2d: {
        const Tensor<T>& x = val(n.in[0]);
        const Tensor<T>& w = val(n.in[1]);
        int cin = x.dim(0), h = x.dim(1), wdt = x.dim(2);
        int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
        int ho = n.shape[1], wo = n.shape[2];
        const Tensor<T>& cols = ev_.aux[static_cast<std::size_t>(id)];
        auto gm = as_matrix(g, cout, static_cast<Eigen::Index>(ho) * wo);
        auto cm = as_matrix(cols, cin * kh * kw, static_cast<Eigen::Index>(ho) * wo);
        auto wm = as_matrix(w, cout, cin * kh * kw);
        {
          Tensor<T>& dw = grad(n.in[1]);
          auto dwm = as_matrix(dw, cout, cin * kh * kw);
          dwm.noalias() += gm * cm.transpose();
        }
        if (n.n_in == 3) {
          Tensor<T>& db = grad(n.in[2]);
          Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(db.data.data(), cout) +=
              gm.rowwise().sum();
        }
        {
          Tensor<T> dcols({cin * kh * kw, ho * wo});
          auto dcm = as_matrix(dcols, cin * kh * kw, static_cast<Eigen::Index>(ho) * wo);
          dcm.noalias() = wm.transpose() * gm;
          detail::col2im_add(dcols.data.data(), cin, h, wdt, kh, kw, n.stride, n.pad, ho, wo,
                             grad(n.in[0]).data.data());
        }
        break;
      }
      case Op::kDense: {
        const Tensor<T>& x = val(n.in[0]);
        const Tensor<T>& w = val(n.in[1]);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> gv(g.data.data(), g.size());
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(x.data.data(), x.size());
        auto wm = as_matrix(w, w.dim(0), w.dim(1));
        {
          auto dwm = as_matrix(grad(n.in[1]), w.dim(0), w.dim(1));
          dwm.noalias() += gv * xv.transpose();
        }
        if (n.n_in == 3) grad(n.in[2]).data += g.data;
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dxv(grad(n.in[0]).data.data(), x.size());
        dxv.noalias() += wm.transpose() * gv;
        break;
      }
      case Op::kRelu: {
        const Tensor<T>& x = val(n.in[0]);
        grad(n.in[0]).data += g.data * (x.data > T(0)).template cast<T>();
        break;
      }
      case Op::kMaxPool2x2: {
        Tensor<T>& dx = grad(n.in[0]);
        const auto& idx = ev_.aux_idx[static_cast<std::size_t>(id)];
        for (std::int64_t o = 0; o < g.size(); ++o)
          dx.data[idx[static_cast<std::size_t>(o)]] += g.data[o];
        break;
      }
      case Op::kUpsample2x: {
        Tensor<T>& dx = grad(n.in[0]);
        int c = n.shape[0], ho = n.shape[1], wo = n.shape[2];
        for (int ch = 0; ch < c; ++ch)
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) dx.at(ch, oy / 2, ox / 2) += g.at(ch, oy, ox);
        break;
      }
      case Op::kConcatChannels: {
        const std::int64_t na = val(n.in[0]).size();
        grad(n.in[0]).data += g.data.head(na);
        grad(n.in[1]).data += g.data.tail(g.size() - na);
        break;
      }
      case Op::kDropout: {
        if (!dropout_active(ev_.mode) || n.rate == 0.0) {
          grad(n.in[0]).data += g.data;
        } else {
          grad(n.in[0]).data += g.data * ev_.aux[static_cast<std::size_t>(id)].data;
        }
        break;
      }
      case Op::kSoftmaxChannels: {
        const Tensor<T>& y = ev_.values[static_cast<std::size_t>(id)];
        Tensor<T>& dx = grad(n.in[0]);
        int k = n.shape[0];
        std::int64_t pixels = n.shape.size() == 3
                                  ? static_cast<std::int64_t>(n.shape[1]) * n.shape[2]
                                  : 1;
        for (std::int64_t px = 0; px < pixels; ++px) {
          T dot = T(0);
          for (int c = 0; c < k; ++c) dot += g.data[c * pixels + px] * y.data[c * pixels + px];
          for (int c = 0; c < k; ++c)
            dx.data[c * pixels + px] +=
                y.data[c * pixels + px] * (g.data[c * pixels + px] - dot);
        }
        break;
      }
      case Op::kCrossEntropy: {
        const Tensor<T>& probs = ev_.aux[static_cast<std::size_t>(id)];
        const Tensor<T>& labels = val(n.in[1]);
        Tensor<T>& dz = grad(n.in[0]);
        int k = probs.dim(0);
        std::int64_t pixels = static_cast<std::int64_t>(probs.dim(1)) * probs.dim(2);
        const T s = g.data[0] / static_cast<T>(pixels);
        for (std::int64_t px = 0; px < pixels; ++px) {
          int y = detail::label_at(labels, px, k);
          for (int c = 0; c < k; ++c)
            dz.data[c * pixels + px] +=
                s * (probs.data[c * pixels + px] - (c == y ? T(1) : T(0)));
        }
        break;
      }
      case Op::kMse: {
        const Tensor<T>& a = val(n.in[0]);
        const Tensor<T>& b = val(n.in[1]);
        const T s = g.data[0] * T(2) / static_cast<T>(a.size());
        grad(n.in[0]).data += s * (a.data - b.data);
        grad(n.in[1]).data -= s * (a.data - b.data);
        break;
      }
      case Op::kAdd:
        grad(n.in[0]).data += g.data;
        grad(n.in[1]).data += g.data;
        break;
      case Op::kMul:
        grad(n.in[0]).data += g.data * val(n.in[1]).data;
        grad(n.in[1]).data += g.data * val(n.in[0]).data;
        break;
      case Op::kScale:
        grad(n.in[0]).data += g.data * static_cast<T>(n.factor);
        break;
      case Op::kLog: {
        const Tensor<T>& x = val(n.in[0]);
        const T eps = static_cast<T>(detail::kLogEps);
        grad(n.in[0]).data +=
            (x.data > eps).template cast<T>() * g.data / x.data.max(eps);
        break;
      }
      case Op::kSum:
        grad(n.in[0]).data += g.data[0];
        break;
      case Op::kMean:
        grad(n.in[0]).data += g.data[0] / static_cast<T>(val(n.in[0]).size());
        break;
      case Op::kInput:
      case Op::kParam:
        break;
    }
  }

  const Graph<T>& g_;
  Eval<T>& ev_;
};

/// Executes the subgraph needed for `wanted`, feeding the named inputs.
/// Deterministic given (parameters, inputs, mode, rng stream): dropout is the
/// only stochastic op and draws from `rng` in node-id order.
template <typename T>
void forward(const Graph<T>& g, Eval<T>& ev, const Feed<T>& inputs, std::span<const int> wanted,
             Mode mode, Rng rng) {
  ev.reset(g);
  ev.mode = mode;
  Executor<T> ex(g, ev);
  ex.bind(inputs);
  ex.run(wanted, rng);
}

template <typename T>
void forward(const Graph<T>& g, Eval<T>& ev, const Feed<T>& inputs,
             std::initializer_list<int> wanted, Mode mode, Rng rng) {
  forward(g, ev, inputs, std::span<const int>(wanted.begin(), wanted.size()), mode, rng);
}

/// Continues a previous forward: binds additional inputs and computes any
/// not-yet-evaluated ancestors of `wanted`, reusing cached activations.
template <typename T>
void forward_extend(const Graph<T>& g, Eval<T>& ev, const Feed<T>& inputs,
                    std::span<const int> wanted, Rng rng) {
  Executor<T> ex(g, ev);
  ex.bind(inputs);
  ex.run(wanted, rng);
}

template <typename T>
void forward_extend(const Graph<T>& g, Eval<T>& ev, const Feed<T>& inputs,
                    std::initializer_list<int> wanted, Rng rng) {
  forward_extend(g, ev, inputs, std::span<const int>(wanted.begin(), wanted.size()), rng);
}

template <typename T>
const Tensor<T>& output_value(const Graph<T>& g, const Eval<T>& ev, int node) {
  if (!ev.computed[static_cast<std::size_t>(node)])
    throw std::logic_error("requested output was not computed");
  if (g.node(node).op == Op::kParam) return g.param_value(g.node(node).param_index);
  return ev.values[static_cast<std::size_t>(node)];
}

/// Reverse pass from a scalar loss. Returns gradients for every parameter
/// reachable from the loss; fails if the loss was not evaluated in train mode.
template <typename T>
GradMap<T> backward(const Graph<T>& g, Eval<T>& ev, int loss_node) {
  Executor<T> ex(g, ev);
  ex.backprop(loss_node);
  GradMap<T> out;
  auto anc = ancestor_mask(g, std::span<const int>(&loss_node, 1));
  for (int id = 0; id < g.num_nodes(); ++id) {
    const Node& n = g.node(id);
    if (n.op != Op::kParam || !anc[static_cast<std::size_t>(id)]) continue;
    Tensor<T>& t = ex.grad(id);  // zero tensor if no gradient flowed
    if (!t.all_finite())
      throw NumericalError("non-finite gradient for parameter " + g.param_name(n.param_index));
    out[g.param_name(n.param_index)] = t;
  }
  return out;
}

template <typename T>
void accumulate_grads(GradMap<T>& acc, const GradMap<T>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  if (acc.size() != g.size()) throw std::invalid_argument("gradient map key mismatch");
  auto it = acc.begin();
  for (const auto& [name, t] : g) {
    if (it->first != name) throw std::invalid_argument("gradient map key mismatch: " + name);
    it->second.data += t.data;
    ++it;
  }
}

template <typename T>
void scale_grads(GradMap<T>& g, double f) {
  for (auto& [name, t] : g) t.data *= static_cast<T>(f);
}

}  // namespace paser
