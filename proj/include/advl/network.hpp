#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "advl/common.hpp"
#include "advl/tensor.hpp"

namespace advl {

enum class LayerKind : std::uint32_t {
  conv3x3 = 0,      // 3x3 valid convolution, stride 1, ReLU
  maxpool2x2 = 1,   // 2x2 max pooling, stride 2
  dense_relu = 2,   // fully connected + ReLU
  dense_linear = 3  // fully connected, no activation (logit layer)
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::dense_relu: return "dense_relu";
    case LayerKind::dense_linear: return "dense_linear";
  }
  return "unknown";
}

struct LayerSpec {
  LayerKind kind;
  std::size_t filters = 0;  // conv3x3
  std::size_t units = 0;    // dense layers

  static LayerSpec conv(std::size_t filters) { return {LayerKind::conv3x3, filters, 0}; }
  static LayerSpec pool() { return {LayerKind::maxpool2x2, 0, 0}; }
  static LayerSpec dense(std::size_t units) { return {LayerKind::dense_relu, 0, units}; }
  static LayerSpec logits(std::size_t units) { return {LayerKind::dense_linear, 0, units}; }
};

struct Layer {
  LayerSpec spec;
  Tensor weights;  // conv: [filters x in_c x 3 x 3]; dense: [units x in_dim]
  Tensor bias;     // [filters] or [units]; empty for pooling
};

// Feed-forward image classifier. `temperature` is the softmax temperature the
// model currently applies to its logits; training runs at the training
// temperature, deployment resets it to 1.
struct Network {
  std::vector<std::size_t> input_shape;  // {C,H,W} or {D}
  std::size_t classes = 0;
  double temperature = 1.0;
  std::vector<Layer> layers;

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }
};

// Intermediates stashed by the forward pass for backpropagation.
struct ForwardTrace {
  std::vector<Tensor> inputs;                      // input tensor of each layer
  std::vector<Tensor> preact;                      // pre-activation output (ReLU layers)
  std::vector<Tensor> cols;                        // im2col matrices (conv layers)
  std::vector<std::vector<std::size_t>> pool_idx;  // argmax indices (pool layers)
  Tensor logits;
};

// ---- softmax family ----
// All of these shift by the max logit before exponentiating; probabilities at
// temperature T are softmax(z / T).

inline std::vector<double> softmax_t(const std::vector<double>& z, double temperature) {
  if (temperature <= 0.0) fail(errc::config, "softmax: temperature must be positive");
  if (z.empty()) fail(errc::internal, "softmax of empty vector");
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp((z[i] - zmax) / temperature);
    denom += p[i];
  }
  for (double& v : p) v /= denom;
  return p;
}

inline std::vector<double> log_softmax_t(const std::vector<double>& z, double temperature) {
  if (temperature <= 0.0) fail(errc::config, "log_softmax: temperature must be positive");
  const double zmax = *std::max_element(z.begin(), z.end());
  double denom = 0.0;
  for (double v : z) denom += std::exp((v - zmax) / temperature);
  const double lse = std::log(denom);
  std::vector<double> lp(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) lp[i] = (z[i] - zmax) / temperature - lse;
  return lp;
}

// Pulls d loss/d probs back to d loss/d logits for p = softmax(z / T):
// dz_i = (p_i / T) * (dp_i - sum_k dp_k p_k).
inline std::vector<double> softmax_backward(const std::vector<double>& probs,
                                            const std::vector<double>& dprobs, double temperature) {
  if (probs.size() != dprobs.size()) fail(errc::internal, "softmax_backward: size mismatch");
  double inner = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) inner += dprobs[i] * probs[i];
  std::vector<double> dz(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) dz[i] = probs[i] * (dprobs[i] - inner) / temperature;
  return dz;
}

// ---- forward / backward ----

inline Tensor forward_logits(const Network& net, const Tensor& x, ForwardTrace* trace = nullptr) {
  if (x.shape != net.input_shape)
    fail(errc::config, "forward: input shape " + x.shape_str() + " does not match network input");
  Tensor cur = x;
  if (trace) {
    trace->inputs.clear();
    trace->preact.clear();
    trace->cols.clear();
    trace->pool_idx.clear();
  }
  for (const Layer& l : net.layers) {
    if (trace) trace->inputs.push_back(cur);
    switch (l.spec.kind) {
      case LayerKind::conv3x3: {
        Tensor col;
        Tensor z = conv2d_forward(cur, l.weights, l.bias, trace ? &col : nullptr);
        if (trace) {
          trace->cols.push_back(std::move(col));
          trace->preact.push_back(z);
        }
        cur = relu(z);
        break;
      }
      case LayerKind::maxpool2x2: {
        std::vector<std::size_t> idx;
        cur = maxpool2x2_forward(cur, trace ? &idx : nullptr);
        if (trace) trace->pool_idx.push_back(std::move(idx));
        break;
      }
      case LayerKind::dense_relu:
      case LayerKind::dense_linear: {
        const std::size_t in_dim = l.weights.shape[1];
        if (cur.size() != in_dim)
          fail(errc::config, "dense layer expects " + std::to_string(in_dim) + " inputs, got " +
                                 std::to_string(cur.size()));
        Tensor z({l.weights.shape[0]});
        matmul_into(l.weights.data.data(), cur.data.data(), z.data.data(), l.weights.shape[0], in_dim, 1);
        add_inplace(z, l.bias);
        if (l.spec.kind == LayerKind::dense_relu) {
          if (trace) trace->preact.push_back(z);
          cur = relu(z);
        } else {
          cur = std::move(z);
        }
        break;
      }
    }
  }
  if (cur.size() != net.classes) fail(errc::internal, "forward produced wrong logit count");
  if (trace) trace->logits = cur;
  return cur;
}

inline std::vector<double> predict_probs(const Network& net, const Tensor& x) {
  return softmax_t(forward_logits(net, x).data, net.temperature);
}

inline std::size_t predict(const Network& net, const Tensor& x) {
  return argmax(forward_logits(net, x));
}

struct LayerGrads {
  Tensor weights;
  Tensor bias;
};

// Backpropagates d loss/d logits through the trace. Fills per-layer parameter
// gradients if param_grads is non-null and returns d loss/d input.
// ReLU uses the subgradient ReLU'(0) = 0.
inline Tensor backward(const Network& net, const ForwardTrace& trace, const Tensor& dlogits,
                       std::vector<LayerGrads>* param_grads) {
  Tensor d = dlogits;
  if (param_grads) {
    param_grads->resize(net.layers.size());
  }
  std::size_t relu_i = trace.preact.size();
  std::size_t conv_i = trace.cols.size();
  std::size_t pool_i = trace.pool_idx.size();
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& l = net.layers[li];
    const Tensor& input = trace.inputs[li];
    switch (l.spec.kind) {
      case LayerKind::dense_relu:
      case LayerKind::dense_linear: {
        if (l.spec.kind == LayerKind::dense_relu) {
          const Tensor& z = trace.preact[--relu_i];
          for (std::size_t i = 0; i < d.size(); ++i)
            if (z.data[i] <= 0.0) d.data[i] = 0.0;
        }
        const std::size_t units = l.weights.shape[0], in_dim = l.weights.shape[1];
        if (param_grads) {
          LayerGrads& g = (*param_grads)[li];
          g.bias = d;
          g.weights = Tensor({units, in_dim});
          // outer product d [units x 1] * input^T [1 x in_dim]
          matmul_into(d.data.data(), input.data.data(), g.weights.data.data(), units, 1, in_dim);
        }
        Tensor dx(input.shape);
        matmul_into(l.weights.data.data(), d.data.data(), dx.data.data(), in_dim, units, 1, true, false);
        d = std::move(dx);
        break;
      }
      case LayerKind::maxpool2x2: {
        d = maxpool2x2_backward(d, trace.pool_idx[--pool_i], input.shape);
        break;
      }
      case LayerKind::conv3x3: {
        const Tensor& z = trace.preact[--relu_i];
        for (std::size_t i = 0; i < d.size(); ++i)
          if (z.data[i] <= 0.0) d.data[i] = 0.0;
        Conv2dGrads g = conv2d_backward(d, l.weights, trace.cols[--conv_i], input.shape);
        if (param_grads) {
          (*param_grads)[li].weights = std::move(g.kernels);
          (*param_grads)[li].bias = std::move(g.bias);
        }
        d = std::move(g.input);
        break;
      }
    }
  }
  return d;
}

// Gradient of a scalar objective of the logits with respect to the input
// image. The objective sees only the logit vector and reports its gradient;
// one forward and one backward pass per call.
//   LossFn: double(const std::vector<double>& logits, std::vector<double>& dlogits)
template <class LossFn>
std::pair<double, Tensor> input_gradient(const Network& net, const Tensor& x, LossFn&& loss_fn) {
  ForwardTrace trace;
  Tensor logits = forward_logits(net, x, &trace);
  std::vector<double> dlogits(logits.size(), 0.0);
  const double loss = loss_fn(logits.data, dlogits);
  Tensor dl({logits.size()});
  dl.data = dlogits;
  Tensor dx = backward(net, trace, dl, nullptr);
  return {loss, std::move(dx)};
}

// ---- construction ----

inline std::vector<std::size_t> layer_output_shape(const LayerSpec& spec,
                                                   const std::vector<std::size_t>& in) {
  switch (spec.kind) {
    case LayerKind::conv3x3: {
      if (in.size() != 3) fail(errc::config, "conv3x3 requires CxHxW input");
      if (in[1] < 3 || in[2] < 3) fail(errc::config, "conv3x3 input too small");
      return {spec.filters, in[1] - 2, in[2] - 2};
    }
    case LayerKind::maxpool2x2: {
      if (in.size() != 3) fail(errc::config, "maxpool2x2 requires CxHxW input");
      if (in[1] < 2 || in[2] < 2) fail(errc::config, "maxpool2x2 input too small");
      return {in[0], in[1] / 2, in[2] / 2};
    }
    case LayerKind::dense_relu:
    case LayerKind::dense_linear:
      return {spec.units};
  }
  fail(errc::internal, "unknown layer kind");
}

// Builds and initializes a network. ReLU layers get He-normal weights, the
// linear logit layer gets Glorot-uniform; biases start at zero.
inline Network build_network(std::vector<std::size_t> input_shape, std::size_t classes,
                             const std::vector<LayerSpec>& specs, double temperature,
                             std::uint64_t seed) {
  if (specs.empty() || specs.back().kind != LayerKind::dense_linear ||
      specs.back().units != classes)
    fail(errc::config, "network must end with a linear logit layer of `classes` units");
  Network net;
  net.input_shape = std::move(input_shape);
  net.classes = classes;
  net.temperature = temperature;
  Rng rng(seed);
  std::vector<std::size_t> cur = net.input_shape;
  for (const LayerSpec& spec : specs) {
    Layer l;
    l.spec = spec;
    switch (spec.kind) {
      case LayerKind::conv3x3: {
        const std::size_t in_c = cur[0];
        l.weights = Tensor({spec.filters, in_c, 3, 3});
        const double std_he = std::sqrt(2.0 / static_cast<double>(in_c * 9));
        for (double& v : l.weights.data) v = rng.normal(0.0, std_he);
        l.bias = Tensor({spec.filters});
        break;
      }
      case LayerKind::maxpool2x2:
        break;
      case LayerKind::dense_relu:
      case LayerKind::dense_linear: {
        const std::size_t in_dim = Tensor::count(cur);
        l.weights = Tensor({spec.units, in_dim});
        if (spec.kind == LayerKind::dense_relu) {
          const double std_he = std::sqrt(2.0 / static_cast<double>(in_dim));
          for (double& v : l.weights.data) v = rng.normal(0.0, std_he);
        } else {
          const double lim = std::sqrt(6.0 / static_cast<double>(in_dim + spec.units));
          for (double& v : l.weights.data) v = rng.uniform(-lim, lim);
        }
        l.bias = Tensor({spec.units});
        break;
      }
    }
    cur = layer_output_shape(spec, cur);
    net.layers.push_back(std::move(l));
  }
  return net;
}

// Conv pair / pool / conv pair / pool / two hidden dense layers / logits.
// `width` is the first conv's filter count (32 for the 28x28 grayscale
// profile, 64 for the 32x32 color profile); hidden dense width is 200.
inline Network make_conv_net(std::vector<std::size_t> input_shape, std::size_t classes,
                             std::size_t width, double temperature, std::uint64_t seed) {
  const std::vector<LayerSpec> specs = {
      LayerSpec::conv(width),      LayerSpec::conv(width),      LayerSpec::pool(),
      LayerSpec::conv(2 * width),  LayerSpec::conv(2 * width),  LayerSpec::pool(),
      LayerSpec::dense(200),       LayerSpec::dense(200),       LayerSpec::logits(classes)};
  return build_network(std::move(input_shape), classes, specs, temperature, seed);
}

inline Network make_mnist_net(double temperature, std::uint64_t seed) {
  return make_conv_net({1, 28, 28}, 10, 32, temperature, seed);
}

inline Network make_cifar_net(double temperature, std::uint64_t seed) {
  return make_conv_net({3, 32, 32}, 10, 64, temperature, seed);
}

// Small profile for fast tests: one conv block and one hidden dense layer.
inline Network make_tiny_net(std::vector<std::size_t> input_shape, std::size_t classes,
                             double temperature, std::uint64_t seed) {
  std::vector<LayerSpec> specs;
  if (input_shape.size() == 3) {
    specs = {LayerSpec::conv(8), LayerSpec::pool(), LayerSpec::dense(32), LayerSpec::logits(classes)};
  } else {
    specs = {LayerSpec::dense(32), LayerSpec::logits(classes)};
  }
  return build_network(std::move(input_shape), classes, specs, temperature, seed);
}

}  // namespace advl
