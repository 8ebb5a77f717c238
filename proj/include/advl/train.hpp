#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <thread>
#include <vector>

#include "advl/common.hpp"
#include "advl/network.hpp"
#include "advl/tensor.hpp"

namespace advl {

struct LabeledDataset {
  std::vector<Tensor> images;        // each in [0,1], shape = network input shape
  std::vector<std::size_t> labels;   // hard class ids
  std::size_t classes = 0;

  std::size_t size() const { return images.size(); }
};

// Teacher output distributions captured at the teacher's temperature.
struct SoftLabelSet {
  std::vector<std::vector<double>> probs;
  double temperature = 1.0;
  std::size_t classes = 0;
};

enum class Optimizer { sgd_momentum, adam };

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
  Optimizer optimizer = Optimizer::sgd_momentum;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  std::size_t workers = 1;   // gradient evaluation threads; results do not depend on it
  bool shuffle = true;
  // Cross entropy through softmax-at-T scales gradients by 1/T; compensating
  // the step size keeps high-temperature training moving at the same pace as
  // T = 1. Applies to SGD only — Adam's update is invariant to uniform
  // gradient scaling, so no compensation is needed there. On by default;
  // turn off to use the raw gradient.
  bool scale_lr_by_temperature = true;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean per-sample loss, one entry per epoch
};

// ---- cross entropy ----

// -log softmax(z / T)[target], computed via the log-sum-exp form.
inline double cross_entropy(const std::vector<double>& logits, std::size_t target, double temperature) {
  if (target >= logits.size()) fail(errc::config, "cross_entropy: target out of range");
  return -log_softmax_t(logits, temperature)[target];
}

// Soft-target form: -sum_i q_i log softmax(z / T)_i.
inline double cross_entropy(const std::vector<double>& logits, const std::vector<double>& soft,
                            double temperature) {
  if (soft.size() != logits.size()) fail(errc::config, "cross_entropy: soft label size mismatch");
  const std::vector<double> lp = log_softmax_t(logits, temperature);
  double s = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) s += soft[i] * lp[i];
  return -s;
}

namespace detail {

// d loss / d logits for cross entropy through softmax-at-T: (p - q) / T.
inline std::vector<double> ce_dlogits(const std::vector<double>& logits, const std::vector<double>& q,
                                      double temperature) {
  std::vector<double> p = softmax_t(logits, temperature);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = (p[i] - q[i]) / temperature;
  return p;
}

struct BatchGrads {
  std::vector<LayerGrads> layers;
  double loss_sum = 0.0;

  void init_like(const Network& net) {
    layers.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      layers[i].weights = Tensor::zeros(net.layers[i].weights.shape);
      layers[i].bias = Tensor::zeros(net.layers[i].bias.shape);
    }
    loss_sum = 0.0;
  }

  void add(const BatchGrads& o) {
    loss_sum += o.loss_sum;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (o.layers[i].weights.size()) add_inplace(layers[i].weights, o.layers[i].weights);
      if (o.layers[i].bias.size()) add_inplace(layers[i].bias, o.layers[i].bias);
    }
  }
};

}  // namespace detail

// Mean loss and mean parameter gradients over a batch. `targets` supplies the
// per-sample target distribution (one-hot for hard labels). The batch is split
// into a fixed number of chunks whose partial sums are combined in chunk
// order, so the result is bit-identical for any worker count.
template <class TargetFn>  // const std::vector<double>&(std::size_t sample_index)
std::pair<double, std::vector<LayerGrads>> batch_gradients(const Network& net,
                                                           const std::vector<Tensor>& images,
                                                           const std::vector<std::size_t>& batch,
                                                           TargetFn&& target_of, std::size_t workers) {
  constexpr std::size_t kChunks = 16;
  const std::size_t n = batch.size();
  if (n == 0) fail(errc::internal, "batch_gradients: empty batch");
  std::vector<detail::BatchGrads> partial(std::min(kChunks, n));
  for (auto& p : partial) p.init_like(net);

  auto run_chunk = [&](std::size_t ci) {
    detail::BatchGrads& acc = partial[ci];
    for (std::size_t j = ci; j < n; j += partial.size()) {
      const std::size_t idx = batch[j];
      const std::vector<double>& q = target_of(idx);
      ForwardTrace trace;
      Tensor logits = forward_logits(net, images[idx], &trace);
      acc.loss_sum += cross_entropy(logits.data, q, net.temperature);
      Tensor dl({logits.size()});
      dl.data = detail::ce_dlogits(logits.data, q, net.temperature);
      std::vector<LayerGrads> g;
      backward(net, trace, dl, &g);
      for (std::size_t li = 0; li < g.size(); ++li) {
        if (g[li].weights.size()) add_inplace(acc.layers[li].weights, g[li].weights);
        if (g[li].bias.size()) add_inplace(acc.layers[li].bias, g[li].bias);
      }
    }
  };

  if (workers <= 1 || partial.size() == 1) {
    for (std::size_t ci = 0; ci < partial.size(); ++ci) run_chunk(ci);
  } else {
    std::vector<std::thread> pool;
    const std::size_t nw = std::min(workers, partial.size());
    for (std::size_t t = 0; t < nw; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t ci = t; ci < partial.size(); ci += nw) run_chunk(ci);
      });
    for (auto& th : pool) th.join();
  }

  detail::BatchGrads total;
  total.init_like(net);
  for (const auto& p : partial) total.add(p);

  const double inv = 1.0 / static_cast<double>(n);
  for (auto& lg : total.layers) {
    if (lg.weights.size()) scale_inplace(lg.weights, inv);
    if (lg.bias.size()) scale_inplace(lg.bias, inv);
  }
  return {total.loss_sum * inv, std::move(total.layers)};
}

namespace detail {

struct ParamOptState {
  std::vector<LayerGrads> m;  // momentum / first moment
  std::vector<LayerGrads> v;  // second moment (adam only)
  std::size_t step = 0;

  void init_like(const Network& net, bool need_v) {
    BatchGrads tmp;
    tmp.init_like(net);
    m = tmp.layers;
    if (need_v) {
      BatchGrads tmp2;
      tmp2.init_like(net);
      v = tmp2.layers;
    }
  }
};

inline void apply_update(Network& net, ParamOptState& st, const std::vector<LayerGrads>& g,
                         const TrainConfig& cfg, double lr) {
  ++st.step;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto upd = [&](Tensor& w, Tensor& mw, Tensor* vw, const Tensor& gw) {
      if (!w.size()) return;
      if (cfg.optimizer == Optimizer::sgd_momentum) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          mw.data[i] = cfg.momentum * mw.data[i] - lr * gw.data[i];
          w.data[i] += mw.data[i];
        }
      } else {
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
        for (std::size_t i = 0; i < w.size(); ++i) {
          mw.data[i] = cfg.beta1 * mw.data[i] + (1.0 - cfg.beta1) * gw.data[i];
          vw->data[i] = cfg.beta2 * vw->data[i] + (1.0 - cfg.beta2) * gw.data[i] * gw.data[i];
          const double mhat = mw.data[i] / bc1;
          const double vhat = vw->data[i] / bc2;
          w.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
      }
    };
    upd(net.layers[li].weights, st.m[li].weights,
        st.v.empty() ? nullptr : &st.v[li].weights, g[li].weights);
    upd(net.layers[li].bias, st.m[li].bias, st.v.empty() ? nullptr : &st.v[li].bias, g[li].bias);
  }
}

}  // namespace detail

// Minibatch training against per-sample target distributions. Throws a
// numeric error if the loss goes non-finite.
template <class TargetFn>
TrainReport train_targets(Network& net, const std::vector<Tensor>& images, TargetFn&& target_of,
                          const TrainConfig& cfg) {
  if (images.empty()) fail(errc::config, "train: empty dataset");
  if (cfg.batch_size == 0) fail(errc::config, "train: batch_size must be positive");
  if (cfg.lr <= 0.0) fail(errc::config, "train: learning rate must be positive");

  const bool compensate =
      cfg.scale_lr_by_temperature && cfg.optimizer == Optimizer::sgd_momentum;
  const double lr = cfg.lr * (compensate ? net.temperature : 1.0);
  detail::ParamOptState st;
  st.init_like(net, cfg.optimizer == Optimizer::adam);

  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);

  TrainReport report;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
      auto [loss, grads] = batch_gradients(net, images, batch, target_of, cfg.workers);
      if (!std::isfinite(loss)) fail(errc::numeric, "training diverged: non-finite loss");
      detail::apply_update(net, st, grads, cfg, lr);
      loss_sum += loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(seen));
  }
  return report;
}

// Hard-label training.
inline TrainReport train(Network& net, const LabeledDataset& ds, const TrainConfig& cfg) {
  if (ds.classes != net.classes) fail(errc::config, "train: dataset/network class count mismatch");
  std::vector<std::vector<double>> onehot(ds.size(), std::vector<double>(ds.classes, 0.0));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] >= ds.classes) fail(errc::ingest, "train: label out of range");
    onehot[i][ds.labels[i]] = 1.0;
  }
  return train_targets(
      net, ds.images, [&](std::size_t i) -> const std::vector<double>& { return onehot[i]; }, cfg);
}

// Soft-label training (the target distribution comes from a teacher).
inline TrainReport train(Network& net, const std::vector<Tensor>& images, const SoftLabelSet& soft,
                         const TrainConfig& cfg) {
  if (soft.probs.size() != images.size()) fail(errc::config, "train: soft label count mismatch");
  if (soft.classes != net.classes) fail(errc::config, "train: soft label class count mismatch");
  return train_targets(
      net, images, [&](std::size_t i) -> const std::vector<double>& { return soft.probs[i]; }, cfg);
}

// Captures the teacher's output distribution for every image, at the
// teacher's own temperature.
inline SoftLabelSet soft_labels(const Network& teacher, const std::vector<Tensor>& images) {
  SoftLabelSet out;
  out.temperature = teacher.temperature;
  out.classes = teacher.classes;
  out.probs.reserve(images.size());
  for (const Tensor& x : images) out.probs.push_back(predict_probs(teacher, x));
  return out;
}

// Label smoothing: (1 - alpha) on the true class, alpha spread uniformly over
// all classes. Hard-label training drives the true-class logit margin toward
// infinity, which pushes test images far from the decision boundary in logit
// units; smoothing caps the optimal margin at log((1-alpha)m/alpha + 1),
// keeping the boundary within reach of small-perturbation analyses while also
// acting as a mild regularizer.
inline SoftLabelSet smoothed_labels(const LabeledDataset& ds, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) fail(errc::config, "smoothed_labels: alpha must lie in [0, 1)");
  if (ds.classes < 2) fail(errc::config, "smoothed_labels: need at least two classes");
  SoftLabelSet out;
  out.temperature = 1.0;
  out.classes = ds.classes;
  out.probs.assign(ds.size(), std::vector<double>(ds.classes, alpha / static_cast<double>(ds.classes)));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] >= ds.classes) fail(errc::ingest, "smoothed_labels: label out of range");
    out.probs[i][ds.labels[i]] += 1.0 - alpha;
  }
  return out;
}

struct DistillResult {
  Network teacher;  // trained at the distillation temperature
  Network student;  // trained on soft labels at T, then deployed at T = 1
  TrainReport teacher_report;
  TrainReport student_report;
};

// Full distillation pipeline: train a teacher at temperature T on hard
// labels, label the training set with its softened outputs, train a fresh
// student at T on those soft labels, then reset the student's softmax to
// T = 1 for deployment.
template <class NetFactory>  // Network(double temperature, uint64_t seed)
DistillResult distill(const LabeledDataset& ds, double temperature, NetFactory&& make_net,
                      const TrainConfig& teacher_cfg, const TrainConfig& student_cfg) {
  if (temperature <= 0.0) fail(errc::config, "distill: temperature must be positive");
  DistillResult out;
  out.teacher = make_net(temperature, teacher_cfg.seed);
  out.teacher_report = train(out.teacher, ds, teacher_cfg);
  const SoftLabelSet soft = soft_labels(out.teacher, ds.images);
  out.student = make_net(temperature, mix_seed(student_cfg.seed, 0x5eed));
  out.student_report = train(out.student, ds.images, soft, student_cfg);
  out.student.temperature = 1.0;
  return out;
}

// Fraction of samples whose argmax logit matches the label.
inline double accuracy(const Network& net, const LabeledDataset& ds) {
  if (ds.size() == 0) fail(errc::config, "accuracy: empty dataset");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (predict(net, ds.images[i]) == ds.labels[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(ds.size());
}

}  // namespace advl
