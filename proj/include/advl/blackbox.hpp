#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "advl/common.hpp"
#include "advl/network.hpp"
#include "advl/whitebox.hpp"

namespace advl {

// Black-box access to a classifier: images in, probabilities out, every touch
// counted. The optional vjp hook backpropagates a cotangent on the output
// probabilities to the input image; it exists for the analytic gradient mode
// and also increments the query count (it is a model touch like any other).
class QueryOracle {
 public:
  using QueryFn = std::function<std::vector<double>(const Tensor&)>;
  using VjpFn = std::function<Tensor(const Tensor&, const std::vector<double>&)>;

  QueryOracle(std::size_t classes, QueryFn query, VjpFn vjp = nullptr)
      : classes_(classes), query_(std::move(query)), vjp_(std::move(vjp)) {
    if (!query_) fail(errc::config, "oracle requires a query function");
  }

  std::size_t classes() const { return classes_; }
  bool has_vjp() const { return static_cast<bool>(vjp_); }
  std::uint64_t query_count() const { return count_; }

  std::vector<double> query(const Tensor& image) {
    ++count_;
    std::vector<double> p = query_(image);
    if (p.size() != classes_) fail(errc::internal, "oracle returned wrong class count");
    return p;
  }

  Tensor vjp(const Tensor& image, const std::vector<double>& dprobs) {
    if (!vjp_) fail(errc::config, "analytic gradient mode requires an oracle with a vjp hook");
    ++count_;
    return vjp_(image, dprobs);
  }

  // Wraps a network as an oracle reporting softmax probabilities at the
  // network's deployed temperature, with an analytic vjp hook.
  static QueryOracle wrap(const Network& net) {
    auto q = [&net](const Tensor& x) { return predict_probs(net, x); };
    auto v = [&net](const Tensor& x, const std::vector<double>& dprobs) {
      ForwardTrace trace;
      Tensor logits = forward_logits(net, x, &trace);
      const std::vector<double> probs = softmax_t(logits.data, net.temperature);
      Tensor dl({logits.size()});
      dl.data = softmax_backward(probs, dprobs, net.temperature);
      return backward(net, trace, dl, nullptr);
    };
    return QueryOracle(net.classes, std::move(q), std::move(v));
  }

 private:
  std::size_t classes_;
  QueryFn query_;
  VjpFn vjp_;
  std::uint64_t count_ = 0;
};

// Margin loss over log probabilities: max( max_{i != t} log(p_i + df) -
// log(p_t + df), -kappa ). Since log f_i - log f_j = z_i - z_j, this equals
// the logit margin whenever the floor df is negligible against the
// probabilities involved; df keeps the loss finite when the oracle reports
// exact zeros. Subgradient conventions match margin_loss.
inline double probability_margin_loss(const std::vector<double>& probs, std::size_t target,
                                      double kappa, double delta_f,
                                      std::vector<double>* dprobs = nullptr) {
  if (target >= probs.size()) fail(errc::config, "probability_margin_loss: target out of range");
  if (probs.size() < 2) fail(errc::config, "probability_margin_loss: need at least two classes");
  if (delta_f <= 0.0) fail(errc::config, "probability_margin_loss: delta_f must be positive");
  std::size_t best = target == 0 ? 1 : 0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (i != target && probs[i] > probs[best]) best = i;
  const double diff = std::log(probs[best] + delta_f) - std::log(probs[target] + delta_f);
  const double loss = diff > -kappa ? diff : -kappa;
  if (dprobs) {
    dprobs->assign(probs.size(), 0.0);
    if (diff >= -kappa) {
      (*dprobs)[best] += 1.0 / (probs[best] + delta_f);
      (*dprobs)[target] -= 1.0 / (probs[target] + delta_f);
    }
  }
  return loss;
}

enum class GradientMode { analytic, finite_difference };

struct RegionAttackConfig {
  double epsilon_8bit = 52.0;  // ε-box radius, 8-bit units
  double sigma = 0.4;          // stddev of the exploration noise (pixel units)
  double kappa = 0.0;
  // Smoothing added to every probability inside the log. Besides keeping the
  // loss finite when the oracle reports exact zeros, it sets where the loss
  // saturates: a class with probability below delta_f contributes almost no
  // gradient, which is precisely the hard-output regime the exploration noise
  // exists to escape. Shrink toward 1e-30 to recover the exact logit margin
  // on outputs that stay above that floor.
  double delta_f = 1e-6;
  std::size_t max_iters = 500;
  AdamParams adam;
  GradientMode gradient_mode = GradientMode::analytic;
  double fd_step = 1e-4;      // central-difference step, pixel units
  std::size_t fd_coords = 0;  // coordinates probed per iteration; 0 = all
  std::uint64_t seed = 1;
  bool abort_early = true;
  // Saturation cap applied to the starting point (see
  // SubstitutionFrame::relax_edges); 0 disables.
  double init_slack = 1e-6;
};

inline void validate(const RegionAttackConfig& cfg) {
  if (!(cfg.epsilon_8bit > 0.0 && cfg.epsilon_8bit <= 255.0))
    fail(errc::config, "epsilon_8bit must lie in (0, 255]");
  if (cfg.sigma < 0.0) fail(errc::config, "sigma must be non-negative");
  if (cfg.kappa < 0.0) fail(errc::config, "kappa must be non-negative");
  if (!(cfg.init_slack >= 0.0 && cfg.init_slack < 1.0))
    fail(errc::config, "init_slack must lie in [0, 1)");
  if (cfg.delta_f <= 0.0) fail(errc::config, "delta_f must be positive");
  if (cfg.max_iters == 0) fail(errc::config, "max_iters must be positive");
  if (cfg.gradient_mode == GradientMode::finite_difference && cfg.fd_step <= 0.0)
    fail(errc::config, "fd_step must be positive");
}

namespace detail {

// Central-difference estimate of d loss / d image at `x`, probing `coords`.
// Probe points are clamped to [0,1] so the oracle only ever sees valid
// images. Exactly 2 * coords.size() queries.
inline Tensor fd_gradient(QueryOracle& oracle, const Tensor& x, std::size_t target,
                          const RegionAttackConfig& cfg, const std::vector<std::size_t>& coords) {
  Tensor g(x.shape);
  Tensor probe = x;
  for (std::size_t i : coords) {
    const double orig = probe.data[i];
    const double hi = clamp01(orig + cfg.fd_step);
    const double lo = clamp01(orig - cfg.fd_step);
    probe.data[i] = hi;
    const double lp = probability_margin_loss(oracle.query(probe), target, cfg.kappa, cfg.delta_f);
    probe.data[i] = lo;
    const double lm = probability_margin_loss(oracle.query(probe), target, cfg.kappa, cfg.delta_f);
    probe.data[i] = orig;
    const double span = hi - lo;
    g.data[i] = span > 0.0 ? (lp - lm) / span : 0.0;
  }
  return g;
}

}  // namespace detail

// Targeted black-box attack. Each iteration perturbs the current in-box
// iterate with fresh Gaussian noise, measures the probability-margin loss
// (and its gradient) at that probe point, and takes an Adam step in the
// ε-box substitution variable; the persistent iterate itself is never noised.
// The probe is clamped to [0,1] before querying.
//
// Query accounting, exact by construction:
//   per iteration: 1 probe query
//                  + (analytic: 1 vjp | finite_difference: 2k coordinate queries)
//                  + 1 stop-check query when abort_early is on;
//   plus 1 final verification query when abort_early is off.
// With abort_early, iterations_used * (2 + grad_cost) equals query_count;
// without it, max_iters * (1 + grad_cost) + 1 does.
inline AttackResult region_attack(QueryOracle& oracle, const Tensor& x, std::size_t target,
                                  const RegionAttackConfig& cfg) {
  validate(cfg);
  if (target >= oracle.classes()) fail(errc::config, "attack target out of range");
  if (cfg.gradient_mode == GradientMode::analytic && !oracle.has_vjp())
    fail(errc::config, "analytic gradient mode requires an oracle with a vjp hook");
  Stopwatch clock;
  const std::uint64_t queries_before = oracle.query_count();

  SubstitutionFrame frame = make_frame(x, cfg.epsilon_8bit / 255.0);
  if (cfg.init_slack > 0.0) frame.relax_edges(cfg.init_slack);
  AdamState adam(frame.w.shape);
  Rng rng(cfg.seed);
  const std::size_t n = x.size();

  std::vector<std::size_t> all_coords(n);
  std::iota(all_coords.begin(), all_coords.end(), 0);
  const std::size_t k =
      cfg.fd_coords == 0 ? n : std::min(cfg.fd_coords, n);

  auto admissible = [&](const std::vector<double>& probs, double loss) {
    return argmax(probs) == target && loss <= -cfg.kappa;
  };

  AttackResult res;
  bool found = false;
  Tensor found_image;
  double found_loss = 0.0;
  std::size_t found_iter = 0;
  bool have_last_check = false;  // the stop check already scored the final iterate
  double last_check_loss = 0.0;

  std::size_t iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    const Tensor x_cur = frame.to_image();

    // Fresh exploration noise; drawn even at sigma == 0 so runs with
    // different sigmas consume the stream identically.
    Tensor x_probe = x_cur;
    for (std::size_t i = 0; i < n; ++i) x_probe.data[i] = clamp01(x_probe.data[i] + cfg.sigma * rng.normal());

    std::vector<double> dprobs;
    const std::vector<double> probs = oracle.query(x_probe);
    const double probe_loss = probability_margin_loss(probs, target, cfg.kappa, cfg.delta_f, &dprobs);
    if (!std::isfinite(probe_loss)) fail(errc::numeric, "attack loss went non-finite");

    Tensor dimage;
    if (cfg.gradient_mode == GradientMode::analytic) {
      dimage = oracle.vjp(x_probe, dprobs);
    } else {
      std::vector<std::size_t> coords;
      if (k == n) {
        coords = all_coords;
      } else {
        // partial Fisher-Yates: first k entries become the sample
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t pick = j + static_cast<std::size_t>(rng.below(n - j));
          std::swap(all_coords[j], all_coords[pick]);
        }
        coords.assign(all_coords.begin(), all_coords.begin() + static_cast<std::ptrdiff_t>(k));
      }
      dimage = detail::fd_gradient(oracle, x_probe, target, cfg, coords);
    }

    Tensor dw = mul(dimage, frame.dimage_dw());
    adam.update(frame.w, dw, cfg.adam);

    if (cfg.abort_early) {
      const Tensor x_next = frame.to_image();
      const std::vector<double> p_next = oracle.query(x_next);
      const double loss_next = probability_margin_loss(p_next, target, cfg.kappa, cfg.delta_f);
      have_last_check = true;
      last_check_loss = loss_next;
      if (admissible(p_next, loss_next)) {
        found = true;
        found_iter = iter + 1;
        found_image = x_next;
        found_loss = loss_next;
        ++iter;
        break;
      }
    }
  }

  if (found) {
    res.adversarial = found_image;
    res.success = true;
    res.iterations_used = iter;
    res.loss_final = found_loss;
  } else {
    res.adversarial = frame.to_image();
    res.iterations_used = iter;
    if (have_last_check) {
      // w has not changed since that check, so its verdict stands.
      res.loss_final = last_check_loss;
      res.success = false;
    } else {
      const std::vector<double> p_fin = oracle.query(res.adversarial);
      res.loss_final = probability_margin_loss(p_fin, target, cfg.kappa, cfg.delta_f);
      res.success = admissible(p_fin, res.loss_final);
    }
  }

  res.max_pert_8bit = max_perturbation_8bit(res.adversarial, x);
  res.l2_distortion_8bit = l2_distortion_8bit(res.adversarial, x);
  if (res.max_pert_8bit > cfg.epsilon_8bit + 1e-6)
    fail(errc::internal, "attack produced an out-of-box perturbation");
  res.queries = oracle.query_count() - queries_before;
  res.wall_time_s = clock.seconds();
  return res;
}

// ---- transfer / robustness evaluation ----

struct BypassPlan {
  double source_temperature = 5.0;
  std::vector<double> target_temperatures;
};

struct TransferCell {
  double source_temperature = 0.0;
  double target_temperature = 0.0;
  double success_rate = 0.0;  // over all attempted images
  std::size_t samples = 0;
};

// Fraction of crafted adversarials (successful on the source or not) that the
// victim classifies as their target.
inline double transfer_success_rate(const Network& victim, const std::vector<AttackResult>& crafted,
                                    const std::vector<std::size_t>& targets) {
  if (crafted.size() != targets.size() || crafted.empty())
    fail(errc::config, "transfer_success_rate: size mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < crafted.size(); ++i)
    if (predict(victim, crafted[i].adversarial) == targets[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(crafted.size());
}

// Mean (over `trials` fresh noise draws) of the fraction of adversarials
// still classified as their target after Gaussian noise of stddev sigma is
// added and the image re-clamped to [0,1].
inline double noisy_success_rate(const Network& victim, const std::vector<AttackResult>& crafted,
                                 const std::vector<std::size_t>& targets, double sigma,
                                 std::size_t trials, std::uint64_t seed) {
  if (crafted.size() != targets.size() || crafted.empty())
    fail(errc::config, "noisy_success_rate: size mismatch or empty");
  if (trials == 0) fail(errc::config, "noisy_success_rate: trials must be positive");
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < crafted.size(); ++i) {
      Tensor noisy = crafted[i].adversarial;
      for (double& v : noisy.data) v = clamp01(v + sigma * rng.normal());
      if (predict(victim, noisy) == targets[i]) ++hit;
    }
    total += static_cast<double>(hit) / static_cast<double>(crafted.size());
  }
  return total / static_cast<double>(trials);
}

}  // namespace advl
