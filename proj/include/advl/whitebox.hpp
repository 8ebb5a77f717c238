#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "advl/common.hpp"
#include "advl/network.hpp"
#include "advl/tensor.hpp"

namespace advl {

// ---- margin loss on logits ----
// loss = max( max_{i != t} Z_i - Z_t, -kappa ). Negative once the target
// class wins by at least kappa. `dlogits`, when non-null, receives the
// subgradient; at the kink the max-other branch is taken, and ties among the
// runners-up resolve to the lowest class index.
inline double margin_loss(const std::vector<double>& z, std::size_t target, double kappa,
                          std::vector<double>* dlogits = nullptr) {
  if (target >= z.size()) fail(errc::config, "margin_loss: target out of range");
  if (z.size() < 2) fail(errc::config, "margin_loss: need at least two classes");
  std::size_t best = target == 0 ? 1 : 0;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (i != target && z[i] > z[best]) best = i;
  const double diff = z[best] - z[target];
  const double loss = diff > -kappa ? diff : -kappa;
  if (dlogits) {
    dlogits->assign(z.size(), 0.0);
    if (diff >= -kappa) {
      (*dlogits)[best] += 1.0;
      (*dlogits)[target] -= 1.0;
    }
  }
  return loss;
}

// ---- ε-box change of variables ----
// Per-pixel bounds a = max(x - eps, 0), b = min(x + eps, 1); the candidate
// image is x(w) = (b-a)/2 * tanh(w + c) + (b+a)/2, which sweeps exactly [a,b]
// as w runs over the reals. The offset c = -atanh((a+b-1)/(b-a)) would center
// w = 0 on pixel value 1/2; where the box does not straddle 1/2 that argument
// leaves (-1,1), so it is clamped to keep c finite (the offset only shifts
// w-space and cannot change which images are reachable). Degenerate pixels
// with a == b are pinned to a and carry zero gradient.
struct SubstitutionFrame {
  Tensor a;  // lower pixel bounds
  Tensor b;  // upper pixel bounds
  Tensor c;  // w-space offsets
  Tensor w;  // current optimization variable

  Tensor to_image() const {
    Tensor x = a;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double half_range = (b.data[i] - a.data[i]) / 2.0;
      const double mid = (b.data[i] + a.data[i]) / 2.0;
      if (half_range == 0.0) {
        x.data[i] = a.data[i];
        continue;
      }
      // Rounding of half_range*tanh + mid can overshoot the bound by an ulp
      // when tanh saturates; the box invariant is exact, so clamp.
      const double v = half_range * std::tanh(w.data[i] + c.data[i]) + mid;
      x.data[i] = std::min(std::max(v, a.data[i]), b.data[i]);
    }
    return x;
  }

  // d pixel / d w at the current w.
  Tensor dimage_dw() const {
    Tensor d = a;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double half_range = (b.data[i] - a.data[i]) / 2.0;
      if (half_range == 0.0) {
        d.data[i] = 0.0;
      } else {
        const double th = std::tanh(w.data[i] + c.data[i]);
        d.data[i] = half_range * (1.0 - th * th);
      }
    }
    return d;
  }

  // Caps tanh saturation at 1 - slack. Pixels resting on (or within slack
  // of) a box bound have no usable finite preimage: their image-space
  // gradient underflows any first-order optimizer's epsilon floor and they
  // would never move. Attacks therefore start such pixels a hair inside the
  // box — the image moves by at most slack/2 per pixel, far below one 8-bit
  // intensity level.
  void relax_edges(double slack) {
    const double cap = std::atanh(1.0 - slack);
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (b.data[i] == a.data[i]) continue;
      const double t = w.data[i] + c.data[i];
      if (t > cap)
        w.data[i] = cap - c.data[i];
      else if (t < -cap)
        w.data[i] = -cap - c.data[i];
    }
  }

  // Sets w so that to_image() reproduces `x` (up to a tiny boundary nudge:
  // pixels sitting exactly on a bound have no finite preimage).
  void set_from_image(const Tensor& x) {
    check_same_shape(x, a, "set_from_image");
    constexpr double kEdge = 1.0 - 1e-12;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double half_range = (b.data[i] - a.data[i]) / 2.0;
      if (half_range == 0.0) {
        w.data[i] = 0.0;
        continue;
      }
      const double mid = (b.data[i] + a.data[i]) / 2.0;
      double u = (x.data[i] - mid) / half_range;
      if (u > kEdge) u = kEdge;
      if (u < -kEdge) u = -kEdge;
      w.data[i] = std::atanh(u) - c.data[i];
    }
  }
};

// eps is in pixel units (already divided by 255).
inline SubstitutionFrame make_frame(const Tensor& x, double eps) {
  if (eps <= 0.0) fail(errc::config, "make_frame: eps must be positive");
  SubstitutionFrame f;
  f.a = x;
  f.b = x;
  f.c = Tensor(x.shape);
  f.w = Tensor(x.shape);
  constexpr double kClamp = 1.0 - 1e-12;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x.data[i];
    if (!(xi >= 0.0 && xi <= 1.0)) fail(errc::config, "make_frame: pixel outside [0,1]");
    const double a = std::max(xi - eps, 0.0);
    const double b = std::min(xi + eps, 1.0);
    f.a.data[i] = a;
    f.b.data[i] = b;
    if (b > a) {
      double u = (a + b - 1.0) / (b - a);
      if (u > kClamp) u = kClamp;
      if (u < -kClamp) u = -kClamp;
      f.c.data[i] = -std::atanh(u);
    } else {
      f.c.data[i] = 0.0;
    }
  }
  f.set_from_image(x);
  return f;
}

// ---- Adam on a flat tensor ----

struct AdamParams {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m, v;
  std::size_t step = 0;

  explicit AdamState(const std::vector<std::size_t>& shape) : m(shape), v(shape) {}

  void update(Tensor& w, const Tensor& grad, const AdamParams& p) {
    ++step;
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m.data[i] = p.beta1 * m.data[i] + (1.0 - p.beta1) * grad.data[i];
      v.data[i] = p.beta2 * v.data[i] + (1.0 - p.beta2) * grad.data[i] * grad.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      w.data[i] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
    }
  }
};

// ---- attack configuration and result ----

struct EpsAttackConfig {
  double epsilon_8bit = 52.0;  // max per-pixel change, in 8-bit units, in (0, 255]
  double kappa = 0.0;          // required logit margin
  std::size_t max_iters = 1000;
  AdamParams adam;
  bool abort_early = true;  // stop at the first iterate classified as the target
  // Saturation cap applied to the starting point (see relax_edges); the
  // initial image sits within init_slack/2 of the clean one. 0 disables.
  double init_slack = 1e-6;
};

struct AttackResult {
  Tensor adversarial;
  bool success = false;
  std::size_t iterations_used = 0;
  double loss_final = 0.0;
  double wall_time_s = 0.0;
  double max_pert_8bit = 0.0;
  double l2_distortion_8bit = 0.0;
  std::uint64_t queries = 0;  // oracle queries (zero for white-box runs)
};

inline double max_perturbation_8bit(const Tensor& adv, const Tensor& x) {
  check_same_shape(adv, x, "max_perturbation");
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(adv.data[i] - x.data[i]));
  return 255.0 * m;
}

inline double l2_distortion_8bit(const Tensor& adv, const Tensor& x) {
  check_same_shape(adv, x, "l2_distortion");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = adv.data[i] - x.data[i];
    s += d * d;
  }
  return 255.0 * std::sqrt(s);
}

inline void validate(const EpsAttackConfig& cfg) {
  if (!(cfg.epsilon_8bit > 0.0 && cfg.epsilon_8bit <= 255.0))
    fail(errc::config, "epsilon_8bit must lie in (0, 255]");
  if (cfg.kappa < 0.0) fail(errc::config, "kappa must be non-negative");
  if (cfg.max_iters == 0) fail(errc::config, "max_iters must be positive");
  if (cfg.adam.lr <= 0.0) fail(errc::config, "adam lr must be positive");
  if (!(cfg.init_slack >= 0.0 && cfg.init_slack < 1.0))
    fail(errc::config, "init_slack must lie in [0, 1)");
}

// White-box targeted attack inside the ε-box: minimize the logit margin loss
// of the target class over x(w), Adam in w-space, starting from the clean
// image. Success means the model's argmax equals the target (with the kappa
// margin honored). Each iterate is scored by the same forward pass that feeds
// its gradient, so one Adam step costs one forward-backward. With abort_early
// the loop stops at the first successful iterate and iterations_used counts
// Adam steps taken to reach it; otherwise the last successful iterate (if
// any) is returned after the full budget and iterations_used records where it
// was found, or max_iters on failure.
inline AttackResult epsilon_attack(const Network& net, const Tensor& x, std::size_t target,
                                   const EpsAttackConfig& cfg) {
  validate(cfg);
  if (target >= net.classes) fail(errc::config, "attack target out of range");
  Stopwatch clock;

  SubstitutionFrame frame = make_frame(x, cfg.epsilon_8bit / 255.0);
  if (cfg.init_slack > 0.0) frame.relax_edges(cfg.init_slack);
  AdamState adam(frame.w.shape);
  AttackResult res;
  res.adversarial = frame.to_image();

  bool found = false;
  std::size_t found_iter = 0;
  Tensor found_image;
  double found_loss = 0.0;
  double last_loss = 0.0;

  // Scores iterate x_k (reached after k Adam steps) from the logits of the
  // gradient pass; returns true if the attack is done.
  auto score = [&](const Tensor& x_k, const std::vector<double>& z, std::size_t k) {
    if (argmax(z) != target) return false;
    const double loss = margin_loss(z, target, cfg.kappa);
    if (loss > -cfg.kappa) return false;
    found = true;
    found_iter = k;
    found_image = x_k;
    found_loss = loss;
    return cfg.abort_early;
  };

  std::size_t steps = 0;
  bool done = false;
  for (std::size_t iter = 0; iter <= cfg.max_iters; ++iter) {
    const Tensor x_cur = frame.to_image();
    auto [loss, dx] =
        input_gradient(net, x_cur, [&](const std::vector<double>& z, std::vector<double>& dz) {
          const double l = margin_loss(z, target, cfg.kappa, &dz);
          done = score(x_cur, z, iter);
          return l;
        });
    if (!std::isfinite(loss)) fail(errc::numeric, "attack loss went non-finite");
    last_loss = loss;
    if (done || iter == cfg.max_iters) break;

    // chain through the substitution: dL/dw = dL/dx * dx/dw
    Tensor dw = mul(dx, frame.dimage_dw());
    adam.update(frame.w, dw, cfg.adam);
    ++steps;
  }

  if (found) {
    res.adversarial = found_image;
    res.success = true;
    res.iterations_used = found_iter;
    res.loss_final = found_loss;
  } else {
    res.adversarial = frame.to_image();
    res.success = false;
    res.iterations_used = steps;
    res.loss_final = last_loss;
  }

  // Re-verify the returned image rather than trusting loop bookkeeping.
  if (res.success && predict(net, res.adversarial) != target)
    fail(errc::internal, "attack bookkeeping: successful iterate no longer classifies as target");

  res.max_pert_8bit = max_perturbation_8bit(res.adversarial, x);
  res.l2_distortion_8bit = l2_distortion_8bit(res.adversarial, x);
  if (res.max_pert_8bit > cfg.epsilon_8bit + 1e-6)
    fail(errc::internal, "attack produced an out-of-box perturbation");
  res.wall_time_s = clock.seconds();
  return res;
}

}  // namespace advl
