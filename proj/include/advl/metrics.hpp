#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "advl/blackbox.hpp"
#include "advl/common.hpp"
#include "advl/train.hpp"
#include "advl/whitebox.hpp"

namespace advl {

// ---- aggregation helpers ----

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double success_rate(const std::vector<AttackResult>& results) {
  if (results.empty()) fail(errc::config, "success_rate: no results");
  std::size_t hit = 0;
  for (const AttackResult& r : results)
    if (r.success) ++hit;
  return static_cast<double>(hit) / static_cast<double>(results.size());
}

// ---- target planning ----

struct TargetPlan {
  std::size_t image_index;
  std::size_t target;
};

// Every class except the true label, for each of the first `n_images` images.
inline std::vector<TargetPlan> make_targets_all(const LabeledDataset& ds, std::size_t n_images) {
  if (n_images > ds.size()) fail(errc::config, "make_targets_all: not enough images");
  std::vector<TargetPlan> plan;
  plan.reserve(n_images * (ds.classes - 1));
  for (std::size_t i = 0; i < n_images; ++i)
    for (std::size_t t = 0; t < ds.classes; ++t)
      if (t != ds.labels[i]) plan.push_back({i, t});
  return plan;
}

// One uniformly drawn target per image, never the true label.
inline std::vector<TargetPlan> make_targets_random(const LabeledDataset& ds, std::size_t n_images,
                                                   std::uint64_t seed) {
  if (n_images > ds.size()) fail(errc::config, "make_targets_random: not enough images");
  Rng rng(seed);
  std::vector<TargetPlan> plan;
  plan.reserve(n_images);
  for (std::size_t i = 0; i < n_images; ++i) {
    std::size_t t = static_cast<std::size_t>(rng.below(ds.classes - 1));
    if (t >= ds.labels[i]) ++t;
    plan.push_back({i, t});
  }
  return plan;
}

// ---- batch attack runs ----
// Each attempt gets its own seed derived from the batch seed, so results are
// order-independent and reproducible.

struct BatchOutcome {
  std::vector<TargetPlan> plan;
  std::vector<AttackResult> results;

  std::vector<std::size_t> targets() const {
    std::vector<std::size_t> t;
    t.reserve(plan.size());
    for (const TargetPlan& p : plan) t.push_back(p.target);
    return t;
  }
};

// White-box cells are independent and the network is immutable, so the batch
// may fan out across threads; each result lands in its planned slot, making
// the outcome identical for any worker count.
inline BatchOutcome run_eps_batch(const Network& net, const LabeledDataset& ds,
                                  const std::vector<TargetPlan>& plan, const EpsAttackConfig& cfg,
                                  std::size_t workers = 1) {
  BatchOutcome out;
  out.plan = plan;
  out.results.resize(plan.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < plan.size(); ++i)
      out.results[i] = epsilon_attack(net, ds.images[plan[i].image_index], plan[i].target, cfg);
    return out;
  }
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < plan.size(); i = next.fetch_add(1))
      out.results[i] = epsilon_attack(net, ds.images[plan[i].image_index], plan[i].target, cfg);
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, plan.size()); ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
  return out;
}

inline BatchOutcome run_region_batch(QueryOracle& oracle, const LabeledDataset& ds,
                                     const std::vector<TargetPlan>& plan, const RegionAttackConfig& cfg,
                                     std::uint64_t batch_seed) {
  BatchOutcome out;
  out.plan = plan;
  out.results.reserve(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    RegionAttackConfig c = cfg;
    c.seed = mix_seed(batch_seed, i);
    out.results.push_back(region_attack(oracle, ds.images[plan[i].image_index], plan[i].target, c));
  }
  return out;
}

// ---- experiment reports ----

struct ReportRow {
  std::string model_id;
  double temperature = 1.0;  // training temperature the model was distilled at
  std::string attack;        // "eps", "region", "transfer", "accuracy"
  double epsilon_8bit = std::nan("");
  double sigma = std::nan("");
  double kappa = std::nan("");
  std::size_t images = 0;
  std::size_t targets_per_image = 0;
  std::size_t attempts = 0;
  std::size_t successes = 0;
  double success_rate = std::nan("");
  double mean_max_pert_8bit = std::nan("");  // over successful attempts
  double mean_l2_8bit = std::nan("");        // over successful attempts
  double mean_iters = std::nan("");
  double median_iters = std::nan("");
  double mean_time_s = std::nan("");
  double median_time_s = std::nan("");
  std::uint64_t seed = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
};

// Distortion metrics are aggregated over successful attempts only (they
// describe the adversarial examples found); iteration and time statistics
// cover every attempt. `zero_times` supports byte-stable reruns.
inline ReportRow summarize(const std::string& model_id, double temperature, const std::string& attack,
                           const BatchOutcome& out, std::size_t images, std::size_t targets_per_image,
                           std::uint64_t seed, bool zero_times) {
  ReportRow row;
  row.model_id = model_id;
  row.temperature = temperature;
  row.attack = attack;
  row.images = images;
  row.targets_per_image = targets_per_image;
  row.attempts = out.results.size();
  row.seed = seed;
  std::vector<double> pert, l2, iters, times;
  for (const AttackResult& r : out.results) {
    if (r.success) {
      ++row.successes;
      pert.push_back(r.max_pert_8bit);
      l2.push_back(r.l2_distortion_8bit);
    }
    iters.push_back(static_cast<double>(r.iterations_used));
    times.push_back(r.wall_time_s);
  }
  row.success_rate = out.results.empty()
                         ? std::nan("")
                         : static_cast<double>(row.successes) / static_cast<double>(row.attempts);
  row.mean_max_pert_8bit = mean_of(pert);
  row.mean_l2_8bit = mean_of(l2);
  row.mean_iters = mean_of(iters);
  row.median_iters = median_of(iters);
  row.mean_time_s = zero_times ? 0.0 : mean_of(times);
  row.median_time_s = zero_times ? 0.0 : median_of(times);
  return row;
}

// ---- CSV / text rendering ----

namespace detail {

inline std::string fmt_g(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// Full precision for CSV cells so a read-back reproduces the doubles exactly.
inline std::string fmt_exact(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline const char* kReportHeader =
    "model_id,temperature,attack,epsilon_8bit,sigma,kappa,images,targets_per_image,attempts,"
    "successes,success_rate,mean_max_pert_8bit,mean_l2_8bit,mean_iters,median_iters,mean_time_s,"
    "median_time_s,seed";

}  // namespace detail

inline void write_csv(const ExperimentReport& report, std::ostream& os) {
  os << detail::kReportHeader << "\n";
  for (const ReportRow& r : report.rows) {
    if (r.model_id.find(',') != std::string::npos)
      fail(errc::config, "model_id must not contain commas: " + r.model_id);
    os << r.model_id << ',' << detail::fmt_exact(r.temperature) << ',' << r.attack << ','
       << detail::fmt_exact(r.epsilon_8bit) << ',' << detail::fmt_exact(r.sigma) << ','
       << detail::fmt_exact(r.kappa) << ',' << r.images << ',' << r.targets_per_image << ','
       << r.attempts << ',' << r.successes << ',' << detail::fmt_exact(r.success_rate) << ','
       << detail::fmt_exact(r.mean_max_pert_8bit) << ',' << detail::fmt_exact(r.mean_l2_8bit) << ','
       << detail::fmt_exact(r.mean_iters) << ',' << detail::fmt_exact(r.median_iters) << ','
       << detail::fmt_exact(r.mean_time_s) << ',' << detail::fmt_exact(r.median_time_s) << ','
       << r.seed << "\n";
  }
}

inline ExperimentReport read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) fail(errc::ingest, "report csv: empty file");
  if (line != detail::kReportHeader) fail(errc::ingest, "report csv: unrecognized header row");
  ExperimentReport rep;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.push_back("");
    if (f.size() != 18)
      fail(errc::ingest, "report csv line " + std::to_string(lineno) + ": expected 18 fields, got " +
                             std::to_string(f.size()));
    auto num = [&](const std::string& s) { return s.empty() ? std::nan("") : std::stod(s); };
    ReportRow r;
    r.model_id = f[0];
    r.temperature = num(f[1]);
    r.attack = f[2];
    r.epsilon_8bit = num(f[3]);
    r.sigma = num(f[4]);
    r.kappa = num(f[5]);
    r.images = static_cast<std::size_t>(std::stoull(f[6]));
    r.targets_per_image = static_cast<std::size_t>(std::stoull(f[7]));
    r.attempts = static_cast<std::size_t>(std::stoull(f[8]));
    r.successes = static_cast<std::size_t>(std::stoull(f[9]));
    r.success_rate = num(f[10]);
    r.mean_max_pert_8bit = num(f[11]);
    r.mean_l2_8bit = num(f[12]);
    r.mean_iters = num(f[13]);
    r.median_iters = num(f[14]);
    r.mean_time_s = num(f[15]);
    r.median_time_s = num(f[16]);
    r.seed = std::stoull(f[17]);
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

inline std::string render_text(const ExperimentReport& report) {
  const std::vector<std::string> cols = {"model",   "T",      "attack",  "eps",     "sigma",
                                         "attempts", "succ",   "rate",    "max_pert", "l2",
                                         "med_iters", "mean_s"};
  std::vector<std::vector<std::string>> grid;
  grid.push_back(cols);
  for (const ReportRow& r : report.rows) {
    auto g = [&](double v) { return detail::fmt_g(v); };
    grid.push_back({r.model_id, g(r.temperature), r.attack, g(r.epsilon_8bit), g(r.sigma),
                    std::to_string(r.attempts), std::to_string(r.successes), g(r.success_rate),
                    g(r.mean_max_pert_8bit), g(r.mean_l2_8bit), g(r.median_iters), g(r.mean_time_s)});
  }
  std::vector<std::size_t> width(cols.size(), 0);
  for (const auto& row : grid)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::ostringstream os;
  for (const auto& row : grid) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      os << row[i] << std::string(width[i] - row[i].size() + 2, ' ');
    }
    os << "\n";
  }
  return os.str();
}

// ---- sweeps ----

enum class SweepAxis { epsilon, temperature, sigma };

inline SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "epsilon") return SweepAxis::epsilon;
  if (s == "temperature") return SweepAxis::temperature;
  if (s == "sigma") return SweepAxis::sigma;
  fail(errc::config, "unknown sweep axis '" + s + "' (want epsilon, temperature, or sigma)");
}

// White-box attack across ε values on one model.
inline ExperimentReport sweep_epsilon(const Network& net, const std::string& model_id,
                                      double temperature, const LabeledDataset& ds,
                                      const std::vector<TargetPlan>& plan, EpsAttackConfig base,
                                      const std::vector<double>& values, std::uint64_t seed,
                                      bool zero_times, std::size_t images, std::size_t tpi) {
  ExperimentReport rep;
  for (double eps : values) {
    EpsAttackConfig cfg = base;
    cfg.epsilon_8bit = eps;
    BatchOutcome out = run_eps_batch(net, ds, plan, cfg);
    ReportRow row = summarize(model_id, temperature, "eps", out, images, tpi, seed, zero_times);
    row.epsilon_8bit = eps;
    row.kappa = cfg.kappa;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

// Region attack across noise radii on one model.
inline ExperimentReport sweep_sigma(const Network& net, const std::string& model_id, double temperature,
                                    const LabeledDataset& ds, const std::vector<TargetPlan>& plan,
                                    RegionAttackConfig base, const std::vector<double>& values,
                                    std::uint64_t seed, bool zero_times, std::size_t images,
                                    std::size_t tpi) {
  ExperimentReport rep;
  for (double sigma : values) {
    RegionAttackConfig cfg = base;
    cfg.sigma = sigma;
    QueryOracle oracle = QueryOracle::wrap(net);
    BatchOutcome out = run_region_batch(oracle, ds, plan, cfg, seed);
    ReportRow row = summarize(model_id, temperature, "region", out, images, tpi, seed, zero_times);
    row.epsilon_8bit = cfg.epsilon_8bit;
    row.sigma = sigma;
    row.kappa = cfg.kappa;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

// One attack per (temperature, model) pair; models keyed by their training
// temperature.
inline ExperimentReport sweep_temperature(const std::map<double, const Network*>& models,
                                          const std::string& attack, const LabeledDataset& ds,
                                          const std::vector<TargetPlan>& plan, EpsAttackConfig eps_base,
                                          RegionAttackConfig region_base, std::uint64_t seed,
                                          bool zero_times, std::size_t images, std::size_t tpi) {
  ExperimentReport rep;
  for (const auto& [temp, net] : models) {
    std::ostringstream id;
    id << "T" << temp;
    ReportRow row;
    if (attack == "eps") {
      BatchOutcome out = run_eps_batch(*net, ds, plan, eps_base);
      row = summarize(id.str(), temp, "eps", out, images, tpi, seed, zero_times);
      row.epsilon_8bit = eps_base.epsilon_8bit;
      row.kappa = eps_base.kappa;
    } else if (attack == "region") {
      QueryOracle oracle = QueryOracle::wrap(*net);
      BatchOutcome out = run_region_batch(oracle, ds, plan, region_base, seed);
      row = summarize(id.str(), temp, "region", out, images, tpi, seed, zero_times);
      row.epsilon_8bit = region_base.epsilon_8bit;
      row.sigma = region_base.sigma;
      row.kappa = region_base.kappa;
    } else {
      fail(errc::config, "sweep: unknown attack kind '" + attack + "'");
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace advl
