// advl: train small image classifiers, distill them at a chosen softmax
// temperature, and run targeted bounded-perturbation attacks against them.
// Every run that writes an output also writes a <output>.manifest.json
// capturing the exact invocation; --from-manifest replays one.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "advl/blackbox.hpp"
#include "advl/common.hpp"
#include "advl/io.hpp"
#include "advl/metrics.hpp"
#include "advl/network.hpp"
#include "advl/train.hpp"
#include "advl/whitebox.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 42;
  bool reproducible = false;
  std::size_t workers = 1;
};

std::string trim_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// "E:F" — after epoch E, multiply the learning rate by F (a step schedule).
struct LrStep {
  std::size_t after = 0;  // 0 = no step
  double factor = 1.0;
};

LrStep parse_lr_step(const std::string& s) {
  LrStep out;
  if (s.empty()) return out;
  const auto colon = s.find(':');
  try {
    std::size_t used = 0;
    out.after = std::stoul(s.substr(0, colon), &used);
    if (colon == std::string::npos || used != colon) throw std::invalid_argument(s);
    out.factor = std::stod(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    advl::fail(advl::errc::config, "cannot parse lr step '" + s + "' (want epochs:factor)");
  }
  if (out.after == 0 || out.factor <= 0.0)
    advl::fail(advl::errc::config, "lr step wants a positive epoch count and factor");
  return out;
}

std::vector<double> parse_value_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      advl::fail(advl::errc::config, "cannot parse numeric list element '" + tok + "'");
    }
  }
  if (out.empty()) advl::fail(advl::errc::config, "empty value list");
  return out;
}

// ---- dataset access ----

std::string pick_existing(const std::vector<std::string>& candidates, const std::string& what) {
  for (const auto& c : candidates)
    if (fs::exists(c)) return c;
  advl::fail(advl::errc::io, "cannot find " + what + " under any of: " +
                                 [&] {
                                   std::string s;
                                   for (const auto& c : candidates) s += c + " ";
                                   return s;
                                 }());
}

advl::LabeledDataset load_split(const std::string& data_dir, bool train_split, std::size_t limit) {
  const std::string base = data_dir + "/mnist/";
  const std::string alt = data_dir + "/";
  if (train_split) {
    const std::string img = pick_existing({base + "train10k-images-idx3-ubyte", base + "train-images-idx3-ubyte",
                                           alt + "train10k-images-idx3-ubyte", alt + "train-images-idx3-ubyte"},
                                          "training images");
    const std::string lab = pick_existing({base + "train10k-labels-idx1-ubyte", base + "train-labels-idx1-ubyte",
                                           alt + "train10k-labels-idx1-ubyte", alt + "train-labels-idx1-ubyte"},
                                          "training labels");
    return advl::load_idx(img, lab, limit);
  }
  const std::string img = pick_existing({base + "test1k-images-idx3-ubyte", base + "t10k-images-idx3-ubyte",
                                         alt + "test1k-images-idx3-ubyte", alt + "t10k-images-idx3-ubyte"},
                                        "test images");
  const std::string lab = pick_existing({base + "test1k-labels-idx1-ubyte", base + "t10k-labels-idx1-ubyte",
                                         alt + "test1k-labels-idx1-ubyte", alt + "t10k-labels-idx1-ubyte"},
                                        "test labels");
  return advl::load_idx(img, lab, limit);
}

// ---- manifests ----

void write_manifest(const std::string& output_path, const std::string& subcommand,
                    const std::vector<std::string>& argv_tail, const GlobalOpts& g) {
  json m;
  m["tool"] = "advl";
  m["version"] = advl::kVersion;
  m["subcommand"] = subcommand;
  m["argv"] = argv_tail;
  m["seed"] = g.seed;
  m["reproducible"] = g.reproducible;
  m["workers"] = g.workers;
  m["output"] = output_path;
  std::ofstream out(output_path + ".manifest.json", std::ios::trunc);
  if (!out) advl::fail(advl::errc::io, "cannot write manifest beside " + output_path);
  out << m.dump(2) << "\n";
}

std::vector<std::string> argv_from_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) advl::fail(advl::errc::io, "cannot open manifest " + path);
  json m;
  try {
    in >> m;
  } catch (const std::exception& e) {
    advl::fail(advl::errc::ingest, "malformed manifest " + path + ": " + e.what());
  }
  if (!m.contains("argv") || !m["argv"].is_array())
    advl::fail(advl::errc::ingest, "manifest " + path + " lacks an argv array");
  std::vector<std::string> out;
  for (const auto& v : m["argv"]) out.push_back(v.get<std::string>());
  return out;
}

std::string model_id_of(const std::string& path) { return fs::path(path).stem().string(); }

advl::Network load_student(const std::string& model_dir, double temperature) {
  const std::string path = model_dir + "/student-T" + trim_num(temperature) + ".advl";
  if (!fs::exists(path)) advl::fail(advl::errc::io, "no distilled model at " + path);
  return advl::load_model(path);
}

void save_report(const advl::ExperimentReport& rep, const std::string& path,
                 const std::string& subcommand, const std::vector<std::string>& argv_tail,
                 const GlobalOpts& g) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) advl::fail(advl::errc::io, "cannot write report " + path);
  advl::write_csv(rep, out);
  out.close();
  write_manifest(path, subcommand, argv_tail, g);
  std::cout << advl::render_text(rep);
  std::cout << "report written to " << path << "\n";
}

std::vector<advl::TargetPlan> build_plan(const advl::LabeledDataset& ds, std::size_t images,
                                         const std::string& mode, std::uint64_t seed) {
  if (mode == "all") return advl::make_targets_all(ds, images);
  if (mode == "random") return advl::make_targets_random(ds, images, seed);
  advl::fail(advl::errc::config, "unknown target mode '" + mode + "' (want all or random)");
}

}  // namespace

int run(std::vector<std::string> args);

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);

  // Manifest replay: substitute the stored argv for ours.
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--from-manifest") {
      if (i + 1 >= args.size()) {
        std::cerr << "advl: usage: --from-manifest needs a path\n";
        return 2;
      }
      try {
        args = argv_from_manifest(args[i + 1]);
      } catch (const advl::error& e) {
        std::cerr << "advl: " << e.category_name() << ": " << e.what() << "\n";
        return e.category() == advl::errc::config ? 2 : 1;
      }
      break;
    }
  }

  try {
    return run(std::move(args));
  } catch (const advl::error& e) {
    std::cerr << "advl: " << e.category_name() << ": " << e.what() << "\n";
    return e.category() == advl::errc::config ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "advl: internal: " << e.what() << "\n";
    return 1;
  }
}

int run(std::vector<std::string> args) {
  const std::vector<std::string> argv_tail = args;  // recorded verbatim in manifests

  CLI::App app{"targeted attacks on small (optionally distilled) image classifiers"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "base RNG seed")->envname("ADVL_SEED");
  app.add_flag("--reproducible", g.reproducible,
               "single worker, zeroed timing columns: byte-stable outputs");
  app.add_option("--workers", g.workers, "worker threads (training and white-box attack batches)");

  // ---- train ----
  auto* c_train = app.add_subcommand("train", "train a classifier on (optionally smoothed) labels");
  std::string tr_data = "data", tr_arch = "mnist", tr_out = "baseline.advl", tr_opt = "sgd", tr_step;
  double tr_T = 1.0, tr_lr = 0.01, tr_momentum = 0.9, tr_smooth = 0.0;
  std::size_t tr_epochs = 3, tr_batch = 64, tr_limit = 0;
  c_train->add_option("--data", tr_data, "dataset directory");
  c_train->add_option("--arch", tr_arch, "mnist | cifar | tiny");
  c_train->add_option("--T", tr_T, "softmax temperature during training");
  c_train->add_option("--epochs", tr_epochs);
  c_train->add_option("--batch", tr_batch);
  c_train->add_option("--lr", tr_lr);
  c_train->add_option("--lr-step", tr_step, "epochs:factor — scale the lr by factor after that many epochs");
  c_train->add_option("--momentum", tr_momentum);
  c_train->add_option("--optimizer", tr_opt, "sgd | adam");
  c_train->add_option("--label-smoothing", tr_smooth, "mix this much uniform mass into the labels");
  c_train->add_option("--limit", tr_limit, "cap training samples (0 = all)");
  c_train->add_option("--out", tr_out, "model output path");

  // ---- distill ----
  auto* c_distill = app.add_subcommand("distill", "teacher/student distillation at a temperature");
  std::string di_data = "data", di_arch = "mnist", di_dir = "models", di_opt = "sgd", di_sstep;
  double di_T = 5.0, di_lr = 0.01, di_momentum = 0.9;
  std::size_t di_tepochs = 3, di_sepochs = 3, di_batch = 64, di_limit = 0;
  c_distill->add_option("--data", di_data, "dataset directory");
  c_distill->add_option("--arch", di_arch, "mnist | cifar | tiny");
  c_distill->add_option("--T", di_T, "distillation temperature")->required();
  c_distill->add_option("--teacher-epochs", di_tepochs);
  c_distill->add_option("--student-epochs", di_sepochs);
  c_distill->add_option("--student-lr-step", di_sstep, "epochs:factor lr schedule for the student");
  c_distill->add_option("--batch", di_batch);
  c_distill->add_option("--lr", di_lr);
  c_distill->add_option("--momentum", di_momentum);
  c_distill->add_option("--optimizer", di_opt, "sgd | adam");
  c_distill->add_option("--limit", di_limit, "cap training samples (0 = all)");
  c_distill->add_option("--model-dir", di_dir, "directory for teacher-T*/student-T* files");

  // ---- attack-eps ----
  auto* c_eps = app.add_subcommand("attack-eps", "white-box attack inside an ε-box");
  std::string ae_model, ae_data = "data", ae_targets = "random", ae_report = "eps-report.csv", ae_id;
  double ae_eps = 52.0, ae_kappa = 0.0, ae_lr = 0.15, ae_adam_eps = 1e-15, ae_slack = 1e-4;
  std::size_t ae_images = 10, ae_iters = 1000;
  bool ae_no_abort = false;
  c_eps->add_option("--model", ae_model)->required();
  c_eps->add_option("--data", ae_data, "dataset directory (test split is attacked)");
  c_eps->add_option("--images", ae_images, "number of test images");
  c_eps->add_option("--targets", ae_targets, "all | random");
  c_eps->add_option("--epsilon", ae_eps, "max per-pixel change, 8-bit units");
  c_eps->add_option("--kappa", ae_kappa, "required logit margin");
  c_eps->add_option("--iters", ae_iters);
  c_eps->add_option("--lr", ae_lr, "Adam step size");
  c_eps->add_option("--adam-eps", ae_adam_eps, "Adam denominator floor");
  c_eps->add_option("--init-slack", ae_slack, "tanh saturation cap at the starting point");
  c_eps->add_flag("--no-abort-early", ae_no_abort, "always run the full iteration budget");
  c_eps->add_option("--model-id", ae_id, "row label (default: model file stem)");
  c_eps->add_option("--report", ae_report, "CSV output path");

  // ---- attack-region ----
  auto* c_reg = app.add_subcommand("attack-region", "black-box attack via noisy-probe gradients");
  std::string ar_model, ar_data = "data", ar_targets = "random", ar_report = "region-report.csv", ar_id,
              ar_mode = "analytic";
  double ar_eps = 52.0, ar_sigma = 0.4, ar_kappa = 0.0, ar_lr = 0.15, ar_fd_step = 1e-4, ar_delta_f = 1e-6;
  std::size_t ar_images = 10, ar_iters = 500, ar_fd_coords = 0;
  bool ar_no_abort = false;
  c_reg->add_option("--model", ar_model)->required();
  c_reg->add_option("--data", ar_data);
  c_reg->add_option("--images", ar_images);
  c_reg->add_option("--targets", ar_targets, "all | random");
  c_reg->add_option("--epsilon", ar_eps);
  c_reg->add_option("--sigma", ar_sigma, "stddev of the exploration noise");
  c_reg->add_option("--kappa", ar_kappa);
  c_reg->add_option("--iters", ar_iters);
  c_reg->add_option("--lr", ar_lr);
  c_reg->add_option("--grad-mode", ar_mode, "analytic | fd");
  c_reg->add_option("--fd-step", ar_fd_step);
  c_reg->add_option("--fd-coords", ar_fd_coords, "coordinates probed per iteration (0 = all)");
  c_reg->add_option("--delta-f", ar_delta_f, "probability floor inside the log");
  c_reg->add_flag("--no-abort-early", ar_no_abort);
  c_reg->add_option("--model-id", ar_id);
  c_reg->add_option("--report", ar_report, "CSV output path");

  // ---- bypass ----
  auto* c_byp = app.add_subcommand("bypass",
                                   "craft on a low-temperature student, evaluate on other students");
  std::string by_dir = "models", by_data = "data", by_report = "bypass-report.csv", by_targets_csv;
  double by_source_T = 5.0, by_eps = 52.0, by_sigma = 0.4, by_lr = 0.15;
  std::size_t by_images = 50, by_iters = 500;
  c_byp->add_option("--model-dir", by_dir, "directory holding student-T*.advl");
  c_byp->add_option("--data", by_data);
  c_byp->add_option("--source-T", by_source_T, "temperature of the crafting student")->required();
  c_byp->add_option("--target-Ts", by_targets_csv, "comma list of victim temperatures")->required();
  c_byp->add_option("--images", by_images);
  c_byp->add_option("--epsilon", by_eps);
  c_byp->add_option("--sigma", by_sigma);
  c_byp->add_option("--iters", by_iters);
  c_byp->add_option("--lr", by_lr);
  c_byp->add_option("--report", by_report, "CSV output path");

  // ---- sweep ----
  auto* c_swp = app.add_subcommand("sweep", "repeat an attack along one axis");
  std::string sw_axis, sw_values_csv, sw_model, sw_dir = "models", sw_data = "data",
              sw_attack = "eps", sw_report = "sweep-report.csv", sw_targets = "random";
  double sw_eps = 52.0, sw_sigma = 0.4, sw_lr = 0.15;
  std::size_t sw_images = 10, sw_iters = 1000;
  c_swp->add_option("--axis", sw_axis, "epsilon | temperature | sigma")->required();
  c_swp->add_option("--values", sw_values_csv, "comma list of axis values")->required();
  c_swp->add_option("--model", sw_model, "model path (epsilon/sigma axes)");
  c_swp->add_option("--model-dir", sw_dir, "student directory (temperature axis)");
  c_swp->add_option("--attack", sw_attack, "eps | region (temperature axis)");
  c_swp->add_option("--data", sw_data);
  c_swp->add_option("--images", sw_images);
  c_swp->add_option("--targets", sw_targets, "all | random");
  c_swp->add_option("--epsilon", sw_eps, "fixed ε when not the axis");
  c_swp->add_option("--sigma", sw_sigma, "fixed σ when not the axis");
  c_swp->add_option("--iters", sw_iters);
  c_swp->add_option("--lr", sw_lr);
  c_swp->add_option("--report", sw_report, "CSV output path");

  // ---- eval ----
  auto* c_eval = app.add_subcommand("eval", "test-split accuracy of a saved model");
  std::string ev_model, ev_data = "data";
  c_eval->add_option("--model", ev_model)->required();
  c_eval->add_option("--data", ev_data);

  // ---- report ----
  auto* c_rep = app.add_subcommand("report", "render attack CSVs as a text table");
  std::vector<std::string> rp_csvs;
  c_rep->add_option("--csv", rp_csvs, "report CSV path(s)")->required();

  std::vector<const char*> cargs;
  cargs.push_back("advl");
  for (const auto& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "advl: usage: " << e.what() << "\n";
    return 2;
  }

  if (g.reproducible) g.workers = 1;

  auto make_factory = [](const std::string& arch) {
    return [arch](double temperature, std::uint64_t seed) {
      if (arch == "mnist") return advl::make_mnist_net(temperature, seed);
      if (arch == "cifar") return advl::make_cifar_net(temperature, seed);
      if (arch == "tiny") return advl::make_tiny_net({1, 8, 8}, 10, temperature, seed);
      advl::fail(advl::errc::config, "unknown arch '" + arch + "' (want mnist, cifar, or tiny)");
    };
  };

  auto fill_train_cfg = [&](std::size_t epochs, std::size_t batch, double lr, double momentum,
                            const std::string& opt) {
    advl::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.lr = lr;
    cfg.momentum = momentum;
    if (opt == "adam")
      cfg.optimizer = advl::Optimizer::adam;
    else if (opt != "sgd")
      advl::fail(advl::errc::config, "unknown optimizer '" + opt + "' (want sgd or adam)");
    cfg.seed = g.seed;
    cfg.workers = g.workers;
    return cfg;
  };

  if (*c_train) {
    advl::LabeledDataset ds = tr_arch == "tiny" ? advl::synth_blobs(512, 64, 10, 0.08, g.seed)
                                                : load_split(tr_data, true, tr_limit);
    if (tr_arch == "tiny") {
      // blobs come flat; reshape to the tiny conv profile
      for (auto& img : ds.images) img.shape = {1, 8, 8};
    }
    advl::Network net = make_factory(tr_arch)(tr_T, g.seed);
    advl::TrainConfig cfg = fill_train_cfg(tr_epochs, tr_batch, tr_lr, tr_momentum, tr_opt);
    const LrStep step = parse_lr_step(tr_step);
    if (step.after >= tr_epochs && step.after != 0)
      advl::fail(advl::errc::config, "--lr-step epoch count must be below --epochs");
    const std::optional<advl::SoftLabelSet> smooth =
        tr_smooth > 0.0 ? std::optional(advl::smoothed_labels(ds, tr_smooth)) : std::nullopt;
    auto run_phase = [&](const advl::TrainConfig& c) {
      return smooth ? advl::train(net, ds.images, *smooth, c) : advl::train(net, ds, c);
    };
    advl::TrainReport rep;
    if (step.after == 0) {
      rep = run_phase(cfg);
    } else {
      advl::TrainConfig p1 = cfg;
      p1.epochs = step.after;
      rep = run_phase(p1);
      advl::TrainConfig p2 = cfg;
      p2.epochs = tr_epochs - step.after;
      p2.lr = cfg.lr * step.factor;
      p2.seed = advl::mix_seed(cfg.seed, 0x57e9);
      const advl::TrainReport r2 = run_phase(p2);
      rep.epoch_loss.insert(rep.epoch_loss.end(), r2.epoch_loss.begin(), r2.epoch_loss.end());
    }
    for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e)
      std::cout << "epoch " << e + 1 << ": loss " << rep.epoch_loss[e] << "\n";
    advl::save_model(net, tr_out);
    write_manifest(tr_out, "train", argv_tail, g);
    std::cout << "model written to " << tr_out << "\n";
    if (tr_arch != "tiny") {
      try {
        const advl::LabeledDataset test = load_split(tr_data, false, 0);
        std::cout << "test accuracy: " << advl::accuracy(net, test) << "\n";
      } catch (const advl::error&) {
        // no test split staged; fine
      }
    }
    return 0;
  }

  if (*c_distill) {
    advl::LabeledDataset ds = di_arch == "tiny" ? advl::synth_blobs(512, 64, 10, 0.08, g.seed)
                                                : load_split(di_data, true, di_limit);
    if (di_arch == "tiny")
      for (auto& img : ds.images) img.shape = {1, 8, 8};
    advl::TrainConfig tcfg = fill_train_cfg(di_tepochs, di_batch, di_lr, di_momentum, di_opt);
    advl::TrainConfig scfg = fill_train_cfg(di_sepochs, di_batch, di_lr, di_momentum, di_opt);
    const LrStep sstep = parse_lr_step(di_sstep);
    if (sstep.after >= di_sepochs && sstep.after != 0)
      advl::fail(advl::errc::config, "--student-lr-step epoch count must be below --student-epochs");
    if (sstep.after != 0) scfg.epochs = sstep.after;
    auto out = advl::distill(ds, di_T, make_factory(di_arch), tcfg, scfg);
    if (sstep.after != 0) {
      // finish the student's remaining epochs at the stepped-down rate, still
      // at the distillation temperature, against the same teacher labels
      advl::TrainConfig s2 = scfg;
      s2.epochs = di_sepochs - sstep.after;
      s2.lr = scfg.lr * sstep.factor;
      s2.seed = advl::mix_seed(scfg.seed, 0x57e9);
      out.student.temperature = di_T;
      advl::train(out.student, ds.images, advl::soft_labels(out.teacher, ds.images), s2);
      out.student.temperature = 1.0;
    }
    fs::create_directories(di_dir);
    const std::string teacher_path = di_dir + "/teacher-T" + trim_num(di_T) + ".advl";
    const std::string student_path = di_dir + "/student-T" + trim_num(di_T) + ".advl";
    advl::save_model(out.teacher, teacher_path);
    advl::save_model(out.student, student_path);
    write_manifest(student_path, "distill", argv_tail, g);
    std::cout << "teacher written to " << teacher_path << "\n";
    std::cout << "student written to " << student_path << " (deployed at T=1)\n";
    if (di_arch != "tiny") {
      try {
        const advl::LabeledDataset test = load_split(di_data, false, 0);
        std::cout << "teacher test accuracy: " << advl::accuracy(out.teacher, test) << "\n";
        std::cout << "student test accuracy: " << advl::accuracy(out.student, test) << "\n";
      } catch (const advl::error&) {
      }
    }
    return 0;
  }

  if (*c_eps) {
    const advl::Network net = advl::load_model(ae_model);
    advl::LabeledDataset ds = load_split(ae_data, false, 0);
    advl::EpsAttackConfig cfg;
    cfg.epsilon_8bit = ae_eps;
    cfg.kappa = ae_kappa;
    cfg.max_iters = ae_iters;
    cfg.adam.lr = ae_lr;
    cfg.adam.eps = ae_adam_eps;
    cfg.init_slack = ae_slack;
    cfg.abort_early = !ae_no_abort;
    const auto plan = build_plan(ds, ae_images, ae_targets, g.seed);
    const advl::BatchOutcome out = advl::run_eps_batch(net, ds, plan, cfg, g.workers);
    advl::ExperimentReport rep;
    advl::ReportRow row =
        advl::summarize(ae_id.empty() ? model_id_of(ae_model) : ae_id, net.temperature, "eps", out,
                        ae_images, ae_targets == "all" ? ds.classes - 1 : 1, g.seed, g.reproducible);
    row.epsilon_8bit = cfg.epsilon_8bit;
    row.kappa = cfg.kappa;
    rep.rows.push_back(row);
    save_report(rep, ae_report, "attack-eps", argv_tail, g);
    return 0;
  }

  if (*c_reg) {
    const advl::Network net = advl::load_model(ar_model);
    advl::LabeledDataset ds = load_split(ar_data, false, 0);
    advl::RegionAttackConfig cfg;
    cfg.epsilon_8bit = ar_eps;
    cfg.sigma = ar_sigma;
    cfg.kappa = ar_kappa;
    cfg.max_iters = ar_iters;
    cfg.adam.lr = ar_lr;
    cfg.delta_f = ar_delta_f;
    cfg.fd_step = ar_fd_step;
    cfg.fd_coords = ar_fd_coords;
    cfg.abort_early = !ar_no_abort;
    if (ar_mode == "analytic")
      cfg.gradient_mode = advl::GradientMode::analytic;
    else if (ar_mode == "fd")
      cfg.gradient_mode = advl::GradientMode::finite_difference;
    else
      advl::fail(advl::errc::config, "unknown gradient mode '" + ar_mode + "' (want analytic or fd)");
    const auto plan = build_plan(ds, ar_images, ar_targets, g.seed);
    advl::QueryOracle oracle = advl::QueryOracle::wrap(net);
    const advl::BatchOutcome out = advl::run_region_batch(oracle, ds, plan, cfg, g.seed);
    advl::ExperimentReport rep;
    advl::ReportRow row =
        advl::summarize(ar_id.empty() ? model_id_of(ar_model) : ar_id, net.temperature, "region", out,
                        ar_images, ar_targets == "all" ? ds.classes - 1 : 1, g.seed, g.reproducible);
    row.epsilon_8bit = cfg.epsilon_8bit;
    row.sigma = cfg.sigma;
    row.kappa = cfg.kappa;
    rep.rows.push_back(row);
    save_report(rep, ar_report, "attack-region", argv_tail, g);
    std::cout << "oracle queries: " << oracle.query_count() << "\n";
    return 0;
  }

  if (*c_byp) {
    advl::LabeledDataset ds = load_split(by_data, false, 0);
    const advl::Network source = load_student(by_dir, by_source_T);
    const std::vector<double> target_ts = parse_value_list(by_targets_csv);

    advl::RegionAttackConfig cfg;
    cfg.epsilon_8bit = by_eps;
    cfg.sigma = by_sigma;
    cfg.max_iters = by_iters;
    cfg.adam.lr = by_lr;
    const auto plan = advl::make_targets_random(ds, by_images, g.seed);
    advl::QueryOracle oracle = advl::QueryOracle::wrap(source);
    const advl::BatchOutcome crafted = advl::run_region_batch(oracle, ds, plan, cfg, g.seed);

    advl::ExperimentReport rep;
    advl::ReportRow src_row = advl::summarize("student-T" + trim_num(by_source_T), by_source_T, "region",
                                              crafted, by_images, 1, g.seed, g.reproducible);
    src_row.epsilon_8bit = cfg.epsilon_8bit;
    src_row.sigma = cfg.sigma;
    src_row.kappa = cfg.kappa;
    rep.rows.push_back(src_row);

    const auto targets = crafted.targets();
    for (double tt : target_ts) {
      const advl::Network victim = load_student(by_dir, tt);
      advl::ReportRow row;
      row.model_id = "student-T" + trim_num(tt);
      row.temperature = tt;
      row.attack = "transfer";
      row.epsilon_8bit = cfg.epsilon_8bit;
      row.sigma = cfg.sigma;
      row.images = by_images;
      row.targets_per_image = 1;
      row.attempts = crafted.results.size();
      row.success_rate = advl::transfer_success_rate(victim, crafted.results, targets);
      row.successes = static_cast<std::size_t>(row.success_rate * static_cast<double>(row.attempts) + 0.5);
      row.seed = g.seed;
      rep.rows.push_back(row);
    }
    save_report(rep, by_report, "bypass", argv_tail, g);
    return 0;
  }

  if (*c_swp) {
    advl::LabeledDataset ds = load_split(sw_data, false, 0);
    const std::vector<double> values = parse_value_list(sw_values_csv);
    const auto axis = advl::parse_sweep_axis(sw_axis);
    const auto plan = build_plan(ds, sw_images, sw_targets, g.seed);
    const std::size_t tpi = sw_targets == "all" ? ds.classes - 1 : 1;

    advl::EpsAttackConfig eps_base;
    eps_base.epsilon_8bit = sw_eps;
    eps_base.max_iters = sw_iters;
    eps_base.adam.lr = sw_lr;
    advl::RegionAttackConfig region_base;
    region_base.epsilon_8bit = sw_eps;
    region_base.sigma = sw_sigma;
    region_base.max_iters = sw_iters;
    region_base.adam.lr = sw_lr;

    advl::ExperimentReport rep;
    if (axis == advl::SweepAxis::epsilon || axis == advl::SweepAxis::sigma) {
      if (sw_model.empty()) advl::fail(advl::errc::config, "sweep over this axis needs --model");
      const advl::Network net = advl::load_model(sw_model);
      rep = axis == advl::SweepAxis::epsilon
                ? advl::sweep_epsilon(net, model_id_of(sw_model), net.temperature, ds, plan, eps_base,
                                      values, g.seed, g.reproducible, sw_images, tpi)
                : advl::sweep_sigma(net, model_id_of(sw_model), net.temperature, ds, plan, region_base,
                                    values, g.seed, g.reproducible, sw_images, tpi);
    } else {
      std::vector<advl::Network> nets;
      nets.reserve(values.size());
      std::map<double, const advl::Network*> models;
      for (double t : values) {
        nets.push_back(load_student(sw_dir, t));
        models[t] = &nets.back();
      }
      rep = advl::sweep_temperature(models, sw_attack, ds, plan, eps_base, region_base, g.seed,
                                    g.reproducible, sw_images, tpi);
    }
    save_report(rep, sw_report, "sweep", argv_tail, g);
    return 0;
  }

  if (*c_eval) {
    const advl::Network net = advl::load_model(ev_model);
    const advl::LabeledDataset test = load_split(ev_data, false, 0);
    std::cout << "model: " << ev_model << " (T=" << net.temperature << ")\n";
    std::cout << "test accuracy: " << advl::accuracy(net, test) << "\n";
    return 0;
  }

  if (*c_rep) {
    advl::ExperimentReport merged;
    for (const auto& path : rp_csvs) {
      std::ifstream in(path);
      if (!in) advl::fail(advl::errc::io, "cannot open " + path);
      advl::ExperimentReport rep = advl::read_csv(in);
      merged.rows.insert(merged.rows.end(), rep.rows.begin(), rep.rows.end());
    }
    std::cout << advl::render_text(merged);
    return 0;
  }

  advl::fail(advl::errc::config, "no subcommand given");
}
