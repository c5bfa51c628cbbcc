// deqbl: train, sweep, evaluate and inspect learned regularizers.
//
//   deqbl train      [--config FILE] [--preset NAME] [overrides...]
//   deqbl grid       [--config FILE] [--preset NAME] [overrides...]
//   deqbl eval       --checkpoint FILE [--config FILE] [--preset NAME] [overrides...]
//   deqbl naive-demo [--config FILE] [--preset NAME] [overrides...]
//   deqbl selftest
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error,
// 3 training aborted (divergence after tau backoff), 4 selftest failure.

#include "deqbl/experiment.hpp"
#include "deqbl/oracles.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace deqbl;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;
constexpr int kExitSelftest = 4;

struct Options {
  std::string config;
  std::string preset;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> tau, gamma, alpha, lambda, xi;
  std::optional<std::string> sigma, mode;
  std::optional<std::size_t> train_count, test_count;
  std::optional<int> size;
  std::optional<int> threads;
  std::vector<double> grid_taus, grid_gammas, grid_alphas;
  std::vector<std::string> grid_sigmas, grid_modes;
  bool spectral_norm = false;
  bool deterministic = false;
  int show = 4;
};

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  app->add_option("--preset", o.preset, "named preset applied before --config");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--seed", o.seed, "training seed (noise streams and initialization)");
  app->add_option("--epochs", o.epochs);
  app->add_flag("--deterministic", o.deterministic, "single-threaded, timing columns written as 0");
  app->add_option("--tau", o.tau);
  app->add_option("--gamma", o.gamma);
  app->add_option("--sigma", o.sigma)->check(CLI::IsMember({"identity", "relu", "softshrink", "tanh"}));
  app->add_option("--alpha", o.alpha, "noise level");
  app->add_option("--mode", o.mode)->check(CLI::IsMember({"deq", "bilevel", "naive"}));
  app->add_option("--lambda", o.lambda);
  app->add_option("--xi", o.xi);
  app->add_flag("--spectral-norm", o.spectral_norm);
  app->add_option("--train-count", o.train_count, "number of training images");
  app->add_option("--test-count", o.test_count, "number of test images");
  app->add_option("--size", o.size, "side length of synthetic images");
  app->add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig c = o.preset.empty() ? ExperimentConfig{} : preset_config(o.preset);
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot open config " + o.config);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(o.config + ": " + e.what());
    }
    apply_json(c, j);
  }
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.seed) c.train.seed = *o.seed;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.tau) c.train.tau = *o.tau;
  if (o.gamma) c.train.gamma = *o.gamma;
  if (o.alpha) c.train.alpha = *o.alpha;
  if (o.lambda) c.train.lambda = *o.lambda;
  if (o.xi) c.train.xi = *o.xi;
  if (o.sigma) c.model.activation = map_kind_from_string(*o.sigma);
  if (o.mode) c.train.mode = train_mode_from_string(*o.mode);
  if (o.spectral_norm) c.train.spectral_normalize = true;
  if (o.train_count) c.dataset.train = *o.train_count;
  if (o.test_count) c.dataset.test = *o.test_count;
  if (o.size) c.dataset.rows = c.dataset.cols = *o.size;
  if (o.threads) c.train.threads = c.grid.threads = *o.threads;
  if (!o.checkpoint.empty()) c.model.checkpoint = o.checkpoint;
  if (!o.grid_taus.empty()) c.grid.taus = o.grid_taus;
  if (!o.grid_gammas.empty()) c.grid.gammas = o.grid_gammas;
  if (!o.grid_alphas.empty()) c.grid.alphas = o.grid_alphas;
  if (!o.grid_sigmas.empty()) {
    c.grid.sigmas.clear();
    for (const auto& s : o.grid_sigmas) c.grid.sigmas.push_back(detail::parse_activation(s));
  }
  if (!o.grid_modes.empty()) {
    c.grid.modes.clear();
    for (const auto& m : o.grid_modes) c.grid.modes.push_back(train_mode_from_string(m));
  }
  if (o.deterministic) c.train.threads = c.grid.threads = 1;
  validate(c);
  return c;
}

fs::path prepare_out(const ExperimentConfig& c) {
  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << to_json(c).dump(2) << '\n';
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

void print_record(const EpochRecord& r) {
  std::cout << "epoch " << std::setw(4) << r.epoch << "  train " << std::setw(12) << fmt(r.train_loss) << "  test "
            << std::setw(12) << fmt(r.test_loss) << "  iters " << std::setw(7) << fmt(r.mean_iters, 4);
  if (!r.note.empty()) std::cout << "  [" << r.note << "]";
  std::cout << '\n';
}

ImageSignal as_image(const Vector& v, int rows, int cols) { return ImageSignal(v, rows, cols); }

// Rows: original, degraded, re-degraded (inpaint/deblur), reconstruction;
// one column per shown test image.
template <class Layer>
void write_reconstructions(const Trainer<Layer>& trainer, const Dataset& test, int show, const fs::path& path,
                           std::ostream& report) {
  const std::size_t count = std::min<std::size_t>(test.size(), static_cast<std::size_t>(std::max(show, 1)));
  const auto& task = trainer.config().task;
  const auto masked = masked_indices(task, test.rows, test.cols);
  std::vector<ImageSignal> orig, degraded, redegraded, recon;
  report << "image,mse,degraded_mse,masked_mse,degraded_masked_mse,iterations,converged\n";
  report.precision(10);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Reconstruction r = trainer.reconstruct(test.images[i], kTestIdOffset + i, 0);
    const Vector& truth = test.images[i].data;
    report << i << ',' << mse_loss(r.solve.u, truth).loss << ',' << mse_loss(r.f_delta, truth).loss << ','
           << masked_mse(r.solve.u, truth, masked) << ',' << masked_mse(r.f_delta, truth, masked) << ','
           << r.solve.iterations << ',' << (r.solve.converged ? 1 : 0) << '\n';
    if (i >= count) continue;
    orig.push_back(test.images[i]);
    degraded.push_back(as_image(r.f_delta, test.rows, test.cols));
    redegraded.push_back(as_image(trainer.op().apply(r.solve.u), test.rows, test.cols));
    recon.push_back(as_image(r.solve.u, test.rows, test.cols));
  }
  std::vector<std::vector<ImageSignal>> grid{orig, degraded};
  if (task.kind != TaskKind::denoise) grid.push_back(redegraded);
  grid.push_back(recon);
  save_image_grid(grid, path);
}

void write_kernels(const ConvParams& p, const fs::path& path) {
  save_image_grid({kernel_images(p.A.bank), kernel_images(p.C.bank)}, path);
}

template <class Layer>
int run_train(const ExperimentConfig& cfg, const TrainConfig& tc, const Dataset& train_set, const Dataset& test_set,
              RegularizerParams<Layer> init, const fs::path& dir, bool timing, int show) {
  if constexpr (std::is_same_v<Layer, ConvLayer>) write_kernels(init, dir / "kernels_before.pgm");
  const auto res = train(tc, std::move(init), train_set, test_set, print_record);
  std::ostringstream csv;
  write_epoch_csv(csv, res.records, timing);
  write_text(dir / "epochs.csv", csv.str());
  save_checkpoint(dir / "checkpoint.json", res.params, tc.sigma, tc.seed);
  if constexpr (std::is_same_v<Layer, ConvLayer>) write_kernels(res.params, dir / "kernels_after.pgm");
  TrainConfig final_cfg = tc;
  final_cfg.tau = res.final_tau;
  final_cfg.stop.max_iter = tc.stop.max_iter * static_cast<int>(std::lround(tc.tau / res.final_tau));
  final_cfg.mode = tc.mode == TrainMode::deq ? TrainMode::deq : TrainMode::bilevel;
  const Trainer<Layer> trainer(final_cfg, res.params, train_set, test_set);
  std::ostringstream report;
  write_reconstructions(trainer, test_set.empty() ? train_set : test_set, show, dir / "reconstructions.pgm", report);
  write_text(dir / "test_images.csv", report.str());
  std::cout << "wrote " << dir.string() << " (" << res.epochs_completed << " of " << cfg.train.epochs
            << " epochs, final test loss " << fmt(res.records.back().test_loss) << ")\n";
  if (res.aborted) {
    std::cerr << "error: training aborted: " << res.records.back().note << '\n';
    return kExitAborted;
  }
  return 0;
}

int cmd_train(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const TrainConfig tc = make_train_config(cfg);
  const auto [train_set, test_set] = load_datasets(cfg);
  const fs::path dir = prepare_out(cfg);
  if (cfg.model.layer == "conv")
    return run_train(cfg, tc, train_set, test_set, make_conv_init(cfg, tc, train_set.rows, train_set.cols), dir,
                     !o.deterministic, o.show);
  return run_train(cfg, tc, train_set, test_set, make_dense_init(cfg, tc, train_set.rows, train_set.cols), dir,
                   !o.deterministic, o.show);
}

int cmd_grid(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const TrainConfig base = make_train_config(cfg);
  const auto [train_set, test_set] = load_datasets(cfg);
  const fs::path dir = prepare_out(cfg);
  GridSpec spec;
  spec.taus = cfg.grid.taus;
  spec.gammas = cfg.grid.gammas;
  spec.sigmas = cfg.grid.sigmas;
  spec.alphas = cfg.grid.alphas;
  spec.modes = cfg.grid.modes;
  spec.success_threshold = cfg.grid.success_threshold;
  const std::size_t cells =
      spec.taus.size() * spec.gammas.size() * spec.sigmas.size() * spec.alphas.size() * spec.modes.size();
  spec.threads = cfg.grid.threads > 0 ? cfg.grid.threads
                                      : static_cast<int>(std::min<std::size_t>(cells, available_threads()));
  std::cout << "grid: " << cells << " runs on " << spec.threads << " thread(s)\n";
  GridSummary summary;
  if (cfg.model.layer == "conv") {
    summary = grid_run<ConvLayer>(spec, base, train_set, test_set, [&](const TrainConfig& c) {
      return make_conv_init(cfg, c, train_set.rows, train_set.cols);
    });
  } else {
    summary = grid_run<DenseLayer>(spec, base, train_set, test_set, [&](const TrainConfig& c) {
      return make_dense_init(cfg, c, train_set.rows, train_set.cols);
    });
  }
  std::ostringstream s, b, h;
  write_grid_summary_csv(s, summary);
  write_boxplot_csv(b, summary);
  write_epoch_histogram_csv(h, summary);
  write_text(dir / "grid_summary.csv", s.str());
  write_text(dir / "boxplot.csv", b.str());
  write_text(dir / "epochs_histogram.csv", h.str());
  fs::create_directories(dir / "runs");
  for (const auto& r : summary.runs) {
    std::ostringstream e;
    write_epoch_csv(e, r.records, !o.deterministic);
    write_text(dir / "runs" / (r.hash + ".csv"), e.str());
  }
  for (TrainMode m : spec.modes)
    std::cout << std::setw(8) << to_string(m) << ": " << summary.successes(m) << " / " << summary.total(m)
              << " runs below " << spec.success_threshold << '\n';
  return 0;
}

template <class Layer>
int run_eval(const ExperimentConfig& cfg, const RegularizerParams<Layer>& p, const Activation& sigma,
             const Dataset& test_set, const fs::path& dir, int show) {
  TrainConfig tc = make_train_config(cfg);
  tc.sigma = sigma;
  tc.gamma = p.gamma;
  tc.xi = p.xi;
  tc.mode = p.tied ? TrainMode::bilevel : TrainMode::deq;
  const Trainer<Layer> trainer(tc, p, test_set, test_set);
  std::ostringstream report;
  write_reconstructions(trainer, test_set, show, dir / "reconstructions.pgm", report);
  write_text(dir / "eval.csv", report.str());
  std::cout << report.str();
  return 0;
}

int cmd_eval(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  if (cfg.model.checkpoint.empty()) throw ConfigError("eval needs --checkpoint or model.checkpoint");
  const Checkpoint ck = load_checkpoint(cfg.model.checkpoint);
  ExperimentConfig data_cfg = cfg;
  const std::size_t n_test = data_cfg.dataset.test;
  data_cfg.dataset.train = std::max<std::size_t>(data_cfg.dataset.train, 1);
  auto [unused, test_set] = load_datasets(data_cfg);
  (void)unused;
  if (test_set.empty()) throw ConfigError("eval needs a non-empty test split (dataset.test = " + std::to_string(n_test) + ")");
  const fs::path dir = prepare_out(cfg);
  if (const auto* d = std::get_if<DenseParams>(&ck.params)) {
    if (d->input_size() != static_cast<Eigen::Index>(test_set.rows) * test_set.cols)
      throw ConfigError("checkpoint was trained on a different image size");
    return run_eval(cfg, *d, ck.sigma, test_set, dir, o.show);
  }
  ConvParams c = std::get<ConvParams>(ck.params);
  c.A.rows = c.C.rows = test_set.rows;
  c.A.cols = c.C.cols = test_set.cols;
  return run_eval(cfg, c, ck.sigma, test_set, dir, o.show);
}

int cmd_naive_demo(const Options& o) {
  Options oo = o;
  if (oo.preset.empty() && oo.config.empty()) oo.preset = "naive-inpaint";
  ExperimentConfig cfg = resolve(oo);
  cfg.train.mode = TrainMode::naive;
  if (cfg.model.layer != "dense") throw ConfigError("naive-demo supports dense models only");
  const TrainConfig tc = make_train_config(cfg);
  const auto [train_set, test_set] = load_datasets(cfg);
  const fs::path dir = prepare_out(cfg);
  const auto res = train_naive(tc, make_dense_init(cfg, tc, train_set.rows, train_set.cols), train_set, test_set,
                               print_record);
  std::ostringstream csv;
  write_epoch_csv(csv, res.records, !o.deterministic);
  write_text(dir / "epochs.csv", csv.str());
  save_checkpoint(dir / "checkpoint.json", res.params, tc.sigma, tc.seed);

  TrainConfig run_cfg = tc;
  run_cfg.mode = TrainMode::bilevel;
  const Trainer<DenseLayer> trainer(run_cfg, res.params, train_set, test_set);
  const Dataset& ds = test_set.empty() ? train_set : test_set;
  const int steps = *std::max_element(cfg.snapshots.begin(), cfg.snapshots.end());
  const auto masked = masked_indices(tc.task, ds.rows, ds.cols);
  std::vector<double> traj(static_cast<std::size_t>(steps) + 1, 0.0);
  std::vector<std::vector<ImageSignal>> grid;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Vector f = measure(trainer.op(), ds.images[i].data, tc.noise, kTestIdOffset + i, 0);
    const auto run = run_iterations(trainer.problem(f), res.params, tc.sigma, Vector(), steps);
    for (std::size_t k = 0; k < run.tape.size(); ++k) traj[k] += masked_mse(run.tape[k], ds.images[i].data, masked);
    for (std::size_t k = run.tape.size(); k < traj.size(); ++k) traj[k] = std::numeric_limits<double>::quiet_NaN();
    if (static_cast<int>(i) < o.show) {
      std::vector<ImageSignal> row{ds.images[i], as_image(f, ds.rows, ds.cols)};
      for (int k : cfg.snapshots)
        row.push_back(as_image(run.tape[std::min<std::size_t>(k, run.tape.size() - 1)], ds.rows, ds.cols));
      grid.push_back(std::move(row));
    }
  }
  std::ostringstream t;
  t << "iteration,masked_mse\n";
  t.precision(10);
  for (std::size_t k = 0; k < traj.size(); ++k) t << k << ',' << traj[k] / static_cast<double>(ds.size()) << '\n';
  write_text(dir / "naive_trajectory.csv", t.str());
  save_image_grid(grid, dir / "naive_snapshots.pgm");
  std::cout << "masked-region MSE at";
  for (int k : cfg.snapshots) std::cout << "  k=" << k << ": " << fmt(traj[k] / static_cast<double>(ds.size()));
  std::cout << '\n';
  return res.aborted ? kExitAborted : 0;
}

int cmd_selftest() {
  const auto results = oracles::run_all();
  bool ok = true;
  std::cout << std::left << std::setw(22) << "check" << std::setw(14) << "measured" << std::setw(10) << "tol"
            << std::setw(7) << "result" << "detail\n";
  for (const auto& r : results) {
    std::cout << std::left << std::setw(22) << r.name << std::setw(14) << fmt(r.measured, 4) << std::setw(10)
              << fmt(r.tolerance, 2) << std::setw(7) << (r.pass ? "PASS" : "FAIL") << r.detail << " ("
              << fmt(r.seconds, 3) << " s)\n";
    ok = ok && r.pass;
  }
  return ok ? 0 : kExitSelftest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep equilibrium and bilevel training of learned regularizers"};
  app.require_subcommand(0, 1);
  Options o;
  auto* train_cmd = app.add_subcommand("train", "train one model");
  auto* grid_cmd = app.add_subcommand("grid", "hyperparameter sweep");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  auto* naive_cmd = app.add_subcommand("naive-demo", "naive training followed by a snapshot run");
  auto* self_cmd = app.add_subcommand("selftest", "run the oracle suite");
  for (auto* c : {train_cmd, grid_cmd, eval_cmd, naive_cmd}) {
    add_common(c, o);
    c->add_option("--show", o.show, "test images shown in image grids");
  }
  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate")->check(CLI::ExistingFile);
  grid_cmd->add_option("--grid-taus", o.grid_taus);
  grid_cmd->add_option("--grid-gammas", o.grid_gammas);
  grid_cmd->add_option("--grid-alphas", o.grid_alphas);
  grid_cmd->add_option("--grid-sigmas", o.grid_sigmas)
      ->check(CLI::IsMember({"identity", "relu", "softshrink", "tanh", "clamp"}));
  grid_cmd->add_option("--grid-modes", o.grid_modes)->check(CLI::IsMember({"deq", "bilevel", "naive"}));
  app.add_flag_callback("--list-presets", [] {
    for (const auto& p : preset_names()) std::cout << p << '\n';
    std::exit(0);
  });
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  try {
    if (*train_cmd) return cmd_train(o);
    if (*grid_cmd) return cmd_grid(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*naive_cmd) return cmd_naive_demo(o);
    if (*self_cmd) return cmd_selftest();
    std::cout << app.help();
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
