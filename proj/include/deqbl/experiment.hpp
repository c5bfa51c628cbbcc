#pragma once

// Experiment configuration: a nested JSON document with a default for every
// field and strict key checking, the named presets, and the glue that turns
// a configuration into datasets, initial parameters and a TrainConfig.
//
//   {
//     "preset": "mnist-inpaint",            // applied first, then the rest
//     "out_dir": "runs/mnist-inpaint",
//     "dataset": {"source": "synthetic" | "mnist" | "dir", "path": "", "labels": "",
//                 "train": 32, "test": 8, "rows": 16, "cols": 16, "seed": 0},
//     "task":    {"kind": "inpaint", "mask_rows": [], "kernel": []},
//     "model":   {"layer": "dense" | "conv", "hidden": 0, "channels": 2, "kernel_size": 11,
//                 "init": "tv_like" | "random", "activation": "softshrink", "eps": 0,
//                 "checkpoint": ""},
//     "train":   {"mode": "bilevel", "tau": 0.5, "gamma": 1.0, "lambda": 1.0, "xi": 1.0,
//                 "alpha": 0.05, "regenerate_noise": true, "noise_on_masked_rows": true,
//                 "epochs": 200, "batch_size": 0, "seed": 0, "spectral_normalize": false,
//                 "tau_backoff": true, "rel_tol": 1e-3, "max_iter": 500,
//                 "schedule": "constant" | "linear", "lr": 1e-3, "lr_end": 1e-5,
//                 "threads": 1, "wall_budget_s": 0},
//     "grid":    {"taus": [...], "gammas": [...], "sigmas": [...], "alphas": [...],
//                 "modes": [...], "success_threshold": 0.5, "threads": 0},
//     "snapshots": [1, 25, 50, 75, 100]
//   }
//
// model.eps = 0 ties the softshrink/clamp threshold to tau. hidden = 0 means
// a square dense layer.

#include "deqbl/checkpoint.hpp"
#include "deqbl/data_io.hpp"
#include "deqbl/forward_models.hpp"
#include "deqbl/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace deqbl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string source = "synthetic";
  std::string path;
  std::string labels;
  std::size_t train = 32;
  std::size_t test = 8;
  int rows = 16;
  int cols = 16;
  std::uint64_t seed = 0;
};

struct TaskConfig {
  TaskKind kind = TaskKind::denoise;
  std::vector<int> mask_rows;
  std::vector<std::vector<double>> kernel;
};

struct ModelConfig {
  std::string layer = "dense";
  int hidden = 0;
  int channels = 2;
  int kernel_size = 11;
  std::string init = "tv_like";
  MapKind activation = MapKind::relu;
  double eps = 0.0;
  std::string checkpoint;
};

struct TrainSection {
  TrainMode mode = TrainMode::bilevel;
  double tau = 0.5;
  double gamma = 0.1;
  double lambda = 1.0;
  double xi = 1.0;
  double alpha = 0.05;
  bool regenerate_noise = true;
  bool noise_on_masked_rows = true;
  int epochs = 200;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  bool spectral_normalize = false;
  bool tau_backoff = true;
  double rel_tol = 1e-3;
  int max_iter = 500;
  std::string schedule = "constant";
  double lr = 1e-3;
  double lr_end = 1e-5;
  int threads = 1;
  double wall_budget_s = 0.0;
};

struct GridSection {
  std::vector<double> taus{0.01, 0.1, 0.5, 0.9, 1.1, 2.1};
  std::vector<double> gammas{0.1, 0.5, 1.0};
  std::vector<MapKind> sigmas{MapKind::relu, MapKind::softshrink, MapKind::identity};
  std::vector<double> alphas{0.0, 0.05, 0.1, 0.5, 1.0};
  std::vector<TrainMode> modes{TrainMode::bilevel, TrainMode::deq};
  double success_threshold = 0.5;
  int threads = 0;  // 0 = min(grid cells, available cores)
};

struct ExperimentConfig {
  std::string preset;
  std::string out_dir = "runs/default";
  DatasetConfig dataset;
  TaskConfig task;
  ModelConfig model;
  TrainSection train;
  GridSection grid;
  std::vector<int> snapshots{1, 25, 50, 75, 100};
};

// --- JSON --------------------------------------------------------------

namespace detail {

// Reads known keys of one JSON object and rejects everything else.
class StrictObject {
 public:
  StrictObject(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  template <class T, class Parse>
  void read_enum(const char* key, T& out, Parse parse) {
    std::string s;
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_string()) throw ConfigError(name_ + "." + key + ": expected a string");
    try {
      out = parse(it->template get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  template <class T, class Parse>
  void read_enum_list(const char* key, std::vector<T>& out, Parse parse) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array()) throw ConfigError(name_ + "." + key + ": expected an array of strings");
    out.clear();
    for (const auto& v : *it) {
      if (!v.is_string()) throw ConfigError(name_ + "." + key + ": expected an array of strings");
      try {
        out.push_back(parse(v.template get<std::string>()));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(name_ + "." + key + ": " + e.what());
      }
    }
  }

  [[nodiscard]] const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + name_ + "." + item.key() + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

inline MapKind parse_activation(const std::string& s) {
  const MapKind k = map_kind_from_string(s);
  if (k == MapKind::zero || k == MapKind::neg_part)
    throw std::invalid_argument("activation '" + s + "' is not selectable");
  return k;
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
  json sigmas = json::array();
  for (MapKind k : c.grid.sigmas) sigmas.push_back(std::string(to_string(k)));
  json modes = json::array();
  for (TrainMode m : c.grid.modes) modes.push_back(std::string(to_string(m)));
  return {
      {"preset", c.preset},
      {"out_dir", c.out_dir},
      {"dataset",
       {{"source", c.dataset.source},
        {"path", c.dataset.path},
        {"labels", c.dataset.labels},
        {"train", c.dataset.train},
        {"test", c.dataset.test},
        {"rows", c.dataset.rows},
        {"cols", c.dataset.cols},
        {"seed", c.dataset.seed}}},
      {"task", {{"kind", std::string(to_string(c.task.kind))}, {"mask_rows", c.task.mask_rows}, {"kernel", c.task.kernel}}},
      {"model",
       {{"layer", c.model.layer},
        {"hidden", c.model.hidden},
        {"channels", c.model.channels},
        {"kernel_size", c.model.kernel_size},
        {"init", c.model.init},
        {"activation", std::string(to_string(c.model.activation))},
        {"eps", c.model.eps},
        {"checkpoint", c.model.checkpoint}}},
      {"train",
       {{"mode", std::string(to_string(c.train.mode))},
        {"tau", c.train.tau},
        {"gamma", c.train.gamma},
        {"lambda", c.train.lambda},
        {"xi", c.train.xi},
        {"alpha", c.train.alpha},
        {"regenerate_noise", c.train.regenerate_noise},
        {"noise_on_masked_rows", c.train.noise_on_masked_rows},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"seed", c.train.seed},
        {"spectral_normalize", c.train.spectral_normalize},
        {"tau_backoff", c.train.tau_backoff},
        {"rel_tol", c.train.rel_tol},
        {"max_iter", c.train.max_iter},
        {"schedule", c.train.schedule},
        {"lr", c.train.lr},
        {"lr_end", c.train.lr_end},
        {"threads", c.train.threads},
        {"wall_budget_s", c.train.wall_budget_s}}},
      {"grid",
       {{"taus", c.grid.taus},
        {"gammas", c.grid.gammas},
        {"sigmas", sigmas},
        {"alphas", c.grid.alphas},
        {"modes", modes},
        {"success_threshold", c.grid.success_threshold},
        {"threads", c.grid.threads}}},
      {"snapshots", c.snapshots},
  };
}

inline ExperimentConfig preset_config(const std::string& name);

// Overlays j onto cfg. A non-empty "preset" key resets cfg to that preset first.
inline void apply_json(ExperimentConfig& cfg, const json& j) {
  detail::StrictObject top(j, "config");
  if (const json* p = top.child("preset")) {
    if (!p->is_string()) throw ConfigError("config.preset: expected a string");
    const std::string name = p->get<std::string>();
    if (!name.empty()) cfg = preset_config(name);
  }
  top.read("out_dir", cfg.out_dir);
  top.read("snapshots", cfg.snapshots);
  if (const json* d = top.child("dataset")) {
    detail::StrictObject s(*d, "dataset");
    s.read("source", cfg.dataset.source);
    s.read("path", cfg.dataset.path);
    s.read("labels", cfg.dataset.labels);
    s.read("train", cfg.dataset.train);
    s.read("test", cfg.dataset.test);
    s.read("rows", cfg.dataset.rows);
    s.read("cols", cfg.dataset.cols);
    s.read("seed", cfg.dataset.seed);
    s.finish();
  }
  if (const json* t = top.child("task")) {
    detail::StrictObject s(*t, "task");
    s.read_enum("kind", cfg.task.kind, [](const std::string& v) { return task_kind_from_string(v); });
    s.read("mask_rows", cfg.task.mask_rows);
    s.read("kernel", cfg.task.kernel);
    s.finish();
  }
  if (const json* m = top.child("model")) {
    detail::StrictObject s(*m, "model");
    s.read("layer", cfg.model.layer);
    s.read("hidden", cfg.model.hidden);
    s.read("channels", cfg.model.channels);
    s.read("kernel_size", cfg.model.kernel_size);
    s.read("init", cfg.model.init);
    s.read_enum("activation", cfg.model.activation, detail::parse_activation);
    s.read("eps", cfg.model.eps);
    s.read("checkpoint", cfg.model.checkpoint);
    s.finish();
  }
  if (const json* t = top.child("train")) {
    detail::StrictObject s(*t, "train");
    s.read_enum("mode", cfg.train.mode, [](const std::string& v) { return train_mode_from_string(v); });
    s.read("tau", cfg.train.tau);
    s.read("gamma", cfg.train.gamma);
    s.read("lambda", cfg.train.lambda);
    s.read("xi", cfg.train.xi);
    s.read("alpha", cfg.train.alpha);
    s.read("regenerate_noise", cfg.train.regenerate_noise);
    s.read("noise_on_masked_rows", cfg.train.noise_on_masked_rows);
    s.read("epochs", cfg.train.epochs);
    s.read("batch_size", cfg.train.batch_size);
    s.read("seed", cfg.train.seed);
    s.read("spectral_normalize", cfg.train.spectral_normalize);
    s.read("tau_backoff", cfg.train.tau_backoff);
    s.read("rel_tol", cfg.train.rel_tol);
    s.read("max_iter", cfg.train.max_iter);
    s.read("schedule", cfg.train.schedule);
    s.read("lr", cfg.train.lr);
    s.read("lr_end", cfg.train.lr_end);
    s.read("threads", cfg.train.threads);
    s.read("wall_budget_s", cfg.train.wall_budget_s);
    s.finish();
  }
  if (const json* g = top.child("grid")) {
    detail::StrictObject s(*g, "grid");
    s.read("taus", cfg.grid.taus);
    s.read("gammas", cfg.grid.gammas);
    s.read_enum_list("sigmas", cfg.grid.sigmas, detail::parse_activation);
    s.read("alphas", cfg.grid.alphas);
    s.read_enum_list("modes", cfg.grid.modes, [](const std::string& v) { return train_mode_from_string(v); });
    s.read("success_threshold", cfg.grid.success_threshold);
    s.read("threads", cfg.grid.threads);
    s.finish();
  }
  top.finish();
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// --- presets -----------------------------------------------------------

inline std::vector<std::string> preset_names() {
  return {"mnist-denoise",         "mnist-inpaint",         "mnist-deblur", "celeb-denoise",
          "celeb-denoise-c30k3",   "celeb-deblur",          "celeb-deblur-c30k3", "naive-inpaint"};
}

inline ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  c.out_dir = "runs/" + name;
  auto mnist = [&](TaskKind kind, double gamma, MapKind sigma) {
    c.task.kind = kind;
    c.train.tau = 0.5;
    c.train.gamma = gamma;
    c.train.alpha = 0.05;
    c.model.activation = sigma;
  };
  auto celeb = [&](TaskKind kind, int channels, int ksize) {
    c.dataset.rows = 64;
    c.dataset.cols = 64;
    c.dataset.train = 10;
    c.dataset.test = 10;
    c.task.kind = kind;
    c.model.layer = "conv";
    c.model.channels = channels;
    c.model.kernel_size = ksize;
    c.model.init = "tv_like";
    c.model.activation = MapKind::tanh;
    c.train.gamma = 1.0;
    c.train.xi = 100.0;
    c.train.lambda = 18.156;
    c.train.alpha = 0.1;
    // just below 2 / (lambda + gamma xi) with unit-norm A and C
    c.train.tau = 0.015;
    c.train.spectral_normalize = true;
    c.train.rel_tol = 1e-14;
    c.train.max_iter = 1000;
    c.train.schedule = "linear";
    c.train.lr = 3.2e-3;
    c.train.lr_end = 3.2e-5;
    c.train.epochs = 50;
  };
  if (name == "mnist-denoise") mnist(TaskKind::denoise, 0.1, MapKind::relu);
  else if (name == "mnist-inpaint") mnist(TaskKind::inpaint, 1.0, MapKind::softshrink);
  else if (name == "mnist-deblur") mnist(TaskKind::deblur, 0.5, MapKind::softshrink);
  else if (name == "celeb-denoise") celeb(TaskKind::denoise, 2, 11);
  else if (name == "celeb-denoise-c30k3") celeb(TaskKind::denoise, 30, 3);
  else if (name == "celeb-deblur") celeb(TaskKind::deblur, 2, 11);
  else if (name == "celeb-deblur-c30k3") celeb(TaskKind::deblur, 30, 3);
  else if (name == "naive-inpaint") {
    mnist(TaskKind::inpaint, 1.0, MapKind::softshrink);
    c.train.mode = TrainMode::naive;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

// --- glue --------------------------------------------------------------

inline Activation activation_of(const ExperimentConfig& c) {
  ProxMap m{c.model.activation, 0.0};
  if (m.has_threshold()) m.eps = c.model.eps > 0.0 ? c.model.eps : c.train.tau;
  m.validate();
  return m;
}

inline ProblemKind problem_kind_of(const ExperimentConfig& c) {
  ProblemKind k;
  k.kind = c.task.kind;
  k.mask_rows = c.task.mask_rows;
  if (!c.task.kernel.empty()) {
    const std::size_t cols = c.task.kernel.front().size();
    k.kernel = Matrix(static_cast<Eigen::Index>(c.task.kernel.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < c.task.kernel.size(); ++i) {
      if (c.task.kernel[i].size() != cols) throw ConfigError("task.kernel: ragged rows");
      for (std::size_t j = 0; j < cols; ++j)
        k.kernel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c.task.kernel[i][j];
    }
  }
  return k;
}

inline void validate(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  if (d.source != "synthetic" && d.source != "mnist" && d.source != "dir")
    throw ConfigError("dataset.source must be synthetic, mnist or dir");
  if (d.source != "synthetic" && d.path.empty()) throw ConfigError("dataset.path is required for " + d.source);
  if (d.train == 0) throw ConfigError("dataset.train must be positive");
  if (c.model.layer != "dense" && c.model.layer != "conv") throw ConfigError("model.layer must be dense or conv");
  if (c.model.init != "tv_like" && c.model.init != "random") throw ConfigError("model.init must be tv_like or random");
  if (c.model.hidden < 0) throw ConfigError("model.hidden must be >= 0");
  if (c.model.channels < 1) throw ConfigError("model.channels must be >= 1");
  if (c.model.kernel_size < 1 || c.model.kernel_size % 2 == 0) throw ConfigError("model.kernel_size must be odd");
  if (c.model.eps < 0.0) throw ConfigError("model.eps must be >= 0");
  if (c.train.schedule != "constant" && c.train.schedule != "linear")
    throw ConfigError("train.schedule must be constant or linear");
  if (!(c.train.alpha >= 0.0)) throw ConfigError("train.alpha must be >= 0");
  if (c.train.threads < 0) throw ConfigError("train.threads must be >= 0");
  if (c.snapshots.empty()) throw ConfigError("snapshots must not be empty");
  for (int s : c.snapshots)
    if (s < 0) throw ConfigError("snapshots must be non-negative");
}

inline TrainConfig make_train_config(const ExperimentConfig& c) {
  validate(c);
  TrainConfig t;
  t.mode = c.train.mode;
  t.task = problem_kind_of(c);
  t.sigma = activation_of(c);
  t.tau = c.train.tau;
  t.gamma = c.train.gamma;
  t.lambda = c.train.lambda;
  t.xi = c.train.xi;
  t.noise = {c.train.alpha, c.train.seed, c.train.regenerate_noise, c.train.noise_on_masked_rows};
  t.epochs = c.train.epochs;
  t.batch_size = c.train.batch_size;
  t.seed = c.train.seed;
  t.spectral_normalize = c.train.spectral_normalize;
  t.tau_backoff = c.train.tau_backoff;
  t.stop = {c.train.rel_tol, c.train.max_iter};
  t.schedule = c.train.schedule == "linear" ? Schedule::linear(c.train.lr, c.train.lr_end, std::max(1, c.train.epochs))
                                            : Schedule::constant(c.train.lr);
  t.threads = c.train.threads == 0 ? available_threads() : c.train.threads;
  t.wall_budget_s = c.train.wall_budget_s;
  t.validate();
  return t;
}

// Train and test splits per the dataset section.
inline std::pair<Dataset, Dataset> load_datasets(const ExperimentConfig& c,
                                                 const WarningSink& warn = default_warning) {
  validate(c);
  const auto& d = c.dataset;
  Dataset all;
  if (d.source == "synthetic") {
    all = synth_dataset(d.seed, d.train + d.test, d.rows, d.cols);
  } else if (d.source == "mnist") {
    std::optional<std::filesystem::path> labels;
    if (!d.labels.empty()) labels = d.labels;
    all = load_mnist_idx(d.path, labels, d.train + d.test);
  } else {
    all = load_image_dir(d.path, warn);
  }
  if (all.size() < d.train + d.test)
    throw ConfigError("dataset has " + std::to_string(all.size()) + " images, need " +
                      std::to_string(d.train + d.test));
  return all.split(d.train, d.test);
}

inline bool tied_for(TrainMode m) { return m != TrainMode::deq; }

inline DenseParams make_dense_init(const ExperimentConfig& c, const TrainConfig& t, int rows, int cols) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
  if (!c.model.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(c.model.checkpoint);
    auto* p = std::get_if<DenseParams>(&ck.params);
    if (!p) throw ConfigError("model.checkpoint holds a conv model, config asks for dense");
    if (p->input_size() != n) throw ConfigError("model.checkpoint was trained on a different image size");
    p->tied = tied_for(t.mode);
    p->sync_tied();
    return *p;
  }
  return init_dense(n, c.model.hidden > 0 ? c.model.hidden : n, t.seed, t.gamma, tied_for(t.mode), t.xi);
}

inline ConvParams make_conv_init(const ExperimentConfig& c, const TrainConfig& t, int rows, int cols) {
  if (!c.model.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(c.model.checkpoint);
    auto* p = std::get_if<ConvParams>(&ck.params);
    if (!p) throw ConfigError("model.checkpoint holds a dense model, config asks for conv");
    p->A.rows = p->C.rows = rows;
    p->A.cols = p->C.cols = cols;
    p->tied = tied_for(t.mode);
    p->sync_tied();
    return *p;
  }
  ConvParams p = init_conv(rows, cols, c.model.channels, c.model.kernel_size,
                           c.model.init == "random" ? ConvInit::random : ConvInit::tv_like, t.seed, t.gamma,
                           tied_for(t.mode), t.xi);
  if (t.spectral_normalize) spectral_normalize(p);
  return p;
}

}  // namespace deqbl
