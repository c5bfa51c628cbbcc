#pragma once

// Upper-level training: MSE loss, Adam, learning-rate schedules, spectral
// normalization, tau backoff, the naive fixed-point baseline and grid sweeps.

#include "deqbl/data_io.hpp"
#include "deqbl/equilibrium.hpp"
#include "deqbl/forward_models.hpp"
#include "deqbl/parallel.hpp"
#include "deqbl/regnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deqbl {

enum class TrainMode { deq, bilevel, naive };

inline std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::deq: return "deq";
    case TrainMode::bilevel: return "bilevel";
    case TrainMode::naive: return "naive";
  }
  return "?";
}

inline TrainMode train_mode_from_string(std::string_view s) {
  for (TrainMode m : {TrainMode::deq, TrainMode::bilevel, TrainMode::naive})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

struct LossValue {
  double loss = 0.0;
  Vector grad;
};

// loss = ||u - u_true||^2 / (2 n), grad = (u - u_true) / n
inline LossValue mse_loss(const Vector& u, const Vector& u_true) {
  if (u.size() != u_true.size() || u.size() == 0) throw std::invalid_argument("mse_loss: shape mismatch");
  const double n = static_cast<double>(u.size());
  LossValue out;
  out.grad = (u - u_true) / n;
  out.loss = 0.5 * (u - u_true).squaredNorm() / n;
  return out;
}

inline LossValue mse_loss(const ImageSignal& u, const ImageSignal& u_true) {
  if (u.rows != u_true.rows || u.cols != u_true.cols) throw std::invalid_argument("mse_loss: shape mismatch");
  return mse_loss(u.data, u_true.data);
}

struct Schedule {
  enum class Kind { constant, linear };
  Kind kind = Kind::constant;
  double lr_start = 1e-3;
  double lr_end = 1e-3;
  int epochs = 1;

  static Schedule constant(double lr) { return {Kind::constant, lr, lr, 1}; }
  static Schedule linear(double start, double end, int epochs) {
    Schedule s{Kind::linear, start, end, epochs};
    s.validate();
    return s;
  }

  void validate() const {
    if (!(lr_start > 0.0)) throw std::invalid_argument("Schedule: learning rate must be positive");
    if (kind == Kind::linear && (!(lr_end > 0.0) || lr_end > lr_start || epochs < 1))
      throw std::invalid_argument("Schedule: linear decay needs 0 < lr_end <= lr_start and epochs >= 1");
  }

  // Learning rate for the zero-based epoch index.
  [[nodiscard]] double at(int epoch) const {
    if (kind == Kind::constant || epochs <= 1) return lr_start;
    const double t = std::clamp(static_cast<double>(epoch) / (epochs - 1), 0.0, 1.0);
    return (1.0 - t) * lr_start + t * lr_end;
  }
};

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  ParamGrads m;
  ParamGrads v;
};

namespace detail {

inline void adam_block(Eigen::Ref<Vector> x, const Vector& g, Vector& m, Vector& v, const OptimizerState& st,
                       double lr) {
  if (m.size() != g.size()) {
    m = Vector::Zero(g.size());
    v = Vector::Zero(g.size());
  }
  m = st.beta1 * m + (1.0 - st.beta1) * g;
  v = st.beta2 * v + (1.0 - st.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  x.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + st.eps);
}

}  // namespace detail

// Bias-corrected Adam. In tied mode the A gradient already carries dA + dC
// and C is overwritten with A afterwards.
template <class Layer>
void adam_step(OptimizerState& st, RegularizerParams<Layer>& p, const ParamGrads& g, double lr) {
  if (g.A.size() != p.A.num_weights() || g.C.size() != p.C.num_weights() || g.b.size() != p.b.size())
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  ++st.step;
  detail::adam_block(p.A.weights(), g.A, st.m.A, st.v.A, st, lr);
  if (p.tied) {
    p.sync_tied();
  } else {
    detail::adam_block(p.C.weights(), g.C, st.m.C, st.v.C, st, lr);
  }
  if (p.has_bias()) detail::adam_block(p.b, g.b, st.m.b, st.v.b, st, lr);
}

struct TrainConfig {
  TrainMode mode = TrainMode::deq;
  ProblemKind task;
  Activation sigma = Activation::relu();
  double tau = 0.5;
  double gamma = 0.1;
  double lambda = 1.0;
  double xi = 1.0;
  NoiseSpec noise;
  int epochs = 200;
  std::size_t batch_size = 0;  // 0 = full training set
  std::uint64_t seed = 0;
  bool spectral_normalize = false;
  bool tau_backoff = true;
  StoppingRule stop;
  Schedule schedule;
  int threads = 1;
  double wall_budget_s = 0.0;  // 0 = unlimited

  void validate() const {
    sigma.validate();
    if (!(tau > 0.0)) throw std::invalid_argument("TrainConfig: tau must be positive");
    if (!(lambda > 0.0)) throw std::invalid_argument("TrainConfig: lambda must be positive");
    if (!(gamma >= 0.0)) throw std::invalid_argument("TrainConfig: gamma must be >= 0");
    if (!(xi > 0.0)) throw std::invalid_argument("TrainConfig: xi must be positive");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    stop.validate();
    schedule.validate();
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double mean_iters = 0.0;
  double wall_ms = 0.0;
  double test_sse = 0.0;  // un-normalized sum of squared errors over the test set
  bool aborted = false;
  std::string note;
};

// Noise stream ids: training sample i uses id i and the epoch number;
// test sample i uses kTestIdOffset + i with epoch 0, so test measurements
// are fixed across epochs.
inline constexpr std::uint64_t kTestIdOffset = std::uint64_t{1} << 32;

struct Reconstruction {
  Vector f_delta;
  FixedPointResult solve;
};

template <class Layer>
class Trainer {
 public:
  Trainer(TrainConfig cfg, RegularizerParams<Layer> init, Dataset train, Dataset test)
      : cfg_(std::move(cfg)), params_(std::move(init)), train_(std::move(train)), test_(std::move(test)) {
    cfg_.validate();
    if (train_.empty()) throw std::invalid_argument("Trainer: training set is empty");
    if (cfg_.mode == TrainMode::bilevel && !params_.tied)
      throw std::invalid_argument("Trainer: bilevel mode requires tied weights");
    params_.gamma = cfg_.gamma;
    params_.xi = cfg_.xi;
    params_.sync_tied();
    params_.validate();
    K_ = std::make_shared<const LinearOperator>(build_operator(cfg_.task, train_.rows, train_.cols));
    if (params_.input_size() != K_->input_size())
      throw std::invalid_argument("Trainer: network input size does not match image size");
    tau_ = cfg_.tau;
    max_iter_ = cfg_.stop.max_iter;
  }

  [[nodiscard]] const RegularizerParams<Layer>& params() const { return params_; }
  RegularizerParams<Layer>& params() { return params_; }
  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  [[nodiscard]] double tau() const { return tau_; }
  [[nodiscard]] int max_iter() const { return max_iter_; }
  [[nodiscard]] int epoch() const { return epoch_; }
  [[nodiscard]] const LinearOperator& op() const { return *K_; }
  [[nodiscard]] std::shared_ptr<const LinearOperator> op_ptr() const { return K_; }
  [[nodiscard]] const OptimizerState& optimizer() const { return opt_; }

  [[nodiscard]] EquilibriumProblem problem(Vector f_delta) const {
    EquilibriumProblem prob;
    prob.K = K_;
    prob.f_delta = std::move(f_delta);
    prob.lambda = cfg_.lambda;
    prob.tau = tau_;
    prob.map = UpdateMap::degrad;
    prob.stop = {cfg_.stop.rel_tol, max_iter_};
    return prob;
  }

  // Forward solve for one image with the configured measurement noise.
  [[nodiscard]] Reconstruction reconstruct(const ImageSignal& truth, std::uint64_t sample_id,
                                           std::uint64_t epoch) const {
    Reconstruction r;
    r.f_delta = measure(*K_, truth.data, cfg_.noise, sample_id, epoch);
    r.solve = solve_forward(problem(r.f_delta), params_, cfg_.sigma);
    return r;
  }

  struct Evaluation {
    double mean_loss = 0.0;
    double sse = 0.0;
    double mean_iters = 0.0;
    bool diverged = false;
  };

  [[nodiscard]] Evaluation evaluate(const Dataset& ds, std::uint64_t id_offset, std::uint64_t epoch) const {
    Evaluation ev;
    if (ds.empty()) return ev;
    std::vector<Evaluation> per(ds.size());
    parallel_for(ds.size(), cfg_.threads, [&](std::size_t i) {
      const Reconstruction r = reconstruct(ds.images[i], id_offset + i, epoch);
      const LossValue l = mse_loss(r.solve.u, ds.images[i].data);
      per[i] = {l.loss, (r.solve.u - ds.images[i].data).squaredNorm(), static_cast<double>(r.solve.iterations),
                r.solve.diverged};
    });
    for (const auto& e : per) {
      ev.mean_loss += e.mean_loss;
      ev.sse += e.sse;
      ev.mean_iters += e.mean_iters;
      ev.diverged = ev.diverged || e.diverged;
    }
    ev.mean_loss /= static_cast<double>(ds.size());
    ev.mean_iters /= static_cast<double>(ds.size());
    return ev;
  }

  [[nodiscard]] Evaluation evaluate_test() const { return evaluate(test_.empty() ? train_ : test_, kTestIdOffset, 0); }

  // Epoch 0: losses of the untrained model.
  EpochRecord initial_record() const {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = 0;
    const Evaluation tr = evaluate(train_, 0, 0);
    const Evaluation te = evaluate_test();
    rec.train_loss = cfg_.mode == TrainMode::naive ? naive_objective(0) : tr.mean_loss;
    rec.test_loss = te.mean_loss;
    rec.test_sse = te.sse;
    rec.mean_iters = tr.mean_iters;
    rec.wall_ms = elapsed_ms(t0);
    return rec;
  }

  // One pass over the training set; returns the epoch record (test loss
  // measured after the last parameter update).
  EpochRecord train_epoch() {
    const auto t0 = std::chrono::steady_clock::now();
    ++epoch_;
    EpochRecord rec;
    rec.epoch = epoch_;
    const double lr = cfg_.schedule.at(epoch_ - 1);
    const std::size_t bs = cfg_.batch_size == 0 ? train_.size() : cfg_.batch_size;
    double loss_sum = 0.0;
    double iter_sum = 0.0;
    for (std::size_t start = 0; start < train_.size(); start += bs) {
      const std::size_t stop = std::min(train_.size(), start + bs);
      std::optional<BatchResult> batch = run_batch(start, stop);
      if (!batch && cfg_.tau_backoff && cfg_.mode != TrainMode::naive) {
        tau_ /= 10.0;
        max_iter_ *= 10;
        rec.note = "tau backoff to " + format_double(tau_);
        batch = run_batch(start, stop);
      }
      if (!batch) {
        rec.aborted = true;
        rec.note += rec.note.empty() ? "non-finite gradient" : "; non-finite gradient after backoff";
        rec.train_loss = std::numeric_limits<double>::quiet_NaN();
        rec.test_loss = std::numeric_limits<double>::quiet_NaN();
        rec.wall_ms = elapsed_ms(t0);
        return rec;
      }
      loss_sum += batch->loss_sum;
      iter_sum += batch->iter_sum;
      adam_step(opt_, params_, batch->grad, lr);
      if (cfg_.spectral_normalize) spectral_normalize(params_);
    }
    rec.train_loss = loss_sum / static_cast<double>(train_.size());
    rec.mean_iters = iter_sum / static_cast<double>(train_.size());
    const Evaluation te = evaluate_test();
    rec.test_loss = te.diverged ? std::numeric_limits<double>::quiet_NaN() : te.mean_loss;
    rec.test_sse = te.sse;
    rec.wall_ms = elapsed_ms(t0);
    return rec;
  }

  // Mean of 1/2 ||N(u_true) - lambda K^T delta||^2 over the training set.
  [[nodiscard]] double naive_objective(std::uint64_t epoch) const {
    double s = 0.0;
    for (std::size_t i = 0; i < train_.size(); ++i) s += naive_sample(i, epoch, false).loss;
    return s / static_cast<double>(train_.size());
  }

 private:
  struct BatchResult {
    ParamGrads grad;
    double loss_sum = 0.0;
    double iter_sum = 0.0;
  };

  struct SampleResult {
    ParamGrads grad;
    double loss = 0.0;
    double iters = 0.0;
    bool ok = false;
  };

  SampleResult naive_sample(std::size_t i, std::uint64_t epoch, bool with_grad) const {
    SampleResult s;
    const Vector& truth = train_.images[i].data;
    const Vector delta = gaussian_noise(cfg_.noise, K_->output_size(), i, epoch);
    const Vector target = cfg_.lambda * K_->adjoint(delta);
    const RegNetOutput out = regnet_forward(params_, cfg_.sigma, truth);
    const Vector w = out.value - target;
    s.loss = 0.5 * w.squaredNorm();
    if (with_grad) s.grad = regnet_vjp_params(params_, cfg_.sigma, out.tape, w);
    s.ok = true;
    return s;
  }

  SampleResult equilibrium_sample(std::size_t i, std::uint64_t epoch) const {
    SampleResult s;
    const ImageSignal& truth = train_.images[i];
    const Reconstruction r = reconstruct(truth, i, epoch);
    s.iters = r.solve.iterations;
    if (r.solve.diverged) return s;
    const EquilibriumProblem prob = problem(r.f_delta);
    const LossValue l = mse_loss(r.solve.u, truth.data);
    const AdjointResult adj = solve_adjoint(prob, params_, cfg_.sigma, r.solve.u, l.grad);
    s.grad = param_gradient(prob, params_, cfg_.sigma, r.solve.u, adj.mu);
    s.loss = l.loss;
    s.ok = s.grad.all_finite() && std::isfinite(s.loss);
    return s;
  }

  std::optional<BatchResult> run_batch(std::size_t start, std::size_t stop) const {
    std::vector<SampleResult> per(stop - start);
    parallel_for(per.size(), cfg_.threads, [&](std::size_t k) {
      const std::size_t i = start + k;
      per[k] = cfg_.mode == TrainMode::naive ? naive_sample(i, static_cast<std::uint64_t>(epoch_), true)
                                             : equilibrium_sample(i, static_cast<std::uint64_t>(epoch_));
    });
    BatchResult b;
    b.grad = ParamGrads::zeros_like(params_);
    for (const auto& s : per) {
      if (!s.ok) return std::nullopt;
      b.grad += s.grad;
      b.loss_sum += s.loss;
      b.iter_sum += s.iters;
    }
    b.grad *= 1.0 / static_cast<double>(per.size());
    if (!b.grad.all_finite()) return std::nullopt;
    return b;
  }

  static double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }

  static std::string format_double(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

  TrainConfig cfg_;
  RegularizerParams<Layer> params_;
  Dataset train_;
  Dataset test_;
  std::shared_ptr<const LinearOperator> K_;
  OptimizerState opt_;
  double tau_ = 0.0;
  int max_iter_ = 0;
  int epoch_ = 0;
};

template <class Layer>
struct TrainResult {
  RegularizerParams<Layer> params;
  std::vector<EpochRecord> records;
  bool aborted = false;
  int epochs_completed = 0;
  double final_tau = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Runs epoch 0 (evaluation only) followed by cfg.epochs training epochs,
// stopping early on an aborted epoch or when the wall budget runs out.
template <class Layer>
TrainResult<Layer> train(const TrainConfig& cfg, RegularizerParams<Layer> init, const Dataset& train_set,
                         const Dataset& test_set, const EpochCallback& on_epoch = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  Trainer<Layer> trainer(cfg, std::move(init), train_set, test_set);
  TrainResult<Layer> out;
  out.records.push_back(trainer.initial_record());
  if (on_epoch) on_epoch(out.records.back());
  for (int e = 0; e < cfg.epochs; ++e) {
    if (cfg.wall_budget_s > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() > cfg.wall_budget_s)
      break;
    out.records.push_back(trainer.train_epoch());
    if (on_epoch) on_epoch(out.records.back());
    if (out.records.back().aborted) {
      out.aborted = true;
      break;
    }
    ++out.epochs_completed;
  }
  out.params = trainer.params();
  out.final_tau = trainer.tau();
  return out;
}

// Trains on the naive DeGrad objective: N(u_true) is fitted to
// lambda K^T delta, with no fixed-point solve inside the loop.
template <class Layer>
TrainResult<Layer> train_naive(TrainConfig cfg, RegularizerParams<Layer> init, const Dataset& train_set,
                               const Dataset& test_set, const EpochCallback& on_epoch = {}) {
  cfg.mode = TrainMode::naive;
  return train(cfg, std::move(init), train_set, test_set, on_epoch);
}

// Gradient of 1/2 ||N(u_true) - target||^2, exposed for checks.
template <class Layer>
std::pair<double, ParamGrads> naive_loss(const RegularizerParams<Layer>& p, const Activation& sigma,
                                         const Vector& u_true, const Vector& target) {
  const RegNetOutput out = regnet_forward(p, sigma, u_true);
  const Vector w = out.value - target;
  return {0.5 * w.squaredNorm(), regnet_vjp_params(p, sigma, out.tape, w)};
}

inline void write_epoch_csv(std::ostream& os, const std::vector<EpochRecord>& records, bool include_timing = true) {
  os << "epoch,train_loss,test_loss,mean_iters,wall_ms,test_sse\n";
  os.precision(17);
  for (const auto& r : records)
    os << r.epoch << ',' << r.train_loss << ',' << r.test_loss << ',' << r.mean_iters << ','
       << (include_timing ? r.wall_ms : 0.0) << ',' << r.test_sse << '\n';
}

// --- grid sweeps ---------------------------------------------------------

struct GridSpec {
  std::vector<double> taus{0.01, 0.1, 0.5, 0.9, 1.1, 2.1};
  std::vector<double> gammas{0.1, 0.5, 1.0};
  std::vector<MapKind> sigmas{MapKind::relu, MapKind::softshrink, MapKind::identity};
  std::vector<double> alphas{0.0, 0.05, 0.1, 0.5, 1.0};
  std::vector<TrainMode> modes{TrainMode::bilevel, TrainMode::deq};
  double success_threshold = 0.5;
  int threads = 1;  // concurrent runs
};

struct GridRun {
  TrainConfig cfg;
  std::vector<EpochRecord> records;
  double final_test_loss = std::numeric_limits<double>::quiet_NaN();
  bool success = false;
  int epochs_completed = 0;
  std::string error;
  std::string hash;
};

struct GridSummary {
  std::vector<GridRun> runs;
  [[nodiscard]] int successes(TrainMode m) const {
    int n = 0;
    for (const auto& r : runs) n += r.cfg.mode == m && r.success;
    return n;
  }
  [[nodiscard]] int total(TrainMode m) const {
    int n = 0;
    for (const auto& r : runs) n += r.cfg.mode == m;
    return n;
  }
};

inline std::string describe(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << to_string(c.mode) << '|' << to_string(c.task.kind) << "|tau=" << c.tau << "|gamma=" << c.gamma
     << "|sigma=" << to_string(c.sigma.kind) << "|eps=" << c.sigma.eps << "|alpha=" << c.noise.alpha
     << "|lambda=" << c.lambda << "|xi=" << c.xi << "|seed=" << c.seed << "|epochs=" << c.epochs;
  return os.str();
}

inline std::string config_hash(const TrainConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : describe(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

// Expands the grid over base. Softshrink thresholds follow tau.
inline std::vector<TrainConfig> expand_grid(const GridSpec& spec, const TrainConfig& base) {
  if (spec.taus.empty() || spec.gammas.empty() || spec.sigmas.empty() || spec.alphas.empty() || spec.modes.empty())
    throw std::invalid_argument("grid: every axis needs at least one value");
  std::vector<TrainConfig> out;
  for (TrainMode mode : spec.modes)
    for (double alpha : spec.alphas)
      for (MapKind sk : spec.sigmas)
        for (double gamma : spec.gammas)
          for (double tau : spec.taus) {
            TrainConfig c = base;
            c.mode = mode;
            c.noise.alpha = alpha;
            c.gamma = gamma;
            c.tau = tau;
            c.sigma = ProxMap{sk, (sk == MapKind::softshrink || sk == MapKind::clamp) ? tau : 0.0};
            out.push_back(c);
          }
  return out;
}

// Runs every configuration; failures are recorded, never thrown.
// make_init builds the initial parameters for a configuration.
template <class Layer>
GridSummary grid_run(const GridSpec& spec, const TrainConfig& base, const Dataset& train_set, const Dataset& test_set,
                     const std::function<RegularizerParams<Layer>(const TrainConfig&)>& make_init) {
  GridSummary summary;
  const auto cfgs = expand_grid(spec, base);
  summary.runs.resize(cfgs.size());
  parallel_for(cfgs.size(), spec.threads, [&](std::size_t i) {
    GridRun& run = summary.runs[i];
    run.cfg = cfgs[i];
    run.cfg.threads = 1;
    run.hash = config_hash(run.cfg);
    try {
      auto res = train(run.cfg, make_init(run.cfg), train_set, test_set);
      run.records = std::move(res.records);
      run.epochs_completed = res.epochs_completed;
      run.final_test_loss = run.records.back().test_loss;
      run.success = !res.aborted && std::isfinite(run.final_test_loss) && run.final_test_loss < spec.success_threshold;
    } catch (const std::exception& ex) {
      run.error = ex.what();
    }
  });
  return summary;
}

inline void write_grid_summary_csv(std::ostream& os, const GridSummary& g) {
  os << "config_hash,mode,task,tau,gamma,sigma,alpha,lambda,final_train_loss,final_test_loss,success,"
        "epochs_completed,error\n";
  os.precision(17);
  for (const auto& r : g.runs) {
    const double tr = r.records.empty() ? std::numeric_limits<double>::quiet_NaN() : r.records.back().train_loss;
    std::string err = r.error;
    for (auto& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    os << r.hash << ',' << to_string(r.cfg.mode) << ',' << to_string(r.cfg.task.kind) << ',' << r.cfg.tau << ','
       << r.cfg.gamma << ',' << to_string(r.cfg.sigma.kind) << ',' << r.cfg.noise.alpha << ',' << r.cfg.lambda << ','
       << tr << ',' << r.final_test_loss << ',' << (r.success ? 1 : 0) << ',' << r.epochs_completed << ',' << err
       << '\n';
  }
}

// One row per successful run: the distribution behind a loss boxplot.
inline void write_boxplot_csv(std::ostream& os, const GridSummary& g) {
  os << "task,mode,final_test_loss\n";
  os.precision(17);
  for (const auto& r : g.runs)
    if (r.success) os << to_string(r.cfg.task.kind) << ',' << to_string(r.cfg.mode) << ',' << r.final_test_loss << '\n';
}

// Counts of successful runs per (mode, epochs completed) bin.
inline void write_epoch_histogram_csv(std::ostream& os, const GridSummary& g, int bin_width = 10) {
  os << "mode,epochs_bin_start,epochs_bin_end,count\n";
  for (TrainMode m : {TrainMode::bilevel, TrainMode::deq, TrainMode::naive}) {
    std::map<int, int> bins;
    for (const auto& r : g.runs)
      if (r.success && r.cfg.mode == m) ++bins[r.epochs_completed / bin_width];
    for (const auto& [b, n] : bins)
      os << to_string(m) << ',' << b * bin_width << ',' << (b + 1) * bin_width - 1 << ',' << n << '\n';
  }
}

}  // namespace deqbl
