#include "edgelab/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "edgelab/csv_io.hpp"
#include "edgelab/errors.hpp"

namespace edgelab {

Vector TrajectoryLog::iterate(Index k) const {
  if (k < 0 || k > num_steps()) {
    throw IndexError("TrajectoryLog::iterate: index " + std::to_string(k) + " outside 0.." +
                     std::to_string(num_steps()));
  }
  const auto it = std::upper_bound(stored_index.begin(), stored_index.end(), k);
  if (it == stored_index.begin()) throw InvariantViolation("TrajectoryLog: w_0 not stored");
  const std::size_t pos = static_cast<std::size_t>(it - stored_index.begin()) - 1;
  Vector w = stored[pos];
  for (Index i = stored_index[pos]; i < k; ++i) w += steps[static_cast<std::size_t>(i)];
  return w;
}

double TrajectoryLog::step_norm_sq(Index k) const {
  if (k < 0 || k >= num_steps()) throw IndexError("TrajectoryLog: step index out of range");
  return steps[static_cast<std::size_t>(k)].squaredNorm();
}

void TrajectoryLog::validate_shape() const {
  const std::size_t K = steps.size();
  if (losses.size() != K + 1) throw InvariantViolation("TrajectoryLog: losses must have K+1 entries");
  if (!grads.empty() && grads.size() != K + 1) {
    throw InvariantViolation("TrajectoryLog: grads must have K+1 entries");
  }
  if (stored.size() != stored_index.size() || stored.empty() || stored_index.front() != 0 ||
      stored_index.back() != static_cast<Index>(K)) {
    throw InvariantViolation("TrajectoryLog: stored iterates must include w_0 and w_K");
  }
}

namespace {

// Why a point is rejected, or empty when it is acceptable.
std::string reject_reason(double loss, const Vector& g, const Vector& w, const RunOptions& o) {
  if (!std::isfinite(loss)) return "non-finite loss";
  if (!g.allFinite()) return "non-finite gradient";
  if (!w.allFinite()) return "non-finite iterate";
  if (loss > o.loss_limit) return "loss above limit";
  if (w.norm() > o.norm_limit) return "iterate norm above limit";
  return {};
}

// Shared driver; `perturb` returns ε_k (empty vector for plain GD).
template <typename Log, typename Perturb>
void drive(const LossModel& model, const Vector& w0, double eta, Index K, const RunOptions& opts,
           Log& log, Perturb&& perturb) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvariantViolation("learning rate must be positive");
  if (K < 1) throw InvariantViolation("number of steps must be at least 1");
  if (w0.size() != model.dim()) throw ShapeError("initial point has the wrong dimension");
  if (opts.store_stride < 1) throw InvariantViolation("storage stride must be positive");
  log.eta = eta;
  log.model_name = model.name();
  log.seed = opts.seed;
  log.stride = opts.store_stride;

  Vector w = w0;
  Vector prev;
  for (Index k = 0; k <= K; ++k) {
    const double loss = model.value(w);
    Vector g = model.gradient(w);
    const std::string why = reject_reason(loss, g, w, opts);
    if (!why.empty()) {
      log.diverged = true;
      log.diverged_at = k;
      log.divergence_reason = why;
      if (k > 0) {
        // Drop the step into the rejected point; w_{k-1} becomes the last record.
        log.steps.pop_back();
        if constexpr (requires { log.noise; }) log.noise.pop_back();
        if (log.stored_index.back() != k - 1) {
          log.stored.push_back(prev);
          log.stored_index.push_back(k - 1);
        }
      }
      return;
    }
    log.losses.push_back(loss);
    if (k % opts.store_stride == 0 || k == K) {
      log.stored.push_back(w);
      log.stored_index.push_back(k);
    }
    if (k == K) {
      log.grads.push_back(std::move(g));
      return;
    }
    const Vector eps = perturb(w, g, k);
    Vector next = eps.size() == 0 ? Vector(w - eta * g) : Vector(w - eta * (g + eps));
    log.steps.push_back(next - w);
    if constexpr (requires { log.noise; }) log.noise.push_back(eps);
    log.grads.push_back(std::move(g));
    prev = std::move(w);
    w = std::move(next);
  }
}

}  // namespace

TrajectoryLog run_gd(const LossModel& model, const Vector& w0, double eta, Index K,
                     const RunOptions& opts) {
  TrajectoryLog log;
  drive(model, w0, eta, K, opts, log, [](const Vector&, const Vector&, Index) { return Vector(); });
  return log;
}

GaussianNoise::GaussianNoise(double sigma, std::uint64_t seed) : sigma_(sigma), rng_(seed) {
  if (!(sigma >= 0.0)) throw InvariantViolation("GaussianNoise: sigma must be non-negative");
}

Vector GaussianNoise::sample(const LossModel& model, const Vector&, const Vector&, Index) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector e(model.dim());
  for (Index i = 0; i < e.size(); ++i) e(i) = sigma_ * normal(rng_);
  return e;
}

MiniBatchNoise::MiniBatchNoise(Index batch_size, std::uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
  if (batch_size < 1) throw InvariantViolation("MiniBatchNoise: batch size must be positive");
}

Vector MiniBatchNoise::sample(const LossModel& model, const Vector& w, const Vector& grad, Index) {
  const auto* fs = dynamic_cast<const FiniteSumModel*>(&model);
  if (!fs) throw InvariantViolation("MiniBatchNoise needs a finite-sum model");
  std::uniform_int_distribution<Index> pick(0, fs->num_samples() - 1);
  std::vector<Index> batch(static_cast<std::size_t>(batch_size_));
  for (auto& b : batch) b = pick(rng_);
  return fs->batch_gradient(w, batch) - grad;
}

StochasticTrajectoryLog run_sgd(const LossModel& model, const Vector& w0, double eta, Index K,
                                NoiseSource& noise, const RunOptions& opts) {
  StochasticTrajectoryLog log;
  drive(model, w0, eta, K, opts, log, [&](const Vector& w, const Vector& g, Index k) {
    Vector e = noise.sample(model, w, g, k);
    if (e.size() != model.dim() || !e.allFinite()) {
      throw EvaluationError("noise source returned an invalid vector at step " + std::to_string(k));
    }
    return e;
  });
  return log;
}

namespace {

void truncate_log(TrajectoryLog& log, Index K) {
  if (log.num_steps() <= K) return;
  log.steps.resize(static_cast<std::size_t>(K));
  log.losses.resize(static_cast<std::size_t>(K + 1));
  log.grads.resize(static_cast<std::size_t>(K + 1));
  const Vector wK = log.iterate(K);
  while (!log.stored_index.empty() && log.stored_index.back() >= K) {
    log.stored_index.pop_back();
    log.stored.pop_back();
  }
  log.stored.push_back(wK);
  log.stored_index.push_back(K);
}

}  // namespace

PairedLog run_pair_gd(const LossModel& model_s, const LossModel& model_s2, const Vector& w0,
                      double eta, Index K, const RunOptions& opts) {
  if (model_s.dim() != model_s2.dim()) throw ShapeError("run_pair_gd: model dimensions differ");
  PairedLog pair;
  pair.first = run_gd(model_s, w0, eta, K, opts);
  pair.second = run_gd(model_s2, w0, eta, K, opts);
  // Keep both logs on a common horizon so δ_k is defined at every record.
  const Index common = pair.num_steps();
  truncate_log(pair.first, common);
  truncate_log(pair.second, common);
  return pair;
}

void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log, bool with_iterates) {
  std::vector<std::string> header{"k", "loss", "grad_norm", "step_norm"};
  const Index d = log.dim();
  if (with_iterates) {
    for (Index i = 0; i < d; ++i) header.push_back("w" + std::to_string(i));
  }
  csv::Writer w(os, header);
  std::vector<double> row(header.size());
  const Index K = log.num_steps();
  for (Index k = 0; k <= K; ++k) {
    row[0] = static_cast<double>(k);
    row[1] = log.losses[static_cast<std::size_t>(k)];
    row[2] = log.grads.empty() ? std::nan("") : log.grads[static_cast<std::size_t>(k)].norm();
    row[3] = k < K ? log.steps[static_cast<std::size_t>(k)].norm() : std::nan("");
    if (with_iterates) {
      const Vector wk = log.iterate(k);
      for (Index i = 0; i < d; ++i) row[static_cast<std::size_t>(4 + i)] = wk(i);
    }
    w.row(row);
  }
}

TrajectoryLog read_trajectory_csv(std::istream& is, double eta, const LossModel* model) {
  const csv::Table t = csv::read(is);
  const std::size_t loss_col = t.column("loss");
  std::vector<std::size_t> wcols;
  for (std::size_t i = 0;; ++i) {
    const std::string name = "w" + std::to_string(i);
    if (!t.has_column(name)) break;
    wcols.push_back(t.column(name));
  }
  if (wcols.empty()) throw ShapeError("trajectory CSV has no iterate columns (w0, w1, ...)");
  if (t.rows.size() < 2) throw ShapeError("trajectory CSV needs at least two records");
  if (model && model->dim() != static_cast<Index>(wcols.size())) {
    throw ShapeError("trajectory CSV iterate width does not match the model dimension");
  }
  TrajectoryLog log;
  log.eta = eta;
  log.model_name = model ? model->name() : "unknown";
  Vector prev;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Vector w(static_cast<Index>(wcols.size()));
    for (std::size_t i = 0; i < wcols.size(); ++i) w(static_cast<Index>(i)) = t.rows[r][wcols[i]];
    log.losses.push_back(t.rows[r][loss_col]);
    if (model) log.grads.push_back(model->gradient(w));
    if (r > 0) log.steps.push_back(w - prev);
    log.stored.push_back(w);
    log.stored_index.push_back(static_cast<Index>(r));
    prev = std::move(w);
  }
  return log;
}

}  // namespace edgelab
