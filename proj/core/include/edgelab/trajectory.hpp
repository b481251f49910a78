#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "edgelab/loss_models.hpp"

namespace edgelab {

/// Per-step log of a gradient-descent run.
///
/// Index k runs over 0..K for losses, gradients and iterates, and over
/// 0..K-1 for steps. steps[k] is the segment w_{k+1} − w_k actually taken.
struct TrajectoryLog {
  double eta = 0.0;
  std::string model_name;
  std::uint64_t seed = 0;

  std::vector<double> losses;
  std::vector<Vector> grads;
  std::vector<Vector> steps;

  /// Iterates w_0, w_s, w_{2s}, ... for stride s, always including w_K.
  Index stride = 1;
  std::vector<Vector> stored;
  std::vector<Index> stored_index;

  bool diverged = false;
  Index diverged_at = -1;  // step whose iterate was rejected
  std::string divergence_reason;

  /// Number of steps K.
  Index num_steps() const noexcept { return static_cast<Index>(steps.size()); }
  Index dim() const { return grads.empty() ? 0 : grads.front().size(); }
  /// w_k, reconstructed from the nearest stored iterate when thinned.
  Vector iterate(Index k) const;
  double step_norm_sq(Index k) const;

  /// Throws InvariantViolation unless the sizes are mutually consistent.
  void validate_shape() const;
};

/// SGD log: steps are the stochastic steps s_k, and noise[k] = ε_k is the
/// gradient perturbation used at step k.
struct StochasticTrajectoryLog : TrajectoryLog {
  std::vector<Vector> noise;
};

struct PairedLog {
  TrajectoryLog first;   // driven by L_S
  TrajectoryLog second;  // driven by L_S'
  bool diverged() const noexcept { return first.diverged || second.diverged; }
  /// Common length after synchronizing both logs.
  Index num_steps() const noexcept {
    return std::min(first.num_steps(), second.num_steps());
  }
};

struct RunOptions {
  Index store_stride = 1;
  double loss_limit = 1e12;
  double norm_limit = 1e8;
  std::uint64_t seed = 0;  // recorded in the log
};

/// w_{k+1} = w_k − η∇L(w_k) for K steps. On divergence (non-finite or
/// oversized loss, gradient or iterate) the log is truncated to the last
/// consistent record and flagged.
TrajectoryLog run_gd(const LossModel& model, const Vector& w0, double eta, Index K,
                     const RunOptions& opts = {});

/// Source of the gradient perturbation ε_k. Stateful, deterministic per seed.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual Vector sample(const LossModel& model, const Vector& w, const Vector& grad,
                        Index k) = 0;
  virtual std::string name() const = 0;
};

/// ε_k ~ N(0, σ²I).
class GaussianNoise final : public NoiseSource {
 public:
  GaussianNoise(double sigma, std::uint64_t seed);
  Vector sample(const LossModel& model, const Vector& w, const Vector& grad,
                Index k) override;
  std::string name() const override { return "gaussian"; }

 private:
  double sigma_;
  std::mt19937_64 rng_;
};

/// ε_k = ∇L_batch(w_k) − ∇L(w_k) with the batch drawn uniformly with
/// replacement, so E[ε_k | w_k] = 0 exactly.
class MiniBatchNoise final : public NoiseSource {
 public:
  MiniBatchNoise(Index batch_size, std::uint64_t seed);
  Vector sample(const LossModel& model, const Vector& w, const Vector& grad,
                Index k) override;
  std::string name() const override { return "minibatch"; }

 private:
  Index batch_size_;
  std::mt19937_64 rng_;
};

/// w_{k+1} = w_k − η(∇L(w_k) + ε_k).
StochasticTrajectoryLog run_sgd(const LossModel& model, const Vector& w0, double eta,
                                Index K, NoiseSource& noise, const RunOptions& opts = {});

/// Two GD runs from a common start on L_S and L_S'.
PairedLog run_pair_gd(const LossModel& model_s, const LossModel& model_s2,
                      const Vector& w0, double eta, Index K, const RunOptions& opts = {});

/// Trajectory CSV: k, loss, grad_norm, step_norm and optionally w_0..w_{d-1}.
void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log, bool with_iterates);

/// Reads a trajectory CSV written with iterates. Gradients are recomputed
/// from `model` when given, otherwise left empty.
TrajectoryLog read_trajectory_csv(std::istream& is, double eta, const LossModel* model);

}  // namespace edgelab
