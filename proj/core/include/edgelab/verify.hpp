#pragma once

#include <functional>
#include <string>
#include <vector>

#include "edgelab/loss_models.hpp"
#include "edgelab/trajectory.hpp"

/// Self-checking suites over the bundled models. Every check carries the
/// identity or bound it exercises, the measured worst-case value and the
/// threshold it was compared against.
namespace edgelab::verify {

struct CheckResult {
  std::string id;        // short machine name, e.g. "quad.propagator"
  std::string identity;  // human-readable statement being checked
  bool pass = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
  double seconds = 0.0;
};

struct Criterion {
  int number = 0;
  std::string title;
  std::vector<CheckResult> checks;
  double seconds = 0.0;
  double budget_seconds = 0.0;  // runtime limit; 0 means none
  bool pass() const;
};

/// A named run used across several suites.
struct BundledRun {
  std::string name;
  ModelPtr model;
  TrajectoryLog log;
  bool polynomial = true;
};

/// The deterministic reference runs: quadratic (dim 20), quartic scalar at a
/// period-two orbit, two-layer linear net near its pitchfork, and the
/// synthetic MLP at the edge of stability.
std::vector<BundledRun> bundled_runs();

/// The synthetic MLP used for the edge-of-stability runs (widths
/// 10→12→12→5, tanh, 200 samples) and its initialization.
struct MlpSetup {
  std::shared_ptr<const MlpModel> model;
  Vector w0;
  double lambda0 = 0.0;  // sharpness at w0
  double eta = 0.0;      // 0.9·2/λ₀
};
MlpSetup mlp_setup();

/// Criterion n ∈ [1, 10] of the acceptance list.
Criterion run_criterion(int n);

inline constexpr int kNumCriteria = 10;

/// Module invariants not covered by a criterion (FD gradients, HVP symmetry,
/// eigensolver reconstruction, bifurcation symmetries).
std::vector<CheckResult> property_checks();

/// Fast quadratic-only checks.
std::vector<CheckResult> quick_checks();

/// Consistency of a log on its own and, when a model is given, against it:
/// step/iterate consistency, replayed losses and gradients, the GD update,
/// and the telescoping identity with quadrature-route curvatures. Failing
/// checks name the violated identity.
std::vector<CheckResult> check_trajectory(const TrajectoryLog& log, const LossModel* model);

/// Times `body`, which fills `r.measured`, `r.pass` and optionally `r.detail`.
/// Exceptions become failures with the message as detail.
CheckResult timed_check(std::string id, std::string identity, double threshold,
                        const std::function<void(CheckResult&)>& body);

}  // namespace edgelab::verify
