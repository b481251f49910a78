#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "edgelab/loss_models.hpp"
#include "edgelab/trajectory.hpp"

namespace edgelab::cli {

using json = nlohmann::json;

/// Invalid configuration. `path()` is a JSON path such as `$.model.widths[1]`.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error("config error at " + path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Strict reader over one JSON object. Every accessor records the value it
/// returns (defaults included) into `resolved`, and `finish()` rejects keys
/// that were never read.
class Node {
 public:
  Node(const json& j, std::string path, json& resolved);

  bool has(const std::string& key) const;
  const std::string& path() const noexcept { return path_; }
  std::string child_path(const std::string& key) const { return path_ + "." + key; }

  double number(const std::string& key, std::optional<double> fallback = {});
  double positive(const std::string& key, std::optional<double> fallback = {});
  std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = {},
                       std::int64_t min = std::numeric_limits<std::int64_t>::min());
  std::uint64_t u64(const std::string& key, std::optional<std::uint64_t> fallback = {});
  bool boolean(const std::string& key, std::optional<bool> fallback = {});
  std::string choice(const std::string& key, const std::vector<std::string>& allowed,
                     std::optional<std::string> fallback = {});
  std::string string(const std::string& key, std::optional<std::string> fallback = {});
  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = {},
                              bool allow_empty = false);
  /// Non-empty list of strings, each from `allowed`.
  std::vector<std::string> strings(const std::string& key, const std::vector<std::string>& allowed,
                                   std::optional<std::vector<std::string>> fallback = {});
  std::vector<std::int64_t> integers(const std::string& key, std::int64_t min,
                                     std::optional<std::vector<std::int64_t>> fallback = {});

  /// Child object; call finish() on it too.
  Node object(const std::string& key);
  /// Child object that may be absent, in which case it resolves to {}.
  Node object_or_empty(const std::string& key);

  /// Exactly one of the keys must be present; returns which.
  std::string one_of(const std::vector<std::string>& keys) const;

  void finish() const;

 private:
  const json& at(const std::string& key) const;

  const json& j_;
  std::string path_;
  json& out_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------

struct DatasetRecipe {
  std::uint64_t seed = 0;
  Index samples = 200;
  Index input_dim = 0, output_dim = 0;
  DatasetOptions options;
};

struct ModelRecipe {
  std::string kind;  // quadratic | scalar_poly | linear_net | mlp
  // quadratic
  std::vector<double> eigenvalues;
  bool rotate = true;
  std::uint64_t model_seed = 0;
  double center_scale = 1.0;
  // scalar_poly
  double lambda = 1.0, gamma = 0.0, beta = 0.0;
  // linear_net
  std::string target_kind;  // diagonal | least_squares
  Index out_dim = 0, in_dim = 0, hidden = 0, rank = 0;
  std::vector<double> singular_values;
  // linear_net (least_squares) and mlp
  std::optional<DatasetRecipe> dataset;
  // mlp
  std::vector<Index> widths;
  Activation activation = Activation::Tanh;
};

/// A constructed model plus what the commands need to know about it.
struct BuiltModel {
  ModelPtr model;
  std::shared_ptr<const MlpModel> mlp;
  std::shared_ptr<const TwoLayerLinearModel> linear;
  std::optional<Dataset> dataset;
  /// Minimizer known in closed form (quadratic center, origin of the scalar
  /// polynomial, balanced linear-net minimizer).
  std::optional<Vector> minimizer;
  /// Sharpest Hessian direction at the minimizer, when known.
  std::optional<Vector> sharp_direction;
};

ModelRecipe parse_model(Node node);
/// `dataset_override` replaces the recipe's dataset (paired runs).
BuiltModel build_model(const ModelRecipe& recipe, const std::optional<Dataset>& dataset_override = {});

struct InitSpec {
  std::string kind;  // gaussian | explicit | network | near_minimizer
  double scale = 1.0;
  std::vector<double> values;
  double kick = 0.0;   // near_minimizer: amplitude along the sharp direction
  double noise = 0.0;  // near_minimizer: isotropic Gaussian noise
};

InitSpec parse_init(Node node, const std::string& default_kind = "gaussian");
/// Initial point for a built model; `seed` drives every random component.
Vector make_init(const InitSpec& spec, const BuiltModel& m, std::uint64_t seed, const std::string& path);

/// η given directly or as a fraction of the edge 2/λ_max(w0).
struct EtaSpec {
  std::optional<double> eta;
  std::optional<double> edge_fraction;
};
double resolve_eta(const EtaSpec& spec, const LossModel& model, const Vector& w0);

/// Lanczos estimate of λ_max(∇²L(w)).
double sharpness(const LossModel& model, const Vector& w);

json load_json_file(const std::string& path);

}  // namespace edgelab::cli
