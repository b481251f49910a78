#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "edgelab/errors.hpp"

namespace edgelab::cli {

namespace {

std::string type_name(const json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

}  // namespace

Node::Node(const json& j, std::string path, json& resolved)
    : j_(j), path_(std::move(path)), out_(resolved) {
  if (!j_.is_object()) throw ConfigError(path_, "expected an object, got " + type_name(j_));
  if (!out_.is_object()) out_ = json::object();
}

bool Node::has(const std::string& key) const { return j_.contains(key); }

const json& Node::at(const std::string& key) const { return j_.at(key); }

double Node::number(const std::string& key, std::optional<double> fallback) {
  seen_.insert(key);
  double v;
  if (!has(key)) {
    if (!fallback) throw ConfigError(child_path(key), "required number is missing");
    v = *fallback;
  } else {
    const json& x = at(key);
    if (!x.is_number()) throw ConfigError(child_path(key), "expected a number, got " + type_name(x));
    v = x.get<double>();
    if (!std::isfinite(v)) throw ConfigError(child_path(key), "must be finite");
  }
  out_[key] = v;
  return v;
}

double Node::positive(const std::string& key, std::optional<double> fallback) {
  const double v = number(key, fallback);
  if (!(v > 0.0)) throw ConfigError(child_path(key), "must be positive");
  return v;
}

std::int64_t Node::integer(const std::string& key, std::optional<std::int64_t> fallback, std::int64_t min) {
  seen_.insert(key);
  std::int64_t v;
  if (!has(key)) {
    if (!fallback) throw ConfigError(child_path(key), "required integer is missing");
    v = *fallback;
  } else {
    const json& x = at(key);
    if (!x.is_number_integer()) throw ConfigError(child_path(key), "expected an integer, got " + type_name(x));
    v = x.get<std::int64_t>();
  }
  if (v < min) throw ConfigError(child_path(key), "must be at least " + std::to_string(min));
  out_[key] = v;
  return v;
}

std::uint64_t Node::u64(const std::string& key, std::optional<std::uint64_t> fallback) {
  seen_.insert(key);
  std::uint64_t v;
  if (!has(key)) {
    if (!fallback) throw ConfigError(child_path(key), "required integer is missing");
    v = *fallback;
  } else {
    const json& x = at(key);
    if (!x.is_number_unsigned()) {
      throw ConfigError(child_path(key), "expected a non-negative integer, got " + type_name(x));
    }
    v = x.get<std::uint64_t>();
  }
  out_[key] = v;
  return v;
}

bool Node::boolean(const std::string& key, std::optional<bool> fallback) {
  seen_.insert(key);
  bool v;
  if (!has(key)) {
    if (!fallback) throw ConfigError(child_path(key), "required boolean is missing");
    v = *fallback;
  } else {
    const json& x = at(key);
    if (!x.is_boolean()) throw ConfigError(child_path(key), "expected a boolean, got " + type_name(x));
    v = x.get<bool>();
  }
  out_[key] = v;
  return v;
}

std::string Node::string(const std::string& key, std::optional<std::string> fallback) {
  seen_.insert(key);
  std::string v;
  if (!has(key)) {
    if (!fallback) throw ConfigError(child_path(key), "required string is missing");
    v = *fallback;
  } else {
    const json& x = at(key);
    if (!x.is_string()) throw ConfigError(child_path(key), "expected a string, got " + type_name(x));
    v = x.get<std::string>();
  }
  out_[key] = v;
  return v;
}

std::string Node::choice(const std::string& key, const std::vector<std::string>& allowed,
                         std::optional<std::string> fallback) {
  const std::string v = string(key, std::move(fallback));
  for (const auto& a : allowed) {
    if (a == v) return v;
  }
  std::string list;
  for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
  throw ConfigError(child_path(key), "unknown value \"" + v + "\" (expected one of: " + list + ")");
}

std::vector<double> Node::numbers(const std::string& key, std::optional<std::vector<double>> fallback,
                                  bool allow_empty) {
  seen_.insert(key);
  std::vector<double> v;
  if (!has(key)) {
    if (!fallback) throw ConfigError(child_path(key), "required list of numbers is missing");
    v = *fallback;
  } else {
    const json& x = at(key);
    if (!x.is_array()) throw ConfigError(child_path(key), "expected a list, got " + type_name(x));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::string p = child_path(key) + "[" + std::to_string(i) + "]";
      if (!x[i].is_number()) throw ConfigError(p, "expected a number, got " + type_name(x[i]));
      const double d = x[i].get<double>();
      if (!std::isfinite(d)) throw ConfigError(p, "must be finite");
      v.push_back(d);
    }
  }
  if (v.empty() && !allow_empty) throw ConfigError(child_path(key), "list must not be empty");
  out_[key] = v;
  return v;
}

std::vector<std::int64_t> Node::integers(const std::string& key, std::int64_t min,
                                         std::optional<std::vector<std::int64_t>> fallback) {
  seen_.insert(key);
  std::vector<std::int64_t> v;
  if (!has(key)) {
    if (!fallback) throw ConfigError(child_path(key), "required list of integers is missing");
    v = *fallback;
  } else {
    const json& x = at(key);
    if (!x.is_array()) throw ConfigError(child_path(key), "expected a list, got " + type_name(x));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::string p = child_path(key) + "[" + std::to_string(i) + "]";
      if (!x[i].is_number_integer()) throw ConfigError(p, "expected an integer, got " + type_name(x[i]));
      const std::int64_t n = x[i].get<std::int64_t>();
      if (n < min) throw ConfigError(p, "must be at least " + std::to_string(min));
      v.push_back(n);
    }
  }
  if (v.empty()) throw ConfigError(child_path(key), "list must not be empty");
  out_[key] = v;
  return v;
}

std::vector<std::string> Node::strings(const std::string& key, const std::vector<std::string>& allowed,
                                       std::optional<std::vector<std::string>> fallback) {
  seen_.insert(key);
  std::vector<std::string> v;
  if (!has(key)) {
    if (!fallback) throw ConfigError(child_path(key), "required list of strings is missing");
    v = *fallback;
  } else {
    const json& x = at(key);
    if (!x.is_array()) throw ConfigError(child_path(key), "expected a list, got " + type_name(x));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::string p = child_path(key) + "[" + std::to_string(i) + "]";
      if (!x[i].is_string()) throw ConfigError(p, "expected a string, got " + type_name(x[i]));
      v.push_back(x[i].get<std::string>());
      if (std::find(allowed.begin(), allowed.end(), v.back()) == allowed.end()) {
        throw ConfigError(p, "unknown value \"" + v.back() + "\"");
      }
    }
  }
  if (v.empty()) throw ConfigError(child_path(key), "list must not be empty");
  out_[key] = v;
  return v;
}

Node Node::object(const std::string& key) {
  seen_.insert(key);
  if (!has(key)) throw ConfigError(child_path(key), "required object is missing");
  return Node(at(key), child_path(key), out_[key]);
}

Node Node::object_or_empty(const std::string& key) {
  seen_.insert(key);
  static const json empty = json::object();
  return Node(has(key) ? at(key) : empty, child_path(key), out_[key]);
}

std::string Node::one_of(const std::vector<std::string>& keys) const {
  std::vector<std::string> present;
  std::string list;
  for (const auto& k : keys) {
    if (has(k)) present.push_back(k);
    list += (list.empty() ? "" : ", ") + k;
  }
  if (present.size() != 1) {
    throw ConfigError(path_, "exactly one of {" + list + "} must be given");
  }
  return present.front();
}

void Node::finish() const {
  for (auto it = j_.begin(); it != j_.end(); ++it) {
    if (!seen_.count(it.key())) throw ConfigError(child_path(it.key()), "unknown key");
  }
}

// ---------------------------------------------------------------------------

namespace {

Vector randn(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> N(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = N(rng);
  return v;
}

DatasetRecipe parse_dataset(Node node, std::optional<Index> d_in, std::optional<Index> d_out) {
  DatasetRecipe d;
  d.seed = node.u64("seed", 0);
  d.samples = node.integer("samples", 200, 1);
  d.input_dim = d_in ? *d_in : node.integer("input_dim", std::nullopt, 1);
  d.output_dim = d_out ? *d_out : node.integer("output_dim", std::nullopt, 1);
  if (d_in && node.has("input_dim") && node.integer("input_dim", std::nullopt, 1) != *d_in) {
    throw ConfigError(node.child_path("input_dim"), "must equal the first layer width");
  }
  if (d_out && node.has("output_dim") && node.integer("output_dim", std::nullopt, 1) != *d_out) {
    throw ConfigError(node.child_path("output_dim"), "must equal the last layer width");
  }
  // Both dimensions stay explicit in the resolved file.
  node.integer("input_dim", d.input_dim);
  node.integer("output_dim", d.output_dim);
  d.options.teacher_singular_values = node.numbers("teacher_singular_values", std::vector<double>{}, true);
  d.options.teacher_rank = node.integer("teacher_rank", 0, 0);
  d.options.target_scale = node.number("target_scale", 1.0);
  d.options.noise = node.number("noise", 0.0);
  if (d.options.noise < 0.0) throw ConfigError(node.child_path("noise"), "must be non-negative");
  const Index mn = std::min(d.input_dim, d.output_dim);
  if (static_cast<Index>(d.options.teacher_singular_values.size()) > mn) {
    throw ConfigError(node.child_path("teacher_singular_values"), "more values than min(input_dim, output_dim)");
  }
  if (d.options.teacher_rank > mn) {
    throw ConfigError(node.child_path("teacher_rank"), "exceeds min(input_dim, output_dim)");
  }
  node.finish();
  return d;
}

Dataset make_dataset(const DatasetRecipe& r) {
  return make_synthetic_dataset(r.seed, r.samples, r.input_dim, r.output_dim, r.options);
}

}  // namespace

ModelRecipe parse_model(Node node) {
  ModelRecipe r;
  r.kind = node.choice("kind", {"quadratic", "scalar_poly", "linear_net", "mlp"});
  if (r.kind == "quadratic") {
    r.eigenvalues = node.numbers("eigenvalues");
    r.rotate = node.boolean("rotate", true);
    r.model_seed = node.u64("seed", 0);
    r.center_scale = node.number("center_scale", 1.0);
  } else if (r.kind == "scalar_poly") {
    r.lambda = node.number("lambda");
    r.gamma = node.number("gamma", 0.0);
    r.beta = node.number("beta", 0.0);
  } else if (r.kind == "linear_net") {
    r.hidden = node.integer("hidden", std::nullopt, 1);
    Node t = node.object("target");
    r.target_kind = t.choice("kind", {"diagonal", "least_squares"});
    if (r.target_kind == "diagonal") {
      r.out_dim = t.integer("out_dim", std::nullopt, 1);
      r.in_dim = t.integer("in_dim", std::nullopt, 1);
      r.singular_values = t.numbers("singular_values");
      if (static_cast<Index>(r.singular_values.size()) > std::min(r.out_dim, r.in_dim)) {
        throw ConfigError(t.child_path("singular_values"), "more values than min(out_dim, in_dim)");
      }
      for (std::size_t i = 0; i < r.singular_values.size(); ++i) {
        if (!(r.singular_values[i] > 0.0)) {
          throw ConfigError(t.child_path("singular_values") + "[" + std::to_string(i) + "]", "must be positive");
        }
      }
    } else {
      r.rank = t.integer("rank", 0, 0);
      r.dataset = parse_dataset(t.object("dataset"), std::nullopt, std::nullopt);
    }
    t.finish();
  } else {
    const auto w = node.integers("widths", 1);
    if (w.size() < 2) throw ConfigError(node.child_path("widths"), "need at least input and output widths");
    r.widths.assign(w.begin(), w.end());
    r.activation = node.choice("activation", {"tanh", "gelu"}, "tanh") == "tanh" ? Activation::Tanh
                                                                                : Activation::Gelu;
    r.dataset = parse_dataset(node.object("dataset"), r.widths.front(), r.widths.back());
  }
  node.finish();
  return r;
}

BuiltModel build_model(const ModelRecipe& r, const std::optional<Dataset>& dataset_override) {
  BuiltModel b;
  if (r.kind == "quadratic") {
    std::mt19937_64 rng(r.model_seed);
    const Index n = static_cast<Index>(r.eigenvalues.size());
    const Vector eig = Eigen::Map<const Vector>(r.eigenvalues.data(), n);
    Matrix Q = Matrix::Identity(n, n);
    if (r.rotate) {
      Matrix A(n, n);
      for (Index j = 0; j < n; ++j) A.col(j) = randn(rng, n);
      Q = Eigen::HouseholderQR<Matrix>(A).householderQ();
    }
    const SymMatrix H(Q * eig.asDiagonal() * Q.transpose());
    const Vector c = r.center_scale * randn(rng, n);
    b.model = make_quadratic(H, c);
    b.minimizer = c;
    const Eigh e = dense_eigh(H);
    b.sharp_direction = Vector(e.vectors.col(n - 1));
  } else if (r.kind == "scalar_poly") {
    b.model = make_scalar_poly(r.lambda, r.gamma, r.beta);
    b.minimizer = Vector::Zero(1);
    b.sharp_direction = Vector::Ones(1);
  } else if (r.kind == "linear_net") {
    Matrix M;
    if (r.target_kind == "diagonal") {
      M = Matrix::Zero(r.out_dim, r.in_dim);
      for (std::size_t i = 0; i < r.singular_values.size(); ++i) {
        M(static_cast<Index>(i), static_cast<Index>(i)) = r.singular_values[i];
      }
    } else {
      b.dataset = dataset_override ? *dataset_override : make_dataset(*r.dataset);
      M = least_squares_target(*b.dataset, r.rank);
    }
    b.linear = make_two_layer_linear(M, r.hidden);
    b.model = b.linear;
    const LinearNetGeometry g = balanced_minimizer(M, r.hidden);
    b.minimizer = g.wbar;
    b.sharp_direction = g.sharp_direction();
  } else {
    b.dataset = dataset_override ? *dataset_override : make_dataset(*r.dataset);
    b.mlp = make_mlp(r.widths, r.activation, *b.dataset);
    b.model = b.mlp;
  }
  return b;
}

InitSpec parse_init(Node node, const std::string& default_kind) {
  InitSpec s;
  s.kind = node.choice("kind", {"gaussian", "explicit", "network", "near_minimizer"}, default_kind);
  if (s.kind == "gaussian" || s.kind == "network") {
    s.scale = node.number("scale", 1.0);
  } else if (s.kind == "explicit") {
    s.values = node.numbers("values");
  } else {
    s.kick = node.number("kick", 1e-3);
    s.noise = node.number("noise", 0.0);
  }
  node.finish();
  return s;
}

Vector make_init(const InitSpec& s, const BuiltModel& m, std::uint64_t seed, const std::string& path) {
  const Index n = m.model->dim();
  // A separate stream, so that an init seed equal to a model seed does not
  // reproduce the model's own draws.
  std::seed_seq seq{seed, std::uint64_t{0x1a17}};
  std::mt19937_64 rng(seq);
  if (s.kind == "gaussian") return s.scale * randn(rng, n);
  if (s.kind == "explicit") {
    if (static_cast<Index>(s.values.size()) != n) {
      throw ConfigError(path + ".values", "expected " + std::to_string(n) + " values, got " +
                                              std::to_string(s.values.size()));
    }
    return Eigen::Map<const Vector>(s.values.data(), n);
  }
  if (s.kind == "network") {
    if (!m.mlp) throw ConfigError(path + ".kind", "\"network\" initialization needs an mlp model");
    return m.mlp->init_params(seed, s.scale);
  }
  if (!m.minimizer) throw ConfigError(path + ".kind", "this model has no closed-form minimizer");
  return *m.minimizer + s.kick * *m.sharp_direction + s.noise * randn(rng, n);
}

double sharpness(const LossModel& model, const Vector& w) {
  LanczosOptions lo;
  return lambda_max_lanczos([&](const Vector& v) { return model.hvp(w, v); }, model.dim(), lo).lambda_max;
}

double resolve_eta(const EtaSpec& spec, const LossModel& model, const Vector& w0) {
  if (spec.eta) return *spec.eta;
  const double lam = sharpness(model, w0);
  if (!(lam > 0.0)) throw InvariantViolation("initial sharpness is not positive; give eta directly");
  return *spec.edge_fraction * 2.0 / lam;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("$", "cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace edgelab::cli
