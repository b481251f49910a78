#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "config.hpp"
#include "edgelab/bifurcation.hpp"
#include "edgelab/csv_io.hpp"
#include "edgelab/edge_metrics.hpp"
#include "edgelab/errors.hpp"
#include "edgelab/parallel.hpp"
#include "edgelab/stability_kv.hpp"
#include "edgelab/verify.hpp"

namespace edgelab::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Shared top-level plumbing: output directory, seed and the resolved file.
class Context {
 public:
  Context(const CommandArgs& args, const std::string& command, std::ostream& log)
      : raw_(load_json_file(args.config_path)), root_(raw_, "$", resolved_), log_(log) {
    resolved_["command"] = command;
    const std::string cfg_out = root_.string("output_dir", "edge-lab-out");
    const std::uint64_t cfg_seed = root_.u64("seed", 0);
    out_ = args.out_dir ? *args.out_dir : cfg_out;
    seed_ = args.seed ? *args.seed : cfg_seed;
    resolved_["output_dir"] = out_;
    resolved_["seed"] = seed_;
  }

  Node& root() { return root_; }
  std::uint64_t seed() const { return seed_; }
  std::ostream& log() { return log_; }

  /// Validates the remaining keys and writes resolved_config.json.
  void seal() {
    root_.finish();
    write("resolved_config.json", resolved_.dump(2) + "\n");
  }

  void write(const std::string& name, const std::string& content) {
    fs::create_directories(out_);
    const fs::path p = fs::path(out_) / name;
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << content;
    if (!os) throw std::runtime_error("write failed for " + p.string());
    log_ << "wrote " << p.string() << "\n";
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

 private:
  json raw_;
  json resolved_ = json::object();
  Node root_;
  std::string out_;
  std::uint64_t seed_ = 0;
  std::ostream& log_;
};

double finite_or_nan(double x) { return std::isfinite(x) ? x : kNaN; }

json opt_number(const std::optional<double>& x) {
  return x && std::isfinite(*x) ? json(*x) : json(nullptr);
}

json balance_json(const EdgeBalanceReport& r) {
  json j;
  j["route"] = r.route == CurvatureRoute::Exact ? "exact" : "quadrature";
  j["K"] = r.K;
  j["eta"] = r.eta;
  j["edge"] = 2.0 / r.eta;
  j["E_K"] = r.E_K;
  j["identity_lhs"] = r.identity_lhs;
  j["identity_rhs"] = r.identity_rhs;
  j["identity_residual"] = r.identity_residual;
  j["weighted_mean"] = finite_or_nan(r.weighted_mean);
  j["max_rtilde"] = finite_or_nan(r.max_rtilde);
  j["forcing_bound"] = opt_number(r.forcing_bound);
  j["forcing_holds"] = r.forcing_holds;
  j["B_minus"] = r.B_minus;
  j["B_plus"] = r.B_plus;
  j["signed_residual"] = r.signed_residual;
  json w = json::array();
  for (const auto& m : r.windows) {
    w.push_back({{"delta", m.delta},
                 {"sub_mass", m.sub_mass},
                 {"super_mass", m.super_mass},
                 {"in_window_fraction", m.in_window_fraction},
                 {"sub_bound", opt_number(m.sub_bound)},
                 {"super_bound", m.super_bound}});
  }
  j["windows"] = w;
  return j;
}

json log_json(const TrajectoryLog& log) {
  json j;
  j["steps"] = log.num_steps();
  j["diverged"] = log.diverged;
  j["diverged_at"] = log.diverged ? json(log.diverged_at) : json(nullptr);
  j["divergence_reason"] = log.divergence_reason;
  j["final_loss"] = log.losses.empty() ? json(nullptr) : json(finite_or_nan(log.losses.back()));
  return j;
}

EtaSpec parse_eta(Node& root) {
  EtaSpec e;
  if (root.one_of({"eta", "eta_edge_fraction"}) == "eta") {
    e.eta = root.positive("eta");
  } else {
    e.edge_fraction = root.positive("eta_edge_fraction");
  }
  return e;
}

RunOptions parse_run_options(Node& root, std::uint64_t seed) {
  RunOptions o;
  o.loss_limit = root.positive("loss_limit", 1e12);
  o.norm_limit = root.positive("norm_limit", 1e8);
  o.seed = seed;
  return o;
}

std::string default_init_kind(const ModelRecipe& r) { return r.kind == "mlp" ? "network" : "gaussian"; }

InitSpec parse_init_for(Node& root, const ModelRecipe& r) {
  return parse_init(root.object_or_empty("init"), default_init_kind(r));
}

CurvatureRoute parse_route(Node& root) {
  return root.choice("route", {"quadrature", "exact"}, "quadrature") == "exact" ? CurvatureRoute::Exact
                                                                               : CurvatureRoute::Quadrature;
}

std::string csv_of(const std::function<void(std::ostream&)>& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

// ---------------------------------------------------------------------------

int cmd_run(const CommandArgs& args, std::ostream& out) {
  Context ctx(args, "run", out);
  Node& root = ctx.root();
  const ModelRecipe recipe = parse_model(root.object("model"));
  const InitSpec init = parse_init_for(root, recipe);
  const EtaSpec eta_spec = parse_eta(root);
  const Index K = root.integer("steps", 1000, 1);
  const CurvatureRoute route = parse_route(root);
  const std::vector<double> fractions = root.numbers("delta_fractions", std::vector<double>{0.05, 0.1, 0.5});
  const bool localize_steps = root.boolean("localize", true);
  const Index loc_stride = root.integer("localize_stride", 1, 1);
  const Index sharp_stride = root.integer("sharpness_stride", 0, 0);
  const bool iterates = root.boolean("write_iterates", true);
  const RunOptions ro = parse_run_options(root, ctx.seed());
  ctx.seal();

  const BuiltModel m = build_model(recipe);
  const Vector w0 = make_init(init, m, ctx.seed(), "$.init");
  const double eta = resolve_eta(eta_spec, *m.model, w0);
  const double lambda0 = sharpness(*m.model, w0);
  ctx.log() << "run: " << m.model->name() << ", dim " << m.model->dim() << ", eta " << eta << ", 2/eta "
            << 2.0 / eta << ", lambda_max(w0) " << lambda0 << "\n";

  const TrajectoryLog log = run_gd(*m.model, w0, eta, K, ro);
  if (log.diverged) ctx.log() << "run: diverged at step " << log.diverged_at << " (" << log.divergence_reason << ")\n";

  MetricsOptions mo;
  mo.localize = false;
  std::vector<MetricsRow> rows = compute_metrics(*m.model, log, mo);
  std::vector<char> loc_failed(rows.size(), 0);
  if (localize_steps) {
    const Index n = (log.num_steps() + loc_stride - 1) / loc_stride;
    parallel_for(n, [&](std::ptrdiff_t i) {
      const Index k = static_cast<Index>(i) * loc_stride;
      MetricsRow& row = rows[static_cast<std::size_t>(k)];
      if (!std::isfinite(row.rtilde)) return;
      try {
        const LocalizationRecord rec = localize(*m.model, log, k);
        row.xi = rec.xi;
        row.zeta = rec.zeta;
        row.lambda_max_xi = rec.lambda_xi;
      } catch (const ResolutionError&) {
        loc_failed[static_cast<std::size_t>(k)] = 1;
      }
    });
  }

  std::vector<CurvatureSample> samples;
  if (route == CurvatureRoute::Quadrature) {
    for (const auto& r : rows) samples.push_back({r.k, r.rbar, r.rtilde, CurvatureRoute::Quadrature, r.step_norm_sq});
  } else {
    samples = curvature_samples(*m.model, log, CurvatureRoute::Exact);
  }
  std::vector<double> deltas;
  for (double f : fractions) deltas.push_back(f * 2.0 / eta);
  const EdgeBalanceReport rep =
      log.num_steps() > 0 ? edge_balance_from_samples(log, samples, m.model->infimum(), deltas) : EdgeBalanceReport{};
  const Index onset = eos_onset(samples, eta);

  ctx.write("trajectory.csv", csv_of([&](std::ostream& os) { write_trajectory_csv(os, log, iterates); }));
  ctx.write("metrics.csv", csv_of([&](std::ostream& os) { write_metrics_csv(os, rows); }));
  if (sharp_stride > 0) {
    ctx.write("sharpness.csv", csv_of([&](std::ostream& os) {
      const Index n = log.num_steps() / sharp_stride + 1;
      std::vector<double> lam(static_cast<std::size_t>(n));
      parallel_for(n, [&](std::ptrdiff_t i) {
        lam[static_cast<std::size_t>(i)] = sharpness(*m.model, log.iterate(static_cast<Index>(i) * sharp_stride));
      });
      csv::Writer w(os, {"k", "lambda_max", "edge"});
      for (Index i = 0; i < n; ++i) w.row({static_cast<double>(i * sharp_stride), lam[static_cast<std::size_t>(i)], 2.0 / eta});
    }));
  }

  json report;
  report["model"] = m.model->name();
  report["dim"] = m.model->dim();
  report["eta"] = eta;
  report["edge"] = 2.0 / eta;
  report["lambda_max_initial"] = lambda0;
  report["initially_stable"] = lambda0 < 2.0 / eta;
  report["onset_k"] = onset >= 0 ? json(onset) : json(nullptr);
  report["trajectory"] = log_json(log);
  report["balance"] = balance_json(rep);
  report["localization_failures"] = std::count(loc_failed.begin(), loc_failed.end(), 1);
  ctx.write_json("report.json", report);
  ctx.log() << "run: weighted mean " << rep.weighted_mean << ", identity residual " << rep.identity_residual
            << ", onset " << onset << "\n";
  return log.diverged ? kExitDivergence : kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_balance(const CommandArgs& args, std::ostream& out) {
  Context ctx(args, "balance", out);
  Node& root = ctx.root();
  const ModelRecipe recipe = parse_model(root.object("model"));
  const InitSpec init = parse_init_for(root, recipe);
  const bool fractions = root.one_of({"eta_grid", "edge_fraction_grid"}) == "edge_fraction_grid";
  const std::vector<double> grid = root.numbers(fractions ? "edge_fraction_grid" : "eta_grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) {
      throw ConfigError(root.child_path(fractions ? "edge_fraction_grid" : "eta_grid") + "[" + std::to_string(i) + "]",
                        "must be positive");
    }
  }
  const Index K = root.integer("steps", 4000, 1);
  const CurvatureRoute route = parse_route(root);
  const bool scatter = root.boolean("scatter", true);
  const RunOptions ro = parse_run_options(root, ctx.seed());
  ctx.seal();

  const BuiltModel m = build_model(recipe);
  const Vector w0 = make_init(init, m, ctx.seed(), "$.init");
  const double lambda0 = sharpness(*m.model, w0);
  json summary;
  summary["model"] = m.model->name();
  summary["lambda_max_initial"] = lambda0;
  summary["runs"] = json::array();
  bool diverged = false;

  // Grid points run one after another; each run parallelizes internally.
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double eta = fractions ? grid[i] * 2.0 / lambda0 : grid[i];
    const TrajectoryLog log = run_gd(*m.model, w0, eta, K, ro);
    diverged = diverged || log.diverged;
    const auto samples = curvature_samples(*m.model, log, route);
    const RunningBalance rb = running_balance(log, samples, m.model->infimum());
    const std::string tag = std::to_string(i);
    ctx.write("balance_" + tag + ".csv", csv_of([&](std::ostream& os) {
      csv::Writer w(os, {"K", "eta", "edge", "E_K", "weighted_mean", "max_rtilde", "forcing_bound"});
      double E = 0.0;
      for (std::size_t k = 0; k < rb.weighted_mean.size(); ++k) {
        if (std::isfinite(samples[k].rtilde)) E += samples[k].step_norm_sq;
        w.row({static_cast<double>(k + 1), eta, 2.0 / eta, E, rb.weighted_mean[k], rb.max_rtilde[k],
               rb.forcing_bound[k]});
      }
    }));
    if (scatter) {
      ctx.write("scatter_" + tag + ".csv", csv_of([&](std::ostream& os) {
        csv::Writer w(os, {"k", "actual", "proxy"});
        for (Index k = 0; k + 1 < log.num_steps(); ++k) {
          const LossChange lc = loss_change_proxy(log, k);
          w.row({static_cast<double>(k), lc.actual, lc.proxy});
        }
      }));
    }
    const EdgeBalanceReport rep =
        log.num_steps() > 0 ? edge_balance_from_samples(log, samples, m.model->infimum()) : EdgeBalanceReport{};
    const double final_mean = rb.weighted_mean.empty() ? kNaN : rb.weighted_mean.back();
    summary["runs"].push_back({{"index", i},
                               {"eta", eta},
                               {"edge", 2.0 / eta},
                               {"final_weighted_mean", finite_or_nan(final_mean)},
                               {"relative_gap", finite_or_nan(std::abs(final_mean - 2.0 / eta) * eta / 2.0)},
                               {"forcing_holds_everywhere", rb.forcing_holds_everywhere},
                               {"identity_residual", rep.identity_residual},
                               {"trajectory", log_json(log)}});
    ctx.log() << "balance: eta " << eta << " final weighted mean " << final_mean << " (2/eta " << 2.0 / eta
              << ")\n";
  }
  ctx.write_json("summary.json", summary);
  return diverged ? kExitDivergence : kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_bifurcate(const CommandArgs& args, std::ostream& out) {
  Context ctx(args, "bifurcate", out);
  Node& root = ctx.root();
  const ModelRecipe recipe = parse_model(root.object("model"));
  const std::string base = root.choice("base", {"minimizer", "critical_point"}, "minimizer");
  std::optional<InitSpec> init;
  if (base == "critical_point") init = parse_init_for(root, recipe);
  const bool offsets = root.one_of({"eta_grid", "eta_offsets"}) == "eta_offsets";
  const std::vector<double> raw = root.numbers(offsets ? "eta_offsets" : "eta_grid");
  const std::vector<std::string> modes =
      root.strings("modes", {"continuation", "empirical"}, std::vector<std::string>{"continuation", "empirical"});
  Node emp = root.object_or_empty("empirical");
  SweepOptions so;
  so.steps = emp.integer("steps", 20000, 10);
  so.discard = emp.number("discard", 0.8);
  so.kick = emp.number("kick", 1e-3);
  if (!(so.discard >= 0.0 && so.discard < 1.0)) throw ConfigError("$.empirical.discard", "must be in [0, 1)");
  emp.finish();
  so.solve.tol = root.positive("tol", 1e-12);
  ctx.seal();

  const BuiltModel m = build_model(recipe);
  Vector wbar;
  if (base == "minimizer") {
    if (!m.minimizer) throw ConfigError("$.base", "this model has no closed-form minimizer; use \"critical_point\"");
    wbar = *m.minimizer;
  } else {
    const Vector w0 = make_init(*init, m, ctx.seed(), "$.init");
    const CriticalPoint cp = find_critical_point(*m.model, w0);
    ctx.log() << "bifurcate: critical point with |grad| " << cp.grad_norm << " after " << cp.iterations
              << " Newton steps\n";
    wbar = cp.w;
  }

  // η_c is needed for relative grids and is recomputed inside each sweep.
  std::vector<double> grid = raw;
  double eta_c = kNaN;
  if (offsets) {
    SweepOptions probe = so;
    probe.mode = SweepMode::Continuation;
    eta_c = branch_sweep(*m.model, wbar, {}, probe).eta_c;
    for (double& x : grid) x = eta_c * (1.0 + x);
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw ConfigError("$.eta_grid[" + std::to_string(i) + "]", "resolved eta must be positive");
  }

  json fit;
  std::vector<std::vector<std::string>> rows;
  for (const auto& mode : modes) {
    SweepOptions o = so;
    o.mode = mode == "empirical" ? SweepMode::Empirical : SweepMode::Continuation;
    const BranchSweep sw = branch_sweep(*m.model, wbar, grid, o);
    fit["eta_c"] = sw.eta_c;
    fit["Q"] = sw.Q;
    fit[mode] = {{"exponent", finite_or_nan(sw.exponent)},
                 {"points", sw.points.size()},
                 {"branch_lost", sw.branch_lost},
                 {"lost_at", sw.branch_lost ? json(sw.lost_at) : json(nullptr)}};
    for (const auto& p : sw.points) {
      const BranchPrediction pred = branch_predict(p.eta, sw.eta_c, sw.Q);
      rows.push_back({mode, csv::format_real(p.eta), csv::format_real(p.eta - sw.eta_c),
                      csv::format_real(p.amplitude),
                      csv::format_real(pred.exists ? std::sqrt(pred.alpha_sq) : kNaN),
                      csv::format_real(p.residual), csv::format_real(p.raw_return)});
    }
    ctx.log() << "bifurcate: " << mode << " sweep, " << sw.points.size() << " points, exponent " << sw.exponent
              << ", eta_c " << sw.eta_c << ", Q " << sw.Q << "\n";
  }
  fit["grid"] = grid;
  ctx.write("branch.csv", csv_of([&](std::ostream& os) {
    csv::Writer w(os, {"mode", "eta", "eta_minus_eta_c", "amplitude", "predicted_amplitude", "residual", "raw_return"});
    for (const auto& r : rows) w.row_fields(r);
  }));
  ctx.write_json("fit.json", fit);
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_strain(const CommandArgs& args, std::ostream& out) {
  Context ctx(args, "strain", out);
  Node& root = ctx.root();
  const ModelRecipe recipe = parse_model(root.object("model"));
  Node pair = root.object("pair");
  const std::string kind = pair.choice("kind", {"identical", "leave_one_out", "dataset_seed", "center_shift"});
  Index drop = 0;
  std::uint64_t other_seed = 0;
  double shift = 0.0;
  if (kind == "leave_one_out") {
    if (!recipe.dataset) throw ConfigError("$.pair.kind", "leave_one_out needs a dataset-backed model");
    drop = pair.integer("index", 0, 0);
    if (drop >= recipe.dataset->samples) throw ConfigError("$.pair.index", "exceeds the number of samples");
  } else if (kind == "dataset_seed") {
    if (!recipe.dataset) throw ConfigError("$.pair.kind", "dataset_seed needs a dataset-backed model");
    other_seed = pair.u64("seed");
  } else if (kind == "center_shift") {
    if (recipe.kind != "quadratic") throw ConfigError("$.pair.kind", "center_shift needs a quadratic model");
    shift = pair.number("scale", 0.1);
  }
  pair.finish();
  const InitSpec init = parse_init_for(root, recipe);
  const EtaSpec eta_spec = parse_eta(root);
  const Index K = root.integer("steps", 50, 1);
  const bool check_propagator = root.boolean("propagator_check", true);
  const RunOptions ro = parse_run_options(root, ctx.seed());
  ctx.seal();

  const BuiltModel s = build_model(recipe);
  ModelPtr s2;
  if (kind == "identical") {
    s2 = build_model(recipe).model;
  } else if (kind == "leave_one_out") {
    s2 = build_model(recipe, drop_sample(*s.dataset, drop)).model;
  } else if (kind == "dataset_seed") {
    ModelRecipe r2 = recipe;
    r2.dataset->seed = other_seed;
    s2 = build_model(r2).model;
  } else {
    const auto& q = static_cast<const QuadraticModel&>(*s.model);
    std::mt19937_64 rng(ctx.seed() + 1);
    std::normal_distribution<double> N(0.0, 1.0);
    Vector c = q.center();
    for (Index i = 0; i < c.size(); ++i) c(i) += shift * N(rng);
    s2 = make_quadratic(q.hessian(), c);
  }
  const Vector w0 = make_init(init, s, ctx.seed(), "$.init");
  const double eta = resolve_eta(eta_spec, *s.model, w0);
  const PairedLog runs = run_pair_gd(*s.model, *s2, w0, eta, K, ro);
  if (runs.diverged()) ctx.log() << "strain: a run diverged; strain is reported over the common prefix\n";
  const StrainLog L = strain_run(runs, *s.model, *s2);

  double prop_diff = 0.0;
  if (check_propagator) {
    std::vector<double> diffs(static_cast<std::size_t>(L.num_steps() + 1));
    parallel_for(L.num_steps() + 1, [&](std::ptrdiff_t k) {
      const Vector& d = L.records[static_cast<std::size_t>(k)].delta;
      diffs[static_cast<std::size_t>(k)] = (strain_via_propagator(L, k) - d).norm() / (1.0 + d.norm());
    });
    for (double d : diffs) prop_diff = std::max(prop_diff, d);
  }
  ctx.write("strain.csv", csv_of([&](std::ostream& os) { write_strain_csv(os, L); }));
  json rep;
  rep["eta"] = eta;
  rep["steps"] = L.num_steps();
  rep["pair"] = kind;
  rep["max_recurrence_residual"] = L.max_recurrence_residual();
  rep["strain_bound_holds"] = L.strain_bound_holds();
  rep["final_strain"] = L.records.back().delta.norm();
  rep["final_bound"] = L.records.back().bound_rhs;
  rep["propagator_max_difference"] = check_propagator ? json(prop_diff) : json(nullptr);
  rep["first"] = log_json(runs.first);
  rep["second"] = log_json(runs.second);
  ctx.write_json("report.json", rep);
  ctx.log() << "strain: recurrence residual " << L.max_recurrence_residual() << ", final strain "
            << L.records.back().delta.norm() << ", bound " << L.records.back().bound_rhs << "\n";
  if (runs.diverged()) return kExitDivergence;
  return L.strain_bound_holds() ? kExitOk : kExitAssertion;
}

// ---------------------------------------------------------------------------

json check_json(const verify::CheckResult& c, bool timings) {
  json j = {{"id", c.id},
            {"identity", c.identity},
            {"pass", c.pass},
            {"measured", finite_or_nan(c.measured)},
            {"threshold", c.threshold},
            {"detail", c.detail}};
  if (timings) j["seconds"] = c.seconds;
  return j;
}

int cmd_verify(const CommandArgs& args, std::ostream& out) {
  Context ctx(args, "verify", out);
  Node& root = ctx.root();
  const std::string suite = root.choice("suite", {"quick", "full", "criteria", "properties", "trajectory"}, "quick");
  std::vector<std::int64_t> criteria;
  if (suite == "criteria") {
    criteria = root.integers("criteria", 1, std::vector<std::int64_t>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    for (std::size_t i = 0; i < criteria.size(); ++i) {
      if (criteria[i] > verify::kNumCriteria) {
        throw ConfigError("$.criteria[" + std::to_string(i) + "]", "no such criterion");
      }
    }
  } else if (suite == "full") {
    for (int n = 1; n <= verify::kNumCriteria; ++n) criteria.push_back(n);
  }
  std::string traj_path;
  double traj_eta = 0.0;
  std::optional<ModelRecipe> traj_model;
  if (suite == "trajectory") {
    Node t = root.object("trajectory");
    traj_path = t.string("path");
    traj_eta = t.positive("eta");
    if (t.has("model")) traj_model = parse_model(t.object("model"));
    t.finish();
  }
  const bool timings = root.boolean("timings", false);
  ctx.seal();

  json report;
  report["suite"] = suite;
  json checks = json::array();
  json crit = json::array();
  bool all = true;
  auto emit = [&](const verify::CheckResult& c, const std::string& group) {
    all = all && c.pass;
    json j = check_json(c, timings);
    j["group"] = group;
    checks.push_back(j);
    ctx.log() << (c.pass ? "[PASS] " : "[FAIL] ") << c.id << "  measured " << c.measured << " threshold "
              << c.threshold << (c.detail.empty() ? "" : "  (" + c.detail + ")") << "\n";
  };

  if (suite == "quick") {
    for (const auto& c : verify::quick_checks()) emit(c, "quick");
  }
  if (suite == "properties" || suite == "full") {
    for (const auto& c : verify::property_checks()) emit(c, "properties");
  }
  for (std::int64_t n : criteria) {
    const verify::Criterion c = verify::run_criterion(static_cast<int>(n));
    for (const auto& k : c.checks) emit(k, "criterion " + std::to_string(n));
    const bool budget_ok = c.budget_seconds <= 0.0 || c.seconds <= c.budget_seconds;
    all = all && c.pass();
    json j = {{"number", c.number}, {"title", c.title}, {"pass", c.pass()}, {"within_budget", budget_ok},
              {"budget_seconds", c.budget_seconds}};
    if (timings) j["seconds"] = c.seconds;
    crit.push_back(j);
    ctx.log() << "criterion " << n << " (" << c.title << "): " << (c.pass() ? "pass" : "FAIL") << " in "
              << c.seconds << " s\n";
  }
  if (suite == "trajectory") {
    std::ifstream is(traj_path);
    if (!is) throw ConfigError("$.trajectory.path", "cannot open " + traj_path);
    std::optional<BuiltModel> m;
    if (traj_model) m = build_model(*traj_model);
    const TrajectoryLog log = read_trajectory_csv(is, traj_eta, m ? m->model.get() : nullptr);
    for (const auto& c : verify::check_trajectory(log, m ? m->model.get() : nullptr)) emit(c, "trajectory");
  }
  report["pass"] = all;
  report["checks"] = checks;
  if (!crit.empty()) report["criteria"] = crit;
  ctx.write_json("verify_report.json", report);
  ctx.log() << "verify: " << (all ? "all checks passed" : "FAILED") << "\n";
  return all ? kExitOk : kExitAssertion;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"run", "balance", "bifurcate", "strain", "verify"};
  return names;
}

int run_command(const std::string& name, const CommandArgs& args, std::ostream& log) {
  if (name == "run") return cmd_run(args, log);
  if (name == "balance") return cmd_balance(args, log);
  if (name == "bifurcate") return cmd_bifurcate(args, log);
  if (name == "strain") return cmd_strain(args, log);
  if (name == "verify") return cmd_verify(args, log);
  throw ConfigError("$", "unknown command " + name);
}

std::optional<unsigned> parse_thread_cap(const char* value) {
  if (value == nullptr || *value == '\0') return std::nullopt;
  const std::string s(value);
  if (s.find_first_not_of("0123456789") != std::string::npos || s.size() > 6) {
    throw ConfigError("EDGE_LAB_THREADS", "expected a positive integer, got \"" + s + "\"");
  }
  const unsigned n = static_cast<unsigned>(std::stoul(s));
  if (n == 0) throw ConfigError("EDGE_LAB_THREADS", "must be at least 1");
  return n;
}

}  // namespace edgelab::cli
