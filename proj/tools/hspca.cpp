#include "hspca/aspca.hpp"
#include "hspca/basis.hpp"
#include "hspca/hspcr.hpp"
#include "hspca/inference.hpp"
#include "hspca/io.hpp"
#include "hspca/simgen.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>

using namespace hspca;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct BasisOptions {
  std::string kind = "bspline";
  int degree = 3;
  int knots = 5;
  std::string mesh;
  std::vector<double> spacing;
  std::string mask;
  double drop_tol = 1e-10;

  void add(CLI::App* app) {
    app->add_option("--basis", kind, "Projection basis")->check(CLI::IsMember({"bspline", "tri"}))->capture_default_str();
    app->add_option("--degree", degree, "B-spline degree")->capture_default_str();
    app->add_option("--knots", knots, "Interior knots per axis (B-spline)")->capture_default_str();
    app->add_option("--mesh", mesh, "Triangulation file (tri basis)");
    app->add_option("--spacing", spacing, "Grid spacing per axis (default 1)");
    app->add_option("--mask", mask, "Grid file; nonzero cells form the domain");
    app->add_option("--drop-tol", drop_tol, "Relative Gram eigenvalue cutoff")->capture_default_str();
  }

  json echo() const {
    json j{{"basis", kind}, {"drop_tol", drop_tol}};
    if (kind == "bspline") {
      j["degree"] = degree;
      j["knots"] = knots;
    } else {
      j["mesh"] = mesh;
    }
    if (!spacing.empty()) j["spacing"] = spacing;
    if (!mask.empty()) j["mask"] = mask;
    return j;
  }
};

struct Loaded {
  std::vector<std::size_t> grid;
  RowMat<double> sample;
  std::optional<AmbientSpace<double>> space;
};

Loaded load_data(const std::string& path, const BasisOptions& b) {
  Loaded l;
  l.sample = io::read_sample(path, l.grid);
  l.space = AmbientSpace<double>::grid(l.grid, b.spacing);
  if (!b.mask.empty()) {
    const io::GridData m = io::read_grid(b.mask);
    if (m.dims != l.grid) throw ConformanceError("mask grid dimensions differ from the data grid");
    std::vector<bool> inside(m.values.size());
    for (std::size_t v = 0; v < inside.size(); ++v) inside[v] = m.values[v] != 0;
    l.space = mask_space(*l.space, inside);
  }
  return l;
}

BasisSet<double> build_basis(const AmbientSpace<double>& space, const BasisOptions& b, int knots) {
  if (b.kind == "bspline") return bspline_tensor_basis(space, {b.degree}, {knots});
  if (b.mesh.empty()) throw ConfigError("--basis tri needs --mesh");
  return tri_pl_basis(space, io::read_triangulation(b.mesh));
}

/// Output directory plus the manifest shared by every subcommand.
struct Run {
  std::string command;
  std::string out = "hspca-out";
  json config = json::object();
  json results = json::object();
  std::map<std::string, std::string> files;  // name -> checksum
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  std::string path(const std::string& name) const { return (std::filesystem::path(out) / name).string(); }

  void prepare() const {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw FormatError("cannot create output directory '" + out + "'");
  }

  void write(const std::string& name, const std::string& bytes) {
    io::atomic_write(path(name), bytes);
    files[name] = io::checksum(bytes);
  }
  void write_table(const std::string& name, const io::Table& t) { write(name, io::table_to_csv(t)); }
  void write_grid(const std::string& name, const std::vector<std::size_t>& dims, const double* values) {
    write(name, io::encode_grid(dims, values));
  }

  void finish(int threads) const {
    json m;
    m["command"] = command;
    m["version"] = io::kVersion;
    m["config"] = config;
    m["results"] = results;
    m["outputs"] = files;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    m["runtime"] = {{"wall_seconds", wall}, {"threads", threads}, {"out", out}};
    io::write_manifest(path("manifest.json"), m);
  }
};

io::Table ci_table(const CiTable& t) {
  io::Table out;
  out.columns = {"term", "estimate", "lower", "upper", "se"};
  for (const auto& r : t.rows)
    out.add_row({r.term, io::format_double(r.estimate), io::format_double(r.lower), io::format_double(r.upper),
                 io::format_double(r.se)});
  return out;
}

std::string fmt(double v) { return io::format_double(v); }

// ---------------------------------------------------------------------------

struct FitCmd {
  std::string data;
  BasisOptions basis;
};

int run_fit(const FitCmd& c, Run& run, int threads) {
  const Loaded l = load_data(c.data, c.basis);
  const auto b = build_basis(*l.space, c.basis, c.basis.knots);
  const EigenModel<double> model = fit_aspca(*l.space, b, l.sample, c.basis.drop_tol);
  run.prepare();
  io::Table ev;
  ev.columns = {"component", "eigenvalue", "cumulative_fraction"};
  double cum = 0;
  for (Index j = 0; j < model.rank(); ++j) {
    cum += model.lambdas(j);
    ev.add_row({std::to_string(j + 1), fmt(model.lambdas(j)),
                fmt(model.total_variance > 0 ? cum / model.total_variance : 0.0)});
  }
  run.write_table("eigenvalues.csv", ev);
  std::vector<std::size_t> fdims{std::size_t(model.rank())};
  fdims.insert(fdims.end(), l.grid.begin(), l.grid.end());
  if (model.rank() > 0) run.write_grid("eigenfunctions.hsg", fdims, model.eigenfunctions.data());
  run.write_grid("mean.hsg", l.grid, model.mean.data());
  run.results = {{"n", l.sample.rows()},
                 {"basis_size", b.size()},
                 {"basis_dropped_rows", b.dropped},
                 {"whitened_rank", model.whitener.rank},
                 {"components", model.rank()},
                 {"total_variance", model.total_variance}};
  run.finish(threads);
  std::cout << "components=" << model.rank() << " total_variance=" << fmt(model.total_variance) << "\n";
  for (Index j = 0; j < model.rank(); ++j) std::cout << "lambda" << j + 1 << "=" << fmt(model.lambdas(j)) << "\n";
  return 0;
}

struct DiagnoseCmd {
  std::string data;
  BasisOptions basis;
  double alpha = 0.05;
  bool auto_knots = false;
};

int run_diagnose(const DiagnoseCmd& c, Run& run, int threads) {
  if (c.auto_knots && c.basis.kind != "bspline") throw ConfigError("--auto-knots needs --basis bspline");
  const Loaded l = load_data(c.data, c.basis);
  int knots = c.basis.knots;
  DiagnosticReport<double> rep;
  json steps = json::array();
  const int max_refinements = c.auto_knots ? 4 : 0;
  for (int step = 0;; ++step) {
    const auto b = build_basis(*l.space, c.basis, knots);
    rep = diagnose_projection(*l.space, b, l.sample, c.alpha, c.basis.drop_tol);
    steps.push_back({{"knots", knots}, {"basis_size", b.size()}, {"delta_hat", rep.delta_hat},
                     {"t_stat", rep.t_stat}, {"reject", rep.reject}});
    if (c.auto_knots)
      std::cout << "knots=" << knots << " basis_size=" << b.size() << " T=" << fmt(rep.t_stat)
                << " reject=" << (rep.reject ? "true" : "false") << "\n";
    if (!rep.reject || step >= max_refinements) break;
    knots = 2 * knots + 1;  // nested refinement: old knots stay knots
  }
  run.prepare();
  io::Table t;
  t.columns = {"n", "knots", "delta_hat", "delta_variance_form", "s2_hat", "t_stat", "alpha", "critical", "reject"};
  t.add_row({std::to_string(rep.n), std::to_string(knots), fmt(rep.delta_hat), fmt(rep.delta_variance_form),
             fmt(rep.s2_hat), fmt(rep.t_stat), fmt(rep.alpha), fmt(rep.critical), rep.reject ? "true" : "false"});
  run.write_table("diagnostic.csv", t);
  run.results = {{"delta_hat", rep.delta_hat}, {"s2_hat", rep.s2_hat}, {"t_stat", rep.t_stat},
                 {"critical", rep.critical},   {"reject", rep.reject},  {"steps", steps}};
  run.finish(threads);
  std::cout << "delta_hat=" << fmt(rep.delta_hat) << "\n"
            << "s2_hat=" << fmt(rep.s2_hat) << "\n"
            << "t_stat=" << fmt(rep.t_stat) << "\n"
            << "critical=" << fmt(rep.critical) << "\n"
            << "reject=" << (rep.reject ? "true" : "false") << "\n";
  return 0;
}

struct PveCmd {
  std::string data;
  BasisOptions basis;
  double tau = 0.95;
};

int run_pve(const PveCmd& c, Run& run, int threads) {
  const Loaded l = load_data(c.data, c.basis);
  const auto b = build_basis(*l.space, c.basis, c.basis.knots);
  const EigenModel<double> model = fit_aspca(*l.space, b, l.sample, c.basis.drop_tol);
  const PveSelection<double> sel = select_pve(model, c.tau);
  run.prepare();
  io::Table t;
  t.columns = {"component", "eigenvalue", "cumulative_fraction"};
  for (Index j = 0; j < model.rank(); ++j)
    t.add_row({std::to_string(j + 1), fmt(model.lambdas(j)), fmt(sel.cumulative_fractions(j))});
  run.write_table("pve.csv", t);
  run.results = {{"m_hat", sel.m}, {"tau", sel.tau}, {"total_variance", model.total_variance}};
  run.finish(threads);
  std::cout << "m_hat=" << sel.m << "\n";
  for (Index j = 0; j < model.rank(); ++j)
    std::cout << "pve" << j + 1 << "=" << fmt(sel.cumulative_fractions(j)) << "\n";
  return 0;
}

struct RegressCmd {
  std::string data, y, x, treatment, y_column = "y";
  BasisOptions basis;
  int m = -1;
  double tau = 0.95;
  double level = 0.95;
  int b_reps = 300;
  std::uint64_t seed = 0;
  std::string kind = "nonparametric";
  int r = 0;
};

struct RegressionInputs {
  Loaded data;
  BasisSet<double> basis;
  PipelineInputs<double> in;
};

RegressionInputs load_regression(const RegressCmd& c) {
  RegressionInputs ri;
  ri.data = load_data(c.data, c.basis);
  ri.basis = build_basis(*ri.data.space, c.basis, c.basis.knots);
  const io::Table yt = io::read_table(c.y);
  std::string ycol = c.y_column;
  if (!yt.has_column(ycol)) {
    if (yt.columns.size() != 1) throw SchemaError(c.y + ": no column '" + ycol + "'");
    ycol = yt.columns[0];
  }
  const auto yv = yt.numeric(ycol);
  ri.in.y = Eigen::Map<const Vec<double>>(yv.data(), Index(yv.size()));
  const io::Table xt = io::read_table(c.x);
  std::vector<std::string> names;
  for (const auto& col : xt.columns)
    if (col != c.treatment) names.push_back(col);
  if (!c.treatment.empty()) {
    const auto a = xt.numeric(c.treatment);
    std::vector<bool> arm(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] != 0 && a[i] != 1)
        throw SchemaError(c.x + ": column '" + c.treatment + "', row " + std::to_string(i + 1) + " must be 0 or 1");
      arm[i] = a[i] == 1;
    }
    ri.in.treatment = std::move(arm);
  }
  ri.in.x = xt.numeric_matrix(names.empty() ? std::vector<std::string>{} : names);
  if (names.empty()) ri.in.x.resize(Index(xt.rows.size()), 0);
  ri.in.x_names = names;
  ri.in.m = c.m;
  ri.in.tau = c.tau;
  ri.in.drop_tol = c.basis.drop_tol;
  if (ri.in.y.size() != ri.data.sample.rows() || ri.in.x.rows() != ri.data.sample.rows())
    throw ConformanceError("y has " + std::to_string(ri.in.y.size()) + " rows, x " + std::to_string(ri.in.x.rows()) +
                           ", data " + std::to_string(ri.data.sample.rows()));
  return ri;
}

void write_regression(Run& run, const RegressionInputs& ri, const PipelineFit<double>& pf, const CiTable& table) {
  run.prepare();
  run.write_table("coefficients.csv", ci_table(table));
  const Index q = 1 + pf.design.d() + pf.m;
  if (pf.m > 0) {
    ThetaFit<double> base = pf.fit;
    base.theta = pf.fit.theta.head(q);
    const Vec<double> g = gamma_element(base, pf.model);
    run.write_grid("gamma.hsg", ri.data.grid, g.data());
    if (pf.precision()) {
      base.theta = pf.fit.theta.segment(q, q);
      const Vec<double> gt = gamma_element(base, pf.model);
      run.write_grid("gamma_treatment.hsg", ri.data.grid, gt.data());
    }
  }
  run.results = {{"n", ri.data.sample.rows()}, {"components", pf.m}, {"method", table.method},
                 {"level", table.level},       {"replicates_completed", table.completed},
                 {"replicates_failed", table.failed}, {"condition", pf.fit.condition}};
  for (const auto& r : table.rows)
    std::cout << r.term << " " << fmt(r.estimate) << " (" << fmt(r.lower) << ", " << fmt(r.upper) << ")\n";
}

json regression_echo(const RegressCmd& c) {
  json j = c.basis.echo();
  j["data"] = c.data;
  j["y"] = c.y;
  j["x"] = c.x;
  j["y_column"] = c.y_column;
  if (!c.treatment.empty()) j["treatment"] = c.treatment;
  j["m"] = c.m;
  j["tau"] = c.tau;
  j["level"] = c.level;
  return j;
}

int run_regress(const RegressCmd& c, Run& run, int threads) {
  const RegressionInputs ri = load_regression(c);
  const PipelineFit<double> pf = fit_pipeline(*ri.data.space, ri.basis, ri.data.sample, ri.in);
  const CiTable table = plugin_table(*ri.data.space, ri.data.sample, pf, c.level);
  write_regression(run, ri, pf, table);
  run.finish(threads);
  return 0;
}

int run_bootstrap(const RegressCmd& c, Run& run, int threads) {
  const RegressionInputs ri = load_regression(c);
  BootstrapSpec spec;
  spec.kind = parse_bootstrap_kind(c.kind);
  spec.b_reps = c.b_reps;
  spec.base_seed = c.seed;
  spec.level = c.level;
  spec.threads = threads;
  const auto res = bootstrap_theta(*ri.data.space, ri.basis, ri.data.sample, ri.in, spec);
  write_regression(run, ri, res.point, res.table);
  run.finish(threads);
  return 0;
}

int run_jackknife(const RegressCmd& c, Run& run, int threads) {
  const RegressionInputs ri = load_regression(c);
  JackknifeSpec spec;
  spec.r = c.r;
  spec.level = c.level;
  spec.threads = threads;
  const auto res = block_jackknife(*ri.data.space, ri.basis, ri.data.sample, ri.in, spec);
  write_regression(run, ri, res.point, res.table);
  run.finish(threads);
  return 0;
}

// ---------------------------------------------------------------------------

io::Table metrics_csv(const MetricsTable& t) {
  io::Table out;
  out.columns = {"parameter", "truth", "mse", "median_sq_error", "coverage", "mean_se"};
  for (const auto& p : t.params)
    out.add_row({p.name, fmt(p.truth), fmt(p.mse), fmt(p.median_sq_error), fmt(p.coverage), fmt(p.mean_se)});
  return out;
}

json metrics_summary(const MetricsTable& t) {
  json hist = json::object();
  for (auto [m, k] : t.m_hist) hist[std::to_string(m)] = k;
  json j{{"reps", t.reps}, {"failed", t.failed}, {"m_hat_counts", hist}};
  if (!std::isnan(t.reject_rate)) {
    j["reject_rate"] = t.reject_rate;
    j["mean_delta_hat"] = t.mean_delta;
  }
  return j;
}

struct SimulateCmd {
  std::string config;
  int reps = 100;
  std::optional<std::uint64_t> seed;
  std::string emit_data;
};

int run_simulate(const SimulateCmd& c, Run& run, int threads) {
  ScenarioConfig cfg = io::read_scenario(c.config);
  if (c.seed) cfg.seed = *c.seed;
  run.config = {{"scenario", io::scenario_to_json(cfg)}, {"reps", c.reps}};
  const MetricsTable t = run_monte_carlo(cfg, c.reps, threads);
  run.prepare();
  run.write_table("metrics.csv", metrics_csv(t));
  io::Table mh;
  mh.columns = {"m_hat", "count"};
  for (auto [m, k] : t.m_hist) mh.add_row({std::to_string(m), std::to_string(k)});
  run.write_table("m_hat.csv", mh);
  if (!c.emit_data.empty()) {
    // data of replication 0, so the files can be fed back into the other subcommands
    const AmbientSpace<double> space = unit_space(cfg.dims);
    const TrueFamily fam = make_family(space, cfg.family, cfg.lambdas.size());
    auto rng = stream_rng(cfg.seed, 0);
    const SimulatedData d = simulate_data(cfg, space, fam, rng);
    std::error_code ec;
    std::filesystem::create_directories(c.emit_data, ec);
    if (ec) throw FormatError("cannot create '" + c.emit_data + "'");
    io::write_sample((std::filesystem::path(c.emit_data) / "data.hsg").string(), cfg.dims, d.sample);
    io::Table yt, xt;
    yt.columns = {"y"};
    for (Index i = 0; i < d.y.size(); ++i) yt.add_row({fmt(d.y(i))});
    for (Index k = 0; k < d.x.cols(); ++k) xt.columns.push_back("X" + std::to_string(k + 1));
    for (Index i = 0; i < d.x.rows(); ++i) {
      std::vector<std::string> row;
      for (Index k = 0; k < d.x.cols(); ++k) row.push_back(fmt(d.x(i, k)));
      xt.add_row(row);
    }
    io::write_table((std::filesystem::path(c.emit_data) / "y.csv").string(), yt);
    io::write_table((std::filesystem::path(c.emit_data) / "x.csv").string(), xt);
  }
  run.results = metrics_summary(t);
  if (!c.emit_data.empty()) {
    std::vector<double> spacing;
    for (auto n : cfg.dims) spacing.push_back(1.0 / double(n));
    run.results["emitted_spacing"] = spacing;
  }
  run.finish(threads);
  for (const auto& p : t.params)
    std::cout << p.name << " mse=" << fmt(p.mse) << (std::isnan(p.coverage) ? "" : " coverage=" + fmt(p.coverage))
              << "\n";
  return 0;
}

struct ReproduceCmd {
  int table = 1;
  std::string scale = "desk";
  int reps = 100;
  std::uint64_t seed = 1;
  int b_reps = 300;
  bool shared_seeds = false;
};

int run_reproduce(const ReproduceCmd& c, Run& run, int threads) {
  const bool paper = c.scale == "paper";
  const bool three_d = c.table == 5 || c.table == 6;
  const bool coefficients = c.table == 2 || c.table == 3 || c.table == 6;
  io::Table out;
  std::vector<std::string> cols{"n", "r"};
  json runs = json::array();
  for (double r : {0.0, 0.5}) {
    for (Index n : {100, 500, 2000}) {
      ScenarioConfig cfg = three_d ? scenario_3d(n, r, paper) : scenario_2d(n, r, paper);
      // shared seeds reuse the same image draws across correlation scenarios
      cfg.seed = c.shared_seeds || r == 0.0 ? c.seed : splitmix64(c.seed ^ 0x5EEDULL);
      cfg.seed = splitmix64(cfg.seed + std::uint64_t(n));
      if (coefficients) {
        cfg.inference = InferenceKind::bootstrap;
        cfg.b_reps = c.b_reps;
      }
      if (c.table == 4) cfg.diagnose = true;
      const MetricsTable t = run_monte_carlo(cfg, c.reps, threads);
      std::vector<std::string> row{std::to_string(n), fmt(r)};
      std::vector<std::string> names;
      auto add = [&](const std::string& name, double v) {
        names.push_back(name);
        row.push_back(fmt(v));
      };
      double m_mean = 0;
      for (auto [m, k] : t.m_hist) m_mean += double(m) * k;
      m_mean /= double(t.reps - t.failed);
      const Index J = cfg.lambdas.size();
      if (c.table == 1 || c.table == 5) {
        for (Index j = 0; j < J; ++j) add("lambda" + std::to_string(j + 1) + "_mse", t.params[std::size_t(j)].mse);
        add("m_hat_mean", m_mean);
      } else if (c.table == 4) {
        add("reject_rate", t.reject_rate);
        add("mean_delta_hat", t.mean_delta);
        add("m_hat_mean", m_mean);
        add("m_hat_eq_6", t.m_hist.count(6) ? double(t.m_hist.at(6)) / double(t.reps - t.failed) : 0.0);
      } else {
        for (const auto& p : t.params) {
          const bool gamma_score = p.name.rfind("gamma", 0) == 0 && p.name != "gamma";
          const bool linear = p.name == "alpha" || p.name.rfind("beta", 0) == 0;
          const bool want = c.table == 2 ? linear : c.table == 3 ? gamma_score : (linear || gamma_score);
          if (!want) continue;
          add(p.name + "_mse", p.mse);
          add(p.name + "_coverage", p.coverage);
        }
      }
      if (out.columns.empty()) {
        out.columns = cols;
        out.columns.insert(out.columns.end(), names.begin(), names.end());
      }
      out.add_row(row);
      runs.push_back({{"n", n}, {"r", r}, {"seed", cfg.seed}, {"summary", metrics_summary(t)}});
      std::cerr << "table " << c.table << ": n=" << n << " r=" << fmt(r) << " done\n";
    }
  }
  run.prepare();
  run.write_table("table" + std::to_string(c.table) + ".csv", out);
  run.results = {{"runs", runs}};
  run.finish(threads);
  std::cout << io::table_to_csv(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive subspace PCA and principal component regression for gridded data"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: HSPCA_THREADS or 1)");
  Run run;

  FitCmd fit;
  auto* fit_app = app.add_subcommand("fit", "Estimate eigenvalues and eigenfunctions");
  fit_app->add_option("--data", fit.data, "Sample grid file")->required();
  fit.basis.add(fit_app);
  fit_app->add_option("--out", run.out, "Output directory")->capture_default_str();

  DiagnoseCmd diag;
  auto* diag_app = app.add_subcommand("diagnose", "Projection-accuracy test");
  diag_app->add_option("--data", diag.data, "Sample grid file")->required();
  diag.basis.add(diag_app);
  diag_app->add_option("--alpha", diag.alpha, "Test level in (0, 0.05]")->capture_default_str();
  diag_app->add_flag("--auto-knots", diag.auto_knots, "Refine knots (k -> 2k+1) until the test passes, at most 4 times");
  diag_app->add_option("--out", run.out, "Output directory")->capture_default_str();

  PveCmd pve;
  auto* pve_app = app.add_subcommand("pve", "Select the number of components by explained variance");
  pve_app->add_option("--data", pve.data, "Sample grid file")->required();
  pve.basis.add(pve_app);
  pve_app->add_option("--tau", pve.tau, "Variance threshold")->capture_default_str();
  pve_app->add_option("--out", run.out, "Output directory")->capture_default_str();

  RegressCmd reg;
  auto add_regression = [&](const std::string& name, const std::string& help) {
    auto* a = app.add_subcommand(name, help);
    a->add_option("--data", reg.data, "Sample grid file")->required();
    a->add_option("--y", reg.y, "Response table")->required();
    a->add_option("--x", reg.x, "Covariate table")->required();
    a->add_option("--y-column", reg.y_column, "Response column")->capture_default_str();
    a->add_option("--treatment", reg.treatment, "0/1 column of the covariate table holding the treatment");
    reg.basis.add(a);
    a->add_option("--components", reg.m, "Number of components (default: PVE rule)");
    a->add_option("--tau", reg.tau, "PVE threshold")->capture_default_str();
    a->add_option("--level", reg.level, "Confidence level")->capture_default_str();
    a->add_option("--out", run.out, "Output directory")->capture_default_str();
    return a;
  };
  auto* reg_app = add_regression("regress", "Fit HS-PCR with plug-in intervals");
  auto* boot_app = add_regression("bootstrap", "Bootstrap intervals for HS-PCR coefficients");
  boot_app->add_option("--B", reg.b_reps, "Bootstrap replicates")->capture_default_str();
  boot_app->add_option("--seed", reg.seed, "Base seed")->capture_default_str();
  boot_app->add_option("--kind", reg.kind, "Weights")->check(CLI::IsMember({"nonparametric", "wild"}))->capture_default_str();
  auto* jack_app = add_regression("jackknife", "Block-jackknife intervals for HS-PCR coefficients");
  jack_app->add_option("--r", reg.r, "Number of blocks (> p + 1)")->required();

  SimulateCmd sim;
  auto* sim_app = app.add_subcommand("simulate", "Monte Carlo study from a scenario file");
  sim_app->add_option("--config", sim.config, "Scenario JSON")->required();
  sim_app->add_option("--reps", sim.reps, "Replications")->capture_default_str();
  sim_app->add_option("--seed", sim.seed, "Override the scenario seed");
  sim_app->add_option("--emit-data", sim.emit_data, "Also write replication 0's data to this directory");
  sim_app->add_option("--out", run.out, "Output directory")->capture_default_str();

  ReproduceCmd rep;
  auto* rep_app = app.add_subcommand("reproduce", "Regenerate a simulation table analog");
  rep_app->add_option("--table", rep.table, "Table number")->required()->check(CLI::Range(1, 6));
  rep_app->add_option("--scale", rep.scale, "Grid scale")->check(CLI::IsMember({"desk", "paper"}))->capture_default_str();
  rep_app->add_option("--reps", rep.reps, "Replications per setting")->capture_default_str();
  rep_app->add_option("--seed", rep.seed, "Base seed")->capture_default_str();
  rep_app->add_option("--B", rep.b_reps, "Bootstrap replicates (tables 2, 3, 6)")->capture_default_str();
  rep_app->add_flag("--shared-seeds", rep.shared_seeds, "Reuse image draws across correlation settings");
  rep_app->add_option("--out", run.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (threads < 0) throw ConfigError("--threads must be nonnegative");
    if (threads == 0) threads = default_threads();
    if (*fit_app) {
      run.command = "fit";
      run.config = fit.basis.echo();
      run.config["data"] = fit.data;
      return run_fit(fit, run, threads);
    }
    if (*diag_app) {
      run.command = "diagnose";
      run.config = diag.basis.echo();
      run.config["data"] = diag.data;
      run.config["alpha"] = diag.alpha;
      run.config["auto_knots"] = diag.auto_knots;
      return run_diagnose(diag, run, threads);
    }
    if (*pve_app) {
      run.command = "pve";
      run.config = pve.basis.echo();
      run.config["data"] = pve.data;
      run.config["tau"] = pve.tau;
      return run_pve(pve, run, threads);
    }
    if (*reg_app) {
      run.command = "regress";
      run.config = regression_echo(reg);
      return run_regress(reg, run, threads);
    }
    if (*boot_app) {
      run.command = "bootstrap";
      run.config = regression_echo(reg);
      run.config["B"] = reg.b_reps;
      run.config["seed"] = reg.seed;
      run.config["kind"] = reg.kind;
      return run_bootstrap(reg, run, threads);
    }
    if (*jack_app) {
      run.command = "jackknife";
      run.config = regression_echo(reg);
      run.config["r"] = reg.r;
      return run_jackknife(reg, run, threads);
    }
    if (*sim_app) {
      run.command = "simulate";
      return run_simulate(sim, run, threads);
    }
    if (*rep_app) {
      run.command = "reproduce";
      run.config = {{"table", rep.table}, {"scale", rep.scale}, {"reps", rep.reps}, {"seed", rep.seed},
                    {"B", rep.b_reps},    {"shared_seeds", rep.shared_seeds}};
      return run_reproduce(rep, run, threads);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.numerical() ? kExitNumerical : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInput;
}
