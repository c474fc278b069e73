#include "aanse/accel.hpp"
#include "aanse/fem.hpp"
#include "aanse/nse.hpp"
#include "aanse/report.hpp"
#include "aanse/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <thread>

namespace fs = std::filesystem;
using aanse::accel::AndersonConfig;
using aanse::accel::SolveTrace;
using aanse::linalg::CoeffVector;

namespace {

struct Options {
  std::string problem = "cavity2d";
  int n = 16;
  std::vector<double> reynolds = {100.0};
  std::vector<int> depths = {0};
  double beta = 1.0;
  double gamma_gd = 0.0;
  double tol_abs = 1e-8;
  double tol_rel = 0.0;
  int max_iters = 200;
  std::uint64_t seed = 1;
  std::string output_dir;
  bool with_newton = false;
  std::string export_vtk;
  std::string dump_matrix;
  bool timings = false;
  int jobs = 1;
  int dim = 50;           // linear-synthetic dimension
  double r_factor = 0.5;  // linear-synthetic contraction
  double forcing_scale = 1.0;
  std::string config_file;
};

std::string default_output_dir() {
  if (const char* env = std::getenv("AANSE_OUTPUT_DIR")) return env;
  return "out";
}

void add_common_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--problem", o.problem, "cavity2d | mms | linear-synthetic")
      ->check(CLI::IsMember({"cavity2d", "mms", "linear-synthetic"}));
  cmd->add_option("--n", o.n, "mesh cells per side");
  cmd->add_option("--re", o.reynolds, "Reynolds number(s)")->delimiter(',');
  cmd->add_option("--m", o.depths, "acceleration depth(s)")->delimiter(',');
  cmd->add_option("--beta", o.beta, "damping parameter in (0,1]");
  cmd->add_option("--gamma-gd", o.gamma_gd, "grad-div stabilization parameter");
  cmd->add_option("--tol-abs", o.tol_abs, "absolute residual tolerance");
  cmd->add_option("--tol-rel", o.tol_rel, "relative residual tolerance");
  cmd->add_option("--max-iters", o.max_iters, "iteration cap");
  cmd->add_option("--seed", o.seed, "seed for sampling operations");
  cmd->add_option("--output-dir", o.output_dir, "output root (env AANSE_OUTPUT_DIR)");
  cmd->add_flag("--newton", o.with_newton, "use/add the Newton baseline");
  cmd->add_option("--export-vtk", o.export_vtk, "write final state as legacy VTK");
  cmd->add_option("--dump-matrix", o.dump_matrix,
                  "write the initial system matrix in MatrixMarket format");
  cmd->add_flag("--timings", o.timings, "include wall times in trace.json");
  cmd->add_option("--jobs", o.jobs, "parallel runs for sweep");
  cmd->add_option("--dim", o.dim, "linear-synthetic dimension");
  cmd->add_option("--r-factor", o.r_factor, "linear-synthetic contraction factor");
  cmd->add_option("--forcing-scale", o.forcing_scale, "manufactured forcing scale");
  cmd->add_option("--config", o.config_file, "JSON config file (flags override)");
}

// Flags win over config-file values: only unset options are overwritten.
void apply_config_file(CLI::App* cmd, Options& o) {
  if (o.config_file.empty()) return;
  std::ifstream in(o.config_file);
  if (!in) throw std::runtime_error("cannot open config file " + o.config_file);
  nlohmann::json j;
  in >> j;

  auto unset = [&](const std::string& flag) { return cmd->count(flag) == 0; };
  if (j.contains("problem") && unset("--problem")) o.problem = j["problem"];
  if (j.contains("n") && unset("--n")) o.n = j["n"];
  if (j.contains("re") && unset("--re")) {
    o.reynolds.clear();
    if (j["re"].is_array())
      for (const auto& v : j["re"]) o.reynolds.push_back(v.get<double>());
    else
      o.reynolds.push_back(j["re"].get<double>());
  }
  if (j.contains("m") && unset("--m")) {
    o.depths.clear();
    if (j["m"].is_array())
      for (const auto& v : j["m"]) o.depths.push_back(v.get<int>());
    else
      o.depths.push_back(j["m"].get<int>());
  }
  if (j.contains("beta") && unset("--beta")) o.beta = j["beta"];
  if (j.contains("gamma_gd") && unset("--gamma-gd")) o.gamma_gd = j["gamma_gd"];
  if (j.contains("tol_abs") && unset("--tol-abs")) o.tol_abs = j["tol_abs"];
  if (j.contains("tol_rel") && unset("--tol-rel")) o.tol_rel = j["tol_rel"];
  if (j.contains("max_iters") && unset("--max-iters")) o.max_iters = j["max_iters"];
  if (j.contains("seed") && unset("--seed")) o.seed = j["seed"];
  if (j.contains("output_dir") && unset("--output-dir")) o.output_dir = j["output_dir"];
  if (j.contains("jobs") && unset("--jobs")) o.jobs = j["jobs"];
  if (j.contains("forcing_scale") && unset("--forcing-scale"))
    o.forcing_scale = j["forcing_scale"];
}

void validate(const Options& o) {
  if (o.n < 2) throw std::runtime_error("--n must be >= 2");
  if (o.reynolds.empty() || o.depths.empty())
    throw std::runtime_error("--re and --m must be nonempty");
  for (double re : o.reynolds)
    if (!(re > 0.0)) throw std::runtime_error("--re must be positive");
  for (int m : o.depths)
    if (m < 0) throw std::runtime_error("--m must be >= 0");
  if (!(o.beta > 0.0 && o.beta <= 1.0))
    throw std::runtime_error("--beta must lie in (0,1]");
  if (o.gamma_gd < 0.0) throw std::runtime_error("--gamma-gd must be >= 0");
  if (!(o.tol_abs > 0.0)) throw std::runtime_error("--tol-abs must be positive");
  if (o.tol_rel < 0.0) throw std::runtime_error("--tol-rel must be >= 0");
  if (o.max_iters < 1) throw std::runtime_error("--max-iters must be >= 1");
  if (o.jobs < 1) throw std::runtime_error("--jobs must be >= 1");
  if (!(o.r_factor > 0.0)) throw std::runtime_error("--r-factor must be positive");
  if (o.dim < 1) throw std::runtime_error("--dim must be >= 1");
}

AndersonConfig make_config(const Options& o, int m) {
  AndersonConfig cfg;
  cfg.depth_m = m;
  cfg.damping_beta = o.beta;
  cfg.max_iters = o.max_iters;
  cfg.tol_abs = o.tol_abs;
  cfg.tol_rel = o.tol_rel;
  return cfg;
}

std::string trim_number(double v) {
  std::string s = aanse::report::format_double(v);
  return s;
}

std::string run_name(const Options& o, double re, int m, bool newton) {
  if (o.problem == "linear-synthetic")
    return o.problem + "_d" + std::to_string(o.dim) + "_r" + trim_number(o.r_factor) +
           "_m" + std::to_string(m);
  std::string name =
      o.problem + "_n" + std::to_string(o.n) + "_re" + trim_number(re);
  name += newton ? "_newton" : "_m" + std::to_string(m);
  return name;
}

SolveTrace run_linear_synthetic(const Options& o, int m) {
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd g(o.dim, o.dim);
  for (int i = 0; i < o.dim; ++i)
    for (int j = 0; j < o.dim; ++j) g(i, j) = dist(rng);
  const Eigen::MatrixXd orth = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  const Eigen::MatrixXd a = o.r_factor * orth;
  CoeffVector b(o.dim);
  for (int i = 0; i < o.dim; ++i) b[i] = dist(rng);

  aanse::accel::FixedPointMap map{
      [a, b](const CoeffVector& u) { return CoeffVector(a * u + b); }};
  SolveTrace trace = aanse::accel::run_accelerated(
      map, CoeffVector::Zero(o.dim), make_config(o, m), aanse::linalg::InnerProduct());
  trace.config.emplace_back("solver", "anderson");
  trace.config.emplace_back("dim", std::to_string(o.dim));
  trace.config.emplace_back("r_factor", trim_number(o.r_factor));
  trace.config.emplace_back("m", std::to_string(m));
  return trace;
}

aanse::fem::DiscretizationPtr make_disc(const Options& o) {
  aanse::fem::BoundaryCondition bc;
  bc.kind = o.problem == "cavity2d"
                ? aanse::fem::BoundaryCondition::Kind::CavityLid
                : aanse::fem::BoundaryCondition::Kind::Homogeneous;
  bc.lid_speed = 1.0;
  return std::make_shared<aanse::fem::Discretization>(o.n, bc);
}

aanse::fem::ForcingSpec make_forcing(const Options& o) {
  if (o.problem == "mms")
    return aanse::fem::ForcingSpec::manufactured(o.forcing_scale);
  return aanse::fem::ForcingSpec::zero();
}

struct RunOutput {
  SolveTrace trace;
  fs::path dir;
};

RunOutput run_one(const Options& o, aanse::fem::DiscretizationPtr disc, double re,
                  int m, bool newton) {
  const fs::path dir =
      fs::path(o.output_dir.empty() ? default_output_dir() : o.output_dir) /
      run_name(o, re, m, newton);
  fs::create_directories(dir);

  SolveTrace trace;
  if (o.problem == "linear-synthetic") {
    trace = run_linear_synthetic(o, m);
  } else {
    aanse::nse::PicardOperator op(disc, re, make_forcing(o), o.gamma_gd);
    const auto u0 = op.solve_stokes();

    if (!o.dump_matrix.empty()) {
      const auto sys =
          newton ? aanse::fem::assemble_newton_system(disc->mesh, disc->dofmap,
                                                      u0.coeffs, op.nu(),
                                                      op.forcing(), o.gamma_gd)
                 : aanse::fem::assemble_picard_system(disc->mesh, disc->dofmap,
                                                      u0.coeffs, op.nu(),
                                                      op.forcing(), o.gamma_gd);
      aanse::linalg::write_matrix_market(sys.matrix, o.dump_matrix);
    }

    if (newton)
      trace = run_newton(op, u0, make_config(o, 0));
    else if (m == 0)
      trace = run_picard(op, u0, make_config(o, 0));
    else
      trace = run_anderson_picard(op, u0, make_config(o, m));

    if (!o.export_vtk.empty())
      aanse::fem::write_vtk(*disc, trace.final_iterate, o.export_vtk);
  }

  trace.config.emplace_back("problem", o.problem);
  trace.config.emplace_back("seed", std::to_string(o.seed));
  if (o.problem == "mms")
    trace.config.emplace_back("forcing_scale", trim_number(o.forcing_scale));

  aanse::report::emit_json(trace, (dir / "trace.json").string(), o.timings);
  aanse::report::emit_csv(trace, (dir / "trace.csv").string());
  const auto summary = aanse::report::summarize(trace);
  aanse::report::emit_summary_json(summary, (dir / "summary.json").string());
  return {std::move(trace), dir};
}

int exit_code_for(aanse::accel::TerminationStatus status) {
  switch (status) {
    case aanse::accel::TerminationStatus::Converged: return 0;
    case aanse::accel::TerminationStatus::MaxIters: return 2;
    case aanse::accel::TerminationStatus::Diverged: return 3;
  }
  return 1;
}

int cmd_solve(const Options& o) {
  if (o.reynolds.size() != 1 || o.depths.size() != 1)
    throw std::runtime_error("solve takes a single --re and --m; use sweep for lists");
  const auto disc = o.problem == "linear-synthetic"
                        ? aanse::fem::DiscretizationPtr{}
                        : make_disc(o);
  const auto out = run_one(o, disc, o.reynolds[0], o.depths[0], o.with_newton);
  const auto summary = aanse::report::summarize(out.trace);
  std::printf("%s: status=%s iters=%d theta_med=%s rate_med=%s\n",
              out.dir.filename().string().c_str(),
              aanse::accel::to_string(out.trace.status).c_str(),
              summary.iterations,
              aanse::report::format_double(summary.theta_median).c_str(),
              aanse::report::format_double(summary.conv_rate_median).c_str());
  std::printf("outputs in %s\n", out.dir.string().c_str());
  return exit_code_for(out.trace.status);
}

int cmd_sweep(const Options& o) {
  struct Job {
    double re;
    int m;
    bool newton;
  };
  std::vector<Job> jobs;
  for (double re : o.reynolds) {
    std::vector<int> ms = o.depths;
    if (std::find(ms.begin(), ms.end(), 0) == ms.end())
      ms.insert(ms.begin(), 0);  // paired reference run
    std::sort(ms.begin(), ms.end());
    for (int m : ms) jobs.push_back({re, m, false});
    if (o.with_newton) jobs.push_back({re, 0, true});
  }

  const auto disc = o.problem == "linear-synthetic"
                        ? aanse::fem::DiscretizationPtr{}
                        : make_disc(o);

  std::vector<RunOutput> outputs(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::mutex queue_mutex;
  size_t next = 0;
  auto worker = [&]() {
    while (true) {
      size_t idx;
      {
        std::lock_guard<std::mutex> lock(queue_mutex);
        if (next >= jobs.size()) return;
        idx = next++;
      }
      try {
        outputs[idx] = run_one(o, disc, jobs[idx].re, jobs[idx].m, jobs[idx].newton);
      } catch (const std::exception& e) {
        errors[idx] = e.what();
      }
    }
  };
  const int nthreads = std::min<int>(o.jobs, static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  bool any_error = false;
  const fs::path root(o.output_dir.empty() ? default_output_dir() : o.output_dir);
  std::ofstream table(root / "sweep_summary.csv");
  table << "problem,re,solver,m,status,iterations,theta_median,conv_rate_median,"
           "predicted_rate,kappa_hat,eta_max\n";

  for (double re : o.reynolds) {
    double reference = aanse::accel::nan_value();
    for (size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].re == re && jobs[i].m == 0 && !jobs[i].newton && errors[i].empty()) {
        reference =
            aanse::report::summarize(outputs[i].trace).conv_rate_median;
        break;
      }
    }
    std::printf("Re=%s (reference depth-0 median rate %s)\n", trim_number(re).c_str(),
                aanse::report::format_double(reference).c_str());
    std::printf("  %-8s %-3s %-10s %6s %11s %11s %11s\n", "solver", "m", "status",
                "iters", "theta_med", "rate_med", "predicted");

    std::vector<SolveTrace> panel;
    for (size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].re != re) continue;
      if (!errors[i].empty()) {
        any_error = true;
        std::printf("  run m=%d%s failed: %s\n", jobs[i].m,
                    jobs[i].newton ? " (newton)" : "", errors[i].c_str());
        continue;
      }
      const auto s = aanse::report::summarize(outputs[i].trace, reference);
      const char* solver = jobs[i].newton ? "newton" : (jobs[i].m ? "anderson" : "picard");
      std::printf("  %-8s %-3d %-10s %6d %11.4f %11.4f %11.4f\n", solver, jobs[i].m,
                  aanse::accel::to_string(s.status).c_str(), s.iterations,
                  s.theta_median, s.conv_rate_median, s.predicted_rate);
      table << o.problem << ',' << trim_number(re) << ',' << solver << ','
            << jobs[i].m << ',' << aanse::accel::to_string(s.status) << ','
            << s.iterations << ',' << aanse::report::format_double(s.theta_median)
            << ',' << aanse::report::format_double(s.conv_rate_median) << ','
            << aanse::report::format_double(s.predicted_rate) << ','
            << aanse::report::format_double(s.kappa_hat) << ','
            << aanse::report::format_double(s.eta_max) << '\n';
      panel.push_back(outputs[i].trace);
    }
    aanse::report::emit_gnuplot(panel,
                                (root / ("plots_re" + trim_number(re))).string());
  }
  return any_error ? 1 : 0;
}

struct AuditOptions {
  std::vector<std::string> files;
  double r_hat = aanse::accel::nan_value();
  double eta = aanse::accel::nan_value();
  double alpha_bar = aanse::accel::nan_value();
  double m_hat = aanse::accel::nan_value();
  std::uint64_t seed = 1;
};

void print_cor25_table(double r, double eta) {
  std::printf("sufficient-gain thresholds (r=%.6g, eta=%.6g):\n", r, eta);
  for (int m = 1; m <= 4; ++m) {
    std::printf("  m=%d:", m);
    try {
      std::printf(" k=1: %.6g", aanse::accel::theta_threshold(r, eta, m, 1));
      for (int k = 2; k <= m; ++k)
        std::printf("  k=%d: %.6g", k, aanse::accel::theta_threshold(r, eta, m, k));
      std::printf("  k>%d: %.6g\n", m,
                  aanse::accel::theta_threshold(r, eta, m, m + 1));
    } catch (const aanse::accel::HypothesisViolated&) {
      std::printf(" eta budget exceeded, no guarantee\n");
    }
  }
}

int cmd_audit(const AuditOptions& ao) {
  std::vector<SolveTrace> traces;
  for (const auto& f : ao.files) {
    try {
      traces.push_back(aanse::report::load_trace(f));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "audit: %s\n", e.what());
      return 1;
    }
  }

  // contraction estimate: explicit flag, else a depth-0 companion, else the
  // trace's own trajectory Lipschitz ratios
  double companion = aanse::accel::nan_value();
  for (const auto& t : traces)
    if (t.depth_m == 0 && !t.records.empty())
      companion = std::isfinite(companion)
                      ? std::max(companion, aanse::accel::max_lipschitz_ratio(t))
                      : aanse::accel::max_lipschitz_ratio(t);

  for (size_t i = 0; i < traces.size(); ++i) {
    const auto& trace = traces[i];
    const double r_hat = std::isfinite(ao.r_hat) ? ao.r_hat
                         : std::isfinite(companion)
                             ? companion
                             : aanse::accel::max_lipschitz_ratio(trace);
    std::printf("== %s (m=%d, %zu records, r_hat=%.6g) ==\n", ao.files[i].c_str(),
                trace.depth_m, trace.records.size(), r_hat);
    try {
      const auto report = aanse::accel::audit_recursion(trace, r_hat);
      std::printf("recursion bound: %d satisfied, %d violated (eta_max=%.3g)\n",
                  report.satisfied_count, report.violated_count, report.eta_max);
      std::printf("  %4s %13s %13s %13s  %s\n", "k", "lhs", "rhs", "slack", "ok");
      for (const auto& row : report.rows)
        std::printf("  %4d %13.6e %13.6e %13.6e  %s\n", row.k, row.lhs, row.rhs,
                    row.slack, row.satisfied ? "yes" : "NO");

      const double eta = std::isfinite(ao.eta) ? ao.eta : report.eta_max;
      if (trace.depth_m >= 1) {
        std::printf("per-step gain vs sufficient threshold:\n");
        for (const auto& rec : trace.records) {
          if (rec.k < 1 || !std::isfinite(rec.theta)) continue;
          try {
            const double thr = aanse::accel::theta_threshold(r_hat, eta,
                                                             trace.depth_m, rec.k);
            std::printf("  k=%-4d theta=%.4f threshold=%.4f %s\n", rec.k, rec.theta,
                        thr, rec.theta <= thr ? "ok" : "above");
          } catch (const aanse::accel::HypothesisViolated&) {
            std::printf("  k=%-4d theta=%.4f (eta budget exceeded, no guarantee)\n",
                        rec.k, rec.theta);
          }
        }
      }
    } catch (const aanse::accel::InsufficientTrace& e) {
      std::printf("recursion audit skipped: %s\n", e.what());
    }

    if (trace.depth_m == 1) {
      double m_hat = ao.m_hat;
      if (!std::isfinite(m_hat)) {
        // rebuild the discretization named by the config echo to sample the
        // trilinear bound
        std::string problem;
        int n = 0;
        for (const auto& [k, v] : trace.config) {
          if (k == "problem") problem = v;
          if (k == "n") n = std::stoi(v);
        }
        if (n >= 2 && (problem == "cavity2d" || problem == "mms")) {
          aanse::fem::BoundaryCondition bc;
          bc.kind = problem == "cavity2d"
                        ? aanse::fem::BoundaryCondition::Kind::CavityLid
                        : aanse::fem::BoundaryCondition::Kind::Homogeneous;
          const auto disc = std::make_shared<aanse::fem::Discretization>(n, bc);
          m_hat = aanse::nse::estimate_trilinear_bound(*disc, 20, ao.seed);
        }
      }
      double nu = aanse::accel::nan_value();
      for (const auto& [k, v] : trace.config)
        if (k == "reynolds") nu = 1.0 / std::stod(v);
      if (std::isfinite(m_hat) && std::isfinite(nu)) {
        try {
          const auto nrep =
              aanse::nse::audit_nse_m1(trace, r_hat, ao.alpha_bar, m_hat, nu);
          std::printf(
              "residual contraction bound (M_hat=%.4g, C0=%.4g): %d satisfied, %d "
              "violated; error-residual bound: %d satisfied, %d violated\n",
              nrep.m_hat, nrep.c0, nrep.satisfied_count, nrep.violated_count,
              nrep.crit2_satisfied_count, nrep.crit2_violated_count);
        } catch (const aanse::accel::InsufficientTrace& e) {
          std::printf("residual audit skipped: %s\n", e.what());
        }
      } else {
        std::printf("residual audit skipped: supply --m-hat for this trace\n");
      }
    }
  }

  const double table_r = std::isfinite(ao.r_hat) ? ao.r_hat : companion;
  const double table_eta = std::isfinite(ao.eta) ? ao.eta : 0.1;
  if (std::isfinite(table_r)) print_cor25_table(table_r, table_eta);
  return 0;
}

int cmd_verify(const std::string& level_name, std::uint64_t seed, bool flip_bstar) {
  aanse::fem::testhooks::flip_trilinear_sign = flip_bstar;
  const auto level = level_name == "quick" ? aanse::verify::Level::Quick
                                           : aanse::verify::Level::Full;
  const auto results = aanse::verify::run_all(level, seed);
  bool all_pass = true;
  std::string first_failure;
  for (const auto& r : results) {
    std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    if (!r.pass && all_pass) first_failure = r.name;
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) {
    std::printf("FIRST FAILURE: %s\n", first_failure.c_str());
    return 1;
  }
  std::printf("all checks passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anderson-accelerated solvers for the steady lid-driven cavity"};
  app.require_subcommand(1);

  Options solve_opts, sweep_opts;
  auto* solve = app.add_subcommand("solve", "run one (problem, Re, m) combination");
  add_common_flags(solve, solve_opts);
  auto* sweep = app.add_subcommand("sweep", "run a Re x m grid with a depth-0 reference");
  add_common_flags(sweep, sweep_opts);

  AuditOptions audit_opts;
  auto* audit = app.add_subcommand("audit", "evaluate theory bounds on recorded traces");
  audit->add_option("files", audit_opts.files, "trace JSON files")->required();
  audit->add_option("--r-hat", audit_opts.r_hat, "contraction estimate");
  audit->add_option("--eta", audit_opts.eta, "coefficient budget for thresholds");
  audit->add_option("--alpha-bar", audit_opts.alpha_bar, "latest-coefficient bound");
  audit->add_option("--m-hat", audit_opts.m_hat, "trilinear-form bound estimate");
  audit->add_option("--seed", audit_opts.seed, "seed for bound sampling");

  std::string verify_level = "full";
  std::uint64_t verify_seed = 1;
  bool flip_bstar = false;
  auto* verify = app.add_subcommand("verify", "run the property suites");
  verify->add_option("--level", verify_level, "quick | full")
      ->check(CLI::IsMember({"quick", "full"}));
  verify->add_option("--seed", verify_seed, "property-test seed");
  verify
      ->add_flag("--inject-bstar-flip", flip_bstar,
                 "flip the convective-form sign (verification self-test)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (solve->parsed()) {
      apply_config_file(solve, solve_opts);
      validate(solve_opts);
      return cmd_solve(solve_opts);
    }
    if (sweep->parsed()) {
      apply_config_file(sweep, sweep_opts);
      validate(sweep_opts);
      return cmd_sweep(sweep_opts);
    }
    if (audit->parsed()) return cmd_audit(audit_opts);
    if (verify->parsed()) return cmd_verify(verify_level, verify_seed, flip_bstar);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
