#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aanse/nse.hpp"
#include "aanse/report.hpp"

#include <cmath>
#include <random>

using namespace aanse;
using accel::AndersonConfig;
using accel::TerminationStatus;
using fem::BoundaryCondition;
using fem::Discretization;
using linalg::CoeffVector;

namespace {

const BoundaryCondition kLid{BoundaryCondition::Kind::CavityLid, 1.0};
const BoundaryCondition kHomog{BoundaryCondition::Kind::Homogeneous, 0.0};

AndersonConfig config(int m, double tol = 1e-10, int iters = 80) {
  AndersonConfig cfg;
  cfg.depth_m = m;
  cfg.tol_abs = tol;
  cfg.max_iters = iters;
  return cfg;
}

CoeffVector random_interior(const Discretization& disc, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  CoeffVector v = CoeffVector::Zero(disc.dofmap.total_dofs());
  for (int node = 0; node < disc.dofmap.n_velocity_nodes(); ++node) {
    if (disc.dofmap.vnode_on_boundary(node)) continue;
    v[disc.dofmap.velocity_dof(0, node)] = dist(rng);
    v[disc.dofmap.velocity_dof(1, node)] = dist(rng);
  }
  return v;
}

}  // namespace

TEST_CASE("apply_G at the zero state equals the Stokes solution") {
  auto disc = std::make_shared<Discretization>(8, kLid);
  nse::PicardOperator op(disc, 100.0, fem::ForcingSpec::zero(), 0.0);
  const CoeffVector zero = CoeffVector::Zero(disc->dofmap.total_dofs());
  const CoeffVector g0 = op.apply_G(zero);
  const auto stokes = op.solve_stokes();
  for (int i = 0; i < g0.size(); ++i) CHECK(g0[i] == stokes.coeffs[i]);
  CHECK(fem::h1_seminorm(stokes.coeffs, *disc) > 0.1);
}

TEST_CASE("solution-operator bound against the discrete dual norm") {
  auto disc = std::make_shared<Discretization>(8, kHomog);
  const double re = 2.0;
  const auto forcing = fem::ForcingSpec::manufactured(0.1);
  nse::PicardOperator op(disc, re, forcing, 0.0);
  const double dual =
      nse::discrete_dual_norm(*disc, fem::assemble_forcing(disc->mesh, disc->dofmap,
                                                           forcing, op.nu()));
  CHECK(dual > 0.0);
  std::mt19937_64 rng(7);
  for (int s = 0; s < 20; ++s) {
    const CoeffVector w = 0.5 * random_interior(*disc, rng);
    const CoeffVector g = op.apply_G(w);
    CHECK(fem::h1_seminorm(g, *disc) <= dual / op.nu() * (1.0 + 1e-10));
  }
}

TEST_CASE("picard runs match anderson depth 0 record for record") {
  auto disc = std::make_shared<Discretization>(8, kLid);
  nse::PicardOperator op(disc, 100.0, fem::ForcingSpec::zero(), 0.0);
  const auto u0 = op.solve_stokes();
  const auto picard = nse::run_picard(op, u0, config(0, 1e-9, 40));
  const auto anderson = nse::run_anderson_picard(op, u0, config(0, 1e-9, 40));
  REQUIRE(picard.records.size() == anderson.records.size());
  for (size_t k = 0; k < picard.records.size(); ++k) {
    CHECK(picard.records[k].residual_norm == anderson.records[k].residual_norm);
    if (std::isfinite(picard.records[k].step_norm))
      CHECK(picard.records[k].step_norm == anderson.records[k].step_norm);
  }
  CHECK((picard.final_iterate - anderson.final_iterate).norm() == 0.0);
}

TEST_CASE("small-data picard contracts within the sampled ratio") {
  auto disc = std::make_shared<Discretization>(12, kLid);
  nse::PicardOperator op(disc, 1.0, fem::ForcingSpec::zero(), 0.0);
  const auto u0 = op.solve_stokes();
  const auto trace = nse::run_picard(op, u0, config(0, 1e-11, 60));
  REQUIRE(trace.status == TerminationStatus::Converged);
  const double kappa =
      nse::estimate_kappa(op, u0.coeffs, 12, 11, /*spread=*/0.5);
  CHECK(kappa < 1.0);
  for (const auto& r : trace.records)
    if (std::isfinite(r.step_ratio)) CHECK(r.step_ratio <= kappa + 0.01);
}

TEST_CASE("estimate_kappa is zero for constant operators") {
  auto disc = std::make_shared<Discretization>(6, kHomog);
  nse::PicardOperator op(disc, 10.0, fem::ForcingSpec::zero(), 0.0);
  const CoeffVector base = CoeffVector::Zero(disc->dofmap.total_dofs());
  CHECK(nse::estimate_kappa(op, base, 5, 3) == 0.0);
}

TEST_CASE("estimate_kappa decays as viscosity grows") {
  auto disc = std::make_shared<Discretization>(8, kHomog);
  double prev = 1e300;
  for (double re : {1.0, 0.1, 0.01}) {  // nu = 1, 10, 100
    nse::PicardOperator op(disc, re, fem::ForcingSpec::manufactured(1.0), 0.0);
    const auto u0 = op.solve_stokes();
    const double kappa = nse::estimate_kappa(op, u0.coeffs, 8, 5);
    CHECK(kappa < prev);
    prev = kappa;
  }
}

TEST_CASE("fixed-point consistency at convergence") {
  auto disc = std::make_shared<Discretization>(8, kLid);
  nse::PicardOperator op(disc, 50.0, fem::ForcingSpec::zero(), 0.0);
  const auto trace =
      nse::run_anderson_picard(op, op.solve_stokes(), config(2, 1e-10, 60));
  REQUIRE(trace.status == TerminationStatus::Converged);
  const CoeffVector u = trace.final_iterate;
  CHECK(fem::h1_seminorm(op.apply_G(u) - u, *disc) <= 1e-9);
}

TEST_CASE("anderson iterates preserve the boundary values bitwise") {
  auto disc = std::make_shared<Discretization>(8, kLid);
  nse::PicardOperator op(disc, 100.0, fem::ForcingSpec::zero(), 0.0);
  std::vector<CoeffVector> inputs;
  accel::FixedPointMap recording{[&](const CoeffVector& u) {
    inputs.push_back(u);
    return op.apply_G(u);
  }};
  const auto u0 = op.solve_stokes();
  accel::run_accelerated(recording, u0.coeffs, config(3, 1e-9, 25), disc->h1_ip);
  REQUIRE(inputs.size() >= 5);
  for (const auto& u : inputs)
    for (const auto& [dof, value] : disc->dofmap.dirichlet())
      if (dof < disc->dofmap.pressure_offset()) CHECK(u[dof] == value);
}

TEST_CASE("residual norm agrees between the gram route and the dual-solve route") {
  auto disc = std::make_shared<Discretization>(8, kLid);
  nse::PicardOperator op(disc, 200.0, fem::ForcingSpec::zero(), 0.0);
  CoeffVector u = op.solve_stokes().coeffs;
  for (int k = 0; k < 3; ++k) {
    const CoeffVector w = op.apply_G(u) - u;
    const double via_gram = fem::h1_seminorm(w, *disc);
    CoeffVector load = CoeffVector::Zero(disc->dofmap.total_dofs());
    load.head(disc->dofmap.n_velocity_dofs()) =
        disc->stiffness_velocity.multiply(w.head(disc->dofmap.n_velocity_dofs()));
    const double via_dual = nse::discrete_dual_norm(*disc, load);
    CHECK(via_gram == doctest::Approx(via_dual).epsilon(1e-8));
    u = op.apply_G(u);
  }
}

TEST_CASE("small-data anderson runs: rate comparison and first-order rate check") {
  auto disc = std::make_shared<Discretization>(12, kLid);
  nse::PicardOperator op(disc, 10.0, fem::ForcingSpec::zero(), 0.0);
  const auto u0 = op.solve_stokes();
  const auto t0 = nse::run_picard(op, u0, config(0, 1e-11, 80));
  const auto t1 = nse::run_anderson_picard(op, u0, config(1, 1e-11, 80));
  const auto t2 = nse::run_anderson_picard(op, u0, config(2, 1e-11, 80));
  REQUIRE(t0.status == TerminationStatus::Converged);
  REQUIRE(t1.status == TerminationStatus::Converged);
  REQUIRE(t2.status == TerminationStatus::Converged);

  const double kappa = std::max(
      {nse::estimate_kappa(op, u0.coeffs, 10, 17, 0.5),
       accel::max_lipschitz_ratio(t0), accel::max_lipschitz_ratio(t1),
       accel::max_lipschitz_ratio(t2)});
  CHECK(kappa < 1.0);

  const auto s0 = report::summarize(t0);
  const auto s1 = report::summarize(t1);
  if (kappa * s1.theta_median < s0.conv_rate_median)
    CHECK(s1.conv_rate_median <= s0.conv_rate_median);

  // depth-2 first-order rate check once the window residual is small
  const auto& rec = t2.records;
  const double w0 = rec[0].residual_norm;
  for (size_t k = 2; k + 1 < rec.size(); ++k) {
    if (rec[k - 1].residual_norm > 1e-3 * w0) continue;
    if (!std::isfinite(rec[k].theta)) continue;
    const double ratio = rec[k + 1].residual_norm / rec[k].residual_norm;
    CHECK(ratio <= kappa * rec[k].theta + 0.1);
  }
}

TEST_CASE("depth-1 residual audit on the contractive cavity reports no violations") {
  auto disc = std::make_shared<Discretization>(12, kLid);
  nse::PicardOperator op(disc, 10.0, fem::ForcingSpec::zero(), 0.0);
  const auto u0 = op.solve_stokes();
  const auto trace = nse::run_anderson_picard(op, u0, config(1, 1e-11, 80));
  REQUIRE(trace.status == TerminationStatus::Converged);

  const double kappa = std::max(nse::estimate_kappa(op, u0.coeffs, 10, 19, 0.5),
                                accel::max_lipschitz_ratio(trace));
  const double m_hat = nse::estimate_trilinear_bound(*disc, 15, 23);
  const auto report =
      nse::audit_nse_m1(trace, kappa, accel::nan_value(), m_hat, op.nu());
  CHECK(report.violated_count == 0);
  CHECK(report.crit2_violated_count == 0);
  CHECK(report.satisfied_count > 0);

  const auto rec_report = accel::audit_recursion(trace, kappa);
  CHECK(rec_report.violated_count == 0);
}

TEST_CASE("synthetic depth-1 residual audit flags exactly the broken step") {
  accel::SolveTrace trace;
  trace.depth_m = 1;
  auto add = [&](int k, double wnorm, double theta, double step) {
    accel::IterationRecord r;
    r.k = k;
    r.residual_norm = wnorm;
    r.theta = theta;
    r.alphas = {0.2, 0.8};
    r.eta_partial = 0.2;
    r.step_norm = step;
    trace.records.push_back(r);
  };
  // kappa = 0.5, theta = 0.5, C0 = 0: rhs_k = 0.25 w_{k-1}, residuals
  // exactly geometric with ratio 0.25
  add(0, 1.0, 0.5, accel::nan_value());
  add(1, 0.25, 0.5, 1.0);
  add(2, 0.0625, 0.5, 0.3);
  add(3, 0.015625, 0.5, 0.07);
  add(4, 0.00390625, 0.5, 0.017);

  SUBCASE("satisfied when the geometric decay matches") {
    const auto report = nse::audit_nse_m1(trace, 0.5, 1.0, 0.0, 1.0);
    CHECK(report.violated_count == 0);
    CHECK(report.satisfied_count == 3);
  }
  SUBCASE("a bumped residual is flagged at exactly that step") {
    trace.records[3].residual_norm = 0.02;  // > 0.25 * 0.0625
    const auto report = nse::audit_nse_m1(trace, 0.5, 1.0, 0.0, 1.0);
    CHECK(report.violated_count == 1);
    for (const auto& row : report.rows)
      CHECK(row.satisfied == (row.k != 3));
  }
  SUBCASE("too-short traces are rejected") {
    accel::SolveTrace tiny;
    tiny.records.resize(2);
    CHECK_THROWS_AS(nse::audit_nse_m1(tiny, 0.5, 1.0, 0.0, 1.0),
                    accel::InsufficientTrace);
  }
}

TEST_CASE("linear solve failure surfaces as a diverged trace with the error") {
  auto disc = std::make_shared<Discretization>(6, kLid);
  nse::PicardOperator op(disc, 100.0, fem::ForcingSpec::zero(), 0.0);
  accel::FixedPointMap failing{[&, calls = 0](const CoeffVector& u) mutable {
    if (++calls >= 2) throw nse::LinearSolveFailure("factorization failed");
    return op.apply_G(u);
  }};
  const auto trace = accel::run_accelerated(failing, op.solve_stokes().coeffs,
                                            config(1, 1e-10, 20), disc->h1_ip);
  CHECK(trace.status == TerminationStatus::Diverged);
  CHECK(trace.error.find("factorization failed") != std::string::npos);
}
