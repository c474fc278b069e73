#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aanse/accel.hpp"
#include "aanse/verify.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace aanse;
using accel::AndersonConfig;
using accel::AndersonHistory;
using accel::FixedPointMap;
using accel::SolveTrace;
using accel::TerminationStatus;
using linalg::CoeffVector;
using linalg::InnerProduct;

namespace {

CoeffVector vec2(double a, double b) {
  CoeffVector v(2);
  v << a, b;
  return v;
}

AndersonHistory history_of(const std::vector<CoeffVector>& residuals,
                           const InnerProduct& ip) {
  AndersonHistory h(ip, static_cast<int>(residuals.size()) - 1);
  for (const auto& w : residuals)
    h.push(CoeffVector::Zero(w.size()), w);
  return h;
}

// r-contractive affine map u -> r*Q*u + b with Q orthogonal, so each step
// contracts by exactly r in the Euclidean norm.
struct AffineMap {
  Eigen::MatrixXd a;
  CoeffVector b;
  CoeffVector operator()(const CoeffVector& u) const { return a * u + b; }
};

AffineMap make_affine(int n, double r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = dist(rng);
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  CoeffVector b(n);
  for (int i = 0; i < n; ++i) b[i] = dist(rng);
  return {r * q, b};
}

}  // namespace

TEST_CASE("solve_mixing trivial cases") {
  const InnerProduct ip;
  SUBCASE("first step has no optimization") {
    auto h = history_of({vec2(1.0, 2.0)}, ip);
    const auto mix = accel::solve_mixing(h);
    CHECK(mix.alphas == std::vector<double>{1.0});
    CHECK(mix.theta == 1.0);
    CHECK(mix.eta_partial == 0.0);
  }
  SUBCASE("identical residuals trigger the conditioning drop") {
    auto h = history_of({vec2(1.0, 2.0), vec2(1.0, 2.0)}, ip);
    const auto mix = accel::solve_mixing(h);
    CHECK(mix.alphas == std::vector<double>{0.0, 1.0});
    CHECK(mix.theta == 1.0);
    CHECK(mix.effective_depth == 0);
    CHECK(mix.objective == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  }
  SUBCASE("zero latest residual means converged") {
    auto h = history_of({vec2(1.0, 0.0), vec2(0.0, 0.0)}, ip);
    const auto mix = accel::solve_mixing(h);
    CHECK(mix.theta == 0.0);
    CHECK(mix.objective == 0.0);
  }
  SUBCASE("empty history throws") {
    AndersonHistory h(ip, 2);
    CHECK_THROWS_AS(accel::solve_mixing(h), accel::EmptyHistory);
  }
}

TEST_CASE("depth-1 closed form on orthogonal unit residuals") {
  const InnerProduct ip;
  // oldest (0,1), latest (1,0): alpha_old = 1/2, objective = sqrt(2)/2
  auto h = history_of({vec2(0.0, 1.0), vec2(1.0, 0.0)}, ip);
  const auto mix = accel::solve_mixing(h);
  CHECK(mix.alphas[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(mix.alphas[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(mix.objective == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(mix.theta == doctest::Approx(0.70710678118654752).epsilon(1e-10));
}

TEST_CASE("depth-1 closed form matches the general solver") {
  const auto result = verify::check_m1_closed_form(17);
  INFO(result.detail);
  CHECK(result.pass);
}

TEST_CASE("mixing matches the KKT oracle on random instances") {
  const auto result = verify::check_ls_oracle(200, 23);
  INFO(result.detail);
  CHECK(result.pass);
}

TEST_CASE("mixing optimality against vertices and random affine combinations") {
  const auto result = verify::check_mixing_optimality(29);
  INFO(result.detail);
  CHECK(result.pass);
}

TEST_CASE("mixing invariants: coefficients sum to one, theta within [0,1]") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 4);
    const int dim = 5 + static_cast<int>(rng() % 6);
    std::vector<CoeffVector> w;
    for (int j = 0; j <= m; ++j) {
      CoeffVector v(dim);
      for (int i = 0; i < dim; ++i) v[i] = dist(rng);
      w.push_back(v);
    }
    const InnerProduct ip;
    const auto mix = accel::solve_mixing(history_of(w, ip));
    double sum = 0.0;
    for (double a : mix.alphas) sum += a;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(mix.theta >= 0.0);
    CHECK(mix.theta <= 1.0 + 1e-12);
    // eta_partial equals the largest |partial sum| of the alphas
    double eta = 0.0, partial = 0.0;
    for (size_t j = 0; j + 1 < mix.alphas.size(); ++j) {
      partial += mix.alphas[j];
      eta = std::max(eta, std::abs(partial));
    }
    CHECK(mix.eta_partial == doctest::Approx(eta).epsilon(1e-12));
  }
}

TEST_CASE("anderson_step formulas") {
  const InnerProduct ip;
  AndersonConfig cfg;

  SUBCASE("depth 0 with beta 1 returns G(u) bitwise") {
    AndersonHistory h(ip, 0);
    const CoeffVector u = vec2(1e300, -3.0);
    const CoeffVector g = vec2(1.0, 2.0);
    h.push(u, g - u);
    const auto [next, mix] = accel::anderson_step(h, g, cfg);
    CHECK(next[0] == g[0]);
    CHECK(next[1] == g[1]);
    CHECK(mix.theta == 1.0);
  }

  SUBCASE("depth 1 equal weights average the two G values") {
    // residuals (0,1) and (0,-1) give gamma = 1/2, alphas = [1/2, 1/2]
    AndersonHistory h(ip, 1);
    const CoeffVector u0 = vec2(0.0, 0.0), u1 = vec2(2.0, 0.0);
    const CoeffVector w0 = vec2(0.0, 1.0), w1 = vec2(0.0, -1.0);
    h.push(u0, w0);
    h.push(u1, w1);
    const auto [next, mix] = accel::anderson_step(h, u1 + w1, cfg);
    CHECK(mix.alphas[0] == doctest::Approx(0.5).epsilon(1e-14));
    const CoeffVector expected = 0.5 * ((u0 + w0) + (u1 + w1));
    CHECK((next - expected).norm() <= 1e-14);
  }

  SUBCASE("damped step matches the direct formula") {
    std::mt19937_64 rng(37);
    std::normal_distribution<double> dist(0.0, 1.0);
    AndersonHistory h(ip, 1);
    CoeffVector u0(4), u1(4), w0(4), w1(4);
    for (int i = 0; i < 4; ++i) {
      u0[i] = dist(rng);
      u1[i] = dist(rng);
      w0[i] = dist(rng);
      w1[i] = dist(rng);
    }
    h.push(u0, w0);
    h.push(u1, w1);
    AndersonConfig damped;
    damped.damping_beta = 0.5;
    const auto [next, mix] = accel::anderson_step(h, u1 + w1, damped);
    const double a0 = mix.alphas[0], a1 = mix.alphas[1];
    const CoeffVector expected = 0.5 * (a0 * (u0 + w0) + a1 * (u1 + w1)) +
                                 0.5 * (a0 * u0 + a1 * u1);
    CHECK((next - expected).norm() <= 1e-13 * std::max(1.0, expected.norm()));
  }

  SUBCASE("entries shared bitwise by the window are preserved bitwise") {
    AndersonHistory h(ip, 2);
    const double shared = 0.1 + 0.2;  // not exactly representable as 0.3
    auto mk = [&](double a, double b) {
      CoeffVector v(3);
      v << a, shared, b;
      return v;
    };
    CoeffVector w0(3), w1(3), w2(3);
    w0 << 1.0, 0.0, 0.5;
    w1 << 0.3, 0.0, -0.2;
    w2 << 0.1, 0.0, 0.05;
    h.push(mk(0.0, 1.0), w0);
    h.push(mk(0.4, 0.9), w1);
    h.push(mk(0.7, 0.2), w2);
    const auto [next, mix] = accel::anderson_step(h, mk(0.7, 0.2) + w2, cfg);
    CHECK(next[1] == shared);
    CHECK(mix.effective_depth == 2);
  }
}

TEST_CASE("run_accelerated on a linear contraction") {
  const InnerProduct ip;
  AndersonConfig cfg;
  cfg.max_iters = 200;
  cfg.tol_abs = 1e-12;

  SUBCASE("depth 0 contracts at exactly the map ratio") {
    // homogeneous map (b = 0) so residual cancellation stays relative
    auto map = make_affine(20, 0.5, 41);
    map.b.setZero();
    const FixedPointMap op{[&](const CoeffVector& u) { return map(u); }};
    cfg.depth_m = 0;
    CoeffVector u0 = CoeffVector::Ones(20);
    const auto trace = accel::run_accelerated(op, u0, cfg, ip);
    CHECK(trace.status == TerminationStatus::Converged);
    for (const auto& r : trace.records)
      if (std::isfinite(r.step_ratio)) CHECK(r.step_ratio <= 0.5 + 1e-10);
  }

  SUBCASE("depth 2 needs no more iterations than depth 0") {
    const auto map = make_affine(20, 0.5, 41);
    const FixedPointMap op{[&](const CoeffVector& u) { return map(u); }};
    cfg.tol_abs = 1e-10;
    cfg.depth_m = 0;
    const auto t0 = accel::run_accelerated(op, CoeffVector::Zero(20), cfg, ip);
    cfg.depth_m = 2;
    const auto t2 = accel::run_accelerated(op, CoeffVector::Zero(20), cfg, ip);
    CHECK(t2.status == TerminationStatus::Converged);
    CHECK(t2.records.size() <= t0.records.size());
  }
}

TEST_CASE("relative tolerance terminates once the residual drops by the factor") {
  auto map = make_affine(10, 0.5, 71);
  map.b.setZero();
  const FixedPointMap op{[&](const CoeffVector& u) { return map(u); }};
  AndersonConfig cfg;
  cfg.depth_m = 0;
  cfg.max_iters = 100;
  cfg.tol_abs = 1e-300;
  cfg.tol_rel = 1e-6;
  const auto trace =
      accel::run_accelerated(op, CoeffVector::Ones(10), cfg, InnerProduct());
  CHECK(trace.status == TerminationStatus::Converged);
  const double w0 = trace.records.front().residual_norm;
  CHECK(trace.records.back().residual_norm <= 1e-6 * w0);
  CHECK(trace.records[trace.records.size() - 2].residual_norm > 1e-6 * w0);
}

TEST_CASE("an expanding map trips the divergence factor") {
  const FixedPointMap op{[](const CoeffVector& u) {
    return CoeffVector(2.0 * u + CoeffVector::Ones(u.size()));
  }};
  AndersonConfig cfg;
  cfg.depth_m = 0;
  cfg.max_iters = 200;
  cfg.divergence_factor = 1e4;
  const auto trace =
      accel::run_accelerated(op, CoeffVector::Ones(3), cfg, InnerProduct());
  CHECK(trace.status == TerminationStatus::Diverged);
  CHECK(trace.records.size() < 100);  // long before the iteration cap
}

TEST_CASE("fixed-point-free shift map never converges") {
  const InnerProduct ip;
  const FixedPointMap op{[](const CoeffVector& u) {
    CoeffVector v = u;
    v.array() += 1.0;
    return v;
  }};
  AndersonConfig cfg;
  cfg.depth_m = 1;
  cfg.max_iters = 50;
  const auto trace = accel::run_accelerated(op, CoeffVector::Zero(4), cfg, ip);
  CHECK(trace.status != TerminationStatus::Converged);
}

TEST_CASE("depth 0 trace is bit-identical to the bare loop") {
  const auto result = verify::check_depth0_equivalence(43);
  INFO(result.detail);
  CHECK(result.pass);

  // same comparison including the iterates themselves
  const auto map = make_affine(10, 0.6, 47);
  const FixedPointMap op{[&](const CoeffVector& u) { return map(u); }};
  AndersonConfig cfg;
  cfg.depth_m = 0;
  cfg.max_iters = 30;
  cfg.tol_abs = 1e-13;
  const InnerProduct ip;
  const auto trace = accel::run_accelerated(op, CoeffVector::Zero(10), cfg, ip);

  CoeffVector u = CoeffVector::Zero(10);
  for (size_t k = 0; k < trace.records.size(); ++k) {
    const CoeffVector w = map(u) - u;
    CHECK(trace.records[k].residual_norm == w.norm());
    if (w.norm() <= cfg.tol_abs) {
      for (int i = 0; i < 10; ++i) CHECK(trace.final_iterate[i] == u[i]);
      break;
    }
    u = map(u);
  }
}

TEST_CASE("operator failure is recorded with a partial trace") {
  const InnerProduct ip;
  int calls = 0;
  const FixedPointMap op{[&](const CoeffVector& u) -> CoeffVector {
    if (++calls >= 3) throw std::runtime_error("inner solve failed");
    return 0.9 * u + CoeffVector::Ones(u.size());
  }};
  AndersonConfig cfg;
  cfg.depth_m = 1;
  cfg.max_iters = 50;
  const auto trace = accel::run_accelerated(op, CoeffVector::Zero(3), cfg, ip);
  CHECK(trace.status == TerminationStatus::Diverged);
  CHECK(trace.error.find("inner solve failed") != std::string::npos);
  CHECK(trace.records.size() == 2);
}

TEST_CASE("theta_threshold reproduces the analytic values") {
  CHECK(accel::theta_threshold(0.9, 0.1, 1, 1) ==
        doctest::Approx(8.0 / 9.0).epsilon(1e-13));
  CHECK(std::abs(accel::theta_threshold(0.9, 0.1, 1, 2) - 0.8) <= 1e-12);
  CHECK(std::abs(accel::theta_threshold(0.9, 0.1, 2, 3) - 0.62) <= 1e-12);
  // eta = 0 collapses the k > m branch to 1 for any r, m
  CHECK(accel::theta_threshold(0.3, 0.0, 2, 5) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(accel::theta_threshold(0.7, 0.0, 1, 9) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("theta_threshold rejects violated hypotheses") {
  // eta >= r^m (1-r)/(1-r^m)
  CHECK_THROWS_AS(accel::theta_threshold(0.9, 0.95, 1, 2), accel::HypothesisViolated);
  CHECK_THROWS_AS(accel::theta_threshold(0.5, 0.4, 2, 3), accel::HypothesisViolated);
  CHECK_THROWS_AS(accel::theta_threshold(1.5, 0.1, 1, 1), accel::HypothesisViolated);
  CHECK_THROWS_AS(accel::theta_threshold(0.9, 0.1, 0, 1), accel::HypothesisViolated);
}

TEST_CASE("theta_threshold monotonicity") {
  // strictly decreasing in eta
  for (double r : {0.5, 0.8, 0.95}) {
    for (int m : {1, 2, 3}) {
      const double budget = std::pow(r, m) * (1.0 - r) / (1.0 - std::pow(r, m));
      double prev = accel::theta_threshold(r, 0.0, m, m + 1);
      for (double f : {0.2, 0.4, 0.6, 0.8}) {
        const double cur = accel::theta_threshold(r, f * budget, m, m + 1);
        CHECK(cur < prev);
        prev = cur;
      }
    }
  }
  // k > m branch nonincreasing in m for fixed r, eta within every budget
  for (double r : {0.6, 0.9}) {
    const double eta = 0.5 * std::pow(r, 4) * (1.0 - r) / (1.0 - std::pow(r, 4));
    double prev = accel::theta_threshold(r, eta, 1, 2);
    for (int m = 2; m <= 4; ++m) {
      const double cur = accel::theta_threshold(r, eta, m, m + 1);
      CHECK(cur <= prev + 1e-15);
      prev = cur;
    }
  }
}

TEST_CASE("audit_recursion on a depth-0 contraction reduces to the plain bound") {
  auto map = make_affine(15, 0.8, 53);
  map.b.setZero();  // ratios stay exact relative to the shrinking scale
  const FixedPointMap op{[&](const CoeffVector& u) { return map(u); }};
  AndersonConfig cfg;
  cfg.depth_m = 0;
  cfg.max_iters = 200;
  cfg.tol_abs = 1e-13;
  const auto trace =
      accel::run_accelerated(op, CoeffVector::Ones(15), cfg, InnerProduct());
  const auto report = accel::audit_recursion(trace, 0.8);
  CHECK(report.violated_count == 0);
  CHECK(report.satisfied_count > 10);
  CHECK(report.eta_max == 0.0);
  for (const auto& row : report.rows)
    CHECK(row.rhs == doctest::Approx(0.8 * trace.records[row.k].step_norm));
}

TEST_CASE("audit_recursion flags a hand-constructed violation at exactly k = 3") {
  SolveTrace trace;
  trace.depth_m = 1;
  // theta = 0.5, eta = 0.1, r_hat = 0.5; bound rhs at step k:
  // (r theta + eta) e_k + eta (r theta + 1) * (middle sum, empty for m=1)
  //   + r theta eta e_{k-1}
  auto add = [&](int k, double step_norm, double theta, double eta) {
    accel::IterationRecord r;
    r.k = k;
    r.residual_norm = 1.0;
    r.theta = theta;
    r.alphas = {0.1, 0.9};
    r.eta_partial = eta;
    r.step_norm = step_norm;
    trace.records.push_back(r);
  };
  add(0, accel::nan_value(), 0.5, 0.1);
  add(1, 1.0, 0.5, 0.1);   // e_1 = 1
  add(2, 0.3, 0.5, 0.1);   // e_2 = 0.3  <= 0.35 (k=1 bound) ok
  add(3, 0.12, 0.5, 0.1);  // e_3 = 0.12 <= 0.35*0.3 + 0.025*1 = 0.13 ok
  add(4, 0.08, 0.5, 0.1);  // e_4 = 0.08  > 0.35*0.12 + 0.025*0.3 = 0.0495 VIOLATION
  add(5, 0.001, 0.5, 0.1); // e_5 <= 0.35*0.08 + 0.025*0.12 = 0.031 ok

  const auto report = accel::audit_recursion(trace, 0.5);
  CHECK(report.violated_count == 1);
  for (const auto& row : report.rows) {
    if (row.k == 3)
      CHECK_FALSE(row.satisfied);
    else
      CHECK(row.satisfied);
  }
}

TEST_CASE("audit_recursion with depth 1 on a 0.9-contraction run is satisfied") {
  auto map = make_affine(25, 0.9, 59);
  map.b.setZero();  // keep step norms relatively accurate down to the tolerance
  const FixedPointMap op{[&](const CoeffVector& u) { return map(u); }};
  AndersonConfig cfg;
  cfg.depth_m = 1;
  cfg.max_iters = 400;
  cfg.tol_abs = 1e-10;
  const auto trace =
      accel::run_accelerated(op, CoeffVector::Ones(25), cfg, InnerProduct());
  CHECK(trace.status == TerminationStatus::Converged);
  const auto report = accel::audit_recursion(trace, 0.9);
  CHECK(report.violated_count == 0);
  CHECK(report.satisfied_count > 5);
}

TEST_CASE("audit_recursion needs at least two iterations") {
  SolveTrace trace;
  trace.records.resize(2);
  CHECK_THROWS_AS(accel::audit_recursion(trace, 0.5), accel::InsufficientTrace);
}

TEST_CASE("depth-2 minimizer satisfies the four window inequalities") {
  // Evaluate the lemma's inequalities verbatim on recorded windows of an
  // exactly r-contractive map.
  const double r = 0.7;
  const auto map = make_affine(12, r, 61);
  const InnerProduct ip;
  AndersonConfig cfg;
  cfg.depth_m = 2;

  AndersonHistory history(ip, 2);
  std::vector<CoeffVector> iterates, residuals;
  CoeffVector u = CoeffVector::Zero(12);

  for (int k = 0; k < 25; ++k) {
    const CoeffVector g = map(u);
    const CoeffVector w = g - u;
    iterates.push_back(u);
    residuals.push_back(w);
    history.push(u, w);
    if (w.norm() < 1e-11) break;
    const auto [next, mix] = accel::anderson_step(history, g, cfg);
    if (k >= 2) {
      REQUIRE(mix.alphas.size() == 3);
      if (mix.effective_depth == 2) {
        const double a_old = mix.alphas[0];   // alpha_{k-2}
        const double a_new = mix.alphas[2];   // alpha_k
        auto nrm = [&](const CoeffVector& v) { return v.norm(); };
        const double ek = nrm(iterates[k] - iterates[k - 1]);
        const double ek1 = nrm(iterates[k - 1] - iterates[k - 2]);
        const double wk = nrm(residuals[k]);
        const double wk1 = nrm(residuals[k - 1]);
        const double wk2 = nrm(residuals[k - 2]);
        const double c = 1.0 / (1.0 - r);
        const double tol = 1e-9;
        CHECK(std::abs(a_new) * ek <=
              c * (std::abs(1 - a_old) * wk1 + std::abs(a_old) * wk2) + tol);
        CHECK(std::abs(1 - a_new) * ek <=
              c * (std::abs(1 - a_new) * wk1 + (1 + std::abs(a_new)) * wk) + tol);
        CHECK(std::abs(a_old) * ek1 <=
              c * (std::abs(1 - a_new) * wk1 + std::abs(a_new) * wk) + tol);
        CHECK(std::abs(1 - a_old) * ek1 <=
              c * (std::abs(1 - a_old) * wk1 + (1 + std::abs(a_old)) * wk2) + tol);
      }
    }
    u = next;
  }
  CHECK(iterates.size() >= 8);  // the loop actually exercised full windows
}

TEST_CASE("trajectory Lipschitz ratios of a depth-0 run equal the step ratios") {
  const auto map = make_affine(10, 0.75, 67);
  const FixedPointMap op{[&](const CoeffVector& u) { return map(u); }};
  AndersonConfig cfg;
  cfg.depth_m = 0;
  cfg.max_iters = 25;
  cfg.tol_abs = 1e-12;
  const auto trace =
      accel::run_accelerated(op, CoeffVector::Zero(10), cfg, InnerProduct());
  for (size_t k = 1; k + 1 < trace.records.size(); ++k) {
    // G(u_k)-G(u_{k-1}) = u_{k+1}-u_k for the bare iteration
    CHECK(trace.records[k].g_ratio ==
          doctest::Approx(trace.records[k + 1].step_norm /
                          trace.records[k].step_norm)
              .epsilon(1e-12));
  }
  CHECK(accel::max_lipschitz_ratio(trace) <= 0.75 + 1e-10);
  CHECK(accel::max_step_ratio(trace) <= 0.75 + 1e-10);
}
