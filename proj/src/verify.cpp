#include "aanse/verify.hpp"

#include "aanse/fem.hpp"
#include "aanse/nse.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <sstream>

namespace aanse::verify {

using linalg::CoeffVector;
using linalg::InnerProduct;

std::vector<double> kkt_mixing_oracle(const std::vector<CoeffVector>& residuals,
                                      const InnerProduct& ip) {
  const int n = static_cast<int>(residuals.size());
  if (n == 0) throw accel::EmptyHistory("kkt_mixing_oracle: no residuals");
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + 1, n + 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      kkt(i, j) = 2.0 * ip.dot(residuals[static_cast<size_t>(i)],
                               residuals[static_cast<size_t>(j)]);
    kkt(i, n) = 1.0;
    kkt(n, i) = 1.0;
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs[n] = 1.0;
  const Eigen::VectorXd sol = kkt.colPivHouseholderQr().solve(rhs);
  return std::vector<double>(sol.data(), sol.data() + n);
}

namespace {

CoeffVector random_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  CoeffVector v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

InnerProduct random_spd_ip(int n, std::mt19937_64& rng) {
  Eigen::MatrixXd b(n, n);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = dist(rng);
  const Eigen::MatrixXd spd =
      b.transpose() * b + Eigen::MatrixXd::Identity(n, n) * 0.5;
  std::vector<linalg::Triplet> trips;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) trips.push_back({i, j, spd(i, j)});
  return InnerProduct(linalg::SparseMatrix::from_triplets(n, n, std::move(trips)));
}

accel::AndersonHistory make_history(const std::vector<CoeffVector>& residuals,
                                    const InnerProduct& ip) {
  accel::AndersonHistory h(ip, static_cast<int>(residuals.size()) - 1);
  const int n = static_cast<int>(residuals[0].size());
  for (const auto& w : residuals) h.push(CoeffVector::Zero(n), w);
  return h;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

}  // namespace

CheckResult check_factorization_oracle(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5;
    Eigen::MatrixXd b(n, n);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) b(i, j) = dist(rng);
    const Eigen::MatrixXd spd =
        b.transpose() * b + Eigen::MatrixXd::Identity(n, n);
    std::vector<linalg::Triplet> trips;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) trips.push_back({i, j, spd(i, j)});
    const auto A = linalg::SparseMatrix::from_triplets(n, n, std::move(trips));
    const CoeffVector x_known = random_vector(n, rng);
    const CoeffVector rhs = A.multiply(x_known);
    const CoeffVector x = linalg::factorize(A).solve(rhs);
    worst = std::max(worst, (x - x_known).norm() / x_known.norm());
  }
  return {"factorize-solve oracle (random SPD 5x5)", worst <= 1e-10,
          "max relative error " + fmt(worst)};
}

CheckResult check_parallelogram_law(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 8;
    const InnerProduct ip = trial % 2 ? random_spd_ip(n, rng) : InnerProduct();
    const CoeffVector v = random_vector(n, rng);
    const CoeffVector w = random_vector(n, rng);
    const double lhs = ip.dot(v + w, v + w) + ip.dot(v - w, v - w);
    const double rhs = 2.0 * (ip.dot(v, v) + ip.dot(w, w));
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
  }
  return {"parallelogram law", worst <= 1e-10, "max relative defect " + fmt(worst)};
}

CheckResult check_ls_oracle(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < instances; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 4);  // depth 1..4
    const int dim = 6 + static_cast<int>(rng() % 5);
    const InnerProduct ip = trial % 3 == 0 ? random_spd_ip(dim, rng) : InnerProduct();
    std::vector<CoeffVector> w;
    for (int j = 0; j <= m; ++j) w.push_back(random_vector(dim, rng));
    const auto oracle = kkt_mixing_oracle(w, ip);
    const auto mix = accel::solve_mixing(make_history(w, ip));
    double scale = 0.0;
    for (double a : oracle) scale = std::max(scale, std::abs(a));
    for (size_t j = 0; j < oracle.size(); ++j)
      worst = std::max(worst,
                       std::abs(mix.alphas[j] - oracle[j]) / std::max(scale, 1.0));
  }
  return {"constrained LS vs KKT oracle (" + std::to_string(instances) + " instances)",
          worst <= 1e-10, "max relative coefficient error " + fmt(worst)};
}

CheckResult check_m1_closed_form(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 5 + static_cast<int>(rng() % 4);
    const InnerProduct ip = trial % 2 ? random_spd_ip(dim, rng) : InnerProduct();
    const CoeffVector w_old = random_vector(dim, rng);
    const CoeffVector w_new = random_vector(dim, rng);
    const CoeffVector diff = w_new - w_old;
    const double denom = ip.dot(diff, diff);
    const double alpha_old = ip.dot(w_new, diff) / denom;
    const auto mix = accel::solve_mixing(make_history({w_old, w_new}, ip));
    worst = std::max(worst, std::abs(mix.alphas[0] - alpha_old) /
                                std::max(1.0, std::abs(alpha_old)));
  }
  return {"depth-1 closed form", worst <= 1e-12,
          "max relative coefficient error " + fmt(worst)};
}

CheckResult check_mixing_optimality(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  bool ok = true;
  std::string detail = "optimal vs vertices and random affine combinations";
  for (int trial = 0; trial < 50 && ok; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 4);
    const int dim = 6 + static_cast<int>(rng() % 4);
    const InnerProduct ip = trial % 2 ? random_spd_ip(dim, rng) : InnerProduct();
    std::vector<CoeffVector> w;
    for (int j = 0; j <= m; ++j) w.push_back(random_vector(dim, rng));
    const auto mix = accel::solve_mixing(make_history(w, ip));
    const double tol = mix.objective * (1.0 + 1e-12) + 1e-12;

    auto objective_of = [&](const std::vector<double>& alpha) {
      CoeffVector s = CoeffVector::Zero(dim);
      for (int j = 0; j <= m; ++j) s += alpha[static_cast<size_t>(j)] * w[static_cast<size_t>(j)];
      return ip.norm(s);
    };
    for (int j = 0; j <= m && ok; ++j) {
      std::vector<double> vertex(static_cast<size_t>(m) + 1, 0.0);
      vertex[static_cast<size_t>(j)] = 1.0;
      if (objective_of(vertex) < mix.objective - tol) ok = false;
    }
    for (int s = 0; s < 100 && ok; ++s) {
      std::vector<double> alpha(static_cast<size_t>(m) + 1);
      double sum = 0.0;
      for (int j = 0; j < m; ++j) sum += (alpha[static_cast<size_t>(j)] = uni(rng));
      alpha[static_cast<size_t>(m)] = 1.0 - sum;
      if (objective_of(alpha) < mix.objective - tol) {
        ok = false;
        detail = "random affine combination beat the minimizer";
      }
    }
  }
  return {"mixing optimality", ok, detail};
}

CheckResult check_depth0_equivalence(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int n = 12;
  Eigen::MatrixXd q(n, n);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) q(i, j) = dist(rng);
  const Eigen::MatrixXd orth =
      Eigen::HouseholderQR<Eigen::MatrixXd>(q).householderQ();
  const Eigen::MatrixXd a = 0.6 * orth;
  const CoeffVector b = random_vector(n, rng);
  auto g = [&](const CoeffVector& u) { return CoeffVector(a * u + b); };

  accel::AndersonConfig cfg;
  cfg.depth_m = 0;
  cfg.max_iters = 40;
  cfg.tol_abs = 1e-13;
  const InnerProduct ip;
  const auto trace =
      accel::run_accelerated(accel::FixedPointMap{g}, CoeffVector::Zero(n), cfg, ip);

  // bare loop, identical operation order
  CoeffVector u = CoeffVector::Zero(n);
  bool ok = true;
  for (int k = 0; k < cfg.max_iters && ok; ++k) {
    const CoeffVector w = g(u) - u;
    const double wnorm = ip.norm(w);
    if (static_cast<size_t>(k) >= trace.records.size() ||
        trace.records[static_cast<size_t>(k)].residual_norm != wnorm)
      ok = false;
    if (wnorm <= cfg.tol_abs) break;
    u = g(u);
  }
  return {"depth-0 trace identical to bare loop", ok,
          ok ? "bitwise equal residual norms" : "trace mismatch"};
}

CheckResult check_skew_symmetry(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto disc = std::make_shared<fem::Discretization>(
      8, fem::BoundaryCondition{fem::BoundaryCondition::Kind::Homogeneous, 0.0});
  const int nd = disc->dofmap.n_velocity_dofs();
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const CoeffVector w = random_vector(disc->dofmap.total_dofs(), rng);
    const CoeffVector v = random_vector(disc->dofmap.total_dofs(), rng);
    const auto conv = fem::assemble_trilinear(disc->mesh, disc->dofmap, w);
    const double b = conv.bilinear(v.head(nd), v.head(nd));
    const double scale =
        std::max(1.0, disc->h1_ip.norm(w) * disc->h1_ip.norm(v) * disc->h1_ip.norm(v));
    worst = std::max(worst, std::abs(b) / scale);
  }
  return {"convective form vanishes on (w,v,v)", worst <= 1e-12,
          "max scaled |b*(w,v,v)| = " + fmt(worst)};
}

CheckResult check_mms_orders(Level level, double gamma_gd) {
  std::vector<int> meshes = {8, 16};
  if (level == Level::Full) meshes.push_back(32);

  std::vector<double> h1_errors, l2p_errors;
  for (int n : meshes) {
    auto disc = std::make_shared<fem::Discretization>(
        n, fem::BoundaryCondition{fem::BoundaryCondition::Kind::Homogeneous, 0.0});
    nse::PicardOperator op(disc, 1.0, fem::ForcingSpec::manufactured(1.0), gamma_gd);
    accel::AndersonConfig cfg;
    cfg.depth_m = 2;
    cfg.max_iters = 60;
    cfg.tol_abs = 1e-11;
    const auto trace = run_anderson_picard(op, op.solve_stokes(), cfg);
    if (trace.status != accel::TerminationStatus::Converged)
      return {"manufactured-solution convergence", false,
              "nonlinear solve failed on n=" + std::to_string(n)};
    const auto err = fem::mms_errors(*disc, trace.final_iterate, 1.0);
    h1_errors.push_back(err.velocity_h1);
    l2p_errors.push_back(err.pressure_l2);
  }

  double min_h1_order = 1e9, min_l2_order = 1e9;
  std::ostringstream detail;
  detail.precision(3);
  for (size_t i = 1; i < h1_errors.size(); ++i) {
    const double oh = std::log2(h1_errors[i - 1] / h1_errors[i]);
    const double op_ = std::log2(l2p_errors[i - 1] / l2p_errors[i]);
    min_h1_order = std::min(min_h1_order, oh);
    min_l2_order = std::min(min_l2_order, op_);
    detail << " n=" << meshes[i] << ": H1 " << oh << ", pL2 " << op_ << ";";
  }
  const bool pass = min_h1_order >= 1.8 && min_l2_order >= 1.8;
  return {"manufactured-solution convergence (gamma=" + fmt(gamma_gd) + ")", pass,
          "orders:" + detail.str()};
}

std::vector<CheckResult> run_all(Level level, std::uint64_t seed) {
  std::vector<CheckResult> results;
  results.push_back(check_factorization_oracle(seed));
  results.push_back(check_parallelogram_law(seed + 1));
  results.push_back(check_ls_oracle(level == Level::Full ? 500 : 120, seed + 2));
  results.push_back(check_m1_closed_form(seed + 3));
  results.push_back(check_mixing_optimality(seed + 4));
  results.push_back(check_depth0_equivalence(seed + 5));
  results.push_back(check_skew_symmetry(seed + 6));
  results.push_back(check_mms_orders(level, 0.0));
  if (level == Level::Full) results.push_back(check_mms_orders(level, 0.1));
  return results;
}

}  // namespace aanse::verify
