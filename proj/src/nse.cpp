#include "aanse/nse.hpp"

#include <cmath>
#include <random>

namespace aanse::nse {

PicardOperator::PicardOperator(fem::DiscretizationPtr disc, double reynolds,
                               fem::ForcingSpec forcing, double gamma_gd)
    : disc_(std::move(disc)),
      reynolds_(reynolds),
      nu_(1.0 / reynolds),
      forcing_(std::move(forcing)),
      gamma_gd_(gamma_gd) {
  if (reynolds <= 0.0)
    throw std::invalid_argument("PicardOperator: reynolds must be positive");
  if (gamma_gd < 0.0)
    throw std::invalid_argument("PicardOperator: gamma_gd must be >= 0");
}

CoeffVector PicardOperator::apply_G(const CoeffVector& w_state) const {
  fem::AssembledSystem sys = fem::assemble_picard_system(
      disc_->mesh, disc_->dofmap, w_state, nu_, forcing_, gamma_gd_);
  try {
    const linalg::Factorization f = linalg::factorize(sys.matrix);
    CoeffVector x = f.solve(sys.rhs);
    disc_->dofmap.impose_dirichlet(x);
    disc_->dofmap.project_pressure_zero_mean(x);
    return x;
  } catch (const linalg::SingularMatrix& e) {
    throw LinearSolveFailure(e.what());
  }
}

FlowState PicardOperator::apply_G(const FlowState& w) const {
  return make_state(apply_G(w.coeffs));
}

FlowState PicardOperator::solve_stokes() const {
  const CoeffVector zero = CoeffVector::Zero(disc_->dofmap.total_dofs());
  return make_state(apply_G(zero));
}

FlowState PicardOperator::make_state(CoeffVector coeffs) const {
  return FlowState{disc_, std::move(coeffs), reynolds_, nu_};
}

accel::FixedPointMap PicardOperator::fixed_point_map() const {
  return accel::FixedPointMap{
      [this](const CoeffVector& u) { return apply_G(u); }};
}

accel::FixedPointMap PicardOperator::newton_map() const {
  return accel::FixedPointMap{[this](const CoeffVector& u) {
    fem::AssembledSystem sys = fem::assemble_newton_system(
        disc_->mesh, disc_->dofmap, u, nu_, forcing_, gamma_gd_);
    try {
      const linalg::Factorization f = linalg::factorize(sys.matrix);
      CoeffVector x = f.solve(sys.rhs);
      disc_->dofmap.impose_dirichlet(x);
      disc_->dofmap.project_pressure_zero_mean(x);
      return x;
    } catch (const linalg::SingularMatrix& e) {
      throw LinearSolveFailure(e.what());
    }
  }};
}

namespace {

void echo_common(SolveTrace& trace, const PicardOperator& op,
                 const AndersonConfig& cfg, const char* solver) {
  auto& c = trace.config;
  c.emplace_back("solver", solver);
  c.emplace_back("n", std::to_string(op.disc().mesh.n));
  c.emplace_back("reynolds", std::to_string(op.reynolds()));
  c.emplace_back("m", std::to_string(cfg.depth_m));
  c.emplace_back("beta", std::to_string(cfg.damping_beta));
  c.emplace_back("gamma_gd", std::to_string(op.gamma_gd()));
  c.emplace_back("tol_abs", std::to_string(cfg.tol_abs));
  c.emplace_back("tol_rel", std::to_string(cfg.tol_rel));
  c.emplace_back("max_iters", std::to_string(cfg.max_iters));
}

}  // namespace

SolveTrace run_picard(const PicardOperator& op, const FlowState& u0,
                      AndersonConfig config) {
  config.depth_m = 0;
  SolveTrace trace = accel::run_accelerated(op.fixed_point_map(), u0.coeffs,
                                            config, op.disc().h1_ip);
  echo_common(trace, op, config, "picard");
  return trace;
}

SolveTrace run_newton(const PicardOperator& op, const FlowState& u0,
                      AndersonConfig config) {
  config.depth_m = 0;
  SolveTrace trace = accel::run_accelerated(op.newton_map(), u0.coeffs, config,
                                            op.disc().h1_ip);
  echo_common(trace, op, config, "newton");
  return trace;
}

SolveTrace run_anderson_picard(const PicardOperator& op, const FlowState& u0,
                               const AndersonConfig& config) {
  SolveTrace trace = accel::run_accelerated(op.fixed_point_map(), u0.coeffs,
                                            config, op.disc().h1_ip);
  echo_common(trace, op, config, "anderson");
  return trace;
}

namespace {

// Smooth random velocity field with homogeneous boundary values: each
// component is a random combination of low-wavenumber sine products,
// interpolated to the P2 nodes and normalized to unit gradient norm. Smooth
// samples make the sampled operator bounds stable under mesh refinement.
CoeffVector random_smooth_field(const fem::Discretization& disc,
                                std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  double c[2][3][3];
  for (auto& comp : c)
    for (auto& row : comp)
      for (double& v : row) v = dist(rng);
  auto field = [&c](double x, double y) {
    std::array<double, 2> u{0.0, 0.0};
    for (int d = 0; d < 2; ++d)
      for (int k = 1; k <= 3; ++k)
        for (int l = 1; l <= 3; ++l)
          u[d] += c[d][k - 1][l - 1] * std::sin(k * M_PI * x) * std::sin(l * M_PI * y);
    return u;
  };
  CoeffVector v = fem::interpolate_velocity(disc, field);
  const double nrm = disc.h1_ip.norm(v);
  if (nrm > 0.0) v /= nrm;
  return v;
}

}  // namespace

double estimate_kappa(const PicardOperator& op, const CoeffVector& base,
                      int samples, std::uint64_t seed, double spread) {
  std::mt19937_64 rng(seed);
  const fem::Discretization& disc = op.disc();
  const double scale = spread * std::max(1.0, disc.h1_ip.norm(base));
  double kappa = 0.0;
  for (int s = 0; s < samples; ++s) {
    const CoeffVector d1 = random_smooth_field(disc, rng);
    const CoeffVector d2 = random_smooth_field(disc, rng);
    const CoeffVector w1 = base + scale * d1;
    const CoeffVector w2 = base + scale * d2;
    const double den = disc.h1_ip.norm(w1 - w2);
    if (den == 0.0) continue;
    const double num = disc.h1_ip.norm(op.apply_G(w1) - op.apply_G(w2));
    kappa = std::max(kappa, num / den);
  }
  return kappa;
}

double kappa_from_trace(const SolveTrace& trace) {
  return accel::max_step_ratio(trace);
}

double estimate_trilinear_bound(const fem::Discretization& disc, int samples,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double m_hat = 0.0;
  const int nd = disc.dofmap.n_velocity_dofs();
  for (int s = 0; s < samples; ++s) {
    const CoeffVector u = random_smooth_field(disc, rng);
    const CoeffVector v = random_smooth_field(disc, rng);
    const CoeffVector w = random_smooth_field(disc, rng);
    const linalg::SparseMatrix conv =
        fem::assemble_trilinear(disc.mesh, disc.dofmap, u);
    const double b = conv.bilinear(w.head(nd), v.head(nd));
    m_hat = std::max(m_hat, std::abs(b));  // all three factors have unit norm
  }
  return m_hat;
}

double discrete_dual_norm(const fem::Discretization& disc, const CoeffVector& F) {
  const fem::DofMap& dm = disc.dofmap;
  const int nd = dm.n_velocity_dofs();
  const auto& K = disc.stiffness_velocity;

  std::vector<linalg::Triplet> trips;
  trips.reserve(static_cast<size_t>(K.nnz()) + static_cast<size_t>(nd));
  auto constrained = [&](int dof) {
    return dm.vnode_on_boundary(dof % dm.n_velocity_nodes());
  };
  for (int r = 0; r < K.nrows(); ++r) {
    const bool rc = constrained(r);
    for (int k = K.row_offsets()[r]; k < K.row_offsets()[r + 1]; ++k) {
      const int c = K.col_indices()[k];
      if (rc || constrained(c)) continue;
      trips.push_back({r, c, K.values()[k]});
    }
  }
  for (int d = 0; d < nd; ++d)
    if (constrained(d)) trips.push_back({d, d, 1.0});

  CoeffVector f0 = F.head(nd);
  for (int d = 0; d < nd; ++d)
    if (constrained(d)) f0[d] = 0.0;

  const auto K0 = linalg::SparseMatrix::from_triplets(nd, nd, std::move(trips));
  const CoeffVector z = linalg::factorize(K0).solve(f0);
  return std::sqrt(std::max(0.0, f0.dot(z)));
}

NseAuditReport audit_nse_m1(const SolveTrace& trace, double kappa_hat,
                            double alpha_bar, double m_hat, double nu) {
  const auto& rec = trace.records;
  if (rec.size() < 3)
    throw accel::InsufficientTrace("audit_nse_m1: need at least 2 iterations");

  NseAuditReport report;
  report.kappa_hat = kappa_hat;
  report.m_hat = m_hat;

  if (!std::isfinite(alpha_bar)) {
    alpha_bar = 0.0;
    for (const auto& r : rec)
      if (!r.alphas.empty())
        alpha_bar = std::max(alpha_bar, std::abs(r.alphas.back()));
  }
  report.alpha_bar = alpha_bar;

  const double denom = (1.0 - kappa_hat) * (1.0 - kappa_hat);
  report.c0 = denom > 0.0 ? m_hat * alpha_bar / (nu * denom)
                          : std::numeric_limits<double>::infinity();

  for (size_t k = 2; k < rec.size(); ++k) {
    const double theta = rec[k - 1].theta;  // gain of the mixing that built u_k
    if (!std::isfinite(theta)) continue;
    NseAuditRow row;
    row.k = static_cast<int>(k);
    row.lhs = rec[k].residual_norm;
    row.rhs = kappa_hat * rec[k - 1].residual_norm *
              (theta + report.c0 * rec[k - 2].residual_norm);
    row.slack = row.rhs - row.lhs;
    row.satisfied = row.lhs <= row.rhs * (1.0 + 1e-10) + 1e-300;

    row.crit2_lhs = rec[k].step_norm;
    row.crit2_rhs = kappa_hat < 1.0
                        ? rec[k - 1].residual_norm / (1.0 - kappa_hat)
                        : std::numeric_limits<double>::infinity();
    row.crit2_satisfied =
        !std::isfinite(row.crit2_lhs) || row.crit2_lhs <= row.crit2_rhs * (1.0 + 1e-10);

    row.satisfied ? ++report.satisfied_count : ++report.violated_count;
    row.crit2_satisfied ? ++report.crit2_satisfied_count
                        : ++report.crit2_violated_count;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace aanse::nse
