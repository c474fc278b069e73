#pragma once

#include "aanse/accel.hpp"
#include "aanse/fem.hpp"

#include <cstdint>

namespace aanse::nse {

using accel::AndersonConfig;
using accel::SolveTrace;
using linalg::CoeffVector;

struct LinearSolveFailure : std::runtime_error {
  explicit LinearSolveFailure(const std::string& what) : std::runtime_error(what) {}
};

struct FlowState {
  fem::DiscretizationPtr disc;
  CoeffVector coeffs;
  double reynolds = 1.0;
  double nu = 1.0;
};

/// Solution operator of the linearized momentum/continuity system: G(w)
/// solves the saddle-point problem advected by w. Deterministic, immutable
/// after construction, shareable across runs.
class PicardOperator {
 public:
  PicardOperator(fem::DiscretizationPtr disc, double reynolds,
                 fem::ForcingSpec forcing, double gamma_gd = 0.0);

  const fem::Discretization& disc() const { return *disc_; }
  fem::DiscretizationPtr disc_ptr() const { return disc_; }
  double nu() const { return nu_; }
  double reynolds() const { return reynolds_; }
  double gamma_gd() const { return gamma_gd_; }
  const fem::ForcingSpec& forcing() const { return forcing_; }
  const linalg::InnerProduct& h1_ip() const { return disc_->h1_ip; }

  /// One linearized solve at the advecting state; boundary rows are snapped
  /// to their prescribed values and the pressure projected to zero mean.
  CoeffVector apply_G(const CoeffVector& w_state) const;
  FlowState apply_G(const FlowState& w) const;

  /// gamma-augmented Stokes solve with the run's boundary data (the
  /// linearized system at the zero state).
  FlowState solve_stokes() const;

  FlowState make_state(CoeffVector coeffs) const;

  accel::FixedPointMap fixed_point_map() const;

  /// Full-iterate Newton update map (solves the linearization with the
  /// reaction block for the next iterate).
  accel::FixedPointMap newton_map() const;

 private:
  fem::DiscretizationPtr disc_;
  double reynolds_;
  double nu_;
  fem::ForcingSpec forcing_;
  double gamma_gd_;
};

/// Plain fixed-point run (depth forced to 0); trace identical to the bare loop.
SolveTrace run_picard(const PicardOperator& op, const FlowState& u0,
                      AndersonConfig config);

/// Newton loop with the shared termination rules; residual_norm records the
/// H1 seminorm of the Newton increment.
SolveTrace run_newton(const PicardOperator& op, const FlowState& u0,
                      AndersonConfig config);

/// Depth-m accelerated run using the velocity-gradient inner product
/// (pressure dofs are mixed with the same coefficients but excluded from the
/// optimization objective).
SolveTrace run_anderson_picard(const PicardOperator& op, const FlowState& u0,
                               const AndersonConfig& config);

/// Max over sampled pairs of ||grad(G(w1) - G(w2))|| / ||grad(w1 - w2)||,
/// sampling interior perturbations of the base state with the given relative
/// spread. Deterministic in the seed.
double estimate_kappa(const PicardOperator& op, const CoeffVector& base,
                      int samples, std::uint64_t seed, double spread = 0.25);

/// Trace-based contraction estimate: the largest recorded step ratio.
double kappa_from_trace(const SolveTrace& trace);

/// Sampled estimate of the discrete trilinear-form bound
/// sup |b*(u,v,w)| / (||grad u|| ||grad v|| ||grad w||).
double estimate_trilinear_bound(const fem::Discretization& disc, int samples,
                                std::uint64_t seed);

/// Discrete dual norm sup_{v in X_h,0} (F, v) / ||grad v|| computed through a
/// constrained stiffness solve; F is a full-length load vector.
double discrete_dual_norm(const fem::Discretization& disc, const CoeffVector& F);

struct NseAuditRow {
  int k = 0;
  double lhs = 0.0;          // ||w_k||
  double rhs = 0.0;          // kappa ||w_{k-1}|| (theta + C0 ||w_{k-2}||)
  double slack = 0.0;
  bool satisfied = false;
  double crit2_lhs = 0.0;    // ||e_k||
  double crit2_rhs = 0.0;    // ||w_{k-1}|| / (1 - kappa)
  bool crit2_satisfied = false;
};

struct NseAuditReport {
  std::vector<NseAuditRow> rows;
  int satisfied_count = 0;
  int violated_count = 0;
  int crit2_satisfied_count = 0;
  int crit2_violated_count = 0;
  double kappa_hat = 0.0;
  double alpha_bar = 0.0;
  double m_hat = 0.0;
  double c0 = 0.0;
};

/// Residual-contraction audit for depth-1 traces. alpha_bar may be NaN to
/// take the largest recorded latest-coefficient magnitude from the trace.
/// Diagnostic: violations are reported, not raised.
NseAuditReport audit_nse_m1(const SolveTrace& trace, double kappa_hat,
                            double alpha_bar, double m_hat, double nu);

}  // namespace aanse::nse
