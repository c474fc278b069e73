#pragma once

#include "aanse/linalg.hpp"

#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace aanse::accel {

using linalg::CoeffVector;
using linalg::InnerProduct;

struct EmptyHistory : std::runtime_error {
  explicit EmptyHistory(const std::string& what) : std::runtime_error(what) {}
};

struct InsufficientTrace : std::runtime_error {
  explicit InsufficientTrace(const std::string& what) : std::runtime_error(what) {}
};

struct HypothesisViolated : std::runtime_error {
  explicit HypothesisViolated(const std::string& what) : std::runtime_error(what) {}
};

inline double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

struct AndersonConfig {
  int depth_m = 0;             // 0 reduces the driver to the plain fixed-point loop
  double damping_beta = 1.0;   // in (0, 1]
  int max_iters = 100;
  double tol_abs = 1e-8;
  double tol_rel = 0.0;
  double divergence_factor = 1e4;
  double cond_threshold = 1e10;
};

/// Bounded window of past iterates u_j and residuals w_j = G(u_j) - u_j,
/// aligned by index, oldest first, at most depth+1 entries.
class AndersonHistory {
public:
  AndersonHistory(const InnerProduct& ip, int depth)
      : ip_(&ip), depth_(depth) {}

  void push(CoeffVector u, CoeffVector w);
  int size() const { return static_cast<int>(iterates_.size()); }
  int depth() const { return depth_; }

  /// j = 0 is the oldest window entry.
  const CoeffVector& iterate(int j) const { return iterates_.at(j); }
  const CoeffVector& residual(int j) const { return residuals_.at(j); }
  const InnerProduct& ip() const { return *ip_; }

private:
  std::deque<CoeffVector> iterates_;
  std::deque<CoeffVector> residuals_;
  const InnerProduct* ip_;
  int depth_;
};

struct MixingResult {
  std::vector<double> alphas;  // oldest..latest, sums to 1, length m_k+1
  std::vector<double> gammas;  // difference-form coefficients, length m_k
  double theta = 1.0;          // objective / ||w_k||, 0 when converged
  double eta_partial = 0.0;    // max_l |sum_{j<=l} alpha_j| over l < k
  double objective = 0.0;      // optimal mixed-residual norm
  int effective_depth = 0;     // columns kept after conditioning drops
};

/// Exact minimizer of || sum_j alpha_j w_j ||_* subject to sum alpha_j = 1,
/// computed by orthogonalizing the residual-difference columns in the
/// *-inner product (modified Gram-Schmidt with reorthogonalization) and
/// back-substituting. When the Gram matrix of the difference columns has a
/// condition estimate above cond_threshold the oldest column is dropped and
/// the problem re-solved; dropped columns get alpha = 0.
MixingResult solve_mixing(const AndersonHistory& history,
                          double cond_threshold = 1e10);

/// u_{k+1} = beta * sum_j alpha_j (u_j + w_j) + (1-beta) * sum_j alpha_j u_j,
/// evaluated in difference form so that affine combinations preserve shared
/// boundary values bit-exactly. With beta = 1 and depth 0 this returns
/// g_of_uk itself.
std::pair<CoeffVector, MixingResult> anderson_step(const AndersonHistory& history,
                                                   const CoeffVector& g_of_uk,
                                                   const AndersonConfig& config);

struct IterationRecord {
  int k = 0;
  double residual_norm = 0.0;             // ||w_k||_*
  double theta = nan_value();             // gain of the mixing at this step
  std::vector<double> alphas;             // mixing coefficients (empty if no mixing)
  double eta_partial = nan_value();       // coefficient-budget measurement
  double step_ratio = nan_value();        // ||w_k|| / ||w_{k-1}||
  double step_norm = nan_value();         // ||u_k - u_{k-1}||_*
  double g_ratio = nan_value();           // ||G(u_k)-G(u_{k-1})||_* / step_norm
  double wall_ms = 0.0;
};

enum class TerminationStatus { Converged, MaxIters, Diverged };

std::string to_string(TerminationStatus s);
TerminationStatus status_from_string(const std::string& s);

/// Full record of one accelerated run. `final_iterate` is carried for
/// downstream consumers (exports, restart) and is not serialized.
struct SolveTrace {
  std::vector<std::pair<std::string, std::string>> config;  // ordered echo
  int depth_m = 0;
  double damping_beta = 1.0;
  std::vector<IterationRecord> records;
  TerminationStatus status = TerminationStatus::MaxIters;
  std::string error;  // nonempty when an operator failure ended the run
  double total_wall_ms = 0.0;
  CoeffVector final_iterate;
};

struct FixedPointMap {
  std::function<CoeffVector(const CoeffVector&)> apply;
};

/// Depth-m Anderson acceleration of the fixed-point map. Terminates on
/// ||w_k|| <= tol_abs, ||w_k|| <= tol_rel * ||w_0||, k = max_iters - 1,
/// non-finite residuals, or ||w_k|| > divergence_factor * ||w_0||.
/// Inner-operator failures end the run with status Diverged and the error
/// message recorded alongside the partial trace.
SolveTrace run_accelerated(const FixedPointMap& op, const CoeffVector& u0,
                           const AndersonConfig& config, const InnerProduct& ip);

/// Sufficient per-step optimization gain for r-linear convergence at factor r
/// given a coefficient budget eta and depth m (k = 1 branch returns 1 - eta/r).
/// Throws HypothesisViolated when eta >= r^m (1-r)/(1-r^m) (no guarantee).
double theta_threshold(double r, double eta, int m, int k);

struct AuditRow {
  int k = 0;
  double lhs = 0.0;   // ||e_{k+1}||
  double rhs = 0.0;   // recursion bound evaluated with recorded quantities
  double slack = 0.0; // rhs - lhs
  bool satisfied = false;
};

struct AuditReport {
  std::vector<AuditRow> rows;
  int satisfied_count = 0;
  int violated_count = 0;
  double r_hat = 0.0;
  double eta_max = 0.0;
};

/// Evaluates the depth-m recursion bound on the recorded step norms, using
/// each step's theta, the running max of the coefficient budget, and the
/// supplied contraction estimate r_hat. Violations are reported, not raised.
AuditReport audit_recursion(const SolveTrace& trace, double r_hat);

/// Largest g_ratio (Lipschitz ratio of G along the trajectory) in the trace;
/// for a depth-0 run this equals the largest step ratio. NaN entries skipped.
double max_lipschitz_ratio(const SolveTrace& trace);

/// Largest step_ratio over k >= 1 (NaN entries skipped).
double max_step_ratio(const SolveTrace& trace);

}  // namespace aanse::accel
