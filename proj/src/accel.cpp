#include "aanse/accel.hpp"

#include <Eigen/SVD>

#include <chrono>
#include <cmath>

namespace aanse::accel {

void AndersonHistory::push(CoeffVector u, CoeffVector w) {
  iterates_.push_back(std::move(u));
  residuals_.push_back(std::move(w));
  while (size() > depth_ + 1) {
    iterates_.pop_front();
    residuals_.pop_front();
  }
}

namespace {

// Least squares min ||w_last - C gamma||_* over the `eff` newest difference
// columns, via modified Gram-Schmidt in the *-inner product. Returns false
// when a column is numerically dependent (caller drops the oldest column).
bool mixing_ls(const AndersonHistory& h, int eff, double cond_threshold,
               std::vector<double>& gamma_out) {
  const InnerProduct& ip = h.ip();
  const int m_k = h.size() - 1;
  const CoeffVector& wk = h.residual(m_k);

  std::vector<CoeffVector> q(eff);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(eff, eff);
  for (int i = 0; i < eff; ++i) {
    const int col = m_k - eff + 1 + i;  // window index of the difference column
    CoeffVector v = h.residual(col) - h.residual(col - 1);
    const double vnorm0 = ip.norm(v);
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < i; ++j) {
        const double r = ip.dot(q[j], v);
        v -= r * q[j];
        R(j, i) += r;
      }
    }
    const double rii = ip.norm(v);
    if (!(rii > 1e-14 * vnorm0) || vnorm0 == 0.0) return false;
    R(i, i) = rii;
    q[i] = v / rii;
  }

  // Condition estimate of the difference Gram matrix: square of R's
  // singular-value ratio.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
  const double smin = svd.singularValues()(eff - 1);
  const double smax = svd.singularValues()(0);
  if (!(smin > 0.0) || (smax / smin) * (smax / smin) > cond_threshold)
    return false;

  Eigen::VectorXd c(eff);
  for (int i = 0; i < eff; ++i) c[i] = ip.dot(q[i], wk);
  const Eigen::VectorXd gamma =
      R.topLeftCorner(eff, eff).triangularView<Eigen::Upper>().solve(c);
  gamma_out.assign(gamma.data(), gamma.data() + eff);
  return true;
}

}  // namespace

MixingResult solve_mixing(const AndersonHistory& history, double cond_threshold) {
  if (history.size() == 0) throw EmptyHistory("solve_mixing: no residuals");
  const int m_k = history.size() - 1;
  const InnerProduct& ip = history.ip();
  const CoeffVector& wk = history.residual(m_k);
  const double wk_norm = ip.norm(wk);

  MixingResult res;
  res.alphas.assign(m_k + 1, 0.0);
  res.gammas.assign(m_k, 0.0);

  if (wk_norm == 0.0) {
    res.alphas.back() = 1.0;
    res.theta = 0.0;
    res.objective = 0.0;
    return res;
  }

  int eff = m_k;
  std::vector<double> gamma;
  while (eff > 0) {
    if (mixing_ls(history, eff, cond_threshold, gamma)) break;
    --eff;
  }
  res.effective_depth = eff;

  if (eff == 0) {
    res.alphas.back() = 1.0;
    res.theta = 1.0;
    res.objective = wk_norm;
    return res;
  }

  for (int i = 0; i < eff; ++i) res.gammas[m_k - eff + i] = gamma[i];

  // alpha from the telescoped gammas: alpha_0 = g_0, alpha_j = g_j - g_{j-1},
  // alpha_{m_k} = 1 - g_{m_k-1}; partial sums of alpha equal the gammas.
  res.alphas[0] = res.gammas.empty() ? 1.0 : res.gammas[0];
  for (int j = 1; j < m_k; ++j) res.alphas[j] = res.gammas[j] - res.gammas[j - 1];
  res.alphas[m_k] = 1.0 - res.gammas[m_k - 1];

  res.eta_partial = 0.0;
  for (double g : res.gammas) res.eta_partial = std::max(res.eta_partial, std::abs(g));

  CoeffVector opt = wk;
  for (int i = 0; i < m_k; ++i) {
    if (res.gammas[i] != 0.0)
      opt -= res.gammas[i] * (history.residual(i + 1) - history.residual(i));
  }
  res.objective = ip.norm(opt);
  res.theta = res.objective / wk_norm;
  return res;
}

std::pair<CoeffVector, MixingResult> anderson_step(const AndersonHistory& history,
                                                   const CoeffVector& g_of_uk,
                                                   const AndersonConfig& config) {
  MixingResult mix = solve_mixing(history, config.cond_threshold);
  const int m_k = history.size() - 1;
  const double beta = config.damping_beta;

  if (mix.effective_depth == 0) {
    if (beta == 1.0) return {g_of_uk, mix};
    CoeffVector u = history.iterate(m_k) + beta * history.residual(m_k);
    return {u, mix};
  }

  // u_{k+1} = [u_k - sum_i g_i (u_i - u_{i-1})] + beta [w_k - sum_i g_i (w_i - w_{i-1})]
  CoeffVector u_mix = history.iterate(m_k);
  CoeffVector w_mix = history.residual(m_k);
  for (int i = 0; i < m_k; ++i) {
    const double g = mix.gammas[i];
    if (g == 0.0) continue;
    u_mix -= g * (history.iterate(i + 1) - history.iterate(i));
    w_mix -= g * (history.residual(i + 1) - history.residual(i));
  }
  return {u_mix + beta * w_mix, mix};
}

std::string to_string(TerminationStatus s) {
  switch (s) {
    case TerminationStatus::Converged: return "converged";
    case TerminationStatus::MaxIters: return "max_iters";
    case TerminationStatus::Diverged: return "diverged";
  }
  return "unknown";
}

TerminationStatus status_from_string(const std::string& s) {
  if (s == "converged") return TerminationStatus::Converged;
  if (s == "max_iters") return TerminationStatus::MaxIters;
  if (s == "diverged") return TerminationStatus::Diverged;
  throw std::runtime_error("unknown termination status: " + s);
}

SolveTrace run_accelerated(const FixedPointMap& op, const CoeffVector& u0,
                           const AndersonConfig& config, const InnerProduct& ip) {
  using clock = std::chrono::steady_clock;
  const auto t_run = clock::now();
  auto ms_since = [](clock::time_point t) {
    return std::chrono::duration<double, std::milli>(clock::now() - t).count();
  };

  SolveTrace trace;
  trace.depth_m = config.depth_m;
  trace.damping_beta = config.damping_beta;
  trace.final_iterate = u0;

  AndersonHistory history(ip, config.depth_m);
  CoeffVector u = u0;
  CoeffVector prev_u, prev_w;
  double w0_norm = 0.0;
  double prev_norm = nan_value();

  for (int k = 0; k < config.max_iters; ++k) {
    const auto t_step = clock::now();
    CoeffVector w;
    try {
      w = op.apply(u) - u;
    } catch (const std::exception& e) {
      trace.status = TerminationStatus::Diverged;
      trace.error = std::string("operator failure at k=") + std::to_string(k) +
                    ": " + e.what();
      break;
    }
    const double wnorm = ip.norm(w);
    if (k == 0) w0_norm = wnorm;

    IterationRecord rec;
    rec.k = k;
    rec.residual_norm = wnorm;
    if (k > 0) {
      rec.step_ratio = wnorm / prev_norm;
      rec.step_norm = ip.norm(u - prev_u);
      const double gdiff = ip.norm((u - prev_u) + (w - prev_w));
      rec.g_ratio = rec.step_norm > 0.0 ? gdiff / rec.step_norm : nan_value();
    }

    history.push(u, w);
    trace.final_iterate = u;

    const bool converged =
        wnorm <= config.tol_abs ||
        (config.tol_rel > 0.0 && wnorm <= config.tol_rel * w0_norm);
    const bool diverged =
        !std::isfinite(wnorm) || wnorm > config.divergence_factor * w0_norm;

    if (converged || diverged || k == config.max_iters - 1) {
      rec.wall_ms = ms_since(t_step);
      trace.records.push_back(std::move(rec));
      trace.status = converged  ? TerminationStatus::Converged
                     : diverged ? TerminationStatus::Diverged
                                : TerminationStatus::MaxIters;
      break;
    }

    auto [u_next, mix] = anderson_step(history, u + w, config);
    rec.theta = mix.theta;
    rec.alphas = mix.alphas;
    rec.eta_partial = mix.eta_partial;
    rec.wall_ms = ms_since(t_step);
    trace.records.push_back(std::move(rec));

    prev_u = std::move(u);
    prev_w = std::move(w);
    prev_norm = wnorm;
    u = std::move(u_next);
  }

  trace.total_wall_ms = ms_since(t_run);
  return trace;
}

double theta_threshold(double r, double eta, int m, int k) {
  if (!(r > 0.0 && r < 1.0))
    throw HypothesisViolated("theta_threshold: r must lie in (0,1)");
  if (eta < 0.0) throw HypothesisViolated("theta_threshold: eta must be >= 0");
  if (m < 1) throw HypothesisViolated("theta_threshold: depth m must be >= 1");
  if (k < 1) throw HypothesisViolated("theta_threshold: k must be >= 1");
  const double budget = std::pow(r, m) * (1.0 - r) / (1.0 - std::pow(r, m));
  if (!(eta < budget))
    throw HypothesisViolated("theta_threshold: eta budget exceeded");
  if (k == 1) return 1.0 - eta / r;
  const int p = std::min(k, m);
  const double rp = std::pow(r, p);
  const double grow = (1.0 - rp) / (1.0 - r);
  const double num = rp - eta * grow;
  const double den = (k <= m) ? rp + eta * (r - rp) / (1.0 - r) : rp + eta * grow;
  return num / den;
}

AuditReport audit_recursion(const SolveTrace& trace, double r_hat) {
  const auto& rec = trace.records;
  if (rec.size() < 3)
    throw InsufficientTrace("audit_recursion: need at least 2 iterations");
  const int m = trace.depth_m;

  AuditReport report;
  report.r_hat = r_hat;
  double eta = 0.0;

  for (size_t k = 1; k + 1 < rec.size(); ++k) {
    if (std::isfinite(rec[k].eta_partial)) eta = std::max(eta, rec[k].eta_partial);
    const double theta = rec[k].theta;
    if (!std::isfinite(theta)) continue;
    const double lhs = rec[k + 1].step_norm;
    if (!std::isfinite(lhs)) continue;

    auto e_norm = [&](int j) { return rec[static_cast<size_t>(j)].step_norm; };
    double rhs = (r_hat * theta + eta) * e_norm(static_cast<int>(k));
    if (static_cast<int>(k) <= m) {
      double tail = 0.0;
      for (int j = 1; j < static_cast<int>(k); ++j) tail += e_norm(j);
      rhs += eta * (r_hat * theta + 1.0) * tail;
    } else {
      double tail = 0.0;
      for (int j = static_cast<int>(k) - m + 1; j < static_cast<int>(k); ++j)
        if (j >= 1) tail += e_norm(j);
      rhs += eta * (r_hat * theta + 1.0) * tail;
      const int jm = static_cast<int>(k) - m;
      if (jm >= 1) rhs += r_hat * theta * eta * e_norm(jm);
    }

    AuditRow row;
    row.k = static_cast<int>(k);
    row.lhs = lhs;
    row.rhs = rhs;
    row.slack = rhs - lhs;
    row.satisfied = lhs <= rhs * (1.0 + 1e-10) + 1e-300;
    row.satisfied ? ++report.satisfied_count : ++report.violated_count;
    report.rows.push_back(row);
  }
  report.eta_max = eta;
  return report;
}

double max_lipschitz_ratio(const SolveTrace& trace) {
  double m = 0.0;
  for (const auto& r : trace.records)
    if (std::isfinite(r.g_ratio)) m = std::max(m, r.g_ratio);
  return m;
}

double max_step_ratio(const SolveTrace& trace) {
  double m = 0.0;
  for (const auto& r : trace.records)
    if (std::isfinite(r.step_ratio)) m = std::max(m, r.step_ratio);
  return m;
}

}  // namespace aanse::accel
