#pragma once

#include "aanse/accel.hpp"

#include <string>
#include <vector>

namespace aanse::report {

using accel::SolveTrace;

struct EmptyTrace : std::runtime_error {
  explicit EmptyTrace(const std::string& what) : std::runtime_error(what) {}
};

struct RunSummary {
  std::vector<std::pair<std::string, std::string>> config;
  accel::TerminationStatus status = accel::TerminationStatus::MaxIters;
  int iterations = 0;
  double theta_median = accel::nan_value();     // over k >= 1 with finite theta
  double conv_rate_median = accel::nan_value(); // over k >= 1 with finite ratios
  double kappa_hat = accel::nan_value();        // max step ratio
  double eta_max = 0.0;
  double predicted_rate = accel::nan_value();   // theta_median * kappa_reference
};

/// Medians use the lower-median convention (lower of the two middle values
/// for even counts), matching the summary-statistics tables downstream.
double median_lower(std::vector<double> values);

/// kappa_reference is the paired depth-0 run's median step ratio; pass NaN
/// when no reference run exists (predicted_rate is then absent).
RunSummary summarize(const SolveTrace& trace,
                     double kappa_reference = accel::nan_value());

/// Shortest round-trip decimal representation ("nan"/"inf" for non-finite).
std::string format_double(double v);

/// Columns: k,residual_norm,step_ratio,theta,eta_partial,wall_ms
void emit_csv(const SolveTrace& trace, const std::string& path);

/// Versioned JSON trace (schema 1). With include_timings = false all wall
/// clock fields are omitted so identical runs produce byte-identical files.
void emit_json(const SolveTrace& trace, const std::string& path,
               bool include_timings = true);

SolveTrace load_trace(const std::string& path);

void emit_summary_json(const RunSummary& summary, const std::string& path);

/// Writes one whitespace-separated .dat per trace (k, residual, theta,
/// step_ratio) plus gnuplot 5 scripts for log-residual vs k and theta vs k.
void emit_gnuplot(const std::vector<SolveTrace>& traces, const std::string& dir);

}  // namespace aanse::report
