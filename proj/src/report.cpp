#include "aanse/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace aanse::report {

using ordered_json = nlohmann::ordered_json;

double median_lower(std::vector<double> values) {
  if (values.empty()) return accel::nan_value();
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

RunSummary summarize(const SolveTrace& trace, double kappa_reference) {
  if (trace.records.empty()) throw EmptyTrace("summarize: no records");
  RunSummary s;
  s.config = trace.config;
  s.status = trace.status;
  s.iterations = static_cast<int>(trace.records.size());

  std::vector<double> thetas, ratios;
  double kmax = accel::nan_value();
  for (const auto& r : trace.records) {
    if (r.k < 1) continue;
    if (std::isfinite(r.theta)) thetas.push_back(r.theta);
    if (std::isfinite(r.step_ratio)) {
      ratios.push_back(r.step_ratio);
      kmax = std::isfinite(kmax) ? std::max(kmax, r.step_ratio) : r.step_ratio;
    }
    if (std::isfinite(r.eta_partial)) s.eta_max = std::max(s.eta_max, r.eta_partial);
  }
  s.theta_median = median_lower(std::move(thetas));
  s.conv_rate_median = median_lower(std::move(ratios));
  s.kappa_hat = kmax;
  if (std::isfinite(kappa_reference) && std::isfinite(s.theta_median))
    s.predicted_rate = s.theta_median * kappa_reference;
  return s;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

void emit_csv(const SolveTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw linalg::IoFailure("cannot open " + path);
  out << "k,residual_norm,step_ratio,theta,eta_partial,wall_ms\n";
  for (const auto& r : trace.records) {
    out << r.k << ',' << format_double(r.residual_norm) << ','
        << format_double(r.step_ratio) << ',' << format_double(r.theta) << ','
        << format_double(r.eta_partial) << ',' << format_double(r.wall_ms) << '\n';
  }
  if (!out) throw linalg::IoFailure("write failed for " + path);
}

namespace {

ordered_json double_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

double json_to_double(const ordered_json& j) {
  if (j.is_null()) return accel::nan_value();
  return j.get<double>();
}

}  // namespace

void emit_json(const SolveTrace& trace, const std::string& path,
               bool include_timings) {
  ordered_json j;
  j["schema"] = 1;
  ordered_json cfg = ordered_json::object();
  for (const auto& [key, value] : trace.config) cfg[key] = value;
  j["config"] = cfg;
  j["depth_m"] = trace.depth_m;
  j["damping_beta"] = trace.damping_beta;
  j["status"] = accel::to_string(trace.status);
  j["error"] = trace.error;
  if (include_timings) j["total_wall_ms"] = trace.total_wall_ms;

  ordered_json records = ordered_json::array();
  for (const auto& r : trace.records) {
    ordered_json rec;
    rec["k"] = r.k;
    rec["residual_norm"] = double_or_null(r.residual_norm);
    rec["theta"] = double_or_null(r.theta);
    rec["alphas"] = r.alphas;
    rec["eta_partial"] = double_or_null(r.eta_partial);
    rec["step_ratio"] = double_or_null(r.step_ratio);
    rec["step_norm"] = double_or_null(r.step_norm);
    rec["g_ratio"] = double_or_null(r.g_ratio);
    if (include_timings) rec["wall_ms"] = r.wall_ms;
    records.push_back(std::move(rec));
  }
  j["records"] = std::move(records);

  std::ofstream out(path);
  if (!out) throw linalg::IoFailure("cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw linalg::IoFailure("write failed for " + path);
}

SolveTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw linalg::IoFailure("cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw linalg::IoFailure("malformed trace " + path + ": " + e.what());
  }
  SolveTrace trace;
  try {
    if (j.at("schema").get<int>() != 1)
      throw linalg::IoFailure("unsupported trace schema in " + path);
    for (const auto& [key, value] : j.at("config").items())
      trace.config.emplace_back(key, value.get<std::string>());
    trace.depth_m = j.at("depth_m").get<int>();
    trace.damping_beta = j.at("damping_beta").get<double>();
    trace.status = accel::status_from_string(j.at("status").get<std::string>());
    trace.error = j.value("error", std::string());
    trace.total_wall_ms = j.value("total_wall_ms", 0.0);
    for (const auto& rec : j.at("records")) {
      accel::IterationRecord r;
      r.k = rec.at("k").get<int>();
      r.residual_norm = json_to_double(rec.at("residual_norm"));
      r.theta = json_to_double(rec.at("theta"));
      r.alphas = rec.at("alphas").get<std::vector<double>>();
      r.eta_partial = json_to_double(rec.at("eta_partial"));
      r.step_ratio = json_to_double(rec.at("step_ratio"));
      r.step_norm = json_to_double(rec.at("step_norm"));
      r.g_ratio = json_to_double(rec.at("g_ratio"));
      r.wall_ms = rec.value("wall_ms", 0.0);
      trace.records.push_back(std::move(r));
    }
  } catch (const linalg::IoFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw linalg::IoFailure("malformed trace " + path + ": " + e.what());
  }
  return trace;
}

void emit_summary_json(const RunSummary& summary, const std::string& path) {
  ordered_json j;
  ordered_json cfg = ordered_json::object();
  for (const auto& [key, value] : summary.config) cfg[key] = value;
  j["config"] = cfg;
  j["status"] = accel::to_string(summary.status);
  j["iterations"] = summary.iterations;
  j["theta_median"] = double_or_null(summary.theta_median);
  j["conv_rate_median"] = double_or_null(summary.conv_rate_median);
  j["kappa_hat"] = double_or_null(summary.kappa_hat);
  j["eta_max"] = double_or_null(summary.eta_max);
  j["predicted_rate"] = double_or_null(summary.predicted_rate);
  std::ofstream out(path);
  if (!out) throw linalg::IoFailure("cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw linalg::IoFailure("write failed for " + path);
}

namespace {

std::string trace_label(const SolveTrace& trace, size_t index) {
  std::string solver = "run", re, m;
  for (const auto& [key, value] : trace.config) {
    if (key == "solver") solver = value;
    if (key == "reynolds") re = value;
    if (key == "m") m = value;
  }
  std::string label = solver;
  if (!re.empty()) {
    // strip trailing zeros produced by to_string
    std::string t = re;
    if (t.find('.') != std::string::npos) {
      t.erase(t.find_last_not_of('0') + 1);
      if (!t.empty() && t.back() == '.') t.pop_back();
    }
    label += "_re" + t;
  }
  if (!m.empty()) label += "_m" + m;
  label += "_" + std::to_string(index);
  return label;
}

}  // namespace

void emit_gnuplot(const std::vector<SolveTrace>& traces, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::vector<std::string> labels;
  for (size_t i = 0; i < traces.size(); ++i) {
    const std::string label = trace_label(traces[i], i);
    labels.push_back(label);
    std::ofstream dat(fs::path(dir) / (label + ".dat"));
    if (!dat) throw linalg::IoFailure("cannot open data file for " + label);
    dat << "# k residual_norm theta step_ratio\n";
    for (const auto& r : traces[i].records)
      dat << r.k << ' ' << format_double(r.residual_norm) << ' '
          << format_double(r.theta) << ' ' << format_double(r.step_ratio) << '\n';
  }

  auto write_script = [&](const std::string& file, const std::string& png,
                          const std::string& ylabel, int column,
                          const std::string& extra) {
    std::ofstream gp(fs::path(dir) / file);
    if (!gp) throw linalg::IoFailure("cannot open " + file);
    gp << "set terminal pngcairo size 900,600\n";
    gp << "set output '" << png << "'\n";
    gp << extra;
    gp << "set xlabel 'k'\nset ylabel '" << ylabel << "'\nset key outside\n";
    if (labels.empty()) {
      gp << "# no series\n";
      return;
    }
    gp << "plot \\\n";
    for (size_t i = 0; i < labels.size(); ++i)
      gp << "  '" << labels[i] << ".dat' using 1:" << column
         << " with linespoints title '" << labels[i]
         << (i + 1 < labels.size() ? "', \\" : "'") << "\n";
  };
  write_script("plot_residuals.gp", "residuals.png", "residual norm", 2,
               "set logscale y\n");
  write_script("plot_theta.gp", "theta.png", "theta_k", 3, "set yrange [0:1.1]\n");
}

}  // namespace aanse::report
