#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aanse/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace aanse;
using accel::IterationRecord;
using accel::SolveTrace;
using accel::TerminationStatus;

namespace {

SolveTrace sample_trace(std::uint64_t seed, int n_records) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  SolveTrace t;
  t.depth_m = 2;
  t.damping_beta = 1.0;
  t.config = {{"solver", "anderson"}, {"reynolds", "100"}, {"m", "2"}};
  t.status = TerminationStatus::Converged;
  double res = 1.0;
  for (int k = 0; k < n_records; ++k) {
    IterationRecord r;
    r.k = k;
    r.residual_norm = res;
    if (k > 0) {
      r.theta = 0.5 + 0.5 * uni(rng);
      r.alphas = {uni(rng) - 0.5, 0.0, 0.0};
      r.alphas[2] = 1.0 - r.alphas[0];
      r.eta_partial = std::abs(r.alphas[0]);
      r.step_ratio = 0.3 + 0.4 * uni(rng);
      r.step_norm = res * (0.9 + 0.2 * uni(rng));
      r.g_ratio = 0.5 * uni(rng);
      res *= r.step_ratio;
    }
    r.wall_ms = 10.0 * uni(rng);
    t.records.push_back(r);
  }
  t.total_wall_ms = 123.0;
  return t;
}

bool same_double(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return a == b;
}

}  // namespace

TEST_CASE("median uses the lower-median convention") {
  CHECK(report::median_lower({0.5, 0.6, 0.7}) == 0.6);
  CHECK(report::median_lower({0.7, 0.5, 0.6}) == 0.6);
  CHECK(report::median_lower({0.5, 0.6}) == 0.5);
  CHECK(report::median_lower({0.9}) == 0.9);
  CHECK(std::isnan(report::median_lower({})));
}

TEST_CASE("summarize computes medians over k >= 1 and the predicted rate") {
  SolveTrace t;
  t.status = TerminationStatus::Converged;
  auto add = [&](int k, double theta, double ratio) {
    IterationRecord r;
    r.k = k;
    r.residual_norm = 1.0;
    r.theta = theta;
    r.step_ratio = ratio;
    r.eta_partial = 0.05;
    t.records.push_back(r);
  };
  add(0, 1.0, accel::nan_value());
  add(1, 0.9, 0.5);
  add(2, 0.8, 0.6);
  add(3, 0.7, 0.7);

  const auto s = report::summarize(t, 0.5848);
  CHECK(s.iterations == 4);
  CHECK(s.theta_median == 0.8);
  CHECK(s.conv_rate_median == 0.6);
  CHECK(s.kappa_hat == 0.7);
  CHECK(s.eta_max == 0.05);
  CHECK(s.predicted_rate == doctest::Approx(0.8 * 0.5848).epsilon(1e-15));

  // permutation invariance of the medians
  SolveTrace shuffled = t;
  std::swap(shuffled.records[1], shuffled.records[3]);
  const auto s2 = report::summarize(shuffled, 0.5848);
  CHECK(s2.theta_median == s.theta_median);
  CHECK(s2.conv_rate_median == s.conv_rate_median);
}

TEST_CASE("single-record traces report absent statistics") {
  SolveTrace t;
  IterationRecord r;
  r.k = 0;
  r.residual_norm = 1e-12;
  t.records.push_back(r);
  t.status = TerminationStatus::Converged;
  const auto s = report::summarize(t);
  CHECK(s.iterations == 1);
  CHECK(std::isnan(s.conv_rate_median));
  CHECK(std::isnan(s.predicted_rate));
}

TEST_CASE("summarize rejects empty traces") {
  SolveTrace t;
  CHECK_THROWS_AS(report::summarize(t), report::EmptyTrace);
}

TEST_CASE("csv of a record-free trace is just the header") {
  SolveTrace t;
  report::emit_csv(t, "empty_trace.csv");
  std::ifstream in("empty_trace.csv");
  std::string line;
  CHECK(std::getline(in, line));
  CHECK(line == "k,residual_norm,step_ratio,theta,eta_partial,wall_ms");
  CHECK_FALSE(std::getline(in, line));
  std::remove("empty_trace.csv");
}

TEST_CASE("format_double is shortest round-trip") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -0.0, 5000.0}) {
    const std::string s = report::format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(report::format_double(std::nan("")) == "nan");
  CHECK(report::format_double(0.5848) == "0.5848");
}

TEST_CASE("csv emission has the exact column header and parses back") {
  const auto t = sample_trace(3, 5);
  const std::string path = "trace_test.csv";
  report::emit_csv(t, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "k,residual_norm,step_ratio,theta,eta_partial,wall_ms");
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // round-trip the residual column
    std::istringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    const int k = std::stoi(field);
    std::getline(ss, field, ',');
    CHECK(std::stod(field) == t.records[k].residual_norm);
    ++rows;
  }
  CHECK(rows == static_cast<int>(t.records.size()));
  std::remove(path.c_str());
}

TEST_CASE("json round trip reproduces every record field bit-exactly") {
  const auto t = sample_trace(7, 9);
  const std::string path = "trace_test.json";
  report::emit_json(t, path, /*include_timings=*/true);
  const auto back = report::load_trace(path);

  CHECK(back.depth_m == t.depth_m);
  CHECK(back.damping_beta == t.damping_beta);
  CHECK(back.status == t.status);
  CHECK(back.config == t.config);
  CHECK(back.total_wall_ms == t.total_wall_ms);
  REQUIRE(back.records.size() == t.records.size());
  for (size_t k = 0; k < t.records.size(); ++k) {
    const auto& a = t.records[k];
    const auto& b = back.records[k];
    CHECK(a.k == b.k);
    CHECK(same_double(a.residual_norm, b.residual_norm));
    CHECK(same_double(a.theta, b.theta));
    CHECK(a.alphas == b.alphas);
    CHECK(same_double(a.eta_partial, b.eta_partial));
    CHECK(same_double(a.step_ratio, b.step_ratio));
    CHECK(same_double(a.step_norm, b.step_norm));
    CHECK(same_double(a.g_ratio, b.g_ratio));
    CHECK(a.wall_ms == b.wall_ms);
  }
  std::remove(path.c_str());
}

TEST_CASE("timing-free emission is byte-stable across emissions") {
  const auto t1 = sample_trace(11, 6);
  auto t2 = t1;
  t2.total_wall_ms = 999.0;  // timings differ between "runs"
  for (auto& r : t2.records) r.wall_ms += 5.0;

  report::emit_json(t1, "det_a.json", /*include_timings=*/false);
  report::emit_json(t2, "det_b.json", /*include_timings=*/false);
  std::ifstream a("det_a.json"), b("det_b.json");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
  std::remove("det_a.json");
  std::remove("det_b.json");
}

TEST_CASE("malformed trace files raise IoFailure") {
  {
    std::ofstream out("broken.json");
    out << "{ not json";
  }
  CHECK_THROWS_AS(report::load_trace("broken.json"), linalg::IoFailure);
  CHECK_THROWS_AS(report::load_trace("missing_file.json"), linalg::IoFailure);
  std::remove("broken.json");
}

TEST_CASE("gnuplot emission writes one series per trace and the two scripts") {
  namespace fs = std::filesystem;
  const std::string dir = "gp_test";

  SUBCASE("two traces produce two series referenced by both scripts") {
    report::emit_gnuplot({sample_trace(1, 4), sample_trace(2, 5)}, dir);
    int dat_files = 0;
    for (const auto& entry : fs::directory_iterator(dir))
      dat_files += entry.path().extension() == ".dat";
    CHECK(dat_files == 2);
    std::ifstream gp(fs::path(dir) / "plot_residuals.gp");
    std::stringstream ss;
    ss << gp.rdbuf();
    const std::string script = ss.str();
    CHECK(script.find("anderson_re100_m2_0.dat") != std::string::npos);
    CHECK(script.find("anderson_re100_m2_1.dat") != std::string::npos);
    CHECK(script.find("logscale y") != std::string::npos);
    CHECK(fs::exists(fs::path(dir) / "plot_theta.gp"));
  }

  SUBCASE("an empty trace list still writes valid script files") {
    report::emit_gnuplot({}, dir);
    CHECK(fs::exists(fs::path(dir) / "plot_residuals.gp"));
    CHECK(fs::exists(fs::path(dir) / "plot_theta.gp"));
  }

  fs::remove_all(dir);
}
