#pragma once

#include "aanse/accel.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace aanse::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

enum class Level { Quick, Full };

/// Brute-force constrained least squares: minimize ||sum a_j w_j||_* with
/// sum a_j = 1 through the stationarity system [2H 1; 1' 0][a;l] = [0;1],
/// H_ij = <w_i, w_j>_*. Independent of the orthogonalization path used by
/// the mixing solver.
std::vector<double> kkt_mixing_oracle(const std::vector<linalg::CoeffVector>& residuals,
                                      const linalg::InnerProduct& ip);

CheckResult check_factorization_oracle(std::uint64_t seed);
CheckResult check_parallelogram_law(std::uint64_t seed);
CheckResult check_ls_oracle(int instances, std::uint64_t seed);
CheckResult check_m1_closed_form(std::uint64_t seed);
CheckResult check_mixing_optimality(std::uint64_t seed);
CheckResult check_depth0_equivalence(std::uint64_t seed);
CheckResult check_skew_symmetry(std::uint64_t seed);
CheckResult check_mms_orders(Level level, double gamma_gd);

std::vector<CheckResult> run_all(Level level, std::uint64_t seed);

}  // namespace aanse::verify
