#pragma once
// The oracle and property-check suite behind the `check` subcommand: every
// closed form is verified against an independent numerical method, and the
// analytic propositions (concavity, attenuation, reduction identities,
// gradient correctness) run as executable properties.

#include <iosfwd>
#include <string>
#include <vector>

namespace vrf {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// AS241 inverse of the standard normal CDF (double precision); the oracle
// behind the Monte Carlo transport cross-check. p must lie in (0, 1).
double inverse_normal_cdf(double p);

CheckResult check_mackay_examples();
CheckResult check_mackay_grid();
CheckResult check_quadrature_consistency();
CheckResult check_pog_identities();
CheckResult check_w2_values();
CheckResult check_w2_transport();
CheckResult check_kl_mc();
CheckResult check_fd_objective();
CheckResult check_concavity();
CheckResult check_attenuation();
CheckResult check_reduction_identities();

std::vector<CheckResult> run_all_checks();

// Prints one aligned pass/fail row per check; returns true iff all passed.
bool print_check_table(const std::vector<CheckResult>& results,
                       std::ostream& out);

}  // namespace vrf
