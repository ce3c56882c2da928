#pragma once

#include <string>
#include <vector>

namespace delaypi {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

/// Names of the verification checks, in execution order.
std::vector<std::string> acceptance_check_names();

/// Run every verification check whose name contains `filter` (all when the
/// filter is empty). Each check pins its tolerances internally and reports a
/// one-line summary of measured against expected values.
std::vector<CheckResult> run_acceptance_checks(const std::string& filter = "");

}  // namespace delaypi
