// Acceptance gate: one pass/fail line per criterion, nonzero exit on failure.

#include "delaypi/verify.hpp"

#include <cstdio>

int main() {
    const auto results = delaypi::run_acceptance_checks();
    int failures = 0;
    int index = 0;
    for (const auto& r : results) {
        ++index;
        std::printf("[%2d/%zu] %-28s %s (%.2f s)  %s\n", index, results.size(),
                    r.name.c_str(), r.pass ? "PASS" : "FAIL", r.seconds, r.detail.c_str());
        if (!r.pass) ++failures;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failures,
                results.size());
    return failures == 0 ? 0 : 1;
}
