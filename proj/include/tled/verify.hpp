#ifndef TLED_VERIFY_HPP_
#define TLED_VERIFY_HPP_

#include <string>
#include <vector>

namespace tled {

struct Check {
    std::string what;
    bool ok = false;
    double value = 0; // measured quantity, deterministic
    double limit = 0;
    bool timing = false; // wall-clock checks: stdout only, kept out of the report
};

struct SuiteResult {
    std::string name;
    bool passed = true;
    double seconds = 0; // wall clock; stdout only, never serialized
    std::vector<Check> checks;
};

const std::vector<std::string> &suite_names();

SuiteResult run_suite(const std::string &name);

// Empty or "all" selects every suite; unknown names throw.
std::vector<SuiteResult> run_verify(const std::string &selector);

// Deterministic serialization (no timings); the determinism criterion
// compares this string across repeated runs and thread counts.
std::string verify_report_json(const std::vector<SuiteResult> &results);

} // namespace tled

#endif // TLED_VERIFY_HPP_
