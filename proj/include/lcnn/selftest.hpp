#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Runtime invariant suites behind `selftest`: geometry identities, layer
// oracles, and batch-norm contracts, each re-checked from scratch with seeded
// draws so a failure prints the violated invariant and a reproduction seed.
namespace lcnn::selftest {

struct Options {
    uint64_t seed = 424242;
    // Test fixture: recompute the inner-product oracle with the time term's
    // sign flipped, which must make (only) the minkowski-inner suite fail.
    bool inject_inner_sign_error = false;
};

struct SuiteResult {
    std::string name;
    int checks = 0;
    int failures = 0;
    std::string detail;       // first violated invariant
    uint64_t repro_seed = 0;  // seed of the first failing trial
    bool passed() const { return failures == 0; }
};

std::vector<std::string> suite_names();
SuiteResult run_suite(const std::string& name, const Options& opt);
std::vector<SuiteResult> run_all(const Options& opt);

}  // namespace lcnn::selftest
