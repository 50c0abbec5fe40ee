#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

// Self-check suites behind `fpnet verify`. Each suite returns one result per
// named check so callers can print a table or gate on all_pass().
namespace fpnet::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Volterra-kernel properties of the FP product stage: equivalence of the
// expanded kernel, the feature-product form and a brute-force double sum;
// exact-zero suppression of inputs orthogonal to a filter; symmetry and
// bilinearity of the induced quadratic form. Double precision.
std::vector<CheckResult> suite_volterra(std::uint64_t seed);

// Parameter accounting: closed-form block counts against enumeration of
// constructed blocks, the reference model totals, config identity and
// per-layer isolation.
std::vector<CheckResult> suite_params(std::uint64_t seed);

// Central-difference gradient checks for every differentiable op and for the
// full FP block in both variants. Double precision, tolerance 1e-6.
std::vector<CheckResult> suite_gradcheck(std::uint64_t seed);

// Fast conv / depthwise / pooling paths against naive nested-loop oracles on
// randomized shapes, plus closed-form trivial cases. Single precision.
std::vector<CheckResult> suite_conv(std::uint64_t seed);

// CIFAR-10 ingestion: record counts, class balance, label ranges, channel
// statistics against the normalization constants, pipeline determinism.
std::vector<CheckResult> suite_data(const std::string& data_dir);

bool all_pass(const std::vector<CheckResult>& results);
void print_results(const std::vector<CheckResult>& results, std::ostream& os);

}  // namespace fpnet::verify
