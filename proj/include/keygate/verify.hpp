#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace keygate {

// One verification row: an empirical quantity against its theoretical value
// at an explicit tolerance.
struct CheckResult {
    std::string check;
    std::string params;
    double theoretical = 0.0;
    double empirical = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Out-of-span energy law: moments of eta at d=64, m=8 over 1e5 draws, the
// Chebyshev tail at t in {0.01, 0.02, 0.05}, chi-squared means of the two
// energies, and their decoupling.
std::vector<CheckResult> check_beta_energy(uint64_t seed);

// Gaussian margin flip: MC rate vs Phi(-s) on s in {0.5, 1, 2, 3} at 1e6
// draws, with the sub-Gaussian bound dominating each grid point.
std::vector<CheckResult> check_margin_tail(uint64_t seed);

// Multiclass sandwich containment over 100 random instances, C in {3, 5, 10}.
std::vector<CheckResult> check_sandwich(uint64_t seed);

// First-order structure: exact logit shift on linear nets, JVP vs central
// differences on ReLU nets at frozen gates, and the multiplicative
// increment surrogate at small key norm.
std::vector<CheckResult> check_linearization(uint64_t seed);

// Analytic vs central-difference gradients for the baseline objective and
// every deny mode on small random nets.
std::vector<CheckResult> check_gradient_suite(uint64_t seed);

std::vector<CheckResult> run_theory_checks(uint64_t seed);

void write_checks_csv(const std::string& path, const std::vector<CheckResult>& checks);

}  // namespace keygate
