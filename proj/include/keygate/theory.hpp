#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "keygate/data.hpp"
#include "keygate/deny.hpp"
#include "keygate/keyspace.hpp"
#include "keygate/network.hpp"

namespace keygate {

// One linearized margin under an isotropic wrong key: the margin flips when
// M + gamma * u.k < 0.
struct MarginInstance {
    double margin = 0.0;  // M > 0
    double gamma = 0.0;
    Vec u;                // sensitivity direction at the injection site
    double sigma = 0.0;   // |u|_2, cached
};

MarginInstance make_margin_instance(double margin, double gamma, Vec u);

// Standard normal CDF via erfc; absolute error below 1e-12.
double std_normal_cdf(double x);

// Phi(-M / (gamma * sigma)); 0 for the degenerate sigma = 0 case.
double flip_probability(const MarginInstance& inst);

// exp(-M^2 / (2 gamma^2 sigma^2)); dominates flip_probability.
double flip_tail_bound(const MarginInstance& inst);

// Empirical flip fraction over n isotropic Gaussian keys.
double mc_flip_rate(const MarginInstance& inst, long n, Rng& rng);

// Lower/upper bounds on the linearized multiclass error: max and (clamped)
// sum of the pairwise flip probabilities.
std::pair<double, double> sandwich_bounds(const std::vector<double>& margins,
                                          const std::vector<Vec>& us, double gamma);

// Empirical rate of "some competing margin flips" over shared key draws.
double mc_multiclass_error(const std::vector<double>& margins, const std::vector<Vec>& us,
                           double gamma, long n, Rng& rng);

// Moments of the out-of-span energy fraction for isotropic keys.
double beta_energy_mean(int d, int m);      // (d-m)/d
double beta_energy_var(int d, int m);       // 2m(d-m) / (d^2 (d+2))
double beta_chebyshev_bound(int d, int m, double t);

struct BetaEnergyStats {
    double mean_eta = 0.0;
    double var_eta = 0.0;
    double mean_in = 0.0;       // mean |Pk|^2
    double mean_out = 0.0;      // mean |(I-P)k|^2
    double corr_in_out = 0.0;   // sample correlation of the two energies
    std::vector<double> tail_mass;  // Pr[|eta - mean| >= t] per requested t
    long n = 0;
};

// Monte Carlo verification of the energy-split law against an actual basis
// built by make_basis.
BetaEnergyStats mc_beta_energy(int d, int m, long n, const std::vector<double>& t_grid, Rng& rng);

// u_{y,c} = J_site^T (w_y - w_c) at the trace's frozen gates, and its norm.
std::pair<Vec, double> effective_sensitivity(const Network& net, const ForwardTrace& trace,
                                             int row, int site, int y, int c);

struct SigmaSummary {
    int site = -1;
    int competing_class = -1;  // -1 aggregates over all competitors
    long count = 0;
    double mean = 0.0;
    double median = 0.0;
    double q10 = 0.0;
    double q90 = 0.0;
};

struct AbsorptionReport {
    std::vector<SigmaSummary> rows;
};

// Distribution of the effective sensitivity sigma at each injection site over
// sampled inputs, per competing class. Forwards use fresh correct keys.
AbsorptionReport absorption_report(const Network& net, const InjectionPlan& plan,
                                   const KeySet& keys, const Dataset& data, int n_inputs,
                                   uint64_t seed);

}  // namespace keygate
