#include "keygate/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace keygate {

MarginInstance make_margin_instance(double margin, double gamma, Vec u) {
    if (!(margin > 0.0)) throw std::invalid_argument("MarginInstance: margin must be > 0");
    if (!(gamma > 0.0)) throw std::invalid_argument("MarginInstance: gamma must be > 0");
    MarginInstance inst;
    inst.margin = margin;
    inst.gamma = gamma;
    inst.sigma = norm(u);
    inst.u = std::move(u);
    return inst;
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / 1.4142135623730950488016887242097); }

double flip_probability(const MarginInstance& inst) {
    if (inst.sigma == 0.0) return 0.0;
    return std_normal_cdf(-inst.margin / (inst.gamma * inst.sigma));
}

double flip_tail_bound(const MarginInstance& inst) {
    if (inst.sigma == 0.0) return 0.0;
    const double s = inst.margin / (inst.gamma * inst.sigma);
    return std::exp(-0.5 * s * s);
}

double mc_flip_rate(const MarginInstance& inst, long n, Rng& rng) {
    if (n <= 0) throw std::invalid_argument("mc_flip_rate: n must be positive");
    if (inst.u.empty()) throw std::invalid_argument("mc_flip_rate: empty sensitivity vector");
    long flips = 0;
    const int d = static_cast<int>(inst.u.size());
    for (long i = 0; i < n; ++i) {
        double t = 0.0;
        for (int j = 0; j < d; ++j) t += inst.u[j] * rng.normal();
        if (inst.margin + inst.gamma * t < 0.0) ++flips;
    }
    return static_cast<double>(flips) / n;
}

std::pair<double, double> sandwich_bounds(const std::vector<double>& margins,
                                          const std::vector<Vec>& us, double gamma) {
    if (margins.size() != us.size() || margins.empty())
        throw std::invalid_argument("sandwich_bounds: need matching nonempty margin/direction lists");
    double lower = 0.0, upper = 0.0;
    for (size_t c = 0; c < margins.size(); ++c) {
        const double p = flip_probability(make_margin_instance(margins[c], gamma, us[c]));
        lower = std::max(lower, p);
        upper += p;
    }
    return {lower, std::min(1.0, upper)};
}

double mc_multiclass_error(const std::vector<double>& margins, const std::vector<Vec>& us,
                           double gamma, long n, Rng& rng) {
    if (margins.size() != us.size() || margins.empty())
        throw std::invalid_argument("mc_multiclass_error: bad instance");
    const int d = static_cast<int>(us.front().size());
    for (const Vec& u : us)
        if (static_cast<int>(u.size()) != d)
            throw std::invalid_argument("mc_multiclass_error: direction dims differ");
    long errors = 0;
    Vec k(d);
    for (long i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) k[j] = rng.normal();
        for (size_t c = 0; c < margins.size(); ++c) {
            double t = 0.0;
            for (int j = 0; j < d; ++j) t += us[c][j] * k[j];
            if (margins[c] + gamma * t < 0.0) {
                ++errors;
                break;
            }
        }
    }
    return static_cast<double>(errors) / n;
}

double beta_energy_mean(int d, int m) { return static_cast<double>(d - m) / d; }

double beta_energy_var(int d, int m) {
    const double dd = d;
    return 2.0 * m * (d - m) / (dd * dd * (dd + 2.0));
}

double beta_chebyshev_bound(int d, int m, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("beta_chebyshev_bound: t must be > 0");
    return beta_energy_var(d, m) / (t * t);
}

BetaEnergyStats mc_beta_energy(int d, int m, long n, const std::vector<double>& t_grid, Rng& rng) {
    if (n <= 1) throw std::invalid_argument("mc_beta_energy: n too small");
    const BasisMatrix basis = make_basis(d, m, rng.next_u64());
    const double center = beta_energy_mean(d, m);

    BetaEnergyStats stats;
    stats.n = n;
    stats.tail_mass.assign(t_grid.size(), 0.0);
    double sum_eta = 0.0, sum_eta2 = 0.0;
    double sum_in = 0.0, sum_out = 0.0, sum_in2 = 0.0, sum_out2 = 0.0, sum_inout = 0.0;
    Vec k(d);
    for (long i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) k[j] = rng.normal();
        const EnergySplit split = energy_split(basis, k);
        sum_eta += split.eta;
        sum_eta2 += split.eta * split.eta;
        sum_in += split.in_energy;
        sum_out += split.out_energy;
        sum_in2 += split.in_energy * split.in_energy;
        sum_out2 += split.out_energy * split.out_energy;
        sum_inout += split.in_energy * split.out_energy;
        for (size_t t = 0; t < t_grid.size(); ++t)
            if (std::abs(split.eta - center) >= t_grid[t]) stats.tail_mass[t] += 1.0;
    }
    const double dn = static_cast<double>(n);
    stats.mean_eta = sum_eta / dn;
    stats.var_eta = sum_eta2 / dn - stats.mean_eta * stats.mean_eta;
    stats.mean_in = sum_in / dn;
    stats.mean_out = sum_out / dn;
    const double cov = sum_inout / dn - stats.mean_in * stats.mean_out;
    const double var_in = sum_in2 / dn - stats.mean_in * stats.mean_in;
    const double var_out = sum_out2 / dn - stats.mean_out * stats.mean_out;
    stats.corr_in_out = cov / std::sqrt(var_in * var_out);
    for (double& t : stats.tail_mass) t /= dn;
    return stats;
}

std::pair<Vec, double> effective_sensitivity(const Network& net, const ForwardTrace& trace,
                                             int row, int site, int y, int c) {
    const Matrix& readout = net.weights[net.depth() - 1];
    if (y < 0 || y >= readout.rows || c < 0 || c >= readout.rows)
        throw std::invalid_argument("effective_sensitivity: class index out of range");
    Vec diff(readout.cols);
    const double* wy = readout.row(y);
    const double* wc = readout.row(c);
    for (int j = 0; j < readout.cols; ++j) diff[j] = wy[j] - wc[j];
    Vec u = vector_jacobian_product(net, trace, row, site, diff);
    const double sigma = norm(u);
    return {std::move(u), sigma};
}

namespace {

SigmaSummary summarize(int site, int competing_class, std::vector<double>& sigmas) {
    SigmaSummary s;
    s.site = site;
    s.competing_class = competing_class;
    s.count = static_cast<long>(sigmas.size());
    if (sigmas.empty()) return s;
    std::sort(sigmas.begin(), sigmas.end());
    double sum = 0.0;
    for (double v : sigmas) sum += v;
    s.mean = sum / sigmas.size();
    auto quantile = [&](double q) {
        const double pos = q * (sigmas.size() - 1);
        const size_t lo = static_cast<size_t>(pos);
        const size_t hi = std::min(lo + 1, sigmas.size() - 1);
        const double frac = pos - lo;
        return sigmas[lo] * (1.0 - frac) + sigmas[hi] * frac;
    };
    s.median = quantile(0.5);
    s.q10 = quantile(0.1);
    s.q90 = quantile(0.9);
    return s;
}

}  // namespace

AbsorptionReport absorption_report(const Network& net, const InjectionPlan& plan,
                                   const KeySet& keys, const Dataset& data, int n_inputs,
                                   uint64_t seed) {
    if (n_inputs <= 0) throw std::invalid_argument("absorption_report: n_inputs must be positive");
    const int C = net.semantic_classes();
    const int use = std::min(n_inputs, data.size());
    Rng pick_rng(derive_seed(seed, seed_tag::theory, 1));
    std::vector<int> order(data.size());
    for (int i = 0; i < data.size(); ++i) order[i] = i;
    pick_rng.shuffle(order);
    order.resize(use);

    // sigmas[site_pos][class] plus an aggregate bucket per site
    std::vector<std::vector<std::vector<double>>> sigmas(plan.sites.size());
    for (auto& per_site : sigmas) per_site.resize(C);

    for (int idx = 0; idx < use; ++idx) {
        const int row = order[idx];
        Rng key_rng(derive_seed(seed, seed_tag::theory, 2, static_cast<uint64_t>(row)));
        const std::vector<DynamicKey> ks = keys.correct_keys(key_rng);
        const ForwardTrace trace = forward(net, data.inputs.row_vec(row), plan, ks);
        const int y = data.labels[row];
        for (size_t sp = 0; sp < plan.sites.size(); ++sp) {
            for (int c = 0; c < C; ++c) {
                if (c == y) continue;
                const auto [u, sigma] =
                    effective_sensitivity(net, trace, 0, plan.sites[sp], y, c);
                sigmas[sp][c].push_back(sigma);
            }
        }
    }

    AbsorptionReport report;
    for (size_t sp = 0; sp < plan.sites.size(); ++sp) {
        std::vector<double> all;
        for (int c = 0; c < C; ++c) {
            all.insert(all.end(), sigmas[sp][c].begin(), sigmas[sp][c].end());
            report.rows.push_back(summarize(plan.sites[sp], c, sigmas[sp][c]));
        }
        report.rows.push_back(summarize(plan.sites[sp], -1, all));
    }
    return report;
}

}  // namespace keygate
