#include "keygate/verify.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "keygate/deny.hpp"
#include "keygate/theory.hpp"

namespace keygate {

namespace {

CheckResult band_check(std::string name, std::string params, double theoretical, double empirical,
                       double tolerance) {
    CheckResult r;
    r.check = std::move(name);
    r.params = std::move(params);
    r.theoretical = theoretical;
    r.empirical = empirical;
    r.tolerance = tolerance;
    r.pass = std::abs(empirical - theoretical) <= tolerance;
    return r;
}

CheckResult upper_check(std::string name, std::string params, double bound, double empirical,
                        double slack) {
    CheckResult r;
    r.check = std::move(name);
    r.params = std::move(params);
    r.theoretical = bound;
    r.empirical = empirical;
    r.tolerance = slack;
    r.pass = empirical <= bound + slack;
    return r;
}

double binomial_se(double p, double n) {
    const double q = std::min(std::max(p, 0.0), 1.0);
    return std::sqrt(q * (1.0 - q) / n);
}

}  // namespace

std::vector<CheckResult> check_beta_energy(uint64_t seed) {
    const int d = 64, m = 8;
    const long n = 100000;
    const std::vector<double> t_grid = {0.01, 0.02, 0.05};
    Rng rng(derive_seed(seed, seed_tag::theory, 10));
    const BetaEnergyStats stats = mc_beta_energy(d, m, n, t_grid, rng);

    std::vector<CheckResult> out;
    const double mean_th = beta_energy_mean(d, m);
    const double var_th = beta_energy_var(d, m);
    std::ostringstream params;
    params << "d=" << d << " m=" << m << " N=" << n;

    out.push_back(band_check("beta_energy_mean", params.str(), mean_th, stats.mean_eta,
                             3.0 * std::sqrt(var_th / n)));
    out.push_back(band_check("beta_energy_var", params.str(), var_th, stats.var_eta,
                             0.05 * var_th));
    for (size_t i = 0; i < t_grid.size(); ++i) {
        const double bound = beta_chebyshev_bound(d, m, t_grid[i]);
        const double se = binomial_se(stats.tail_mass[i], static_cast<double>(n));
        std::ostringstream p;
        p << params.str() << " t=" << t_grid[i];
        out.push_back(
            upper_check("beta_chebyshev_tail", p.str(), bound, stats.tail_mass[i], 3.0 * se));
    }
    out.push_back(band_check("chi2_mean_in_span", params.str(), m, stats.mean_in,
                             3.0 * std::sqrt(2.0 * m / n)));
    out.push_back(band_check("chi2_mean_out_span", params.str(), d - m, stats.mean_out,
                             3.0 * std::sqrt(2.0 * (d - m) / n)));
    out.push_back(band_check("energy_decoupling_corr", params.str(), 0.0, stats.corr_in_out,
                             3.0 / std::sqrt(static_cast<double>(n))));
    return out;
}

std::vector<CheckResult> check_margin_tail(uint64_t seed) {
    const long n = 1000000;
    const int d = 24;
    const double gamma = 0.7;
    Rng rng(derive_seed(seed, seed_tag::theory, 20));
    const Vec u = rng.normal_vec(d);

    std::vector<CheckResult> out;
    for (double s : {0.5, 1.0, 2.0, 3.0}) {
        const double sigma = norm(u);
        const MarginInstance inst = make_margin_instance(s * gamma * sigma, gamma, u);
        const double p_th = flip_probability(inst);
        const double p_mc = mc_flip_rate(inst, n, rng);
        std::ostringstream params;
        params << "s=" << s << " d=" << d << " N=" << n;
        out.push_back(band_check("margin_flip_mc", params.str(), p_th, p_mc,
                                 3.0 * binomial_se(p_th, static_cast<double>(n))));
        // Dominance is an exact inequality between the two closed forms.
        out.push_back(upper_check("margin_tail_dominates", params.str(), flip_tail_bound(inst),
                                  p_th, 0.0));
    }
    return out;
}

std::vector<CheckResult> check_sandwich(uint64_t seed) {
    Rng rng(derive_seed(seed, seed_tag::theory, 30));
    const int d = 16;
    const double gamma = 1.0;
    const long n = 20000;
    const int classes[] = {3, 5, 10};

    std::vector<CheckResult> out;
    int instance = 0;
    for (int ci = 0; ci < 3; ++ci) {
        const int C = classes[ci];
        int contained = 0;
        const int total = ci == 0 ? 34 : 33;
        for (int t = 0; t < total; ++t, ++instance) {
            std::vector<double> margins;
            std::vector<Vec> us;
            for (int c = 0; c < C - 1; ++c) {
                Vec u = rng.normal_vec(d);
                const double s = rng.uniform(0.5, 2.5);
                margins.push_back(s * gamma * norm(u));
                us.push_back(std::move(u));
            }
            const auto [lower, upper] = sandwich_bounds(margins, us, gamma);
            const double emp = mc_multiclass_error(margins, us, gamma, n, rng);
            const double se = binomial_se(emp, static_cast<double>(n));
            if (emp >= lower - 3.0 * se && emp <= upper + 3.0 * se) ++contained;
        }
        std::ostringstream params;
        params << "C=" << C << " instances=" << total << " N=" << n;
        CheckResult r = band_check("sandwich_containment", params.str(), 1.0,
                                   static_cast<double>(contained) / total, 0.0);
        out.push_back(r);
    }
    return out;
}

std::vector<CheckResult> check_linearization(uint64_t seed) {
    std::vector<CheckResult> out;

    {  // exact first-order identity on a purely linear network
        const Network net = make_network({12, 10, 8, 6}, Activation::Identity, HeadKind::PlainC,
                                         derive_seed(seed, seed_tag::theory, 40));
        InjectionPlan plan;
        plan.sites = {1};
        plan.kind = InjectKind::Add;
        plan.gamma = 0.8;
        Rng rng(derive_seed(seed, seed_tag::theory, 41));
        const Vec x = rng.normal_vec(12);
        const Vec k = rng.normal_vec(10);
        DynamicKey key;
        key.kind = KeyKind::Wrong;
        key.values = k;
        key.site = 1;

        const ForwardTrace clean = forward(net, x, plan, {});
        const ForwardTrace injected = forward(net, x, plan, {key});
        const Vec predicted = weff_times(net, clean, 0, 1, scaled(k, plan.gamma));
        double num = 0.0, den = 0.0;
        for (int j = 0; j < 6; ++j) {
            const double dz = injected.logits(0, j) - clean.logits(0, j);
            num += (dz - predicted[j]) * (dz - predicted[j]);
            den += predicted[j] * predicted[j];
        }
        out.push_back(upper_check("linear_shift_exact", "dims=12,10,8,6 gamma=0.8",
                                  0.0, std::sqrt(num / den), 1e-9));
    }

    {  // JVP against central differences on ReLU nets, away from kinks
        Rng rng(derive_seed(seed, seed_tag::theory, 42));
        const Network net = make_network({10, 24, 16, 5}, Activation::ReLU, HeadKind::PlainC,
                                         derive_seed(seed, seed_tag::theory, 43));
        const int site = 1;
        const double eps = 1e-6;
        double worst = 0.0;
        int done = 0;
        while (done < 20) {
            const Vec x = rng.normal_vec(10);
            const ForwardTrace trace = forward(net, x, InjectionPlan{}, {});
            bool near_kink = false;
            for (int l = site; l < net.depth() - 1 && !near_kink; ++l)
                for (int j = 0; j < trace.pre[l].cols; ++j)
                    if (std::abs(trace.pre[l](0, j)) < 1e-4) near_kink = true;
            if (near_kink) continue;
            const Vec v = rng.normal_vec(net.site_width(site));
            const Vec jvp = jacobian_vector_product(net, trace, 0, site, v);
            Vec hi = trace.post[site].row_vec(0), lo = hi;
            axpy(eps, v, hi);
            axpy(-eps, v, lo);
            const Vec h_plus = forward_from_site(net, trace, site, hi).h_last;
            const Vec h_minus = forward_from_site(net, trace, site, lo).h_last;
            double num = 0.0, den = 0.0;
            for (size_t j = 0; j < jvp.size(); ++j) {
                const double fd = (h_plus[j] - h_minus[j]) / (2.0 * eps);
                num += (jvp[j] - fd) * (jvp[j] - fd);
                den += fd * fd;
            }
            worst = std::max(worst, std::sqrt(num / std::max(den, 1e-30)));
            ++done;
        }
        out.push_back(upper_check("relu_jvp_vs_fd", "dims=10,24,16,5 trials=20 eps=1e-6", 0.0,
                                  worst, 1e-5));
    }

    {  // multiplicative increment surrogate at |k| = 1e-4
        Rng rng(derive_seed(seed, seed_tag::theory, 44));
        Vec h = rng.normal_vec(32);
        for (double& v : h) v += (v >= 0 ? 0.5 : -0.5);  // keep entries away from zero
        Vec k = rng.normal_vec(32);
        const double len = norm(k);
        for (double& v : k) v *= 1e-4 / len;
        const double gamma = 1.0;
        const Vec injected = inject_mul(h, k, gamma);
        const Vec delta = effective_increment_mul(h, k, gamma);
        double num = 0.0, den = 0.0;
        for (size_t j = 0; j < h.size(); ++j) {
            const double actual = injected[j] - h[j];
            num += (actual - delta[j]) * (actual - delta[j]);
            den += delta[j] * delta[j];
        }
        out.push_back(upper_check("mul_increment_surrogate", "d=32 |k|=1e-4 gamma=1", 0.0,
                                  std::sqrt(num / den), 1e-7));
    }
    return out;
}

namespace {

// Max elementwise relative error between analytic and central-difference
// gradients of the full objective for one deny configuration.
double fd_worst_error(const Batch& batch, Network& net, const InjectionPlan& plan,
                      const std::vector<DynamicKey>& ok_keys,
                      const std::vector<DynamicKey>& wrong_keys, const DenyConfig& cfg) {
    const double eps = 1e-5;
    const Gradients g = total_loss_fixed(batch, net, plan, ok_keys, wrong_keys, cfg, 0).grads;
    auto loss_at = [&]() {
        return total_loss_fixed(batch, net, plan, ok_keys, wrong_keys, cfg, 0).total;
    };
    double worst = 0.0;
    auto probe = [&](double* theta, double analytic) {
        const double keep = *theta;
        *theta = keep + eps;
        const double up = loss_at();
        *theta = keep - eps;
        const double down = loss_at();
        *theta = keep;
        const double fd = (up - down) / (2.0 * eps);
        const double rel =
            std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-6});
        worst = std::max(worst, rel);
    };
    for (int l = 0; l < net.depth(); ++l) {
        for (size_t i = 0; i < net.weights[l].data.size(); ++i)
            probe(&net.weights[l].data[i], g.w[l].data[i]);
        for (size_t i = 0; i < net.biases[l].size(); ++i) probe(&net.biases[l][i], g.b[l][i]);
    }
    if (net.head_kind == HeadKind::AuxReject) {
        for (size_t i = 0; i < net.aux.w.size(); ++i) probe(&net.aux.w[i], g.aux_w[i]);
        probe(&net.aux.b, g.aux_b);
    }
    return worst;
}

}  // namespace

std::vector<CheckResult> check_gradient_suite(uint64_t seed) {
    std::vector<CheckResult> out;
    const DenyMode modes[] = {DenyMode::None, DenyMode::A,     DenyMode::ASoft, DenyMode::B,
                              DenyMode::BAux, DenyMode::C,     DenyMode::CPlus, DenyMode::AC};
    const int C = 6;
    Rng rng(derive_seed(seed, seed_tag::theory, 50));
    for (DenyMode mode : modes) {
        HeadKind head = HeadKind::PlainC;
        if (mode == DenyMode::B) head = HeadKind::RejectCPlus1;
        if (mode == DenyMode::BAux) head = HeadKind::AuxReject;
        const int out_dim = head == HeadKind::RejectCPlus1 ? C + 1 : C;
        Network net = make_network({6, 16, 12, out_dim}, Activation::ReLU, head, rng.next_u64());

        InjectionPlan plan;
        plan.sites = {0, 2};
        plan.kind = InjectKind::Mul;
        plan.gamma = 0.5;
        KeySamplerConfig kcfg;
        const KeySet keys = make_key_set(plan, {6, 12}, 3, rng.next_u64(), kcfg);

        Batch batch;
        batch.x = Matrix(5, 6);
        rng.fill_normal(batch.x);
        for (int i = 0; i < 5; ++i) batch.y.push_back(rng.uniform_int(C));

        Rng key_rng(rng.next_u64());
        const auto ok_keys = keys.correct_keys(key_rng);
        const auto wrong_keys = keys.wrong_keys(key_rng);

        DenyConfig cfg;
        cfg.mode = mode;
        cfg.lambda = 0.3;
        cfg.margin = 1.0;
        cfg.entropy_gap = 0.5;
        cfg.deny_on_wrong = true;
        cfg.deny_on_no_key = mode == DenyMode::A;  // exercise the two-path average once

        const double worst = fd_worst_error(batch, net, plan, ok_keys, wrong_keys, cfg);
        out.push_back(upper_check("gradient_fd", "mode=" + deny_mode_name(mode) + " dims=6,16,12",
                                  0.0, worst, 1e-4));
    }
    return out;
}

std::vector<CheckResult> run_theory_checks(uint64_t seed) {
    std::vector<CheckResult> all;
    for (auto fn : {check_beta_energy, check_margin_tail, check_sandwich, check_linearization,
                    check_gradient_suite}) {
        const auto part = fn(seed);
        all.insert(all.end(), part.begin(), part.end());
    }
    return all;
}

void write_checks_csv(const std::string& path, const std::vector<CheckResult>& checks) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_checks_csv: cannot open " + path);
    out << "check,params,theoretical,empirical,tolerance,pass\n";
    char buf[64];
    for (const CheckResult& c : checks) {
        out << c.check << "," << c.params << ",";
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,", c.theoretical, c.empirical, c.tolerance);
        out << buf << (c.pass ? "1" : "0") << "\n";
    }
}

}  // namespace keygate
