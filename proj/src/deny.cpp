#include "keygate/deny.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace keygate {

std::string deny_mode_name(DenyMode mode) {
    switch (mode) {
        case DenyMode::None: return "none";
        case DenyMode::A: return "A";
        case DenyMode::ASoft: return "A_soft";
        case DenyMode::B: return "B";
        case DenyMode::BAux: return "B_aux";
        case DenyMode::C: return "C";
        case DenyMode::CPlus: return "cplus";
        case DenyMode::AC: return "AC";
    }
    return "none";
}

DenyMode deny_mode_from_name(const std::string& name) {
    if (name == "none") return DenyMode::None;
    if (name == "A") return DenyMode::A;
    if (name == "A_soft") return DenyMode::ASoft;
    if (name == "B") return DenyMode::B;
    if (name == "B_aux") return DenyMode::BAux;
    if (name == "C") return DenyMode::C;
    if (name == "cplus") return DenyMode::CPlus;
    if (name == "AC") return DenyMode::AC;
    throw std::invalid_argument("unknown deny mode: " + name);
}

void DenyConfig::validate(HeadKind head) const {
    if (mode == DenyMode::None) return;
    if (!(lambda > 0.0)) throw std::invalid_argument("DenyConfig: deny mode requires lambda > 0");
    if (!deny_on_wrong && !deny_on_no_key && mode != DenyMode::C && mode != DenyMode::CPlus)
        throw std::invalid_argument("DenyConfig: deny_on must name at least one invalid path");
    if ((mode == DenyMode::C || mode == DenyMode::CPlus || mode == DenyMode::AC) && !(margin > 0.0))
        throw std::invalid_argument("DenyConfig: margin must be > 0 for C-family modes");
    if ((mode == DenyMode::ASoft || mode == DenyMode::AC) && !(entropy_gap > 0.0))
        throw std::invalid_argument("DenyConfig: entropy_gap must be > 0 for A_soft/AC");
    if (warmup_epochs < 0) throw std::invalid_argument("DenyConfig: warmup_epochs must be >= 0");
    if (mode == DenyMode::B && head != HeadKind::RejectCPlus1)
        throw std::invalid_argument("DenyConfig: Mode B requires the C+1 reject head");
    if (mode == DenyMode::BAux && head != HeadKind::AuxReject)
        throw std::invalid_argument("DenyConfig: B_aux requires the auxiliary reject head");
}

double DenyConfig::effective_lambda(int epoch) const {
    if (mode == DenyMode::None) return 0.0;
    if (warmup_epochs <= 0) return lambda;
    const double ramp = std::min(1.0, static_cast<double>(epoch) / warmup_epochs);
    return lambda * ramp;
}

bool DenyConfig::needs_wrong_path() const {
    if (mode == DenyMode::None) return false;
    if (mode == DenyMode::C || mode == DenyMode::CPlus || mode == DenyMode::AC) return true;
    return deny_on_wrong;
}

bool DenyConfig::needs_no_key_path() const {
    if (mode == DenyMode::None || mode == DenyMode::C || mode == DenyMode::CPlus) return false;
    return deny_on_no_key;
}

Vec softmax(const double* z, int n) {
    double zmax = z[0];
    for (int j = 1; j < n; ++j) zmax = std::max(zmax, z[j]);
    Vec p(n);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        p[j] = std::exp(z[j] - zmax);
        sum += p[j];
    }
    for (double& v : p) v /= sum;
    return p;
}

double entropy(const Vec& p) {
    double sum = 0.0;
    for (double v : p) {
        if (v < -1e-12) throw std::invalid_argument("entropy: negative probability");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("entropy: probabilities must sum to 1");
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

namespace {

double log_sum_exp(const double* z, int n) {
    double zmax = z[0];
    for (int j = 1; j < n; ++j) zmax = std::max(zmax, z[j]);
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += std::exp(z[j] - zmax);
    return zmax + std::log(s);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int argmax_row(const double* z, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (z[j] > z[best]) best = j;  // ties: lowest index wins
    return best;
}

// Entropy of softmax(z) plus d(H)/dz if requested.
double entropy_of_logits(const double* z, int n, Vec* dh) {
    const double lse = log_sum_exp(z, n);
    double h = 0.0;
    for (int j = 0; j < n; ++j) {
        const double lp = z[j] - lse;
        h -= std::exp(lp) * lp;
    }
    if (dh) {
        dh->assign(n, 0.0);
        for (int j = 0; j < n; ++j) {
            const double lp = z[j] - lse;
            (*dh)[j] = -std::exp(lp) * (lp + h);
        }
    }
    return h;
}

}  // namespace

double cross_entropy(const Matrix& z, const std::vector<int>& labels, Matrix* dz) {
    if (z.rows != static_cast<int>(labels.size()))
        throw std::invalid_argument("cross_entropy: one label per row required");
    const int n = z.rows;
    if (dz) *dz = Matrix(n, z.cols);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* zi = z.row(i);
        const int y = labels[i];
        if (y < 0 || y >= z.cols) throw std::invalid_argument("cross_entropy: label out of range");
        const double lse = log_sum_exp(zi, z.cols);
        loss += lse - zi[y];
        if (dz) {
            double* di = dz->row(i);
            for (int j = 0; j < z.cols; ++j) di[j] = std::exp(zi[j] - lse) / n;
            di[y] -= 1.0 / n;
        }
    }
    return loss / n;
}

double loss_A(const Matrix& z_invalid, Matrix* dz) {
    const int n = z_invalid.rows;
    if (dz) *dz = Matrix(n, z_invalid.cols);
    double loss = 0.0;
    Vec dh;
    for (int i = 0; i < n; ++i) {
        const double h = entropy_of_logits(z_invalid.row(i), z_invalid.cols, dz ? &dh : nullptr);
        loss -= h / n;
        if (dz) {
            double* di = dz->row(i);
            for (int j = 0; j < z_invalid.cols; ++j) di[j] = -dh[j] / n;
        }
    }
    return loss;
}

double loss_A_soft(const Matrix& z_invalid, double gap, Matrix* dz) {
    const int n = z_invalid.rows;
    const double h_max = std::log(static_cast<double>(z_invalid.cols));
    if (dz) *dz = Matrix(n, z_invalid.cols);
    double loss = 0.0;
    Vec dh;
    for (int i = 0; i < n; ++i) {
        const double h = entropy_of_logits(z_invalid.row(i), z_invalid.cols, dz ? &dh : nullptr);
        const double hinge = h_max - h - gap;
        if (hinge > 0.0) {
            loss += hinge * hinge / n;
            if (dz) {
                double* di = dz->row(i);
                for (int j = 0; j < z_invalid.cols; ++j) di[j] = -2.0 * hinge * dh[j] / n;
            }
        }
    }
    return loss;
}

double loss_B(const Matrix& z_invalid_cplus1, Matrix* dz) {
    std::vector<int> reject(z_invalid_cplus1.rows, z_invalid_cplus1.cols - 1);
    return cross_entropy(z_invalid_cplus1, reject, dz);
}

double loss_B_aux(const Vec& r_invalid, const Vec& r_authorized, Vec* dr_invalid,
                  Vec* dr_authorized) {
    if (r_invalid.empty() || r_authorized.empty())
        throw std::invalid_argument("loss_B_aux: both paths need at least one forward");
    double loss = 0.0;
    const double n_inv = static_cast<double>(r_invalid.size());
    const double n_auth = static_cast<double>(r_authorized.size());
    if (dr_invalid) dr_invalid->assign(r_invalid.size(), 0.0);
    if (dr_authorized) dr_authorized->assign(r_authorized.size(), 0.0);
    for (size_t i = 0; i < r_invalid.size(); ++i) {
        loss += softplus(-r_invalid[i]) / n_inv;  // -log sigmoid(r)
        if (dr_invalid) (*dr_invalid)[i] = (sigmoid(r_invalid[i]) - 1.0) / n_inv;
    }
    for (size_t i = 0; i < r_authorized.size(); ++i) {
        loss += softplus(r_authorized[i]) / n_auth;  // -log(1 - sigmoid(r))
        if (dr_authorized) (*dr_authorized)[i] = sigmoid(r_authorized[i]) / n_auth;
    }
    return loss;
}

double loss_C(const Matrix& z_ok, const Matrix& z_wrong, const std::vector<int>& y, double m,
              Matrix* dz_ok, Matrix* dz_wrong) {
    check_same_shape(z_ok, z_wrong, "loss_C");
    if (z_ok.rows != static_cast<int>(y.size()))
        throw std::invalid_argument("loss_C: one label per row required");
    const int n = z_ok.rows;
    if (dz_ok) *dz_ok = Matrix(n, z_ok.cols);
    if (dz_wrong) *dz_wrong = Matrix(n, z_ok.cols);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double hinge = m - (z_ok(i, y[i]) - z_wrong(i, y[i]));
        if (hinge > 0.0) {
            loss += hinge / n;
            if (dz_ok) (*dz_ok)(i, y[i]) -= 1.0 / n;
            if (dz_wrong) (*dz_wrong)(i, y[i]) += 1.0 / n;
        }
    }
    return loss;
}

double loss_cplus(const Matrix& z_ok, const Matrix& z_wrong, const std::vector<int>& y, double m,
                  Matrix* dz_ok, Matrix* dz_wrong) {
    double loss = loss_C(z_ok, z_wrong, y, m, dz_ok, dz_wrong);
    const int n = z_wrong.rows;
    for (int i = 0; i < n; ++i) {
        const double* zi = z_wrong.row(i);
        int best = -1;
        for (int c = 0; c < z_wrong.cols; ++c) {
            if (c == y[i]) continue;
            if (best < 0 || zi[c] > zi[best]) best = c;
        }
        const double hinge = m - (zi[best] - zi[y[i]]);
        if (hinge > 0.0) {
            loss += hinge / n;
            if (dz_wrong) {
                (*dz_wrong)(i, y[i]) += 1.0 / n;
                (*dz_wrong)(i, best) -= 1.0 / n;
            }
        }
    }
    return loss;
}

double loss_AC(const Matrix& z_invalid, const Matrix& z_ok, const Matrix& z_wrong,
               const std::vector<int>& y, double m, double gap, Matrix* dz_invalid, Matrix* dz_ok,
               Matrix* dz_wrong) {
    const double a_part = loss_A_soft(z_invalid, gap, dz_invalid);
    const double c_part = loss_C(z_ok, z_wrong, y, m, dz_ok, dz_wrong);
    auto halve = [](Matrix* d) {
        if (d)
            for (double& v : d->data) v *= 0.5;
    };
    halve(dz_invalid);
    halve(dz_ok);
    halve(dz_wrong);
    return 0.5 * a_part + 0.5 * c_part;
}

LossBreakdown total_loss_fixed(const Batch& batch, const Network& net, const InjectionPlan& plan,
                               const std::vector<DynamicKey>& ok_keys,
                               const std::vector<DynamicKey>& wrong_keys, const DenyConfig& cfg,
                               int epoch) {
    if ((cfg.mode == DenyMode::B) && net.head_kind != HeadKind::RejectCPlus1)
        throw std::invalid_argument("total_loss: Mode B requires the C+1 reject head");
    if ((cfg.mode == DenyMode::BAux) && net.head_kind != HeadKind::AuxReject)
        throw std::invalid_argument("total_loss: B_aux requires the auxiliary reject head");

    LossBreakdown out;
    out.lambda_eff = cfg.effective_lambda(epoch);

    const ForwardTrace trace_ok = forward(net, batch.x, plan, ok_keys);
    Matrix dz_ok;
    out.ce_ok = cross_entropy(trace_ok.logits, batch.y, &dz_ok);

    const bool active = cfg.mode != DenyMode::None && out.lambda_eff > 0.0;
    if (!active) {
        out.total = out.ce_ok;
        out.grads = backward(net, trace_ok, dz_ok);
        return out;
    }

    const bool want_wrong = cfg.needs_wrong_path();
    const bool want_no_key = cfg.needs_no_key_path();
    ForwardTrace trace_wrong, trace_none;
    if (want_wrong) {
        if (wrong_keys.empty() && !plan.sites.empty())
            throw std::invalid_argument("total_loss: mode needs wrong keys but none were given");
        trace_wrong = forward(net, batch.x, plan, wrong_keys);
    }
    if (want_no_key) trace_none = forward(net, batch.x, plan, {});

    Matrix dz_wrong, dz_none;
    Vec dr_ok, dr_wrong, dr_none;
    if (want_wrong) dz_wrong = Matrix(batch.x.rows, net.output_dim());
    if (want_no_key) dz_none = Matrix(batch.x.rows, net.output_dim());

    // Invalid paths the entropy / reject losses average over.
    std::vector<std::pair<const ForwardTrace*, Matrix*>> invalid_paths;
    if (cfg.deny_on_wrong && want_wrong) invalid_paths.push_back({&trace_wrong, &dz_wrong});
    if (want_no_key) invalid_paths.push_back({&trace_none, &dz_none});
    const double path_w = invalid_paths.empty() ? 0.0 : 1.0 / invalid_paths.size();

    double deny = 0.0;
    auto add_scaled = [](Matrix& dst, const Matrix& src, double s) {
        for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += s * src.data[i];
    };

    switch (cfg.mode) {
        case DenyMode::A:
        case DenyMode::ASoft:
        case DenyMode::B: {
            for (auto& [trace, dz] : invalid_paths) {
                Matrix d;
                double l = 0.0;
                if (cfg.mode == DenyMode::A)
                    l = loss_A(trace->logits, &d);
                else if (cfg.mode == DenyMode::ASoft)
                    l = loss_A_soft(trace->logits, cfg.entropy_gap, &d);
                else
                    l = loss_B(trace->logits, &d);
                deny += path_w * l;
                add_scaled(*dz, d, path_w);
            }
            break;
        }
        case DenyMode::BAux: {
            // Collect aux logits per active invalid path; authorized side is
            // always the non-reject target.
            double inv_total = 0.0;
            std::vector<std::pair<const ForwardTrace*, Vec*>> aux_paths;
            if (cfg.deny_on_wrong && want_wrong) aux_paths.push_back({&trace_wrong, &dr_wrong});
            if (want_no_key) aux_paths.push_back({&trace_none, &dr_none});
            const double w = aux_paths.empty() ? 0.0 : 1.0 / aux_paths.size();
            dr_ok.assign(batch.x.rows, 0.0);
            for (auto& [trace, dr] : aux_paths) {
                Vec d_inv, d_auth;
                const double l = loss_B_aux(trace->aux_r, trace_ok.aux_r, &d_inv, &d_auth);
                inv_total += w * l;
                dr->assign(d_inv.size(), 0.0);
                for (size_t i = 0; i < d_inv.size(); ++i) (*dr)[i] += w * d_inv[i];
                for (size_t i = 0; i < d_auth.size(); ++i) dr_ok[i] += w * d_auth[i];
            }
            deny = inv_total;
            break;
        }
        case DenyMode::C: {
            Matrix d_ok, d_w;
            deny = loss_C(trace_ok.logits, trace_wrong.logits, batch.y, cfg.margin, &d_ok, &d_w);
            add_scaled(dz_ok, d_ok, out.lambda_eff);  // folded below with ce grads
            add_scaled(dz_wrong, d_w, 1.0);
            break;
        }
        case DenyMode::CPlus: {
            Matrix d_ok, d_w;
            deny =
                loss_cplus(trace_ok.logits, trace_wrong.logits, batch.y, cfg.margin, &d_ok, &d_w);
            add_scaled(dz_ok, d_ok, out.lambda_eff);
            add_scaled(dz_wrong, d_w, 1.0);
            break;
        }
        case DenyMode::AC: {
            Matrix d_ok, d_w;
            double c_part = loss_C(trace_ok.logits, trace_wrong.logits, batch.y, cfg.margin,
                                   &d_ok, &d_w);
            deny += 0.5 * c_part;
            add_scaled(dz_ok, d_ok, 0.5 * out.lambda_eff);
            add_scaled(dz_wrong, d_w, 0.5);
            for (auto& [trace, dz] : invalid_paths) {
                Matrix d;
                const double l = loss_A_soft(trace->logits, cfg.entropy_gap, &d);
                deny += 0.5 * path_w * l;
                add_scaled(*dz, d, 0.5 * path_w);
            }
            break;
        }
        case DenyMode::None: break;
    }

    out.deny = deny;
    out.total = out.ce_ok + out.lambda_eff * deny;

    // Backward through every involved trace with its combined upstream.
    out.grads = backward(net, trace_ok, dz_ok, dr_ok.empty() ? Vec{} : scaled(dr_ok, out.lambda_eff));
    if (want_wrong) {
        for (double& v : dz_wrong.data) v *= out.lambda_eff;
        Gradients gw = backward(net, trace_wrong, dz_wrong,
                                dr_wrong.empty() ? Vec{} : scaled(dr_wrong, out.lambda_eff));
        out.grads.axpy(1.0, gw);
    }
    if (want_no_key) {
        for (double& v : dz_none.data) v *= out.lambda_eff;
        Gradients gn = backward(net, trace_none, dz_none,
                                dr_none.empty() ? Vec{} : scaled(dr_none, out.lambda_eff));
        out.grads.axpy(1.0, gn);
    }
    return out;
}

LossBreakdown total_loss(const Batch& batch, const Network& net, const InjectionPlan& plan,
                         const KeySet& keys, const DenyConfig& cfg, int epoch, Rng& rng) {
    const std::vector<DynamicKey> ok_keys = keys.correct_keys(rng);
    std::vector<DynamicKey> wrong_keys;
    if (cfg.mode != DenyMode::None && cfg.effective_lambda(epoch) > 0.0 && cfg.needs_wrong_path())
        wrong_keys = keys.wrong_keys(rng);
    return total_loss_fixed(batch, net, plan, ok_keys, wrong_keys, cfg, epoch);
}

std::string protocol_name(Protocol p) {
    switch (p) {
        case Protocol::NoKey: return "no_key";
        case Protocol::Correct: return "correct";
        case Protocol::Wrong: return "wrong";
    }
    return "no_key";
}

namespace {

struct MetricAccum {
    long n = 0;
    long top1 = 0;
    long semantic = 0;
    long rejects = 0;
    double entropy_sum = 0.0;
    double aux_sum = 0.0;
};

void accumulate_metrics(const Network& net, const ForwardTrace& trace,
                        const std::vector<int>& labels, int offset, MetricAccum& acc) {
    const int C = net.semantic_classes();
    const Matrix& z = trace.logits;
    for (int i = 0; i < z.rows; ++i) {
        const double* zi = z.row(i);
        const int y = labels[offset + i];
        const int amax = argmax_row(zi, z.cols);
        bool top1 = amax == y;
        bool reject = false;
        bool semantic = top1;
        if (net.head_kind == HeadKind::RejectCPlus1) {
            reject = amax == net.reject_index();
        } else if (net.head_kind == HeadKind::AuxReject) {
            const double s = sigmoid(trace.aux_r[i]);
            acc.aux_sum += s;
            reject = s > 0.5;
            semantic = top1 && !reject;
        }
        acc.top1 += top1;
        acc.semantic += semantic;
        acc.rejects += reject;
        acc.entropy_sum += entropy_of_logits(zi, C, nullptr);
        ++acc.n;
    }
}

EvalReport finish_report(Protocol protocol, const MetricAccum& acc, bool has_aux) {
    EvalReport r;
    r.protocol = protocol;
    r.n = acc.n;
    if (acc.n > 0) {
        r.top1 = static_cast<double>(acc.top1) / acc.n;
        r.semantic_acc = static_cast<double>(acc.semantic) / acc.n;
        r.reject_mass = static_cast<double>(acc.rejects) / acc.n;
        r.mean_entropy = acc.entropy_sum / acc.n;
        r.aux_reject_mean = has_aux ? acc.aux_sum / acc.n : 0.0;
    }
    return r;
}

Matrix slice_rows(const Matrix& m, int begin, int count) {
    Matrix out(count, m.cols);
    std::copy(m.row(begin), m.row(begin) + static_cast<size_t>(count) * m.cols, out.data.begin());
    return out;
}

}  // namespace

EvalReport evaluate(const Network& net, const InjectionPlan& plan, const KeySet& keys,
                    const Dataset& data, Protocol protocol, uint64_t seed, int batch_size,
                    int max_batches) {
    if (batch_size <= 0) throw std::invalid_argument("evaluate: batch_size must be positive");
    MetricAccum acc;
    const int n = data.size();
    int batch_index = 0;
    for (int begin = 0; begin < n; begin += batch_size, ++batch_index) {
        if (max_batches > 0 && batch_index >= max_batches) break;
        const int count = std::min(batch_size, n - begin);
        const Matrix x = slice_rows(data.inputs, begin, count);
        Rng batch_rng(derive_seed(seed, seed_tag::eval_keys, static_cast<uint64_t>(batch_index)));
        std::vector<DynamicKey> batch_keys;
        if (protocol == Protocol::Correct)
            batch_keys = keys.correct_keys(batch_rng);
        else if (protocol == Protocol::Wrong)
            batch_keys = keys.wrong_keys(batch_rng);
        const ForwardTrace trace = forward(net, x, plan, batch_keys);
        accumulate_metrics(net, trace, data.labels, begin, acc);
    }
    return finish_report(protocol, acc, net.head_kind == HeadKind::AuxReject);
}

EvalReport evaluate_fixed_keys(const Network& net, const InjectionPlan& plan,
                               const std::vector<DynamicKey>& fixed_keys, const Dataset& data,
                               int batch_size, int max_batches, long* batch_forwards) {
    if (batch_size <= 0) throw std::invalid_argument("evaluate_fixed_keys: bad batch_size");
    MetricAccum acc;
    const int n = data.size();
    int batch_index = 0;
    for (int begin = 0; begin < n; begin += batch_size, ++batch_index) {
        if (max_batches > 0 && batch_index >= max_batches) break;
        const int count = std::min(batch_size, n - begin);
        const Matrix x = slice_rows(data.inputs, begin, count);
        const ForwardTrace trace = forward(net, x, plan, fixed_keys);
        accumulate_metrics(net, trace, data.labels, begin, acc);
        if (batch_forwards) ++(*batch_forwards);
    }
    Protocol proto = Protocol::NoKey;
    for (const auto& k : fixed_keys) {
        if (k.kind == KeyKind::Correct) proto = Protocol::Correct;
        if (k.kind == KeyKind::Wrong) {
            proto = Protocol::Wrong;
            break;
        }
    }
    return finish_report(proto, acc, net.head_kind == HeadKind::AuxReject);
}

}  // namespace keygate
