#include "keygate/network.hpp"

#include <cmath>
#include <stdexcept>

#include "keygate/rng.hpp"

namespace keygate {

namespace {

double act_apply(Activation a, double x) {
    switch (a) {
        case Activation::ReLU: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Identity: return x;
    }
    return x;
}

// Derivative evaluated at the pre-activation value. ReLU subgradient at 0 is 0.
double act_prime(Activation a, double pre) {
    switch (a) {
        case Activation::ReLU: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

// In-place row-wise injection of one key into a batch tensor.
void inject_rows(InjectKind kind, Matrix& h, const Vec& k, double gamma) {
    if (static_cast<int>(k.size()) != h.cols)
        throw std::invalid_argument("injection: key dim " + std::to_string(k.size()) +
                                    " does not match site width " + std::to_string(h.cols));
    if (kind == InjectKind::Add) {
        for (int i = 0; i < h.rows; ++i) {
            double* hi = h.row(i);
            for (int j = 0; j < h.cols; ++j) hi[j] += gamma * k[j];
        }
    } else {
        Vec scale(k.size());
        for (size_t j = 0; j < k.size(); ++j) scale[j] = 1.0 + gamma * std::tanh(k[j]);
        for (int i = 0; i < h.rows; ++i) {
            double* hi = h.row(i);
            for (int j = 0; j < h.cols; ++j) hi[j] *= scale[j];
        }
    }
}

Vec col_sums(const Matrix& m) {
    Vec out(m.cols, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        const double* mi = m.row(i);
        for (int j = 0; j < m.cols; ++j) out[j] += mi[j];
    }
    return out;
}

// Gradient of one injection event: turns the upstream gradient at the
// injected tensor into (a) the gradient at the raw tensor and (b) the
// accumulated gradient on the key.
void backprop_injection(InjectKind kind, double gamma, const InjectionRecord& rec, Matrix& d,
                        Vec& dk) {
    if (kind == InjectKind::Add) {
        for (int i = 0; i < d.rows; ++i) {
            const double* di = d.row(i);
            for (int j = 0; j < d.cols; ++j) dk[j] += gamma * di[j];
        }
        // pass-through: d unchanged
    } else {
        Vec tanh_k(rec.key.size()), sech2(rec.key.size());
        for (size_t j = 0; j < rec.key.size(); ++j) {
            tanh_k[j] = std::tanh(rec.key[j]);
            sech2[j] = 1.0 - tanh_k[j] * tanh_k[j];
        }
        for (int i = 0; i < d.rows; ++i) {
            double* di = d.row(i);
            const double* hi = rec.pre_inject.row(i);
            for (int j = 0; j < d.cols; ++j) {
                dk[j] += gamma * sech2[j] * di[j] * hi[j];
                di[j] *= 1.0 + gamma * tanh_k[j];
            }
        }
    }
}

// Frozen-gate Jacobian factor of an injection event, applied to a direction.
void jacobian_injection(InjectKind kind, double gamma, const Vec& key, Vec& u) {
    if (kind == InjectKind::Add) return;  // identity in h
    for (size_t j = 0; j < u.size(); ++j) u[j] *= 1.0 + gamma * std::tanh(key[j]);
}

}  // namespace

void Network::validate() const {
    const int L = depth();
    if (L < 1 || layer_dims.size() != static_cast<size_t>(L) + 1)
        throw std::invalid_argument("Network: layer_dims/weights inconsistent");
    for (int d : layer_dims)
        if (d <= 0) throw std::invalid_argument("Network: layer dims must be positive");
    for (int l = 0; l < L; ++l) {
        if (weights[l].rows != layer_dims[l + 1] || weights[l].cols != layer_dims[l])
            throw std::invalid_argument("Network: weight shape mismatch at layer " +
                                        std::to_string(l));
        if (static_cast<int>(biases[l].size()) != layer_dims[l + 1])
            throw std::invalid_argument("Network: bias shape mismatch at layer " +
                                        std::to_string(l));
        if (!weights[l].all_finite())
            throw std::runtime_error("Network: non-finite weight at layer " + std::to_string(l));
        for (double v : biases[l])
            if (!std::isfinite(v))
                throw std::runtime_error("Network: non-finite bias at layer " + std::to_string(l));
    }
    if (activations.size() != static_cast<size_t>(L) - (L > 0 ? 1 : 0))
        throw std::invalid_argument("Network: one activation per hidden layer required");
    if (head_kind == HeadKind::RejectCPlus1 && output_dim() < 2)
        throw std::invalid_argument("Network: reject head needs at least 2 outputs");
    if (head_kind == HeadKind::AuxReject) {
        if (static_cast<int>(aux.w.size()) != layer_dims[depth() - 1])
            throw std::invalid_argument("Network: aux head shape mismatch");
        for (double v : aux.w)
            if (!std::isfinite(v)) throw std::runtime_error("Network: non-finite aux weight");
        if (!std::isfinite(aux.b)) throw std::runtime_error("Network: non-finite aux bias");
    }
}

Network make_network(const std::vector<int>& layer_dims, Activation act, HeadKind head,
                     uint64_t seed) {
    if (layer_dims.size() < 2) throw std::invalid_argument("make_network: need input and output dims");
    Network net;
    net.layer_dims = layer_dims;
    net.head_kind = head;
    Rng rng(seed);
    const int L = static_cast<int>(layer_dims.size()) - 1;
    for (int l = 0; l < L; ++l) {
        const int fan_in = layer_dims[l];
        const int fan_out = layer_dims[l + 1];
        // Kaiming-uniform, fan-in scaling
        const double bound = std::sqrt(6.0 / fan_in);
        Matrix w(fan_out, fan_in);
        for (double& v : w.data) v = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
        if (l < L - 1) net.activations.push_back(act);
    }
    if (head == HeadKind::AuxReject) {
        const int fan_in = layer_dims[L - 1];
        const double bound = std::sqrt(6.0 / fan_in);
        net.aux.w.resize(fan_in);
        for (double& v : net.aux.w) v = rng.uniform(-bound, bound);
        net.aux.b = 0.0;
    }
    net.validate();
    return net;
}

const InjectionRecord* ForwardTrace::record_for_site(int site) const {
    for (const auto& rec : records)
        if (rec.site == site) return &rec;
    return nullptr;
}

ForwardTrace forward(const Network& net, const Matrix& x, const InjectionPlan& plan,
                     const std::vector<DynamicKey>& keys) {
    if (x.cols != net.input_dim()) throw std::invalid_argument("forward: input dim mismatch");
    plan.validate(net.num_sites());
    if (!keys.empty() && keys.size() != plan.sites.size())
        throw std::invalid_argument("forward: one key per planned site required");

    const int L = net.depth();
    ForwardTrace trace;
    trace.inject_kind = plan.kind;
    trace.gamma = plan.gamma;
    trace.inject_point = plan.point;
    trace.input = x;
    trace.pre.resize(L);
    trace.post.resize(L);

    auto key_at = [&](int site) -> const DynamicKey* {
        if (keys.empty()) return nullptr;
        const int pos = plan.site_pos(site);
        if (pos < 0) return nullptr;
        const DynamicKey& k = keys[pos];
        return k.kind == KeyKind::None ? nullptr : &k;
    };

    Matrix a = x;
    if (const DynamicKey* k0 = key_at(0)) {
        trace.records.push_back({0, k0->values, a});
        inject_rows(plan.kind, a, k0->values, plan.gamma);
    }
    trace.post[0] = a;

    for (int l = 0; l < L; ++l) {
        Matrix p = matmul_nt(trace.post[l], net.weights[l]);
        const Vec& bias = net.biases[l];
        for (int i = 0; i < p.rows; ++i) {
            double* pi = p.row(i);
            for (int j = 0; j < p.cols; ++j) pi[j] += bias[j];
        }
        if (l < L - 1) {
            const int site = l + 1;
            const DynamicKey* key = key_at(site);
            if (key && plan.point == InjectPoint::PreAct) {
                trace.records.push_back({site, key->values, p});
                inject_rows(plan.kind, p, key->values, plan.gamma);
            }
            trace.pre[l] = p;
            Matrix act(p.rows, p.cols);
            const Activation fn = net.activations[l];
            for (size_t i = 0; i < p.data.size(); ++i) act.data[i] = act_apply(fn, p.data[i]);
            if (key && plan.point == InjectPoint::PostAct) {
                trace.records.push_back({site, key->values, act});
                inject_rows(plan.kind, act, key->values, plan.gamma);
            }
            trace.post[site] = std::move(act);
        } else {
            trace.pre[l] = p;
            trace.logits = std::move(p);
        }
    }

    if (net.head_kind == HeadKind::AuxReject) {
        const Matrix& h = trace.post[L - 1];
        trace.aux_r.resize(h.rows);
        for (int i = 0; i < h.rows; ++i) {
            const double* hi = h.row(i);
            double r = net.aux.b;
            for (int j = 0; j < h.cols; ++j) r += net.aux.w[j] * hi[j];
            trace.aux_r[i] = r;
        }
    }
    return trace;
}

ForwardTrace forward(const Network& net, const Vec& x, const InjectionPlan& plan,
                     const std::vector<DynamicKey>& keys) {
    Matrix xm(1, static_cast<int>(x.size()));
    xm.set_row(0, x);
    return forward(net, xm, plan, keys);
}

Gradients zero_gradients(const Network& net) {
    Gradients g;
    for (int l = 0; l < net.depth(); ++l) {
        g.w.emplace_back(net.weights[l].rows, net.weights[l].cols);
        g.b.emplace_back(net.biases[l].size(), 0.0);
    }
    if (net.head_kind == HeadKind::AuxReject) g.aux_w.assign(net.aux.w.size(), 0.0);
    return g;
}

void Gradients::axpy(double s, const Gradients& other) {
    for (size_t l = 0; l < w.size(); ++l) {
        for (size_t i = 0; i < w[l].data.size(); ++i) w[l].data[i] += s * other.w[l].data[i];
        for (size_t i = 0; i < b[l].size(); ++i) b[l][i] += s * other.b[l][i];
    }
    for (size_t i = 0; i < aux_w.size(); ++i) aux_w[i] += s * other.aux_w[i];
    aux_b += s * other.aux_b;
}

bool Gradients::params_finite() const {
    for (const auto& m : w)
        if (!m.all_finite()) return false;
    for (const auto& v : b)
        for (double x : v)
            if (!std::isfinite(x)) return false;
    for (double x : aux_w)
        if (!std::isfinite(x)) return false;
    return std::isfinite(aux_b);
}

Gradients backward(const Network& net, const ForwardTrace& trace, const Matrix& dlogits,
                   const Vec& daux) {
    const int L = net.depth();
    if (trace.depth() != L) throw std::invalid_argument("backward: trace depth mismatch");
    if (dlogits.rows != trace.batch() || dlogits.cols != net.output_dim())
        throw std::invalid_argument("backward: upstream gradient shape mismatch");

    Gradients g = zero_gradients(net);
    g.key_grads.resize(trace.records.size());
    g.key_sites.resize(trace.records.size());
    for (size_t r = 0; r < trace.records.size(); ++r) {
        g.key_grads[r].assign(trace.records[r].key.size(), 0.0);
        g.key_sites[r] = trace.records[r].site;
    }
    auto record_index = [&](int site) -> int {
        for (size_t r = 0; r < trace.records.size(); ++r)
            if (trace.records[r].site == site) return static_cast<int>(r);
        return -1;
    };

    // Readout layer.
    matmul_tn_acc(dlogits, trace.post[L - 1], g.w[L - 1]);
    g.b[L - 1] = col_sums(dlogits);
    Matrix d_post = matmul_nn(dlogits, net.weights[L - 1]);  // gradient at post[L-1]

    if (net.head_kind == HeadKind::AuxReject && !daux.empty()) {
        if (daux.size() != static_cast<size_t>(trace.batch()))
            throw std::invalid_argument("backward: daux length mismatch");
        const Matrix& h = trace.post[L - 1];
        for (int i = 0; i < h.rows; ++i) {
            const double dr = daux[i];
            double* di = d_post.row(i);
            const double* hi = h.row(i);
            for (int j = 0; j < h.cols; ++j) {
                di[j] += dr * net.aux.w[j];
                g.aux_w[j] += dr * hi[j];
            }
            g.aux_b += dr;
        }
    }

    for (int l = L - 2; l >= 0; --l) {
        const int site = l + 1;
        const int rec_post =
            trace.inject_point == InjectPoint::PostAct ? record_index(site) : -1;
        if (rec_post >= 0)
            backprop_injection(trace.inject_kind, trace.gamma, trace.records[rec_post], d_post,
                               g.key_grads[rec_post]);

        // through the nonlinearity at frozen pre-activations
        const Activation fn = net.activations[l];
        Matrix d_pre(d_post.rows, d_post.cols);
        for (size_t i = 0; i < d_pre.data.size(); ++i)
            d_pre.data[i] = d_post.data[i] * act_prime(fn, trace.pre[l].data[i]);

        const int rec_pre = trace.inject_point == InjectPoint::PreAct ? record_index(site) : -1;
        if (rec_pre >= 0)
            backprop_injection(trace.inject_kind, trace.gamma, trace.records[rec_pre], d_pre,
                               g.key_grads[rec_pre]);

        matmul_tn_acc(d_pre, trace.post[l], g.w[l]);
        g.b[l] = col_sums(d_pre);
        d_post = matmul_nn(d_pre, net.weights[l]);
    }

    const int rec0 = record_index(0);
    if (rec0 >= 0)
        backprop_injection(trace.inject_kind, trace.gamma, trace.records[rec0], d_post,
                           g.key_grads[rec0]);
    g.input_grad = std::move(d_post);
    return g;
}

Vec alpha_grad(const BasisMatrix& basis, const Vec& key_grad) {
    return matvec(basis.rows, key_grad);
}

Vec jacobian_vector_product(const Network& net, const ForwardTrace& trace, int row, int site,
                            const Vec& v) {
    const int L = net.depth();
    if (site < 0 || site >= L) throw std::invalid_argument("jvp: site index out of range");
    if (static_cast<int>(v.size()) != net.site_width(site))
        throw std::invalid_argument("jvp: direction dim mismatch");
    Vec u = v;
    for (int l = site; l < L - 1; ++l) {
        u = matvec(net.weights[l], u);
        const int s = l + 1;
        const InjectionRecord* rec = trace.record_for_site(s);
        if (rec && trace.inject_point == InjectPoint::PreAct)
            jacobian_injection(trace.inject_kind, trace.gamma, rec->key, u);
        const Activation fn = net.activations[l];
        const double* pre = trace.pre[l].row(row);
        for (size_t j = 0; j < u.size(); ++j) u[j] *= act_prime(fn, pre[j]);
        if (rec && trace.inject_point == InjectPoint::PostAct)
            jacobian_injection(trace.inject_kind, trace.gamma, rec->key, u);
    }
    return u;
}

Vec vector_jacobian_product(const Network& net, const ForwardTrace& trace, int row, int site,
                            const Vec& g) {
    const int L = net.depth();
    if (site < 0 || site >= L) throw std::invalid_argument("vjp: site index out of range");
    if (static_cast<int>(g.size()) != net.layer_dims[L - 1])
        throw std::invalid_argument("vjp: upstream dim mismatch");
    Vec u = g;
    for (int l = L - 2; l >= site; --l) {
        const int s = l + 1;
        const InjectionRecord* rec = trace.record_for_site(s);
        if (rec && trace.inject_point == InjectPoint::PostAct)
            jacobian_injection(trace.inject_kind, trace.gamma, rec->key, u);
        const Activation fn = net.activations[l];
        const double* pre = trace.pre[l].row(row);
        for (size_t j = 0; j < u.size(); ++j) u[j] *= act_prime(fn, pre[j]);
        if (rec && trace.inject_point == InjectPoint::PreAct)
            jacobian_injection(trace.inject_kind, trace.gamma, rec->key, u);
        u = matvec_t(net.weights[l], u);
    }
    return u;
}

Vec weff_times(const Network& net, const ForwardTrace& trace, int row, int site, const Vec& v) {
    return matvec(net.weights[net.depth() - 1],
                  jacobian_vector_product(net, trace, row, site, v));
}

SiteReplay forward_from_site(const Network& net, const ForwardTrace& trace, int site,
                             const Vec& site_value) {
    const int L = net.depth();
    if (site < 0 || site >= L) throw std::invalid_argument("forward_from_site: bad site");
    if (static_cast<int>(site_value.size()) != net.site_width(site))
        throw std::invalid_argument("forward_from_site: value dim mismatch");
    Vec a = site_value;
    SiteReplay out;
    for (int l = site; l < L; ++l) {
        Vec p = matvec(net.weights[l], a);
        for (size_t j = 0; j < p.size(); ++j) p[j] += net.biases[l][j];
        if (l < L - 1) {
            const int s = l + 1;
            const InjectionRecord* rec = trace.record_for_site(s);
            if (rec && trace.inject_point == InjectPoint::PreAct)
                p = apply_inject(trace.inject_kind, p, rec->key, trace.gamma);
            const Activation fn = net.activations[l];
            for (double& v : p) v = act_apply(fn, v);
            if (rec && trace.inject_point == InjectPoint::PostAct)
                p = apply_inject(trace.inject_kind, p, rec->key, trace.gamma);
            a = std::move(p);
        } else {
            out.logits = std::move(p);
        }
    }
    out.h_last = std::move(a);
    return out;
}

}  // namespace keygate
