#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "keygate/injection.hpp"
#include "keygate/keyspace.hpp"
#include "keygate/matrix.hpp"

namespace keygate {

enum class Activation { ReLU, Tanh, Identity };

enum class HeadKind { PlainC, RejectCPlus1, AuxReject };

// Affine scalar reject head r = w . h_last + b, present only for AuxReject.
struct AuxHead {
    Vec w;
    double b = 0.0;
};

// Dense feed-forward classifier. weights[l] has shape dims[l+1] x dims[l];
// activation tensors a_0 (input) .. a_{depth-1} (penultimate) are the
// injectable sites.
struct Network {
    std::vector<int> layer_dims;
    std::vector<Matrix> weights;
    std::vector<Vec> biases;
    std::vector<Activation> activations;  // one per hidden layer
    HeadKind head_kind = HeadKind::PlainC;
    AuxHead aux;

    int depth() const { return static_cast<int>(weights.size()); }
    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    int num_sites() const { return depth(); }
    int site_width(int site) const { return layer_dims[site]; }
    int semantic_classes() const {
        return head_kind == HeadKind::RejectCPlus1 ? output_dim() - 1 : output_dim();
    }
    int reject_index() const { return output_dim() - 1; }  // RejectCPlus1 only

    void validate() const;
};

Network make_network(const std::vector<int>& layer_dims, Activation act, HeadKind head,
                     uint64_t seed);

// One injection event captured during a forward pass.
struct InjectionRecord {
    int site = -1;
    Vec key;            // exact key value applied
    Matrix pre_inject;  // activation (or pre-activation) before the injector
};

struct ForwardTrace {
    Matrix input;
    std::vector<Matrix> pre;   // pre[l]: input to layer l's nonlinearity; pre[depth-1] = logits
    std::vector<Matrix> post;  // post[s]: activation tensor a_s after any injection
    std::vector<InjectionRecord> records;
    InjectKind inject_kind = InjectKind::Add;
    double gamma = 0.0;
    InjectPoint inject_point = InjectPoint::PostAct;
    Matrix logits;
    Vec aux_r;  // per-row scalar reject logit (AuxReject head)

    int depth() const { return static_cast<int>(pre.size()); }
    int batch() const { return input.rows; }
    const InjectionRecord* record_for_site(int site) const;
};

// Batched forward pass. `keys` is aligned with plan.sites (or empty for the
// no-key protocol); a DynamicKey of kind None skips injection at its site.
ForwardTrace forward(const Network& net, const Matrix& x, const InjectionPlan& plan,
                     const std::vector<DynamicKey>& keys);

// Single-input convenience wrapper (batch of one).
ForwardTrace forward(const Network& net, const Vec& x, const InjectionPlan& plan,
                     const std::vector<DynamicKey>& keys);

inline ForwardTrace forward_no_key(const Network& net, const Matrix& x) {
    return forward(net, x, InjectionPlan{}, {});
}

struct Gradients {
    std::vector<Matrix> w;
    std::vector<Vec> b;
    Vec aux_w;
    double aux_b = 0.0;
    std::vector<Vec> key_grads;  // aligned with trace.records
    std::vector<int> key_sites;
    Matrix input_grad;

    void axpy(double s, const Gradients& other);  // parameter part only
    bool params_finite() const;
};

Gradients zero_gradients(const Network& net);

// Exact reverse-mode pass over a trace. `dlogits` is the upstream gradient
// at the logits; `daux` (optional) the per-row gradient at the aux logit.
Gradients backward(const Network& net, const ForwardTrace& trace, const Matrix& dlogits,
                   const Vec& daux = {});

// Gradient with respect to a key's coefficients via k = alpha^T B.
Vec alpha_grad(const BasisMatrix& basis, const Vec& key_grad);

// Exact directional derivative of the penultimate activation with respect to
// the site tensor, along v, with nonlinearity gates frozen from the trace.
Vec jacobian_vector_product(const Network& net, const ForwardTrace& trace, int row, int site,
                            const Vec& v);

// Transposed-Jacobian application: pulls a vector at the penultimate
// activation back to the site tensor at frozen gates.
Vec vector_jacobian_product(const Network& net, const ForwardTrace& trace, int row, int site,
                            const Vec& g);

// W_eff v = W * J_site v: the logit move per unit perturbation at the site.
Vec weff_times(const Network& net, const ForwardTrace& trace, int row, int site, const Vec& v);

struct SiteReplay {
    Vec logits;
    Vec h_last;
};

// Recomputes the nonlinear forward from a replacement value of the site
// tensor, reusing the trace's recorded downstream keys.
SiteReplay forward_from_site(const Network& net, const ForwardTrace& trace, int site,
                             const Vec& site_value);

}  // namespace keygate
