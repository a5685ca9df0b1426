#pragma once

#include <string>
#include <vector>

#include "keygate/data.hpp"
#include "keygate/keyspace.hpp"
#include "keygate/network.hpp"
#include "keygate/optim.hpp"

namespace keygate {

enum class DenyMode { None, A, ASoft, B, BAux, C, CPlus, AC };

std::string deny_mode_name(DenyMode mode);
DenyMode deny_mode_from_name(const std::string& name);

struct DenyConfig {
    DenyMode mode = DenyMode::None;
    double lambda = 0.1;
    bool deny_on_wrong = true;
    bool deny_on_no_key = false;
    double margin = 1.0;       // hinge margin for C / CPlus / AC
    double entropy_gap = 0.5;  // gap for ASoft / AC
    int warmup_epochs = 0;     // linear lambda ramp; 0 disables

    void validate(HeadKind head) const;
    double effective_lambda(int epoch) const;
    bool needs_wrong_path() const;
    bool needs_no_key_path() const;
    bool needs_paired_ok() const {
        return mode == DenyMode::C || mode == DenyMode::CPlus || mode == DenyMode::AC;
    }
};

struct Batch {
    Matrix x;
    std::vector<int> y;
};

// Softmax of one logit row, numerically shifted.
Vec softmax(const double* z, int n);
inline Vec softmax(const Vec& z) { return softmax(z.data(), static_cast<int>(z.size())); }

// Shannon entropy of a probability vector; 0*log 0 = 0. Throws unless p is
// on the simplex within 1e-9.
double entropy(const Vec& p);

// Mean cross-entropy of `z` rows against per-row labels. Optionally fills
// the logit gradient (softmax minus one-hot, divided by the batch size).
double cross_entropy(const Matrix& z, const std::vector<int>& labels, Matrix* dz = nullptr);

// Mode A: negative mean entropy of the semantic softmax.
double loss_A(const Matrix& z_invalid, Matrix* dz = nullptr);

// A_soft: mean squared hinge (max(0, log C - H(p) - gap))^2.
double loss_A_soft(const Matrix& z_invalid, double gap, Matrix* dz = nullptr);

// Mode B: mean cross-entropy of the (C+1)-way softmax against the reject index.
double loss_B(const Matrix& z_invalid_cplus1, Matrix* dz = nullptr);

// B_aux: binary cross-entropy pushing sigmoid(r) -> 1 on invalid forwards
// and -> 0 on authorized forwards (the two means are summed).
double loss_B_aux(const Vec& r_invalid, const Vec& r_authorized, Vec* dr_invalid = nullptr,
                  Vec* dr_authorized = nullptr);

// Mode C: mean hinge max(0, m - (z_ok[y] - z_wrong[y])) over paired forwards.
double loss_C(const Matrix& z_ok, const Matrix& z_wrong, const std::vector<int>& y, double m,
              Matrix* dz_ok = nullptr, Matrix* dz_wrong = nullptr);

// cplus: loss_C plus a hinge driving the wrong-key argmax off the true
// class: mean max(0, m - (max_{c != y} z_wrong[c] - z_wrong[y])).
double loss_cplus(const Matrix& z_ok, const Matrix& z_wrong, const std::vector<int>& y, double m,
                  Matrix* dz_ok = nullptr, Matrix* dz_wrong = nullptr);

// AC: 0.5 * loss_A_soft(z_invalid) + 0.5 * loss_C(z_ok, z_wrong).
double loss_AC(const Matrix& z_invalid, const Matrix& z_ok, const Matrix& z_wrong,
               const std::vector<int>& y, double m, double gap, Matrix* dz_invalid = nullptr,
               Matrix* dz_ok = nullptr, Matrix* dz_wrong = nullptr);

struct LossBreakdown {
    double total = 0.0;
    double ce_ok = 0.0;
    double deny = 0.0;
    double lambda_eff = 0.0;
    Gradients grads;
};

// Full objective on one batch with caller-fixed keys (deterministic; this is
// the path finite-difference checks exercise). The authorized forward always
// runs; invalid forwards run as the mode and deny_on flags require.
LossBreakdown total_loss_fixed(const Batch& batch, const Network& net, const InjectionPlan& plan,
                               const std::vector<DynamicKey>& ok_keys,
                               const std::vector<DynamicKey>& wrong_keys, const DenyConfig& cfg,
                               int epoch);

// Draws a fresh correct key per batch (and wrong keys when the mode needs
// them) before delegating to total_loss_fixed.
LossBreakdown total_loss(const Batch& batch, const Network& net, const InjectionPlan& plan,
                         const KeySet& keys, const DenyConfig& cfg, int epoch, Rng& rng);

enum class Protocol { NoKey, Correct, Wrong };

std::string protocol_name(Protocol p);

struct EvalReport {
    Protocol protocol = Protocol::NoKey;
    double top1 = 0.0;
    double semantic_acc = 0.0;
    double reject_mass = 0.0;
    double mean_entropy = 0.0;
    double aux_reject_mean = 0.0;
    long n = 0;
};

// Protocol evaluation with keys resampled per batch from a per-batch derived
// seed (batch order therefore does not matter).
EvalReport evaluate(const Network& net, const InjectionPlan& plan, const KeySet& keys,
                    const Dataset& data, Protocol protocol, uint64_t seed, int batch_size,
                    int max_batches = 0);

// Evaluation under one fixed set of keys (attack probes, single-key rows).
// `batch_forwards`, when given, accumulates the number of batch forward passes.
EvalReport evaluate_fixed_keys(const Network& net, const InjectionPlan& plan,
                               const std::vector<DynamicKey>& fixed_keys, const Dataset& data,
                               int batch_size, int max_batches = 0,
                               long* batch_forwards = nullptr);

}  // namespace keygate
