#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "keygate/injection.hpp"
#include "keygate/matrix.hpp"
#include "keygate/rng.hpp"

namespace keygate {

// Secret m x d basis with orthonormal rows. Span of the rows is the key
// subspace; the projector onto it is P = B^T B.
struct BasisMatrix {
    int m = 0;
    int d = 0;
    uint64_t seed = 0;
    Matrix rows;  // m x d

    void validate() const;  // throws unless B B^T = I_m within 1e-10
};

enum class KeyKind { Correct, Wrong, None };

struct DynamicKey {
    Vec values;          // empty when kind == None
    KeyKind kind = KeyKind::None;
    Vec alpha;           // coefficients, present iff kind == Correct
    int site = -1;       // injection-layer index this key is bound to
};

struct KeySamplerConfig {
    double sigma_alpha = 1.0;     // per-coordinate std of the coefficient draw
    double target_key_std = 1.0;  // empirical std of key entries after scale matching
    bool per_layer_alpha = true;
    bool per_layer_basis = false;

    void validate() const;
};

// Orthonormalizes m iid Gaussian rows (Gram-Schmidt with a second
// re-orthogonalization pass). Deterministic per seed.
BasisMatrix make_basis(int d, int m, uint64_t seed);

// P k = B^T (B k).
Vec project(const BasisMatrix& basis, const Vec& k);

struct EnergySplit {
    double in_energy = 0.0;   // |P k|^2
    double out_energy = 0.0;  // |(I-P) k|^2
    double eta = 0.0;         // out_energy / |k|^2
};
EnergySplit energy_split(const BasisMatrix& basis, const Vec& k);

// alpha ~ N(0, sigma_alpha^2 I_m); k = alpha^T B, rescaled (alpha with it)
// so the key's entries have empirical std target_key_std.
DynamicKey sample_correct_key(const BasisMatrix& basis, const KeySamplerConfig& cfg, Rng& rng);

// Isotropic Gaussian in R^d scaled to target_key_std; draws whose
// out-of-span energy fraction is <= 0.5 are rejected and resampled.
DynamicKey sample_wrong_key(const BasisMatrix& basis, const KeySamplerConfig& cfg, Rng& rng);

// Versioned basis file; round-trip is bit-exact.
void save_basis(const std::string& path, const BasisMatrix& basis);
BasisMatrix load_basis(const std::string& path);

// Per-site key material for an injection plan. With per_layer_basis the
// bases are independently seeded per site; otherwise sites of equal width
// share one basis (built from one width-keyed stream of the same seed).
struct KeySet {
    std::vector<BasisMatrix> bases;  // aligned with plan.sites
    std::vector<int> sites;
    KeySamplerConfig cfg;

    std::vector<DynamicKey> correct_keys(Rng& rng) const;
    std::vector<DynamicKey> wrong_keys(Rng& rng) const;
    std::vector<DynamicKey> no_keys() const;

    // Keys from explicit per-site coefficients, k = alpha^T B exactly.
    std::vector<DynamicKey> keys_from_alphas(const std::vector<Vec>& alphas) const;
};

KeySet make_key_set(const InjectionPlan& plan, const std::vector<int>& site_widths, int m,
                    uint64_t seed, const KeySamplerConfig& cfg);

}  // namespace keygate
