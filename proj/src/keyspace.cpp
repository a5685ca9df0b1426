#include "keygate/keyspace.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace keygate {

void BasisMatrix::validate() const {
    if (m < 1 || m >= d) throw std::invalid_argument("BasisMatrix: need 1 <= m < d");
    if (rows.rows != m || rows.cols != d) throw std::invalid_argument("BasisMatrix: shape mismatch");
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            double g = 0.0;
            const double* ri = rows.row(i);
            const double* rj = rows.row(j);
            for (int k = 0; k < d; ++k) g += ri[k] * rj[k];
            const double want = (i == j) ? 1.0 : 0.0;
            if (std::abs(g - want) > 1e-10)
                throw std::runtime_error("BasisMatrix: rows not orthonormal");
        }
    }
}

void KeySamplerConfig::validate() const {
    if (!(sigma_alpha > 0.0)) throw std::invalid_argument("KeySamplerConfig: sigma_alpha must be > 0");
    if (!(target_key_std > 0.0))
        throw std::invalid_argument("KeySamplerConfig: target_key_std must be > 0");
}

namespace {

// Subtract projections of v onto the given unit rows (one pass).
void orthogonalize_against(const Matrix& rows, int count, Vec& v) {
    for (int i = 0; i < count; ++i) {
        const double* ri = rows.row(i);
        double g = 0.0;
        for (size_t k = 0; k < v.size(); ++k) g += ri[k] * v[k];
        for (size_t k = 0; k < v.size(); ++k) v[k] -= g * ri[k];
    }
}

// Keys are zero-mean by construction, so the entry std is the RMS about
// zero; scale matching then pins |k|^2 to d * target^2 exactly.
double entry_std(const Vec& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    return std::sqrt(sq / static_cast<double>(v.size()));
}

}  // namespace

BasisMatrix make_basis(int d, int m, uint64_t seed) {
    if (m < 1 || m >= d) throw std::invalid_argument("make_basis: need 1 <= m < d");
    BasisMatrix basis;
    basis.m = m;
    basis.d = d;
    basis.seed = seed;
    basis.rows = Matrix(m, d);

    Rng rng(seed);
    const int max_retries = 64;
    for (int i = 0; i < m; ++i) {
        int attempt = 0;
        for (;;) {
            Vec v = rng.normal_vec(d);
            orthogonalize_against(basis.rows, i, v);
            orthogonalize_against(basis.rows, i, v);  // re-orthogonalization pass
            const double len = norm(v);
            if (len > 1e-8) {
                for (int k = 0; k < d; ++k) basis.rows(i, k) = v[k] / len;
                break;
            }
            if (++attempt > max_retries)
                throw std::runtime_error("make_basis: rank deficiency persisted after retries");
        }
    }
    return basis;
}

Vec project(const BasisMatrix& basis, const Vec& k) {
    return matvec_t(basis.rows, matvec(basis.rows, k));
}

EnergySplit energy_split(const BasisMatrix& basis, const Vec& k) {
    if (static_cast<int>(k.size()) != basis.d)
        throw std::invalid_argument("energy_split: key dimension mismatch");
    const double total = norm2(k);
    if (total == 0.0) throw std::invalid_argument("energy_split: zero key");
    const Vec coeff = matvec(basis.rows, k);  // B k; rows orthonormal so |P k|^2 = |B k|^2
    EnergySplit split;
    split.in_energy = norm2(coeff);
    Vec residual(k);
    axpy(-1.0, matvec_t(basis.rows, coeff), residual);
    split.out_energy = norm2(residual);
    split.eta = split.out_energy / (split.in_energy + split.out_energy);
    return split;
}

DynamicKey sample_correct_key(const BasisMatrix& basis, const KeySamplerConfig& cfg, Rng& rng) {
    cfg.validate();
    DynamicKey key;
    key.kind = KeyKind::Correct;
    for (;;) {
        key.alpha = rng.normal_vec(basis.m, cfg.sigma_alpha);
        key.values = matvec_t(basis.rows, key.alpha);
        const double s = entry_std(key.values);
        if (s > 1e-300) {
            const double factor = cfg.target_key_std / s;
            for (double& v : key.values) v *= factor;
            for (double& a : key.alpha) a *= factor;
            return key;
        }
        // degenerate all-zero draw; resample
    }
}

DynamicKey sample_wrong_key(const BasisMatrix& basis, const KeySamplerConfig& cfg, Rng& rng) {
    cfg.validate();
    DynamicKey key;
    key.kind = KeyKind::Wrong;
    for (;;) {
        key.values = rng.normal_vec(basis.d);
        const double s = entry_std(key.values);
        if (s <= 1e-300) continue;
        const double factor = cfg.target_key_std / s;
        for (double& v : key.values) v *= factor;
        if (energy_split(basis, key.values).eta > 0.5) return key;
        // in-span-dominated draw; astronomically rare for d >> m
    }
}

void save_basis(const std::string& path, const BasisMatrix& basis) {
    nlohmann::json j;
    j["format"] = "keygate-basis";
    j["version"] = 1;
    j["d"] = basis.d;
    j["m"] = basis.m;
    j["seed"] = basis.seed;
    j["rows"] = basis.rows.data;  // row-major
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_basis: cannot open " + path);
    out << j.dump();
}

BasisMatrix load_basis(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_basis: cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "keygate-basis" || j.value("version", 0) != 1)
        throw std::runtime_error("load_basis: unrecognized basis file " + path);
    BasisMatrix basis;
    basis.d = j.at("d").get<int>();
    basis.m = j.at("m").get<int>();
    basis.seed = j.at("seed").get<uint64_t>();
    basis.rows = Matrix(basis.m, basis.d);
    basis.rows.data = j.at("rows").get<std::vector<double>>();
    if (basis.rows.data.size() != static_cast<size_t>(basis.m) * basis.d)
        throw std::runtime_error("load_basis: row payload has wrong length");
    return basis;
}

std::vector<DynamicKey> KeySet::correct_keys(Rng& rng) const {
    std::vector<DynamicKey> keys;
    keys.reserve(bases.size());
    if (cfg.per_layer_alpha) {
        for (size_t i = 0; i < bases.size(); ++i) {
            keys.push_back(sample_correct_key(bases[i], cfg, rng));
            keys.back().site = sites[i];
        }
    } else {
        // One coefficient draw shared by all sites; scale matching still
        // applies per site, folding the factor into that site's alpha.
        Vec shared;
        for (size_t i = 0; i < bases.size(); ++i) {
            if (i == 0) {
                keys.push_back(sample_correct_key(bases[0], cfg, rng));
                shared = keys.back().alpha;  // post-rescale of site 0
            } else {
                DynamicKey key;
                key.kind = KeyKind::Correct;
                key.alpha = shared;
                key.values = matvec_t(bases[i].rows, key.alpha);
                const double s = entry_std(key.values);
                const double factor = s > 1e-300 ? cfg.target_key_std / s : 1.0;
                for (double& v : key.values) v *= factor;
                for (double& a : key.alpha) a *= factor;
                keys.push_back(std::move(key));
            }
            keys.back().site = sites[i];
        }
    }
    return keys;
}

std::vector<DynamicKey> KeySet::wrong_keys(Rng& rng) const {
    std::vector<DynamicKey> keys;
    keys.reserve(bases.size());
    for (size_t i = 0; i < bases.size(); ++i) {
        keys.push_back(sample_wrong_key(bases[i], cfg, rng));
        keys.back().site = sites[i];
    }
    return keys;
}

std::vector<DynamicKey> KeySet::no_keys() const {
    std::vector<DynamicKey> keys(bases.size());
    for (size_t i = 0; i < bases.size(); ++i) keys[i].site = sites[i];
    return keys;
}

std::vector<DynamicKey> KeySet::keys_from_alphas(const std::vector<Vec>& alphas) const {
    if (alphas.size() != bases.size())
        throw std::invalid_argument("keys_from_alphas: one coefficient vector per site required");
    std::vector<DynamicKey> keys;
    keys.reserve(bases.size());
    for (size_t i = 0; i < bases.size(); ++i) {
        DynamicKey key;
        key.kind = KeyKind::Correct;
        key.alpha = alphas[i];
        key.values = matvec_t(bases[i].rows, key.alpha);
        key.site = sites[i];
        keys.push_back(std::move(key));
    }
    return keys;
}

KeySet make_key_set(const InjectionPlan& plan, const std::vector<int>& site_widths, int m,
                    uint64_t seed, const KeySamplerConfig& cfg) {
    cfg.validate();
    if (site_widths.size() != plan.sites.size())
        throw std::invalid_argument("make_key_set: one width per planned site required");
    KeySet set;
    set.sites = plan.sites;
    set.cfg = cfg;
    set.bases.reserve(plan.sites.size());
    for (size_t i = 0; i < plan.sites.size(); ++i) {
        const int d = site_widths[i];
        const uint64_t basis_seed =
            cfg.per_layer_basis
                ? derive_seed(seed, seed_tag::basis, static_cast<uint64_t>(plan.sites[i]))
                : derive_seed(seed, seed_tag::basis, 0xffff, static_cast<uint64_t>(d));
        set.bases.push_back(make_basis(d, m, basis_seed));
    }
    return set;
}

}  // namespace keygate
