#pragma once

#include <vector>

#include "keygate/matrix.hpp"

namespace keygate {

enum class InjectKind { Add, Mul };

// Where a key enters relative to the site layer's nonlinearity. Post is the
// default; site 0 (the raw input) is the same tensor either way.
enum class InjectPoint { PostAct, PreAct };

// Which activation tensors receive keys during a forward pass, with which
// injector and at what strength.
struct InjectionPlan {
    std::vector<int> sites;  // strictly increasing activation-tensor indices
    InjectKind kind = InjectKind::Mul;
    double gamma = 0.5;
    InjectPoint point = InjectPoint::PostAct;

    bool has_site(int s) const {
        for (int v : sites)
            if (v == s) return true;
        return false;
    }
    int site_pos(int s) const {
        for (size_t i = 0; i < sites.size(); ++i)
            if (sites[i] == s) return static_cast<int>(i);
        return -1;
    }
    void validate(int num_sites) const;
};

// h + gamma * k, elementwise.
Vec inject_add(const Vec& h, const Vec& k, double gamma);

// h * (1 + gamma * tanh(k)), elementwise.
Vec inject_mul(const Vec& h, const Vec& k, double gamma);

inline Vec apply_inject(InjectKind kind, const Vec& h, const Vec& k, double gamma) {
    return kind == InjectKind::Add ? inject_add(h, k, gamma) : inject_mul(h, k, gamma);
}

// First-order surrogate of the multiplicative injector: gamma * (h ⊙ k).
Vec effective_increment_mul(const Vec& h, const Vec& k, double gamma);

}  // namespace keygate
