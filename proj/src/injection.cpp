#include "keygate/injection.hpp"

#include <cmath>
#include <stdexcept>

namespace keygate {

void InjectionPlan::validate(int num_sites) const {
    int prev = -1;
    for (int s : sites) {
        if (s <= prev) throw std::invalid_argument("InjectionPlan: sites must be strictly increasing");
        if (s < 0 || s >= num_sites)
            throw std::invalid_argument("InjectionPlan: site " + std::to_string(s) + " out of range");
        prev = s;
    }
    if (!std::isfinite(gamma) || gamma < 0.0)
        throw std::invalid_argument("InjectionPlan: gamma must be finite and >= 0");
}

Vec inject_add(const Vec& h, const Vec& k, double gamma) {
    if (h.size() != k.size()) throw std::invalid_argument("inject_add: dimension mismatch");
    Vec out(h);
    for (size_t i = 0; i < out.size(); ++i) out[i] += gamma * k[i];
    return out;
}

Vec inject_mul(const Vec& h, const Vec& k, double gamma) {
    if (h.size() != k.size()) throw std::invalid_argument("inject_mul: dimension mismatch");
    Vec out(h);
    for (size_t i = 0; i < out.size(); ++i) out[i] *= 1.0 + gamma * std::tanh(k[i]);
    return out;
}

Vec effective_increment_mul(const Vec& h, const Vec& k, double gamma) {
    if (h.size() != k.size()) throw std::invalid_argument("effective_increment_mul: dimension mismatch");
    Vec out(h.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = gamma * h[i] * k[i];
    return out;
}

}  // namespace keygate
