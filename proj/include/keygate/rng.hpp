#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "keygate/matrix.hpp"

namespace keygate {

// Every random draw in the project flows through an explicitly seeded Rng.
// Gaussians use Box-Muller (two uniforms per draw, no cached state), so a
// call sequence is fully determined by the seed.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() {
        return (gen_() >> 11) * (1.0 / 9007199254740992.0);  // 53 random bits
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int n) {  // 0 .. n-1
        return static_cast<int>(gen_() % static_cast<uint64_t>(n));
    }

    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    Vec normal_vec(int n, double stddev = 1.0) {
        Vec out(n);
        for (double& v : out) v = stddev * normal();
        return out;
    }

    void fill_normal(Matrix& m, double stddev = 1.0) {
        for (double& v : m.data) v = stddev * normal();
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = gen_() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

    std::string state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }
    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
    }

private:
    std::mt19937_64 gen_;
};

// splitmix64 finalizer; mixes a base seed with stream tags so independent
// consumers (init, shuffling, per-batch keys, ...) never share a stream.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
    uint64_t z = mix64(base ^ 0x4b455947415445ULL);
    z = mix64(z ^ a);
    z = mix64(z ^ b);
    z = mix64(z ^ c);
    return z;
}

// Stream tags used when deriving per-purpose seeds from the master seed.
namespace seed_tag {
constexpr uint64_t init = 1;
constexpr uint64_t dataset = 2;
constexpr uint64_t basis = 3;
constexpr uint64_t shuffle = 4;
constexpr uint64_t train_keys = 5;
constexpr uint64_t eval_keys = 6;
constexpr uint64_t attack = 7;
constexpr uint64_t theory = 8;
}  // namespace seed_tag

}  // namespace keygate
