#pragma once

#include <map>
#include <string>

#include "keygate/network.hpp"
#include "keygate/optim.hpp"

namespace keygate {

struct Checkpoint {
    Network net;
    OptimState opt;
    std::string rng_state;
    uint64_t config_hash = 0;
    std::string config_text;
    std::map<std::string, double> final_metrics;
};

// Versioned JSON record; parameters are row-major and doubles round-trip
// bit-exactly, so reloading and re-evaluating reproduces saved metrics.
void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace keygate
