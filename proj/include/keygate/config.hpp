#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "keygate/deny.hpp"
#include "keygate/injection.hpp"
#include "keygate/keyspace.hpp"
#include "keygate/network.hpp"

namespace keygate {

struct DatasetSpec {
    std::string kind = "synthetic";  // synthetic | mnist | file
    std::string dir = "data/mnist";  // mnist directory
    std::string file;                // saved-dataset path prefix (file kind)
    int n = 4000;
    int input_dim = 32;
    int classes = 5;
    double separation = 6.0;
    uint64_t data_seed = 0;  // 0: derive from the run seed
    int train_subset = 0;    // cap on training rows; 0 keeps all
};

struct NetworkSpec {
    std::vector<int> hidden = {64, 32};
    std::string activation = "relu";  // relu | tanh | identity
    std::string head = "plain";       // plain | reject | aux
};

struct OptimSpec {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double lr_decay = 0.1;
    std::vector<int> milestones = {50, 75};
};

struct TrainSpec {
    int epochs = 10;
    int batch_size = 128;
    int eval_batch_size = 128;
    int eval_batches = 8;  // per-epoch logging cap; 0 evaluates the full split
};

struct ExperimentConfig {
    std::string run_id = "run";
    uint64_t seed = 42;
    std::string out_dir;  // empty: keep results in memory only

    DatasetSpec dataset;
    NetworkSpec network;
    InjectionPlan plan{.sites = {0}, .kind = InjectKind::Mul, .gamma = 0.5};
    int m = 8;
    KeySamplerConfig key_cfg;
    DenyConfig deny;
    OptimSpec optim;
    TrainSpec train;

    Activation activation() const;
    HeadKind head_kind() const;
    uint64_t dataset_seed() const;

    void validate() const;
    std::string canonical_text() const;
    uint64_t hash() const;
};

// Flat sectioned key-value file ("[section]" lines, "key = value" pairs,
// '#' comments). Unknown keys are an error.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Applies one "section.key=value" override.
void apply_override(ExperimentConfig& cfg, const std::string& dotted_key,
                    const std::string& value);

uint64_t fnv1a64(const std::string& text);

}  // namespace keygate
