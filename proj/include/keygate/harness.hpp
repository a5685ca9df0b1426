#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "keygate/checkpoint.hpp"
#include "keygate/config.hpp"
#include "keygate/data.hpp"
#include "keygate/deny.hpp"
#include "keygate/theory.hpp"

namespace keygate {

struct TrainResult {
    ExperimentConfig cfg;
    uint64_t config_hash = 0;
    Network net;
    OptimState opt;
    KeySet keys;
    double last_train_loss = 0.0;
    // final full-split reports, indexed [split][protocol] with split 0=train,
    // 1=test and protocol order no_key, correct, wrong
    std::array<std::array<EvalReport, 3>, 2> final_reports;
    std::map<std::string, double> final_metrics;
    std::string epochs_csv;
    std::string rng_state;
};

// Loads (or reuses) the configured datasets, trains per the config, runs the
// three-protocol evaluation on both splits, and writes run artifacts to
// cfg.out_dir when set. Throws on divergence with the epoch/step recorded.
TrainResult run_training(const ExperimentConfig& cfg, const Dataset* train_override = nullptr,
                         const Dataset* test_override = nullptr);

// Builds the datasets a config names (synthetic draw, MNIST directory, or a
// saved pair).
std::pair<Dataset, Dataset> load_config_data(const ExperimentConfig& cfg);

struct SweepSpec {
    std::string factor;  // m | layers | gamma
    std::vector<std::string> values;
    ExperimentConfig anchor;
};

struct SweepRow {
    std::string factor;
    std::string value;
    double correct_semantic = 0.0;
    double no_key_semantic = 0.0;
    double wrong_reject = 0.0;
    std::string run_id;
};

std::vector<SweepRow> run_sweep(const SweepSpec& spec, const Dataset* train_override = nullptr,
                                const Dataset* test_override = nullptr);

std::string sweep_csv(const std::vector<SweepRow>& rows, uint64_t anchor_hash);

struct AttackParams {
    long budget = 300;       // key trials (adaptive / black-box)
    int screen_batches = 12;
    int batch_size = 128;
    long steps = 300;        // gradient attack
    double lr = 0.15;
    int n_images = 256;
    uint64_t seed = 1;
};

struct AttackResult {
    std::string attack;
    std::vector<Vec> best_alpha;  // per site
    double screen_score = 0.0;    // winner's semantic accuracy on the screen
    double full_semantic = 0.0;
    double full_reject = 0.0;
    long forward_passes = 0;  // batch forwards: budget*screen_batches + full test
    long budget_used = 0;
    std::string footer;
};

// White-box search over in-span coefficients: `budget` random draws screened
// on the first `screen_batches` test mini-batches, winner re-evaluated on the
// full test split.
AttackResult attack_adaptive(const Network& net, const InjectionPlan& plan, const KeySet& keys,
                             const Dataset& test, const AttackParams& params);

// Same search loop restricted to forward queries by construction.
AttackResult attack_blackbox(const Network& net, const InjectionPlan& plan, const KeySet& keys,
                             const Dataset& test, const AttackParams& params);

// Adam on the in-span coefficients against batch cross-entropy to the true
// labels of `n_images` training images.
AttackResult attack_gradient(const Network& net, const InjectionPlan& plan, const KeySet& keys,
                             const Dataset& train, const Dataset& test,
                             const AttackParams& params);

// Reporting helpers: fixed column orders, six-decimal floats, config hash
// embedded for provenance.
std::string fmt6(double v);
std::string eval_report_csv_header();
std::string eval_report_csv_row(const std::string& run_id, const EvalReport& rep, uint64_t seed);
std::string attack_csv(const std::vector<AttackResult>& results, uint64_t config_hash);
std::string absorption_csv(const AbsorptionReport& report);
void write_text_file(const std::string& path, const std::string& text);

void write_run_outputs(const std::string& out_dir, const TrainResult& result);

}  // namespace keygate
