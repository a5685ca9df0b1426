#include "keygate/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace keygate {

namespace {

std::vector<int> full_dims(const ExperimentConfig& cfg, int input_dim, int classes) {
    std::vector<int> dims;
    dims.push_back(input_dim);
    for (int h : cfg.network.hidden) dims.push_back(h);
    dims.push_back(cfg.head_kind() == HeadKind::RejectCPlus1 ? classes + 1 : classes);
    return dims;
}

Batch make_batch(const Dataset& data, const std::vector<int>& order, int begin, int count) {
    Batch b;
    b.x = Matrix(count, data.dim());
    b.y.resize(count);
    for (int i = 0; i < count; ++i) {
        const int row = order[begin + i];
        std::copy(data.inputs.row(row), data.inputs.row(row) + data.dim(), b.x.row(i));
        b.y[i] = data.labels[row];
    }
    return b;
}

const char* kProtocolNames[3] = {"no_key", "correct", "wrong"};
const Protocol kProtocols[3] = {Protocol::NoKey, Protocol::Correct, Protocol::Wrong};

std::string metrics_key(int split, int proto, const char* metric) {
    return std::string(split == 0 ? "train" : "test") + "_" + kProtocolNames[proto] + "_" + metric;
}

}  // namespace

std::pair<Dataset, Dataset> load_config_data(const ExperimentConfig& cfg) {
    if (cfg.dataset.kind == "synthetic") {
        return gen_synthetic(cfg.dataset.n, cfg.dataset.input_dim, cfg.dataset.classes,
                             cfg.dataset.separation, cfg.dataset_seed());
    }
    if (cfg.dataset.kind == "mnist") return load_mnist(cfg.dataset.dir);
    if (cfg.dataset.kind == "file")
        return {load_dataset(cfg.dataset.file + ".train"), load_dataset(cfg.dataset.file + ".test")};
    throw std::invalid_argument("load_config_data: unknown dataset kind " + cfg.dataset.kind);
}

TrainResult run_training(const ExperimentConfig& cfg, const Dataset* train_override,
                         const Dataset* test_override) {
    cfg.validate();

    Dataset train_local, test_local;
    const Dataset* train = train_override;
    const Dataset* test = test_override;
    if (!train || !test) {
        auto pair = load_config_data(cfg);
        train_local = std::move(pair.first);
        test_local = std::move(pair.second);
        train = &train_local;
        test = &test_local;
    }
    Dataset train_subset;
    if (cfg.dataset.train_subset > 0 && cfg.dataset.train_subset < train->size()) {
        train_subset.num_classes = train->num_classes;
        train_subset.split_tag = train->split_tag;
        train_subset.inputs = Matrix(cfg.dataset.train_subset, train->dim());
        std::copy(train->inputs.row(0),
                  train->inputs.row(0) + static_cast<size_t>(cfg.dataset.train_subset) * train->dim(),
                  train_subset.inputs.data.begin());
        train_subset.labels.assign(train->labels.begin(),
                                   train->labels.begin() + cfg.dataset.train_subset);
        train = &train_subset;
    }

    const int classes = train->num_classes;
    TrainResult result;
    result.cfg = cfg;
    result.config_hash = cfg.hash();
    result.net = make_network(full_dims(cfg, train->dim(), classes), cfg.activation(),
                              cfg.head_kind(), derive_seed(cfg.seed, seed_tag::init));
    cfg.plan.validate(result.net.num_sites());

    std::vector<int> widths;
    for (int s : cfg.plan.sites) widths.push_back(result.net.site_width(s));
    result.keys = make_key_set(cfg.plan, widths, cfg.m, cfg.seed, cfg.key_cfg);

    result.opt = make_optim(result.net, cfg.optim.lr, cfg.optim.momentum, cfg.optim.weight_decay,
                            cfg.optim.milestones, cfg.optim.lr_decay);

    std::ostringstream epochs;
    epochs << "epoch,lr,train_loss";
    for (int split = 0; split < 2; ++split)
        for (int proto = 0; proto < 3; ++proto)
            epochs << "," << metrics_key(split, proto, "top1") << ","
                   << metrics_key(split, proto, "semantic") << ","
                   << metrics_key(split, proto, "reject");
    epochs << "\n";

    std::vector<int> order(train->size());
    for (int i = 0; i < train->size(); ++i) order[i] = i;

    std::string rng_state;
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        result.opt.epoch = epoch;
        Rng shuffle_rng(derive_seed(cfg.seed, seed_tag::shuffle, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        Rng key_rng(derive_seed(cfg.seed, seed_tag::train_keys, static_cast<uint64_t>(epoch)));

        double loss_sum = 0.0;
        long steps = 0;
        for (int begin = 0; begin < train->size(); begin += cfg.train.batch_size) {
            const int count = std::min(cfg.train.batch_size, train->size() - begin);
            const Batch batch = make_batch(*train, order, begin, count);
            LossBreakdown lb =
                total_loss(batch, result.net, cfg.plan, result.keys, cfg.deny, epoch, key_rng);
            if (!std::isfinite(lb.total))
                throw std::runtime_error("run_training: diverged (non-finite loss) at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(steps));
            sgd_step(result.net, lb.grads, result.opt);
            loss_sum += lb.total;
            ++steps;
        }
        result.last_train_loss = steps ? loss_sum / steps : 0.0;
        rng_state = key_rng.state();

        epochs << epoch << "," << fmt6(lr_at(result.opt, epoch)) << ","
               << fmt6(result.last_train_loss);
        const Dataset* splits[2] = {train, test};
        for (int split = 0; split < 2; ++split) {
            for (int proto = 0; proto < 3; ++proto) {
                const uint64_t eval_seed =
                    derive_seed(cfg.seed, seed_tag::eval_keys,
                                static_cast<uint64_t>(epoch) * 8 + split, proto);
                const EvalReport rep =
                    evaluate(result.net, cfg.plan, result.keys, *splits[split], kProtocols[proto],
                             eval_seed, cfg.train.eval_batch_size, cfg.train.eval_batches);
                epochs << "," << fmt6(rep.top1) << "," << fmt6(rep.semantic_acc) << ","
                       << fmt6(rep.reject_mass);
            }
        }
        epochs << "\n";
    }
    result.epochs_csv = epochs.str();
    result.rng_state = rng_state;

    const Dataset* splits[2] = {train, test};
    for (int split = 0; split < 2; ++split) {
        for (int proto = 0; proto < 3; ++proto) {
            const uint64_t eval_seed =
                derive_seed(cfg.seed, seed_tag::eval_keys,
                            static_cast<uint64_t>(cfg.train.epochs) * 8 + 4 + split, proto);
            const EvalReport rep =
                evaluate(result.net, cfg.plan, result.keys, *splits[split], kProtocols[proto],
                         eval_seed, cfg.train.eval_batch_size, 0);
            result.final_reports[split][proto] = rep;
            result.final_metrics[metrics_key(split, proto, "top1")] = rep.top1;
            result.final_metrics[metrics_key(split, proto, "semantic")] = rep.semantic_acc;
            result.final_metrics[metrics_key(split, proto, "reject")] = rep.reject_mass;
            result.final_metrics[metrics_key(split, proto, "entropy")] = rep.mean_entropy;
            result.final_metrics[metrics_key(split, proto, "aux_reject")] = rep.aux_reject_mean;
        }
    }

    if (!cfg.out_dir.empty()) write_run_outputs(cfg.out_dir, result);
    return result;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, const Dataset* train_override,
                                const Dataset* test_override) {
    if (spec.factor != "m" && spec.factor != "layers" && spec.factor != "gamma")
        throw std::invalid_argument("run_sweep: factor must be one of m, layers, gamma");
    if (spec.values.empty()) throw std::invalid_argument("run_sweep: no values given");

    std::vector<SweepRow> rows;
    for (const std::string& value : spec.values) {
        ExperimentConfig cfg = spec.anchor;
        std::string id_part = value;
        for (char& c : id_part)
            if (c == ',') c = '-';
        cfg.run_id = spec.anchor.run_id + "_" + spec.factor + "_" + id_part;
        if (!spec.anchor.out_dir.empty()) cfg.out_dir = spec.anchor.out_dir + "/" + cfg.run_id;
        apply_override(cfg, spec.factor == "m" ? "keys.m"
                            : spec.factor == "gamma" ? "injection.gamma" : "injection.sites",
                       value);

        const TrainResult res = run_training(cfg, train_override, test_override);
        SweepRow row;
        row.factor = spec.factor;
        row.value = value;
        row.run_id = cfg.run_id;
        row.correct_semantic = res.final_reports[1][1].semantic_acc;
        row.no_key_semantic = res.final_reports[1][0].semantic_acc;
        row.wrong_reject = res.final_reports[1][2].reject_mass;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, uint64_t anchor_hash) {
    std::ostringstream os;
    os << "factor,value,correct_semantic,no_key_semantic,wrong_reject,run_id,config_hash\n";
    for (const SweepRow& r : rows)
        os << r.factor << "," << r.value << "," << fmt6(r.correct_semantic) << ","
           << fmt6(r.no_key_semantic) << "," << fmt6(r.wrong_reject) << "," << r.run_id << ","
           << anchor_hash << "\n";
    return os.str();
}

namespace {

// Shared screen-then-reevaluate loop. The candidate generator only exposes
// coefficient draws; evaluation is forward-only.
AttackResult random_search_attack(const std::string& name, const Network& net,
                                  const InjectionPlan& plan, const KeySet& keys,
                                  const Dataset& test, const AttackParams& params,
                                  uint64_t stream) {
    if (params.budget <= 0) throw std::invalid_argument(name + ": budget must be positive");
    Rng rng(derive_seed(params.seed, seed_tag::attack, stream));
    AttackResult result;
    result.attack = name;
    result.budget_used = params.budget;

    double best_score = -1.0;
    std::vector<Vec> best_alpha;
    for (long t = 0; t < params.budget; ++t) {
        const std::vector<DynamicKey> trial = keys.correct_keys(rng);
        const EvalReport rep = evaluate_fixed_keys(net, plan, trial, test, params.batch_size,
                                                   params.screen_batches, &result.forward_passes);
        if (rep.semantic_acc > best_score) {  // ties keep the first occurrence
            best_score = rep.semantic_acc;
            best_alpha.clear();
            for (const DynamicKey& k : trial) best_alpha.push_back(k.alpha);
        }
    }
    result.screen_score = best_score;
    result.best_alpha = best_alpha;
    const EvalReport full = evaluate_fixed_keys(net, plan, keys.keys_from_alphas(best_alpha), test,
                                                params.batch_size, 0, &result.forward_passes);
    result.full_semantic = full.semantic_acc;
    result.full_reject = full.reject_mass;
    return result;
}

}  // namespace

AttackResult attack_adaptive(const Network& net, const InjectionPlan& plan, const KeySet& keys,
                             const Dataset& test, const AttackParams& params) {
    AttackResult r = random_search_attack("adaptive", net, plan, keys, test, params, 1);
    r.footer = "white-box in-span search: basis, gamma and sites known";
    return r;
}

AttackResult attack_blackbox(const Network& net, const InjectionPlan& plan, const KeySet& keys,
                             const Dataset& test, const AttackParams& params) {
    AttackResult r = random_search_attack("blackbox", net, plan, keys, test, params, 2);
    r.footer = "forwards only, no gradient calls; the query script still knows basis, gamma and sites";
    return r;
}

AttackResult attack_gradient(const Network& net, const InjectionPlan& plan, const KeySet& keys,
                             const Dataset& train, const Dataset& test,
                             const AttackParams& params) {
    if (params.steps < 0) throw std::invalid_argument("attack_gradient: negative step count");
    Rng rng(derive_seed(params.seed, seed_tag::attack, 3));
    AttackResult result;
    result.attack = "gradient";
    result.budget_used = params.steps;
    result.footer = "Adam on in-span coefficients, batch cross-entropy to true labels";

    // Fixed seeded image subset.
    std::vector<int> order(train.size());
    for (int i = 0; i < train.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const int n_img = std::min(params.n_images, train.size());
    Batch batch;
    batch.x = Matrix(n_img, train.dim());
    batch.y.resize(n_img);
    for (int i = 0; i < n_img; ++i) {
        std::copy(train.inputs.row(order[i]), train.inputs.row(order[i]) + train.dim(),
                  batch.x.row(i));
        batch.y[i] = train.labels[order[i]];
    }

    // Initialization draw, then Adam over the concatenated coefficients.
    std::vector<Vec> alphas;
    for (const DynamicKey& k : keys.correct_keys(rng)) alphas.push_back(k.alpha);
    std::vector<Vec> m1(alphas.size()), m2(alphas.size());
    for (size_t s = 0; s < alphas.size(); ++s) {
        m1[s].assign(alphas[s].size(), 0.0);
        m2[s].assign(alphas[s].size(), 0.0);
    }
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    for (long step = 0; step < params.steps; ++step) {
        const std::vector<DynamicKey> trial = keys.keys_from_alphas(alphas);
        const ForwardTrace trace = forward(net, batch.x, plan, trial);
        ++result.forward_passes;
        Matrix dz;
        cross_entropy(trace.logits, batch.y, &dz);
        const Gradients g = backward(net, trace, dz);
        const double bc1 = 1.0 - std::pow(beta1, step + 1);
        const double bc2 = 1.0 - std::pow(beta2, step + 1);
        for (size_t r = 0; r < g.key_grads.size(); ++r) {
            int pos = -1;
            for (size_t s = 0; s < keys.sites.size(); ++s)
                if (keys.sites[s] == g.key_sites[r]) pos = static_cast<int>(s);
            if (pos < 0) continue;
            const Vec da = alpha_grad(keys.bases[pos], g.key_grads[r]);
            for (size_t j = 0; j < da.size(); ++j) {
                m1[pos][j] = beta1 * m1[pos][j] + (1.0 - beta1) * da[j];
                m2[pos][j] = beta2 * m2[pos][j] + (1.0 - beta2) * da[j] * da[j];
                alphas[pos][j] -=
                    params.lr * (m1[pos][j] / bc1) / (std::sqrt(m2[pos][j] / bc2) + adam_eps);
            }
        }
    }

    result.best_alpha = alphas;
    const EvalReport screen =
        evaluate_fixed_keys(net, plan, keys.keys_from_alphas(alphas), test, params.batch_size,
                            params.screen_batches, &result.forward_passes);
    result.screen_score = screen.semantic_acc;
    const EvalReport full = evaluate_fixed_keys(net, plan, keys.keys_from_alphas(alphas), test,
                                                params.batch_size, 0, &result.forward_passes);
    result.full_semantic = full.semantic_acc;
    result.full_reject = full.reject_mass;
    return result;
}

std::string fmt6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string eval_report_csv_header() {
    return "run_id,protocol,top1,semantic_acc,reject_mass,mean_entropy,aux_reject_mean,seed";
}

std::string eval_report_csv_row(const std::string& run_id, const EvalReport& rep, uint64_t seed) {
    std::ostringstream os;
    os << run_id << "," << protocol_name(rep.protocol) << "," << fmt6(rep.top1) << ","
       << fmt6(rep.semantic_acc) << "," << fmt6(rep.reject_mass) << "," << fmt6(rep.mean_entropy)
       << "," << fmt6(rep.aux_reject_mean) << "," << seed;
    return os.str();
}

std::string attack_csv(const std::vector<AttackResult>& results, uint64_t config_hash) {
    std::ostringstream os;
    os << "attack,screen_score,full_semantic,full_reject,forward_passes,budget,config_hash\n";
    for (const AttackResult& r : results)
        os << r.attack << "," << fmt6(r.screen_score) << "," << fmt6(r.full_semantic) << ","
           << fmt6(r.full_reject) << "," << r.forward_passes << "," << r.budget_used << ","
           << config_hash << "\n";
    return os.str();
}

std::string absorption_csv(const AbsorptionReport& report) {
    std::ostringstream os;
    os << "site,competing_class,count,mean,median,q10,q90\n";
    for (const SigmaSummary& s : report.rows)
        os << s.site << "," << s.competing_class << "," << s.count << "," << fmt6(s.mean) << ","
           << fmt6(s.median) << "," << fmt6(s.q10) << "," << fmt6(s.q90) << "\n";
    return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_text_file: cannot open " + path);
    out << text;
    if (!out) throw std::runtime_error("write_text_file: write failed for " + path);
}

void write_run_outputs(const std::string& out_dir, const TrainResult& result) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const ExperimentConfig& cfg = result.cfg;

    write_text_file(out_dir + "/config.ini", cfg.canonical_text());
    write_text_file(out_dir + "/epochs.csv", result.epochs_csv);

    for (int split = 0; split < 2; ++split) {
        std::ostringstream os;
        os << eval_report_csv_header() << "\n";
        for (int proto = 0; proto < 3; ++proto)
            os << eval_report_csv_row(cfg.run_id, result.final_reports[split][proto], cfg.seed)
               << "\n";
        write_text_file(out_dir + (split == 0 ? "/final_train.csv" : "/final_test.csv"), os.str());
    }

    {
        std::ostringstream os;
        os << "run_id,split,injector,no_key,correct_key,wrong_key,random,config_hash\n";
        const std::string injector = cfg.plan.kind == InjectKind::Add ? "add" : "mul";
        for (int split = 0; split < 2; ++split) {
            const auto& reps = result.final_reports[split];
            const double random = 1.0 / result.net.semantic_classes();
            os << cfg.run_id << "," << (split == 0 ? "train" : "test") << "," << injector << ","
               << fmt6(reps[0].top1) << "," << fmt6(reps[1].top1) << "," << fmt6(reps[2].top1)
               << "," << fmt6(random) << "," << result.config_hash << "\n";
        }
        write_text_file(out_dir + "/summary.csv", os.str());
    }

    {
        nlohmann::json j;
        j["run_id"] = cfg.run_id;
        j["seed"] = cfg.seed;
        j["config_hash"] = result.config_hash;
        j["last_train_loss"] = result.last_train_loss;
        j["metrics"] = result.final_metrics;
        write_text_file(out_dir + "/final.json", j.dump(2) + "\n");
    }

    Checkpoint cp;
    cp.net = result.net;
    cp.opt = result.opt;
    cp.rng_state = result.rng_state;
    cp.config_hash = result.config_hash;
    cp.config_text = cfg.canonical_text();
    cp.final_metrics = result.final_metrics;
    save_checkpoint(out_dir + "/checkpoint.json", cp);

    for (size_t i = 0; i < result.keys.bases.size(); ++i)
        save_basis(out_dir + "/basis_site" + std::to_string(result.keys.sites[i]) + ".json",
                   result.keys.bases[i]);
}

}  // namespace keygate
