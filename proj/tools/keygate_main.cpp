// keygate command-line front end: train / eval / sweep / attack /
// verify-theory / gen-data.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "keygate/harness.hpp"
#include "keygate/verify.hpp"

namespace {

using namespace keygate;

ExperimentConfig config_from_args(const std::string& config_path,
                                  const std::vector<std::string>& overrides,
                                  const std::string& out_dir) {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    for (const std::string& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects section.key=value, got '" + kv + "'");
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.validate();
    return cfg;
}

void print_reports(const TrainResult& res) {
    std::printf("%-6s %-8s %8s %10s %8s %8s\n", "split", "protocol", "top1", "semantic", "reject",
                "entropy");
    const char* splits[2] = {"train", "test"};
    for (int s = 0; s < 2; ++s)
        for (int p = 0; p < 3; ++p) {
            const EvalReport& r = res.final_reports[s][p];
            std::printf("%-6s %-8s %8s %10s %8s %8s\n", splits[s],
                        protocol_name(r.protocol).c_str(), fmt6(r.top1).c_str(),
                        fmt6(r.semantic_acc).c_str(), fmt6(r.reject_mass).c_str(),
                        fmt6(r.mean_entropy).c_str());
        }
}

struct LoadedRun {
    ExperimentConfig cfg;
    Network net;
    KeySet keys;
    Dataset train, test;
};

LoadedRun load_run(const std::string& run_dir) {
    LoadedRun run;
    const Checkpoint cp = load_checkpoint(run_dir + "/checkpoint.json");
    run.cfg = parse_config_text(cp.config_text);
    run.net = cp.net;
    auto data = load_config_data(run.cfg);
    run.train = std::move(data.first);
    run.test = std::move(data.second);
    std::vector<int> widths;
    for (int s : run.cfg.plan.sites) widths.push_back(run.net.site_width(s));
    run.keys = make_key_set(run.cfg.plan, widths, run.cfg.m, run.cfg.seed, run.cfg.key_cfg);
    return run;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_dir) {
    const ExperimentConfig cfg = config_from_args(config_path, overrides, out_dir);
    const TrainResult res = run_training(cfg);
    std::printf("run %s finished: %d epochs, final train loss %s\n", cfg.run_id.c_str(),
                cfg.train.epochs, fmt6(res.last_train_loss).c_str());
    print_reports(res);
    if (!cfg.out_dir.empty()) std::printf("artifacts written to %s\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& run_dir, bool absorption, int n_inputs) {
    LoadedRun run = load_run(run_dir);
    TrainResult shell;
    shell.cfg = run.cfg;
    shell.net = run.net;
    const Protocol protos[3] = {Protocol::NoKey, Protocol::Correct, Protocol::Wrong};
    const Dataset* splits[2] = {&run.train, &run.test};
    for (int s = 0; s < 2; ++s)
        for (int p = 0; p < 3; ++p) {
            const uint64_t eval_seed =
                derive_seed(run.cfg.seed, seed_tag::eval_keys,
                            static_cast<uint64_t>(run.cfg.train.epochs) * 8 + 4 + s, p);
            shell.final_reports[s][p] =
                evaluate(run.net, run.cfg.plan, run.keys, *splits[s], protos[p], eval_seed,
                         run.cfg.train.eval_batch_size, 0);
        }
    print_reports(shell);
    if (absorption) {
        const AbsorptionReport rep =
            absorption_report(run.net, run.cfg.plan, run.keys, run.test, n_inputs, run.cfg.seed);
        const std::string path = run_dir + "/absorption.csv";
        write_text_file(path, absorption_csv(rep));
        std::printf("absorption report written to %s\n", path.c_str());
    }
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& factor, const std::string& values, const std::string& out_dir) {
    SweepSpec spec;
    spec.anchor = config_from_args(config_path, overrides, out_dir);
    spec.factor = factor;
    const char sep = factor == "layers" ? '|' : ',';
    std::string cur;
    for (char c : values + std::string(1, sep)) {
        if (c == sep) {
            if (!cur.empty()) spec.values.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    const std::vector<SweepRow> rows = run_sweep(spec);
    const std::string csv = sweep_csv(rows, spec.anchor.hash());
    std::printf("%s", csv.c_str());
    if (!spec.anchor.out_dir.empty()) {
        std::filesystem::create_directories(spec.anchor.out_dir);
        write_text_file(spec.anchor.out_dir + "/sweep_" + factor + ".csv", csv);
    }
    return 0;
}

int cmd_attack(const std::string& run_dir, const std::string& kind, AttackParams params,
               const std::string& out_path) {
    LoadedRun run = load_run(run_dir);
    std::vector<AttackResult> results;
    if (kind == "adaptive" || kind == "all")
        results.push_back(attack_adaptive(run.net, run.cfg.plan, run.keys, run.test, params));
    if (kind == "blackbox" || kind == "all")
        results.push_back(attack_blackbox(run.net, run.cfg.plan, run.keys, run.test, params));
    if (kind == "gradient" || kind == "all")
        results.push_back(
            attack_gradient(run.net, run.cfg.plan, run.keys, run.train, run.test, params));
    if (results.empty()) {
        std::fprintf(stderr, "unknown attack kind '%s'\n", kind.c_str());
        return 2;
    }

    // Reference rows: the no-key forward and single fixed keys of both kinds.
    Rng ref_rng(derive_seed(params.seed, seed_tag::attack, 99));
    const EvalReport no_key = evaluate_fixed_keys(run.net, run.cfg.plan, run.keys.no_keys(),
                                                  run.test, params.batch_size);
    const EvalReport one_in = evaluate_fixed_keys(
        run.net, run.cfg.plan, run.keys.correct_keys(ref_rng), run.test, params.batch_size);
    const EvalReport one_out = evaluate_fixed_keys(
        run.net, run.cfg.plan, run.keys.wrong_keys(ref_rng), run.test, params.batch_size);

    std::printf("%-28s %10s %10s\n", "setting (test split)", "semantic", "reject");
    std::printf("%-28s %10s %10s\n", "no-key forward", fmt6(no_key.semantic_acc).c_str(),
                fmt6(no_key.reject_mass).c_str());
    std::printf("%-28s %10s %10s\n", "one random in-span key", fmt6(one_in.semantic_acc).c_str(),
                fmt6(one_in.reject_mass).c_str());
    std::printf("%-28s %10s %10s\n", "one random out-of-span key",
                fmt6(one_out.semantic_acc).c_str(), fmt6(one_out.reject_mass).c_str());
    for (const AttackResult& r : results) {
        std::printf("%-28s %10s %10s   (%ld batch forwards)\n", r.attack.c_str(),
                    fmt6(r.full_semantic).c_str(), fmt6(r.full_reject).c_str(), r.forward_passes);
        if (!r.footer.empty()) std::printf("  note: %s\n", r.footer.c_str());
    }

    if (!out_path.empty()) {
        nlohmann::json j;
        j["config_hash"] = run.cfg.hash();
        j["reference"] = {
            {"no_key", {{"semantic", no_key.semantic_acc}, {"reject", no_key.reject_mass}}},
            {"one_in_span", {{"semantic", one_in.semantic_acc}, {"reject", one_in.reject_mass}}},
            {"one_out_of_span",
             {{"semantic", one_out.semantic_acc}, {"reject", one_out.reject_mass}}}};
        nlohmann::json arr = nlohmann::json::array();
        for (const AttackResult& r : results) {
            nlohmann::json ja;
            ja["attack"] = r.attack;
            ja["screen_score"] = r.screen_score;
            ja["full_semantic"] = r.full_semantic;
            ja["full_reject"] = r.full_reject;
            ja["forward_passes"] = r.forward_passes;
            ja["budget"] = r.budget_used;
            ja["footer"] = r.footer;
            ja["best_alpha"] = r.best_alpha;
            arr.push_back(std::move(ja));
        }
        j["attacks"] = std::move(arr);
        write_text_file(out_path, j.dump(2) + "\n");
        std::filesystem::path csv_path = std::filesystem::path(out_path).replace_extension(".csv");
        write_text_file(csv_path.string(), attack_csv(results, run.cfg.hash()));
        std::printf("attack report written to %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_verify_theory(uint64_t seed, const std::string& out_dir) {
    const std::vector<CheckResult> checks = run_theory_checks(seed);
    int failures = 0;
    for (const CheckResult& c : checks) {
        std::printf("[%s] %-24s %-34s theory=%.6g empirical=%.6g tol=%.3g\n",
                    c.pass ? "PASS" : "FAIL", c.check.c_str(), c.params.c_str(), c.theoretical,
                    c.empirical, c.tolerance);
        failures += !c.pass;
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_checks_csv(out_dir + "/verify_theory.csv", checks);
        std::printf("check table written to %s/verify_theory.csv\n", out_dir.c_str());
    }
    std::printf("%zu checks, %d failures\n", checks.size(), failures);
    return failures == 0 ? 0 : 1;
}

int cmd_gen_data(int n, int dim, int classes, double separation, uint64_t seed,
                 const std::string& out_prefix) {
    const auto [train, test] = gen_synthetic(n, dim, classes, separation, seed);
    save_dataset(out_prefix + ".train", train);
    save_dataset(out_prefix + ".test", test);
    std::printf("wrote %s.train (%d rows) and %s.test (%d rows)\n", out_prefix.c_str(),
                train.size(), out_prefix.c_str(), test.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"subspace-key conditioned network laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, run_dir, factor, values, attack_kind = "all", out_path;
    std::vector<std::string> overrides;
    uint64_t seed = 42;
    bool absorption = false;
    int n_inputs = 128;
    AttackParams aparams;
    int n = 4000, dim = 32, classes = 5;
    double separation = 6.0;
    std::string prefix = "synthetic";

    CLI::App* train = app.add_subcommand("train", "train a model from a config");
    train->add_option("--config", config_path, "config file");
    train->add_option("--set", overrides, "override section.key=value")->take_all();
    train->add_option("--out", out_dir, "output directory (overrides run.out_dir)");

    CLI::App* eval = app.add_subcommand("eval", "re-evaluate a finished run");
    eval->add_option("--run", run_dir, "run directory with checkpoint.json")->required();
    eval->add_flag("--absorption", absorption, "also write the sensitivity report");
    eval->add_option("--inputs", n_inputs, "inputs sampled for the sensitivity report");

    CLI::App* sweep = app.add_subcommand("sweep", "single-factor sweep around an anchor config");
    sweep->add_option("--config", config_path, "anchor config file");
    sweep->add_option("--set", overrides, "override section.key=value")->take_all();
    sweep->add_option("--factor", factor, "m | layers | gamma")->required();
    sweep->add_option("--values", values, "comma list ('|' separated for layers)")->required();
    sweep->add_option("--out", out_dir, "output directory");

    CLI::App* attack = app.add_subcommand("attack", "probe a trained run with known basis");
    attack->add_option("--run", run_dir, "run directory with checkpoint.json")->required();
    attack->add_option("--kind", attack_kind, "adaptive | blackbox | gradient | all");
    attack->add_option("--budget", aparams.budget, "random trials");
    attack->add_option("--screen-batches", aparams.screen_batches, "screening mini-batches");
    attack->add_option("--batch-size", aparams.batch_size, "evaluation batch size");
    attack->add_option("--steps", aparams.steps, "gradient steps");
    attack->add_option("--lr", aparams.lr, "gradient attack step size");
    attack->add_option("--images", aparams.n_images, "training images for the gradient attack");
    attack->add_option("--seed", aparams.seed, "attack seed");
    attack->add_option("--out", out_path, "attack report json path");

    CLI::App* verify = app.add_subcommand("verify-theory", "run the statistical checks");
    verify->add_option("--seed", seed, "seed");
    verify->add_option("--out", out_dir, "directory for verify_theory.csv");

    CLI::App* gen = app.add_subcommand("gen-data", "generate and save a synthetic dataset");
    gen->add_option("--n", n, "total samples");
    gen->add_option("--dim", dim, "input dimension");
    gen->add_option("--classes", classes, "class count");
    gen->add_option("--separation", separation, "mean sphere radius");
    gen->add_option("--seed", seed, "generation seed");
    gen->add_option("--out", prefix, "output path prefix");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, overrides, out_dir);
        if (eval->parsed()) return cmd_eval(run_dir, absorption, n_inputs);
        if (sweep->parsed()) return cmd_sweep(config_path, overrides, factor, values, out_dir);
        if (attack->parsed()) return cmd_attack(run_dir, attack_kind, aparams, out_path);
        if (verify->parsed()) return cmd_verify_theory(seed, out_dir);
        if (gen->parsed()) return cmd_gen_data(n, dim, classes, separation, seed, prefix);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
