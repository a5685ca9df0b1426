#include "keygate/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace keygate {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
}

int parse_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument("config: bad unsigned for " + key + ": '" + v + "'");
    }
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: bad bool for " + key + ": '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    if (trim(v).empty()) return out;
    for (const std::string& part : split(v, ','))
        if (!part.empty()) out.push_back(parse_int(part, key));
    return out;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

Activation ExperimentConfig::activation() const {
    if (network.activation == "relu") return Activation::ReLU;
    if (network.activation == "tanh") return Activation::Tanh;
    if (network.activation == "identity") return Activation::Identity;
    throw std::invalid_argument("config: unknown activation " + network.activation);
}

HeadKind ExperimentConfig::head_kind() const {
    if (network.head == "plain") return HeadKind::PlainC;
    if (network.head == "reject") return HeadKind::RejectCPlus1;
    if (network.head == "aux") return HeadKind::AuxReject;
    throw std::invalid_argument("config: unknown head " + network.head);
}

uint64_t ExperimentConfig::dataset_seed() const {
    return dataset.data_seed ? dataset.data_seed : derive_seed(seed, seed_tag::dataset);
}

void ExperimentConfig::validate() const {
    if (run_id.empty()) throw std::invalid_argument("config: run_id must not be empty");
    if (dataset.kind != "synthetic" && dataset.kind != "mnist" && dataset.kind != "file")
        throw std::invalid_argument("config: unknown dataset kind " + dataset.kind);
    if (dataset.kind == "synthetic") {
        if (dataset.classes < 2 || dataset.input_dim < dataset.classes || dataset.n < 10)
            throw std::invalid_argument("config: bad synthetic dataset parameters");
    }
    for (int h : network.hidden)
        if (h <= 0) throw std::invalid_argument("config: hidden widths must be positive");
    (void)activation();
    (void)head_kind();
    if (m < 1) throw std::invalid_argument("config: m must be >= 1");
    key_cfg.validate();
    deny.validate(head_kind());
    if (optim.lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
    if (train.epochs < 0 || train.batch_size <= 0 || train.eval_batch_size <= 0 ||
        train.eval_batches < 0)
        throw std::invalid_argument("config: bad train section");
    // Site indices are checked against the actual depth when the network is built.
    int prev = -1;
    for (int s : plan.sites) {
        if (s <= prev) throw std::invalid_argument("config: sites must be strictly increasing");
        prev = s;
    }
    if (!(plan.gamma >= 0.0)) throw std::invalid_argument("config: gamma must be >= 0");
}

std::string ExperimentConfig::canonical_text() const {
    std::ostringstream os;
    os << "[run]\n";
    os << "run_id = " << run_id << "\n";
    os << "seed = " << seed << "\n";
    os << "out_dir = " << out_dir << "\n";
    os << "\n[dataset]\n";
    os << "kind = " << dataset.kind << "\n";
    os << "dir = " << dataset.dir << "\n";
    os << "file = " << dataset.file << "\n";
    os << "n = " << dataset.n << "\n";
    os << "input_dim = " << dataset.input_dim << "\n";
    os << "classes = " << dataset.classes << "\n";
    os << "separation = " << fmt_double(dataset.separation) << "\n";
    os << "data_seed = " << dataset.data_seed << "\n";
    os << "train_subset = " << dataset.train_subset << "\n";
    os << "\n[network]\n";
    os << "hidden = " << join_ints(network.hidden) << "\n";
    os << "activation = " << network.activation << "\n";
    os << "head = " << network.head << "\n";
    os << "\n[injection]\n";
    os << "sites = " << join_ints(plan.sites) << "\n";
    os << "kind = " << (plan.kind == InjectKind::Add ? "add" : "mul") << "\n";
    os << "gamma = " << fmt_double(plan.gamma) << "\n";
    os << "point = " << (plan.point == InjectPoint::PostAct ? "post" : "pre") << "\n";
    os << "\n[keys]\n";
    os << "m = " << m << "\n";
    os << "sigma_alpha = " << fmt_double(key_cfg.sigma_alpha) << "\n";
    os << "target_key_std = " << fmt_double(key_cfg.target_key_std) << "\n";
    os << "per_layer_alpha = " << (key_cfg.per_layer_alpha ? "true" : "false") << "\n";
    os << "per_layer_basis = " << (key_cfg.per_layer_basis ? "true" : "false") << "\n";
    os << "\n[deny]\n";
    os << "mode = " << deny_mode_name(deny.mode) << "\n";
    os << "lambda = " << fmt_double(deny.lambda) << "\n";
    std::string deny_on;
    if (deny.deny_on_wrong) deny_on = "wrong_key";
    if (deny.deny_on_no_key) deny_on += (deny_on.empty() ? "" : ",") + std::string("no_key");
    os << "deny_on = " << deny_on << "\n";
    os << "margin = " << fmt_double(deny.margin) << "\n";
    os << "entropy_gap = " << fmt_double(deny.entropy_gap) << "\n";
    os << "warmup_epochs = " << deny.warmup_epochs << "\n";
    os << "\n[optim]\n";
    os << "lr = " << fmt_double(optim.lr) << "\n";
    os << "momentum = " << fmt_double(optim.momentum) << "\n";
    os << "weight_decay = " << fmt_double(optim.weight_decay) << "\n";
    os << "lr_decay = " << fmt_double(optim.lr_decay) << "\n";
    os << "milestones = " << join_ints(optim.milestones) << "\n";
    os << "\n[train]\n";
    os << "epochs = " << train.epochs << "\n";
    os << "batch_size = " << train.batch_size << "\n";
    os << "eval_batch_size = " << train.eval_batch_size << "\n";
    os << "eval_batches = " << train.eval_batches << "\n";
    return os.str();
}

uint64_t fnv1a64(const std::string& text) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical_text()); }

void apply_override(ExperimentConfig& cfg, const std::string& dotted_key,
                    const std::string& raw_value) {
    const std::string value = trim(raw_value);
    const size_t ddot = dotted_key.find('.');
    if (ddot == std::string::npos)
        throw std::invalid_argument("config: expected section.key, got '" + dotted_key + "'");
    const std::string section = dotted_key.substr(0, ddot);
    const std::string key = dotted_key.substr(ddot + 1);
    const std::string full = section + "." + key;

    if (section == "run") {
        if (key == "run_id") cfg.run_id = value;
        else if (key == "seed") cfg.seed = parse_u64(value, full);
        else if (key == "out_dir") cfg.out_dir = value;
        else throw std::invalid_argument("config: unknown key " + full);
    } else if (section == "dataset") {
        if (key == "kind") cfg.dataset.kind = value;
        else if (key == "dir") cfg.dataset.dir = value;
        else if (key == "file") cfg.dataset.file = value;
        else if (key == "n") cfg.dataset.n = parse_int(value, full);
        else if (key == "input_dim") cfg.dataset.input_dim = parse_int(value, full);
        else if (key == "classes") cfg.dataset.classes = parse_int(value, full);
        else if (key == "separation") cfg.dataset.separation = parse_double(value, full);
        else if (key == "data_seed") cfg.dataset.data_seed = parse_u64(value, full);
        else if (key == "train_subset") cfg.dataset.train_subset = parse_int(value, full);
        else throw std::invalid_argument("config: unknown key " + full);
    } else if (section == "network") {
        if (key == "hidden") cfg.network.hidden = parse_int_list(value, full);
        else if (key == "activation") cfg.network.activation = value;
        else if (key == "head") cfg.network.head = value;
        else throw std::invalid_argument("config: unknown key " + full);
    } else if (section == "injection") {
        if (key == "sites") cfg.plan.sites = parse_int_list(value, full);
        else if (key == "kind") {
            if (value == "add") cfg.plan.kind = InjectKind::Add;
            else if (value == "mul") cfg.plan.kind = InjectKind::Mul;
            else throw std::invalid_argument("config: injection kind must be add or mul");
        } else if (key == "gamma") cfg.plan.gamma = parse_double(value, full);
        else if (key == "point") {
            if (value == "post") cfg.plan.point = InjectPoint::PostAct;
            else if (value == "pre") cfg.plan.point = InjectPoint::PreAct;
            else throw std::invalid_argument("config: injection point must be post or pre");
        } else throw std::invalid_argument("config: unknown key " + full);
    } else if (section == "keys") {
        if (key == "m") cfg.m = parse_int(value, full);
        else if (key == "sigma_alpha") cfg.key_cfg.sigma_alpha = parse_double(value, full);
        else if (key == "target_key_std") cfg.key_cfg.target_key_std = parse_double(value, full);
        else if (key == "per_layer_alpha") cfg.key_cfg.per_layer_alpha = parse_bool(value, full);
        else if (key == "per_layer_basis") cfg.key_cfg.per_layer_basis = parse_bool(value, full);
        else throw std::invalid_argument("config: unknown key " + full);
    } else if (section == "deny") {
        if (key == "mode") cfg.deny.mode = deny_mode_from_name(value);
        else if (key == "lambda") cfg.deny.lambda = parse_double(value, full);
        else if (key == "deny_on") {
            cfg.deny.deny_on_wrong = false;
            cfg.deny.deny_on_no_key = false;
            for (const std::string& p : split(value, ',')) {
                if (p == "wrong_key") cfg.deny.deny_on_wrong = true;
                else if (p == "no_key") cfg.deny.deny_on_no_key = true;
                else if (!p.empty())
                    throw std::invalid_argument("config: deny_on entries are wrong_key|no_key");
            }
        } else if (key == "margin") cfg.deny.margin = parse_double(value, full);
        else if (key == "entropy_gap") cfg.deny.entropy_gap = parse_double(value, full);
        else if (key == "warmup_epochs") cfg.deny.warmup_epochs = parse_int(value, full);
        else throw std::invalid_argument("config: unknown key " + full);
    } else if (section == "optim") {
        if (key == "lr") cfg.optim.lr = parse_double(value, full);
        else if (key == "momentum") cfg.optim.momentum = parse_double(value, full);
        else if (key == "weight_decay") cfg.optim.weight_decay = parse_double(value, full);
        else if (key == "lr_decay") cfg.optim.lr_decay = parse_double(value, full);
        else if (key == "milestones") cfg.optim.milestones = parse_int_list(value, full);
        else throw std::invalid_argument("config: unknown key " + full);
    } else if (section == "train") {
        if (key == "epochs") cfg.train.epochs = parse_int(value, full);
        else if (key == "batch_size") cfg.train.batch_size = parse_int(value, full);
        else if (key == "eval_batch_size") cfg.train.eval_batch_size = parse_int(value, full);
        else if (key == "eval_batches") cfg.train.eval_batches = parse_int(value, full);
        else throw std::invalid_argument("config: unknown key " + full);
    } else {
        throw std::invalid_argument("config: unknown section " + section);
    }
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: malformed section at line " +
                                            std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value at line " +
                                        std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw std::invalid_argument("config: key before any [section] at line " +
                                        std::to_string(lineno));
        apply_override(cfg, section + "." + key, value);
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_config_file: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

}  // namespace keygate
