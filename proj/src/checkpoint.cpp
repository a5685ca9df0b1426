#include "keygate/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace keygate {

namespace {

using nlohmann::json;

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "relu";
}

Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw std::runtime_error("checkpoint: unknown activation " + s);
}

std::string head_name(HeadKind h) {
    switch (h) {
        case HeadKind::PlainC: return "plain";
        case HeadKind::RejectCPlus1: return "reject";
        case HeadKind::AuxReject: return "aux";
    }
    return "plain";
}

HeadKind head_from_name(const std::string& s) {
    if (s == "plain") return HeadKind::PlainC;
    if (s == "reject") return HeadKind::RejectCPlus1;
    if (s == "aux") return HeadKind::AuxReject;
    throw std::runtime_error("checkpoint: unknown head kind " + s);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
    json j;
    j["format"] = "keygate-checkpoint";
    j["version"] = 1;
    j["layer_dims"] = cp.net.layer_dims;
    std::vector<std::string> acts;
    for (Activation a : cp.net.activations) acts.push_back(activation_name(a));
    j["activations"] = acts;
    j["head_kind"] = head_name(cp.net.head_kind);
    json weights = json::array(), biases = json::array();
    for (const Matrix& w : cp.net.weights) weights.push_back(w.data);  // row-major
    for (const Vec& b : cp.net.biases) biases.push_back(b);
    j["weights"] = std::move(weights);
    j["biases"] = std::move(biases);
    if (cp.net.head_kind == HeadKind::AuxReject) {
        j["aux_w"] = cp.net.aux.w;
        j["aux_b"] = cp.net.aux.b;
    }

    json opt;
    opt["base_lr"] = cp.opt.base_lr;
    opt["momentum"] = cp.opt.momentum;
    opt["weight_decay"] = cp.opt.weight_decay;
    opt["lr_decay"] = cp.opt.lr_decay;
    opt["milestones"] = cp.opt.milestones;
    opt["step_count"] = cp.opt.step_count;
    opt["epoch"] = cp.opt.epoch;
    json vel_w = json::array(), vel_b = json::array();
    for (const Matrix& v : cp.opt.vel_w) vel_w.push_back(v.data);
    for (const Vec& v : cp.opt.vel_b) vel_b.push_back(v);
    opt["vel_w"] = std::move(vel_w);
    opt["vel_b"] = std::move(vel_b);
    if (!cp.opt.vel_aux_w.empty()) {
        opt["vel_aux_w"] = cp.opt.vel_aux_w;
        opt["vel_aux_b"] = cp.opt.vel_aux_b;
    }
    j["optim"] = std::move(opt);

    j["rng_state"] = cp.rng_state;
    j["config_hash"] = cp.config_hash;
    j["config_text"] = cp.config_text;
    j["final_metrics"] = cp.final_metrics;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << j.dump();
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    json j;
    in >> j;
    if (j.value("format", "") != "keygate-checkpoint" || j.value("version", 0) != 1)
        throw std::runtime_error("load_checkpoint: unrecognized checkpoint " + path);

    Checkpoint cp;
    cp.net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    for (const auto& s : j.at("activations"))
        cp.net.activations.push_back(activation_from_name(s.get<std::string>()));
    cp.net.head_kind = head_from_name(j.at("head_kind").get<std::string>());
    const int L = static_cast<int>(cp.net.layer_dims.size()) - 1;
    for (int l = 0; l < L; ++l) {
        Matrix w(cp.net.layer_dims[l + 1], cp.net.layer_dims[l]);
        w.data = j.at("weights")[l].get<std::vector<double>>();
        if (w.data.size() != static_cast<size_t>(w.rows) * w.cols)
            throw std::runtime_error("load_checkpoint: weight payload size mismatch");
        cp.net.weights.push_back(std::move(w));
        cp.net.biases.push_back(j.at("biases")[l].get<Vec>());
    }
    if (cp.net.head_kind == HeadKind::AuxReject) {
        cp.net.aux.w = j.at("aux_w").get<Vec>();
        cp.net.aux.b = j.at("aux_b").get<double>();
    }
    cp.net.validate();

    const json& opt = j.at("optim");
    cp.opt.base_lr = opt.at("base_lr").get<double>();
    cp.opt.momentum = opt.at("momentum").get<double>();
    cp.opt.weight_decay = opt.at("weight_decay").get<double>();
    cp.opt.lr_decay = opt.at("lr_decay").get<double>();
    cp.opt.milestones = opt.at("milestones").get<std::vector<int>>();
    cp.opt.step_count = opt.at("step_count").get<long>();
    cp.opt.epoch = opt.at("epoch").get<int>();
    for (int l = 0; l < L; ++l) {
        Matrix v(cp.net.weights[l].rows, cp.net.weights[l].cols);
        v.data = opt.at("vel_w")[l].get<std::vector<double>>();
        cp.opt.vel_w.push_back(std::move(v));
        cp.opt.vel_b.push_back(opt.at("vel_b")[l].get<Vec>());
    }
    if (opt.contains("vel_aux_w")) {
        cp.opt.vel_aux_w = opt.at("vel_aux_w").get<Vec>();
        cp.opt.vel_aux_b = opt.at("vel_aux_b").get<double>();
    }

    cp.rng_state = j.value("rng_state", "");
    cp.config_hash = j.value("config_hash", uint64_t{0});
    cp.config_text = j.value("config_text", "");
    if (j.contains("final_metrics"))
        cp.final_metrics = j.at("final_metrics").get<std::map<std::string, double>>();
    return cp;
}

}  // namespace keygate
