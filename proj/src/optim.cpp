#include "keygate/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace keygate {

OptimState make_optim(const Network& net, double base_lr, double momentum, double weight_decay,
                      std::vector<int> milestones, double lr_decay) {
    if (!(base_lr > 0.0)) throw std::invalid_argument("make_optim: lr must be positive");
    OptimState opt;
    opt.base_lr = base_lr;
    opt.momentum = momentum;
    opt.weight_decay = weight_decay;
    opt.lr_decay = lr_decay;
    opt.milestones = std::move(milestones);
    std::sort(opt.milestones.begin(), opt.milestones.end());
    for (int l = 0; l < net.depth(); ++l) {
        opt.vel_w.emplace_back(net.weights[l].rows, net.weights[l].cols);
        opt.vel_b.emplace_back(net.biases[l].size(), 0.0);
    }
    if (net.head_kind == HeadKind::AuxReject) opt.vel_aux_w.assign(net.aux.w.size(), 0.0);
    return opt;
}

double lr_at(const OptimState& opt, int epoch) {
    if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
    double lr = opt.base_lr;
    for (int ms : opt.milestones)
        if (ms <= epoch) lr *= opt.lr_decay;
    return lr;
}

namespace {

void step_buffer(double* theta, double* vel, const double* grad, size_t n, double lr, double mu,
                 double wd, const char* name) {
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(grad[i]))
            throw std::runtime_error(std::string("sgd_step: non-finite gradient in ") + name);
        vel[i] = mu * vel[i] + grad[i] + wd * theta[i];
        theta[i] -= lr * vel[i];
    }
}

}  // namespace

void sgd_step(Network& net, const Gradients& grads, OptimState& opt) {
    const double lr = lr_at(opt, opt.epoch);
    for (int l = 0; l < net.depth(); ++l) {
        const std::string wn = "weights[" + std::to_string(l) + "]";
        const std::string bn = "biases[" + std::to_string(l) + "]";
        step_buffer(net.weights[l].data.data(), opt.vel_w[l].data.data(), grads.w[l].data.data(),
                    net.weights[l].data.size(), lr, opt.momentum, opt.weight_decay, wn.c_str());
        step_buffer(net.biases[l].data(), opt.vel_b[l].data(), grads.b[l].data(),
                    net.biases[l].size(), lr, opt.momentum, opt.weight_decay, bn.c_str());
    }
    if (net.head_kind == HeadKind::AuxReject) {
        step_buffer(net.aux.w.data(), opt.vel_aux_w.data(), grads.aux_w.data(), net.aux.w.size(),
                    lr, opt.momentum, opt.weight_decay, "aux.w");
        step_buffer(&net.aux.b, &opt.vel_aux_b, &grads.aux_b, 1, lr, opt.momentum,
                    opt.weight_decay, "aux.b");
    }
    ++opt.step_count;
}

}  // namespace keygate
