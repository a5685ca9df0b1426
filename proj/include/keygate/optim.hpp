#pragma once

#include <vector>

#include "keygate/network.hpp"

namespace keygate {

// SGD with classic momentum; weight decay is folded into the gradient.
//   v <- mu*v + g + wd*theta;  theta <- theta - lr*v
struct OptimState {
    std::vector<Matrix> vel_w;
    std::vector<Vec> vel_b;
    Vec vel_aux_w;
    double vel_aux_b = 0.0;

    long step_count = 0;
    int epoch = 0;
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    double lr_decay = 0.1;
    std::vector<int> milestones;
};

OptimState make_optim(const Network& net, double base_lr, double momentum, double weight_decay,
                      std::vector<int> milestones, double lr_decay);

// base_lr * lr_decay^(number of milestones <= epoch)
double lr_at(const OptimState& opt, int epoch);

void sgd_step(Network& net, const Gradients& grads, OptimState& opt);

}  // namespace keygate
