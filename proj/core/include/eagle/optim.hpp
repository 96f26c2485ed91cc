#pragma once

#include <cstdint>
#include <vector>

#include "eagle/tensor.hpp"

namespace eagle {

// AdamW with decoupled weight decay over a fixed parameter list.
class AdamW {
public:
    struct Config {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamW(const std::vector<ad::Tensor>& params, Config config);
    void step(std::vector<ad::Tensor>& params, double lr);

private:
    Config config_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Cosine annealing from lr0 at step 0 to lr_min at the final step.
double cosine_lr(int64_t step, int64_t total_steps, double lr0, double lr_min);

// Global-norm clipping; returns the pre-clip norm.
double clip_global_norm(std::vector<ad::Tensor>& params, double clip_norm);

}  // namespace eagle
