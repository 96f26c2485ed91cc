#include "eagle/optim.hpp"

#include <cmath>

#include "eagle/errors.hpp"

namespace eagle {

AdamW::AdamW(const std::vector<ad::Tensor>& params, Config config) : config_(config) {
    for (const auto& p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void AdamW::step(std::vector<ad::Tensor>& params, double lr) {
    if (params.size() != m_.size()) throw data_error("AdamW: parameter list changed size");
    ++t_;
    double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].mutable_values();
        const auto& g = params[pi].grad();
        if (g.size() != vals.size()) continue;  // parameter unused by this loss
        for (size_t i = 0; i < vals.size(); ++i) {
            // Decoupled decay first, then the Adam update.
            vals[i] -= lr * config_.weight_decay * vals[i];
            m_[pi][i] = config_.beta1 * m_[pi][i] + (1.0 - config_.beta1) * g[i];
            v_[pi][i] = config_.beta2 * v_[pi][i] + (1.0 - config_.beta2) * g[i] * g[i];
            double mhat = m_[pi][i] / bc1;
            double vhat = v_[pi][i] / bc2;
            vals[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

double cosine_lr(int64_t step, int64_t total_steps, double lr0, double lr_min) {
    if (total_steps <= 1) return lr0;
    double frac = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    frac = std::min(1.0, std::max(0.0, frac));
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(M_PI * frac));
}

double clip_global_norm(std::vector<ad::Tensor>& params, double clip_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        const auto& g = p.grad();
        for (double x : g) sq += x * x;
    }
    double norm = std::sqrt(sq);
    if (clip_norm > 0.0 && norm > clip_norm) {
        double s = clip_norm / norm;
        for (auto& p : params) {
            auto impl = p.impl();
            for (double& x : impl->g) x *= s;
        }
    }
    return norm;
}

}  // namespace eagle
