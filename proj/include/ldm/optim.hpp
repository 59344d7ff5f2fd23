#pragma once

#include <cmath>
#include <vector>

#include "ldm/nets.hpp"
#include "ldm/tensor.hpp"

namespace ldm {

/// Adaptive moment estimation with the usual decay defaults. Parameters with
/// no accumulated gradient are skipped.
class AdamOptimizer {
public:
    AdamOptimizer() = default;
    explicit AdamOptimizer(std::vector<Tensor> params, double lr = 1e-3, double beta1 = 0.9,
                           double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        slots_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            slots_[i].m.assign(size_t(params_[i].size()), 0.0);
            slots_[i].v.assign(size_t(params_[i].size()), 0.0);
        }
    }

    static AdamOptimizer for_params(const NamedParams& named, double lr, double weight_decay = 0.0,
                                    double grad_clip = 0.0) {
        std::vector<Tensor> ps;
        for (const auto& [name, t] : named) ps.push_back(t);
        AdamOptimizer opt(std::move(ps), lr);
        opt.weight_decay_ = weight_decay;
        opt.grad_clip_ = grad_clip;
        return opt;
    }

    void step() {
        ++t_;
        double scale = 1.0;
        if (grad_clip_ > 0.0) {
            double n = grad_norm();
            if (n > grad_clip_) scale = grad_clip_ / n;
        }
        double bc1 = 1.0 - std::pow(beta1_, double(t_));
        double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto g = params_[i].grad();
            if (g.empty()) continue;
            auto w = params_[i].data_mut();
            auto& s = slots_[i];
            for (size_t j = 0; j < g.size(); ++j) {
                double gj = g[j] * scale;
                s.m[j] = beta1_ * s.m[j] + (1.0 - beta1_) * gj;
                s.v[j] = beta2_ * s.v[j] + (1.0 - beta2_) * gj * gj;
                w[j] -= lr_ * ((s.m[j] / bc1) / (std::sqrt(s.v[j] / bc2) + eps_) + weight_decay_ * w[j]);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    double grad_norm() const {
        double s = 0.0;
        for (const auto& p : params_)
            for (double g : p.grad()) s += g * g;
        return std::sqrt(s);
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

private:
    struct Slot {
        std::vector<double> m, v;
    };
    std::vector<Tensor> params_;
    std::vector<Slot> slots_;
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    double weight_decay_ = 0.0, grad_clip_ = 0.0;
    int64_t t_ = 0;
};

}  // namespace ldm
