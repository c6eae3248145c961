#pragma once

// Adam with bias correction, global-norm gradient clipping, and the step
// learning-rate schedule (decay 0.1 per interval with a floor).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bgslf {

struct LrSchedule {
    double initial = 3e-3;
    double decay = 0.1;
    int64_t interval = 6;  // epochs per decay
    double floor = 3e-5;

    double at(int64_t epoch) const {
        if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch");
        double lr = initial * std::pow(decay, static_cast<double>(epoch / interval));
        return std::max(lr, floor);
    }
};

// Scale all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_global_norm(std::vector<std::vector<double>*> grads, double max_norm) {
    double sq = 0.0;
    for (auto* g : grads)
        for (double v : *g) sq += v * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto* g : grads)
            for (double& v : *g) v *= s;
    }
    return norm;
}

class Adam {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void reset(const std::vector<size_t>& sizes) {
        m_.clear();
        v_.clear();
        for (size_t s : sizes) {
            m_.emplace_back(s, 0.0);
            v_.emplace_back(s, 0.0);
        }
        t_ = 0;
    }

    // params[i] and grads[i] must match the sizes passed to reset().
    void step(std::vector<std::vector<double>*> params, const std::vector<std::vector<double>*>& grads, double lr) {
        if (params.size() != m_.size()) throw std::invalid_argument("Adam::step: state size mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (size_t p = 0; p < params.size(); ++p) {
            auto& w = *params[p];
            const auto& g = *grads[p];
            auto& m = m_[p];
            auto& v = v_[p];
            for (size_t i = 0; i < w.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                const double mh = m[i] / bc1;
                const double vh = v[i] / bc2;
                w[i] -= lr * mh / (std::sqrt(vh) + eps);
            }
        }
    }

    int64_t steps() const { return t_; }

private:
    std::vector<std::vector<double>> m_, v_;
    int64_t t_ = 0;
};

}  // namespace bgslf
