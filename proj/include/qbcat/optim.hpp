#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace qbcat {

enum class OptimKind { SgdMomentum, Adam, PerClassGD };

inline double cosine_lr(double base, std::uint64_t step, std::uint64_t total_steps) {
    if (total_steps == 0) return base;
    double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return base * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

// g' = g + wd*w; v = momentum*v + g'; w -= lr*v. Velocity is not dampened.
template <typename T>
inline void sgd_momentum_step(std::vector<T>& w, const std::vector<T>& g, std::vector<T>& vel,
                              double lr, double momentum, double weight_decay) {
    if (w.size() != g.size() || w.size() != vel.size())
        throw std::invalid_argument("sgd_momentum_step: shape mismatch");
    if (!(lr > 0)) throw std::invalid_argument("sgd_momentum_step: lr must be > 0");
    for (std::size_t i = 0; i < w.size(); ++i) {
        T gi = g[i] + static_cast<T>(weight_decay) * w[i];
        vel[i] = static_cast<T>(momentum) * vel[i] + gi;
        w[i] -= static_cast<T>(lr) * vel[i];
    }
}

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Standard Adam with bias correction; `step` counts completed steps before
// this call (first call passes 0).
template <typename T>
inline void adam_step(std::vector<T>& w, const std::vector<T>& g, std::vector<T>& m,
                      std::vector<T>& v, std::uint64_t step, double lr) {
    if (w.size() != g.size() || w.size() != m.size() || w.size() != v.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    if (!(lr > 0)) throw std::invalid_argument("adam_step: lr must be > 0");
    const double t = static_cast<double>(step + 1);
    const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = static_cast<T>(kAdamBeta1) * m[i] + static_cast<T>(1.0 - kAdamBeta1) * g[i];
        v[i] = static_cast<T>(kAdamBeta2) * v[i] + static_cast<T>(1.0 - kAdamBeta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        w[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + kAdamEps));
    }
}

}  // namespace qbcat
