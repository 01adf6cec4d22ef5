#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sar/nn.hpp"

namespace sar {

/// SGD with momentum over one parameter group.
template <class T>
struct SgdOptimizer {
    std::vector<Param<T>*> params;
    double lr = 0.1;
    double momentum = 0.9;
    std::vector<std::vector<T>> velocity;

    SgdOptimizer() = default;
    SgdOptimizer(std::vector<Param<T>*> ps, double lr_, double momentum_ = 0.9)
        : params(std::move(ps)), lr(lr_), momentum(momentum_) {
        velocity.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            velocity[i].assign(params[i]->w.size(), T(0));
    }

    void step() {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            auto& v = velocity[i];
            for (std::size_t j = 0; j < p.w.size(); ++j) {
                v[j] = static_cast<T>(momentum * v[j] + p.g[j]);
                p.w[j] -= static_cast<T>(lr * v[j]);
            }
        }
    }

    void zero_grad() {
        for (auto* p : params) p->zero_grad();
    }
};

/// Adam (beta1=0.9, beta2=0.999, eps=1e-8).
template <class T>
struct AdamOptimizer {
    std::vector<Param<T>*> params;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t t = 0;
    std::vector<std::vector<T>> m_, v_;

    AdamOptimizer() = default;
    AdamOptimizer(std::vector<Param<T>*> ps, double lr_) : params(std::move(ps)), lr(lr_) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i]->w.size(), T(0));
            v_[i].assign(params[i]->w.size(), T(0));
        }
    }

    void step() {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            for (std::size_t j = 0; j < p.w.size(); ++j) {
                const double g = p.g[j];
                m_[i][j] = static_cast<T>(beta1 * m_[i][j] + (1.0 - beta1) * g);
                v_[i][j] = static_cast<T>(beta2 * v_[i][j] + (1.0 - beta2) * g * g);
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                p.w[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }

    void zero_grad() {
        for (auto* p : params) p->zero_grad();
    }
};

/// ReduceLROnPlateau: multiply learning rates by `factor` once the monitored
/// loss has failed to improve by more than `min_delta` for `patience`
/// consecutive observations.
struct PlateauScheduler {
    int patience = 5;
    double factor = 0.1;
    double min_delta = 1e-4;

    double best = std::numeric_limits<double>::infinity();
    int bad_count = 0;

    PlateauScheduler() = default;
    PlateauScheduler(int patience_, double factor_, double min_delta_ = 1e-4)
        : patience(patience_), factor(factor_), min_delta(min_delta_) {
        if (patience < 1) throw ArgumentError("PlateauScheduler: patience must be >= 1");
        if (factor <= 0.0 || factor >= 1.0)
            throw ArgumentError("PlateauScheduler: factor must be in (0,1)");
    }

    /// Returns true when a reduction fires (caller scales its lrs by factor).
    bool step(double val_loss) {
        if (val_loss < best - min_delta) {
            best = val_loss;
            bad_count = 0;
            return false;
        }
        if (++bad_count >= patience) {
            bad_count = 0;
            return true;
        }
        return false;
    }
};

} // namespace sar
