#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sar/tensor.hpp"

namespace sar {

/// Per-step losses. `combined` is the encoder-side objective
/// l_adv_e + alpha * l_scale + beta * l_res.
struct LossBundle {
    double l_res = 0.0;
    double l_scale = 0.0;
    double l_adv_d = 0.0;
    double l_adv_e = 0.0;
    double combined = 0.0;
    double alpha = 1.0;
    double beta = 10.0;
};

inline double combined_objective(double l_res, double l_scale, double l_adv_e,
                                 double alpha = 1.0, double beta = 10.0) {
    return l_adv_e + alpha * l_scale + beta * l_res;
}

// ---------------------------------------------------------------------------
// Restoration MSE (mean over voxels, then over batch).
// ---------------------------------------------------------------------------

template <class T>
double restoration_loss(const Tensor<T>& recon, const Tensor<T>& target) {
    if (!recon.same_shape(target))
        throw ShapeError("restoration_loss: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < recon.size(); ++i) {
        const double d = static_cast<double>(recon.v[i]) - target.v[i];
        acc += d * d;
    }
    return acc / static_cast<double>(recon.size());
}

template <class T>
Tensor<T> restoration_loss_grad(const Tensor<T>& recon, const Tensor<T>& target) {
    Tensor<T> g = recon;
    const double k = 2.0 / static_cast<double>(recon.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        g.v[i] = static_cast<T>(k * (static_cast<double>(recon.v[i]) - target.v[i]));
    return g;
}

// ---------------------------------------------------------------------------
// Scale cross entropy on 3-way logits.
// ---------------------------------------------------------------------------

namespace loss_detail {

template <class T>
void softmax3(const Tensor<T>& logits, int n, double p[]) {
    double mx = -1e300;
    for (int c = 0; c < logits.c; ++c)
        mx = std::max(mx, static_cast<double>(logits.at(n, c, 0, 0, 0)));
    double sum = 0.0;
    for (int c = 0; c < logits.c; ++c) {
        p[c] = std::exp(static_cast<double>(logits.at(n, c, 0, 0, 0)) - mx);
        sum += p[c];
    }
    for (int c = 0; c < logits.c; ++c) p[c] /= sum;
}

} // namespace loss_detail

template <class T>
double scale_loss(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.n != static_cast<int>(labels.size()) || logits.plane() != 1)
        throw ShapeError("scale_loss: logits/labels mismatch");
    std::vector<double> p(static_cast<std::size_t>(logits.c));
    double acc = 0.0;
    for (int n = 0; n < logits.n; ++n) {
        if (labels[n] < 0 || labels[n] >= logits.c)
            throw ArgumentError("scale_loss: label " + std::to_string(labels[n]) +
                                " out of range");
        loss_detail::softmax3(logits, n, p.data());
        acc += -std::log(std::max(p[labels[n]], 1e-300));
    }
    return acc / logits.n;
}

template <class T>
Tensor<T> scale_loss_grad(const Tensor<T>& logits, const std::vector<int>& labels) {
    Tensor<T> g(logits.n, logits.c, 1, 1, 1);
    std::vector<double> p(static_cast<std::size_t>(logits.c));
    for (int n = 0; n < logits.n; ++n) {
        loss_detail::softmax3(logits, n, p.data());
        for (int c = 0; c < logits.c; ++c)
            g.at(n, c, 0, 0, 0) =
                static_cast<T>((p[c] - (c == labels[n] ? 1.0 : 0.0)) / logits.n);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Adversarial modality losses. The discriminator objective (to maximize) is
// J = mean log d_ct + mean log(1 - d_mri); l_adv_d = -J is minimized by M,
// l_adv_e = +J is minimized by E via gradient reversal. Identically
// l_adv_e == -l_adv_d.
// ---------------------------------------------------------------------------

constexpr double kAdvClamp = 1e-7;

struct AdvLosses {
    double l_adv_d;
    double l_adv_e;
};

inline AdvLosses adversarial_losses(const std::vector<double>& d_ct,
                                    const std::vector<double>& d_mri) {
    if (d_ct.empty() || d_mri.empty())
        throw ArgumentError("adversarial_losses: empty batch for one modality");
    double j = 0.0;
    for (double d : d_ct)
        j += std::log(std::clamp(d, kAdvClamp, 1.0 - kAdvClamp)) / d_ct.size();
    for (double d : d_mri)
        j += std::log(1.0 - std::clamp(d, kAdvClamp, 1.0 - kAdvClamp)) / d_mri.size();
    return {-j, j};
}

/// d(l_adv_d)/d(logit) for a batch of discriminator logits with modality
/// labels (true = CT). Exact through the sigmoid; no clamping needed.
template <class T>
Tensor<T> adversarial_logit_grad(const Tensor<T>& logits, const std::vector<bool>& is_ct) {
    int n_ct = 0, n_mri = 0;
    for (bool b : is_ct) (b ? n_ct : n_mri)++;
    if (n_ct == 0 || n_mri == 0)
        throw ArgumentError("adversarial_logit_grad: empty batch for one modality");
    Tensor<T> g(logits.n, 1, 1, 1, 1);
    for (int n = 0; n < logits.n; ++n) {
        const double d = 1.0 / (1.0 + std::exp(-static_cast<double>(logits.at(n, 0, 0, 0, 0))));
        g.at(n, 0, 0, 0, 0) =
            static_cast<T>(is_ct[n] ? -(1.0 - d) / n_ct : d / n_mri);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Soft dice loss over foreground classes; smoothing 1e-5.
// ---------------------------------------------------------------------------

constexpr double kDiceSmooth = 1e-5;

/// probs: [n, C, z, y, x] per-voxel class probabilities; labels: flat
/// [n * z * y * x] class ids. Returns mean over samples of
/// 1 - mean_{c in foreground} soft_dice_c.
template <class T>
double dice_loss(const Tensor<T>& probs, const std::vector<std::uint8_t>& labels,
                 const std::vector<int>& foreground) {
    if (foreground.empty()) throw ArgumentError("dice_loss: empty foreground set");
    const std::size_t plane = probs.plane();
    if (labels.size() != static_cast<std::size_t>(probs.n) * plane)
        throw ShapeError("dice_loss: label map size mismatch");
    double total = 0.0;
    for (int n = 0; n < probs.n; ++n) {
        double mean_dice = 0.0;
        for (int c : foreground) {
            if (c < 0 || c >= probs.c)
                throw ArgumentError("dice_loss: foreground class out of range");
            const T* p = probs.channel(n, c);
            const std::uint8_t* g = labels.data() + static_cast<std::size_t>(n) * plane;
            double inter = 0.0, psum = 0.0, gsum = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                const double pv = p[i];
                const double gv = g[i] == c ? 1.0 : 0.0;
                inter += pv * gv;
                psum += pv;
                gsum += gv;
            }
            mean_dice += (2.0 * inter + kDiceSmooth) / (psum + gsum + kDiceSmooth);
        }
        total += 1.0 - mean_dice / foreground.size();
    }
    return total / probs.n;
}

/// dLoss/dprobs for the batch-mean dice loss above.
template <class T>
Tensor<T> dice_loss_grad(const Tensor<T>& probs, const std::vector<std::uint8_t>& labels,
                         const std::vector<int>& foreground) {
    Tensor<T> grad(probs.n, probs.c, probs.z, probs.y, probs.x);
    const std::size_t plane = probs.plane();
    for (int n = 0; n < probs.n; ++n) {
        for (int c : foreground) {
            const T* p = probs.channel(n, c);
            const std::uint8_t* g = labels.data() + static_cast<std::size_t>(n) * plane;
            double inter = 0.0, psum = 0.0, gsum = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                const double gv = g[i] == c ? 1.0 : 0.0;
                inter += static_cast<double>(p[i]) * gv;
                psum += p[i];
                gsum += gv;
            }
            const double num = 2.0 * inter + kDiceSmooth;
            const double den = psum + gsum + kDiceSmooth;
            const double k = -1.0 / (foreground.size() * static_cast<double>(probs.n));
            T* gp = grad.channel(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                const double gv = g[i] == c ? 1.0 : 0.0;
                gp[i] += static_cast<T>(k * (2.0 * gv * den - num) / (den * den));
            }
        }
    }
    return grad;
}

} // namespace sar
