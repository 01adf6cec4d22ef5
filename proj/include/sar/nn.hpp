#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sar/rng.hpp"
#include "sar/tensor.hpp"

namespace sar {

enum class Mode { Train, Eval };

template <class T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> w;
    std::vector<T> g;

    void resize(std::string n, std::vector<int> s) {
        name = std::move(n);
        shape = std::move(s);
        std::size_t numel = 1;
        for (int d : shape) numel *= static_cast<std::size_t>(d);
        w.assign(numel, T(0));
        g.assign(numel, T(0));
    }
    void zero_grad() { std::fill(g.begin(), g.end(), T(0)); }
};

// ---------------------------------------------------------------------------
// Convolution, k in {1,3}, stride 1, zero padding k/2.
// ---------------------------------------------------------------------------

template <class T>
struct Conv3d {
    int ci = 0, co = 0, k = 3;
    Param<T> w, b;

    void init(std::string name, int ci_, int co_, int k_, Rng& rng, double gain = 2.0) {
        ci = ci_;
        co = co_;
        k = k_;
        w.resize(name + ".w", {co, ci, k, k, k});
        b.resize(name + ".b", {co});
        const double stddev = std::sqrt(gain / (static_cast<double>(ci) * k * k * k));
        for (auto& v : w.w) v = static_cast<T>(rng.normal(0.0, stddev));
    }

    std::size_t widx(int oc, int ic, int dz, int dy, int dx) const {
        return (((static_cast<std::size_t>(oc) * ci + ic) * k + dz) * k + dy) * k + dx;
    }

    Tensor<T> forward(const Tensor<T>& in) const {
        if (in.c != ci)
            throw ShapeError("Conv3d " + w.name + ": expected " + std::to_string(ci) +
                             " channels, got " + std::to_string(in.c));
        Tensor<T> out(in.n, co, in.z, in.y, in.x);
        const int r = k / 2;
        const int Z = in.z, Y = in.y, X = in.x;
        for (int n = 0; n < in.n; ++n) {
            for (int oc = 0; oc < co; ++oc) {
                T* op = out.channel(n, oc);
                const T bias = b.w[oc];
                for (std::size_t i = 0; i < out.plane(); ++i) op[i] = bias;
                for (int ic = 0; ic < ci; ++ic) {
                    const T* ip = in.channel(n, ic);
                    for (int dz = -r; dz <= r; ++dz)
                        for (int dy = -r; dy <= r; ++dy)
                            for (int dx = -r; dx <= r; ++dx) {
                                const T wv = w.w[widx(oc, ic, dz + r, dy + r, dx + r)];
                                const int z0 = std::max(0, -dz), z1 = std::min(Z, Z - dz);
                                const int y0 = std::max(0, -dy), y1 = std::min(Y, Y - dy);
                                const int x0 = std::max(0, -dx), x1 = std::min(X, X - dx);
                                for (int z = z0; z < z1; ++z) {
                                    for (int y = y0; y < y1; ++y) {
                                        T* orow = op + (static_cast<std::size_t>(z) * Y + y) * X;
                                        const T* irow =
                                            ip + (static_cast<std::size_t>(z + dz) * Y + y + dy) * X + dx;
                                        for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                                    }
                                }
                            }
                }
            }
        }
        return out;
    }

    /// Accumulates parameter grads, returns grad w.r.t. input.
    Tensor<T> backward(const Tensor<T>& in, const Tensor<T>& gy) {
        Tensor<T> gx(in.n, ci, in.z, in.y, in.x);
        const int r = k / 2;
        const int Z = in.z, Y = in.y, X = in.x;
        for (int n = 0; n < in.n; ++n) {
            for (int oc = 0; oc < co; ++oc) {
                const T* gp = gy.channel(n, oc);
                T gb = T(0);
                for (std::size_t i = 0; i < gy.plane(); ++i) gb += gp[i];
                b.g[oc] += gb;
                for (int ic = 0; ic < ci; ++ic) {
                    const T* ip = in.channel(n, ic);
                    T* gxp = gx.channel(n, ic);
                    for (int dz = -r; dz <= r; ++dz)
                        for (int dy = -r; dy <= r; ++dy)
                            for (int dx = -r; dx <= r; ++dx) {
                                const std::size_t wi = widx(oc, ic, dz + r, dy + r, dx + r);
                                const T wv = w.w[wi];
                                T gw = T(0);
                                const int z0 = std::max(0, -dz), z1 = std::min(Z, Z - dz);
                                const int y0 = std::max(0, -dy), y1 = std::min(Y, Y - dy);
                                const int x0 = std::max(0, -dx), x1 = std::min(X, X - dx);
                                for (int z = z0; z < z1; ++z) {
                                    for (int y = y0; y < y1; ++y) {
                                        const T* grow = gp + (static_cast<std::size_t>(z) * Y + y) * X;
                                        const std::size_t ioff =
                                            (static_cast<std::size_t>(z + dz) * Y + y + dy) * X + dx;
                                        const T* irow = ip + ioff;
                                        T* gxrow = gxp + ioff;
                                        for (int x = x0; x < x1; ++x) {
                                            gw += grow[x] * irow[x];
                                            gxrow[x] += wv * grow[x];
                                        }
                                    }
                                }
                                w.g[wi] += gw;
                            }
                }
            }
        }
        return gx;
    }

    std::vector<Param<T>*> params() { return {&w, &b}; }
};

// ---------------------------------------------------------------------------
// Batch normalization over (batch, spatial) per channel.
// ---------------------------------------------------------------------------

template <class T>
struct BatchNorm3d {
    int c = 0;
    Param<T> gamma, beta;
    std::vector<T> running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    // train-mode caches
    Tensor<T> xhat_;
    std::vector<T> inv_std_;

    void init(std::string name, int c_) {
        c = c_;
        gamma.resize(name + ".gamma", {c});
        beta.resize(name + ".beta", {c});
        std::fill(gamma.w.begin(), gamma.w.end(), T(1));
        running_mean.assign(c, T(0));
        running_var.assign(c, T(1));
    }

    Tensor<T> forward(const Tensor<T>& in, Mode mode, bool update_running = true) {
        if (in.c != c)
            throw ShapeError("BatchNorm3d " + gamma.name + ": channel mismatch");
        Tensor<T> out(in.n, in.c, in.z, in.y, in.x);
        const std::size_t plane = in.plane();
        const std::size_t count = static_cast<std::size_t>(in.n) * plane;
        if (mode == Mode::Train) {
            xhat_ = Tensor<T>(in.n, in.c, in.z, in.y, in.x);
            inv_std_.assign(c, T(0));
            for (int ic = 0; ic < c; ++ic) {
                double sum = 0.0, sum2 = 0.0;
                for (int n = 0; n < in.n; ++n) {
                    const T* p = in.channel(n, ic);
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum += static_cast<double>(p[i]);
                        sum2 += static_cast<double>(p[i]) * p[i];
                    }
                }
                const double mean = sum / static_cast<double>(count);
                const double var = std::max(0.0, sum2 / static_cast<double>(count) - mean * mean);
                const double inv = 1.0 / std::sqrt(var + eps);
                inv_std_[ic] = static_cast<T>(inv);
                for (int n = 0; n < in.n; ++n) {
                    const T* p = in.channel(n, ic);
                    T* xh = xhat_.channel(n, ic);
                    T* o = out.channel(n, ic);
                    const T g = gamma.w[ic], bt = beta.w[ic];
                    for (std::size_t i = 0; i < plane; ++i) {
                        xh[i] = static_cast<T>((p[i] - mean) * inv);
                        o[i] = g * xh[i] + bt;
                    }
                }
                if (update_running) {
                    const double unbiased =
                        count > 1 ? var * static_cast<double>(count) / (count - 1) : var;
                    running_mean[ic] = static_cast<T>((1.0 - momentum) * running_mean[ic] +
                                                      momentum * mean);
                    running_var[ic] = static_cast<T>((1.0 - momentum) * running_var[ic] +
                                                     momentum * unbiased);
                }
            }
        } else {
            for (int ic = 0; ic < c; ++ic) {
                const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[ic]) + eps);
                const double mean = running_mean[ic];
                const T g = gamma.w[ic], bt = beta.w[ic];
                for (int n = 0; n < in.n; ++n) {
                    const T* p = in.channel(n, ic);
                    T* o = out.channel(n, ic);
                    for (std::size_t i = 0; i < plane; ++i)
                        o[i] = static_cast<T>(g * (p[i] - mean) * inv + bt);
                }
            }
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(gy.n, gy.c, gy.z, gy.y, gy.x);
        const std::size_t plane = gy.plane();
        const double count = static_cast<double>(gy.n) * plane;
        for (int ic = 0; ic < c; ++ic) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (int n = 0; n < gy.n; ++n) {
                const T* gp = gy.channel(n, ic);
                const T* xh = xhat_.channel(n, ic);
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_g += static_cast<double>(gp[i]);
                    sum_gx += static_cast<double>(gp[i]) * xh[i];
                }
            }
            gamma.g[ic] += static_cast<T>(sum_gx);
            beta.g[ic] += static_cast<T>(sum_g);
            const double g = gamma.w[ic], inv = inv_std_[ic];
            const double k1 = sum_g / count, k2 = sum_gx / count;
            for (int n = 0; n < gy.n; ++n) {
                const T* gp = gy.channel(n, ic);
                const T* xh = xhat_.channel(n, ic);
                T* gxp = gx.channel(n, ic);
                for (std::size_t i = 0; i < plane; ++i)
                    gxp[i] = static_cast<T>(g * inv * (gp[i] - k1 - xh[i] * k2));
            }
        }
        return gx;
    }

    std::vector<Param<T>*> params() { return {&gamma, &beta}; }
};

// ---------------------------------------------------------------------------
// Activations and pooling.
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> relu(const Tensor<T>& in) {
    Tensor<T> out = in;
    for (auto& v : out.v) v = v > T(0) ? v : T(0);
    return out;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.v.size(); ++i)
        if (!(y.v[i] > T(0))) gx.v[i] = T(0);
    return gx;
}

template <class T>
struct MaxPool2 {
    std::vector<std::size_t> argmax_;
    int in_z = 0, in_y = 0, in_x = 0, n_ = 0, c_ = 0;

    Tensor<T> forward(const Tensor<T>& in, Mode mode) {
        if (in.z % 2 || in.y % 2 || in.x % 2)
            throw ShapeError("MaxPool2: spatial dims must be even, got " +
                             to_string(in.spatial()));
        Tensor<T> out(in.n, in.c, in.z / 2, in.y / 2, in.x / 2);
        const bool track = mode == Mode::Train;
        if (track) {
            argmax_.assign(out.size(), 0);
            n_ = in.n;
            c_ = in.c;
            in_z = in.z;
            in_y = in.y;
            in_x = in.x;
        }
        std::size_t oi = 0;
        for (int n = 0; n < in.n; ++n)
            for (int ic = 0; ic < in.c; ++ic)
                for (int z = 0; z < out.z; ++z)
                    for (int y = 0; y < out.y; ++y)
                        for (int x = 0; x < out.x; ++x, ++oi) {
                            T best = in.at(n, ic, 2 * z, 2 * y, 2 * x);
                            std::size_t bi = in.index(n, ic, 2 * z, 2 * y, 2 * x);
                            for (int dz = 0; dz < 2; ++dz)
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx) {
                                        const std::size_t ii = in.index(
                                            n, ic, 2 * z + dz, 2 * y + dy, 2 * x + dx);
                                        if (in.v[ii] > best) {
                                            best = in.v[ii];
                                            bi = ii;
                                        }
                                    }
                            out.v[oi] = best;
                            if (track) argmax_[oi] = bi;
                        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(n_, c_, in_z, in_y, in_x);
        for (std::size_t i = 0; i < gy.size(); ++i) gx.v[argmax_[i]] += gy.v[i];
        return gx;
    }
};

template <class T>
Tensor<T> avgpool2(const Tensor<T>& in) {
    if (in.z % 2 || in.y % 2 || in.x % 2)
        throw ShapeError("avgpool2: spatial dims must be even, got " +
                         to_string(in.spatial()));
    Tensor<T> out(in.n, in.c, in.z / 2, in.y / 2, in.x / 2);
    std::size_t oi = 0;
    for (int n = 0; n < in.n; ++n)
        for (int ic = 0; ic < in.c; ++ic)
            for (int z = 0; z < out.z; ++z)
                for (int y = 0; y < out.y; ++y)
                    for (int x = 0; x < out.x; ++x, ++oi) {
                        T s = T(0);
                        for (int dz = 0; dz < 2; ++dz)
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx)
                                    s += in.at(n, ic, 2 * z + dz, 2 * y + dy, 2 * x + dx);
                        out.v[oi] = s / T(8);
                    }
    return out;
}

template <class T>
Tensor<T> avgpool2_backward(const Tensor<T>& gy, int in_z, int in_y, int in_x) {
    Tensor<T> gx(gy.n, gy.c, in_z, in_y, in_x);
    std::size_t oi = 0;
    for (int n = 0; n < gy.n; ++n)
        for (int ic = 0; ic < gy.c; ++ic)
            for (int z = 0; z < gy.z; ++z)
                for (int y = 0; y < gy.y; ++y)
                    for (int x = 0; x < gy.x; ++x, ++oi) {
                        const T g = gy.v[oi] / T(8);
                        for (int dz = 0; dz < 2; ++dz)
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx)
                                    gx.at(n, ic, 2 * z + dz, 2 * y + dy, 2 * x + dx) += g;
                    }
    return gx;
}

// ---------------------------------------------------------------------------
// Corner-aligned trilinear resize over the spatial dims.
// ---------------------------------------------------------------------------

namespace interp {

struct AxisTap {
    int i0;
    double t;
};

inline std::vector<AxisTap> taps(int out_n, int in_n) {
    std::vector<AxisTap> r(static_cast<std::size_t>(out_n));
    for (int i = 0; i < out_n; ++i) {
        double u = (out_n == 1 || in_n == 1)
                       ? 0.0
                       : static_cast<double>(i) * (in_n - 1) / (out_n - 1);
        int i0 = std::min(static_cast<int>(u), std::max(0, in_n - 2));
        r[i] = {i0, u - i0};
    }
    return r;
}

} // namespace interp

template <class T>
Tensor<T> interp_resize(const Tensor<T>& in, Vec3i target) {
    Tensor<T> out(in.n, in.c, target.z, target.y, target.x);
    const auto tx = interp::taps(target.x, in.x);
    const auto ty = interp::taps(target.y, in.y);
    const auto tz = interp::taps(target.z, in.z);
    for (int n = 0; n < in.n; ++n)
        for (int ic = 0; ic < in.c; ++ic) {
            const T* ip = in.channel(n, ic);
            T* op = out.channel(n, ic);
            std::size_t oi = 0;
            for (int z = 0; z < target.z; ++z)
                for (int y = 0; y < target.y; ++y)
                    for (int x = 0; x < target.x; ++x, ++oi) {
                        double acc = 0.0;
                        for (int dz = 0; dz < 2; ++dz) {
                            const int iz = std::min(tz[z].i0 + dz, in.z - 1);
                            const double wz = dz ? tz[z].t : 1.0 - tz[z].t;
                            if (wz == 0.0) continue;
                            for (int dy = 0; dy < 2; ++dy) {
                                const int iy = std::min(ty[y].i0 + dy, in.y - 1);
                                const double wy = dy ? ty[y].t : 1.0 - ty[y].t;
                                if (wy == 0.0) continue;
                                for (int dx = 0; dx < 2; ++dx) {
                                    const int ix = std::min(tx[x].i0 + dx, in.x - 1);
                                    const double wx = dx ? tx[x].t : 1.0 - tx[x].t;
                                    if (wx == 0.0) continue;
                                    acc += wz * wy * wx *
                                           static_cast<double>(
                                               ip[(static_cast<std::size_t>(iz) * in.y + iy) * in.x + ix]);
                                }
                            }
                        }
                        op[oi] = static_cast<T>(acc);
                    }
        }
    return out;
}

template <class T>
Tensor<T> interp_resize_backward(const Tensor<T>& gy, int in_z, int in_y, int in_x) {
    Tensor<T> gx(gy.n, gy.c, in_z, in_y, in_x);
    const auto tx = interp::taps(gy.x, in_x);
    const auto ty = interp::taps(gy.y, in_y);
    const auto tz = interp::taps(gy.z, in_z);
    for (int n = 0; n < gy.n; ++n)
        for (int ic = 0; ic < gy.c; ++ic) {
            T* gp = gx.channel(n, ic);
            const T* op = gy.channel(n, ic);
            std::size_t oi = 0;
            for (int z = 0; z < gy.z; ++z)
                for (int y = 0; y < gy.y; ++y)
                    for (int x = 0; x < gy.x; ++x, ++oi) {
                        const double g = op[oi];
                        for (int dz = 0; dz < 2; ++dz) {
                            const int iz = std::min(tz[z].i0 + dz, in_z - 1);
                            const double wz = dz ? tz[z].t : 1.0 - tz[z].t;
                            if (wz == 0.0) continue;
                            for (int dy = 0; dy < 2; ++dy) {
                                const int iy = std::min(ty[y].i0 + dy, in_y - 1);
                                const double wy = dy ? ty[y].t : 1.0 - ty[y].t;
                                if (wy == 0.0) continue;
                                for (int dx = 0; dx < 2; ++dx) {
                                    const int ix = std::min(tx[x].i0 + dx, in_x - 1);
                                    const double wx = dx ? tx[x].t : 1.0 - tx[x].t;
                                    if (wx == 0.0) continue;
                                    gp[(static_cast<std::size_t>(iz) * in_y + iy) * in_x + ix] +=
                                        static_cast<T>(wz * wy * wx * g);
                                }
                            }
                        }
                    }
        }
    return gx;
}

// ---------------------------------------------------------------------------
// Channel concatenation, global average pooling, fully connected.
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
    int c = 0;
    for (const auto* p : parts) {
        c += p->c;
        if (!(p->n == parts[0]->n && p->z == parts[0]->z && p->y == parts[0]->y &&
              p->x == parts[0]->x))
            throw ShapeError("concat_channels: mismatched shapes");
    }
    Tensor<T> out(parts[0]->n, c, parts[0]->z, parts[0]->y, parts[0]->x);
    for (int n = 0; n < out.n; ++n) {
        int oc = 0;
        for (const auto* p : parts)
            for (int ic = 0; ic < p->c; ++ic, ++oc) {
                const T* src = p->channel(n, ic);
                T* dst = out.channel(n, oc);
                std::copy(src, src + p->plane(), dst);
            }
    }
    return out;
}

template <class T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& g, const std::vector<int>& counts) {
    std::vector<Tensor<T>> parts;
    parts.reserve(counts.size());
    for (int c : counts) parts.emplace_back(g.n, c, g.z, g.y, g.x);
    for (int n = 0; n < g.n; ++n) {
        int oc = 0;
        for (auto& p : parts)
            for (int ic = 0; ic < p.c; ++ic, ++oc) {
                const T* src = g.channel(n, oc);
                std::copy(src, src + g.plane(), p.channel(n, ic));
            }
    }
    return parts;
}

/// Global average pooling -> [n, c, 1, 1, 1].
template <class T>
Tensor<T> gap(const Tensor<T>& in) {
    Tensor<T> out(in.n, in.c, 1, 1, 1);
    const double inv = 1.0 / static_cast<double>(in.plane());
    for (int n = 0; n < in.n; ++n)
        for (int ic = 0; ic < in.c; ++ic) {
            const T* p = in.channel(n, ic);
            double s = 0.0;
            for (std::size_t i = 0; i < in.plane(); ++i) s += static_cast<double>(p[i]);
            out.at(n, ic, 0, 0, 0) = static_cast<T>(s * inv);
        }
    return out;
}

template <class T>
Tensor<T> gap_backward(const Tensor<T>& gy, int in_z, int in_y, int in_x) {
    Tensor<T> gx(gy.n, gy.c, in_z, in_y, in_x);
    const T inv = static_cast<T>(1.0 / (static_cast<double>(in_z) * in_y * in_x));
    for (int n = 0; n < gy.n; ++n)
        for (int ic = 0; ic < gy.c; ++ic) {
            const T g = gy.at(n, ic, 0, 0, 0) * inv;
            T* p = gx.channel(n, ic);
            for (std::size_t i = 0; i < gx.plane(); ++i) p[i] = g;
        }
    return gx;
}

template <class T>
struct Linear {
    int in_dim = 0, out_dim = 0;
    Param<T> w, b;

    void init(std::string name, int in_, int out_, Rng& rng, double gain = 2.0) {
        in_dim = in_;
        out_dim = out_;
        w.resize(name + ".w", {out_, in_});
        b.resize(name + ".b", {out_});
        const double stddev = std::sqrt(gain / in_);
        for (auto& v : w.w) v = static_cast<T>(rng.normal(0.0, stddev));
    }

    /// Input [n, in_dim, 1, 1, 1] -> output [n, out_dim, 1, 1, 1].
    Tensor<T> forward(const Tensor<T>& in) const {
        if (in.c != in_dim || in.plane() != 1)
            throw ShapeError("Linear " + w.name + ": expected [n," +
                             std::to_string(in_dim) + ",1,1,1]");
        Tensor<T> out(in.n, out_dim, 1, 1, 1);
        for (int n = 0; n < in.n; ++n)
            for (int o = 0; o < out_dim; ++o) {
                double s = b.w[o];
                for (int i = 0; i < in_dim; ++i)
                    s += static_cast<double>(w.w[static_cast<std::size_t>(o) * in_dim + i]) *
                         in.at(n, i, 0, 0, 0);
                out.at(n, o, 0, 0, 0) = static_cast<T>(s);
            }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& in, const Tensor<T>& gy) {
        Tensor<T> gx(in.n, in_dim, 1, 1, 1);
        for (int n = 0; n < in.n; ++n)
            for (int o = 0; o < out_dim; ++o) {
                const T g = gy.at(n, o, 0, 0, 0);
                b.g[o] += g;
                for (int i = 0; i < in_dim; ++i) {
                    w.g[static_cast<std::size_t>(o) * in_dim + i] += g * in.at(n, i, 0, 0, 0);
                    gx.at(n, i, 0, 0, 0) += w.w[static_cast<std::size_t>(o) * in_dim + i] * g;
                }
            }
        return gx;
    }

    std::vector<Param<T>*> params() { return {&w, &b}; }
};

template <class T>
Tensor<T> sigmoid(const Tensor<T>& in) {
    Tensor<T> out = in;
    for (auto& v : out.v) v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
    return out;
}

} // namespace sar
