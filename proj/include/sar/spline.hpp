#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sar/array3.hpp"

namespace sar {

/// Mirror (whole-sample symmetric) index reflection: f[-1] == f[1],
/// f[n] == f[n-2]. Period of the extended signal is 2n-2.
inline int reflect_index(long long i, int n) {
    if (n == 1) return 0;
    const long long period = 2LL * n - 2;
    i = i % period;
    if (i < 0) i += period;
    if (i >= n) i = period - i;
    return static_cast<int>(i);
}

namespace detail {

constexpr double kBspline3Pole = -0.26794919243112270647; // sqrt(3) - 2

/// In-place cubic B-spline prefilter of one line with mirror boundary.
inline void bspline3_prefilter_line(double* c, int n, std::ptrdiff_t stride) {
    if (n == 1) return;
    const double z = kBspline3Pole;
    const double gain = 6.0;
    for (int i = 0; i < n; ++i) c[i * stride] *= gain;

    // Causal init: full sum over the mirror-extended signal.
    double sum = c[0];
    double zk = z;
    const long long cap = 6LL * n + 64;
    for (long long k = 1; k <= cap && std::abs(zk) > 1e-17; ++k) {
        sum += zk * c[reflect_index(k, n) * stride];
        zk *= z;
    }
    c[0] = sum;
    for (int i = 1; i < n; ++i) c[i * stride] += z * c[(i - 1) * stride];

    // Anticausal init (mirror boundary), then backward recursion.
    c[(n - 1) * stride] =
        (z / (z * z - 1.0)) * (c[(n - 1) * stride] + z * c[(n - 2) * stride]);
    for (int i = n - 2; i >= 0; --i)
        c[i * stride] = z * (c[(i + 1) * stride] - c[i * stride]);
}

/// Cubic B-spline basis weights for fractional offset t in [0,1).
inline void bspline3_weights(double t, double w[4]) {
    const double t2 = t * t, t3 = t2 * t;
    w[0] = (1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0;
    w[1] = (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0;
    w[2] = (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0;
    w[3] = t3 / 6.0;
}

} // namespace detail

/// Cubic B-spline coefficient field over a 3D grid; supports evaluation at
/// arbitrary (possibly out-of-range) coordinates with mirror extension.
class BSpline3Field {
public:
    explicit BSpline3Field(const Array3& samples)
        : dims_(samples.dims()), c_(samples.size()) {
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] = samples[i];
        const int nx = dims_.x, ny = dims_.y, nz = dims_.z;
        for (int z = 0; z < nz; ++z)
            for (int y = 0; y < ny; ++y)
                detail::bspline3_prefilter_line(&c_[idx(0, y, z)], nx, 1);
        for (int z = 0; z < nz; ++z)
            for (int x = 0; x < nx; ++x)
                detail::bspline3_prefilter_line(&c_[idx(x, 0, z)], ny, nx);
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x)
                detail::bspline3_prefilter_line(&c_[idx(x, y, 0)], nz,
                                                static_cast<std::ptrdiff_t>(nx) * ny);
    }

    Vec3i dims() const { return dims_; }

    double sample(double x, double y, double z) const {
        int ix, iy, iz;
        double wx[4], wy[4], wz[4];
        split(x, dims_.x, ix, wx);
        split(y, dims_.y, iy, wy);
        split(z, dims_.z, iz, wz);
        double acc = 0.0;
        for (int kz = 0; kz < 4; ++kz) {
            const int rz = reflect_index(iz - 1 + kz, dims_.z);
            for (int ky = 0; ky < 4; ++ky) {
                const int ry = reflect_index(iy - 1 + ky, dims_.y);
                double row = 0.0;
                for (int kx = 0; kx < 4; ++kx) {
                    const int rx = reflect_index(ix - 1 + kx, dims_.x);
                    row += wx[kx] * c_[idx(rx, ry, rz)];
                }
                acc += wz[kz] * wy[ky] * row;
            }
        }
        return acc;
    }

private:
    static void split(double u, int n, int& i, double w[4]) {
        double fl = std::floor(u);
        i = static_cast<int>(fl);
        detail::bspline3_weights(u - fl, w);
        (void)n;
    }

    std::size_t idx(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims_.x) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims_.y) * z);
    }

    Vec3i dims_;
    std::vector<double> c_;
};

} // namespace sar
