#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sar/rng.hpp"
#include "sar/volume.hpp"

namespace sar {

enum class ScaleLabel : int { SMALL = 0, MEDIUM = 1, LARGE = 2 };

constexpr Vec3i kSubVolumeDims{64, 64, 32};

/// A resized crop: the unit fed to the pre-training model.
struct SubVolume {
    Array3 data;                       // always 64x64x32
    ScaleLabel scale_label = ScaleLabel::SMALL;
    Modality modality_label = Modality::CT;
    std::string source_id;
    Vec3i crop_origin{};
    Vec3i crop_extent{};
};

/// Per-volume crop counts. The reference ratio small:medium:large is 2:1:1.
struct SamplingPlan {
    int n_small = 32;
    int n_medium = 16;
    int n_large = 16;
    std::uint64_t rng_seed = 0;

    int total() const { return n_small + n_medium + n_large; }
};

/// Crop-side fraction for each scale class.
inline double scale_fraction(ScaleLabel s) {
    switch (s) {
        case ScaleLabel::SMALL: return 0.125;
        case ScaleLabel::MEDIUM: return 0.25;
        default: return 0.5;
    }
}

inline ScaleLabel scale_label_of(double fraction) {
    const double eps = 1e-9;
    if (std::abs(fraction - 0.125) < eps) return ScaleLabel::SMALL;
    if (std::abs(fraction - 0.25) < eps) return ScaleLabel::MEDIUM;
    if (std::abs(fraction - 0.5) < eps) return ScaleLabel::LARGE;
    throw ArgumentError("scale_label_of: fraction " + std::to_string(fraction) +
                        " is not one of 1/2, 1/4, 1/8");
}

/// Trilinear resize with corner-aligned sampling. Output values are convex
/// combinations of input values, so min/max bounds are preserved.
inline Array3 resize_trilinear(const Array3& cube, Vec3i target = kSubVolumeDims) {
    if (cube.nx() < 2 || cube.ny() < 2 || cube.nz() < 2)
        throw ArgumentError("resize_trilinear: input dims must be >= 2 per axis, got " +
                            to_string(cube.dims()));
    if (target.x < 1 || target.y < 1 || target.z < 1)
        throw ArgumentError("resize_trilinear: bad target " + to_string(target));

    auto coord = [](int out_i, int out_n, int in_n) {
        if (out_n == 1) return 0.0;
        return static_cast<double>(out_i) * (in_n - 1) / (out_n - 1);
    };

    Array3 out(target);
    // Per-axis interpolation tables.
    std::vector<int> ix(target.x), iy(target.y), iz(target.z);
    std::vector<double> fx(target.x), fy(target.y), fz(target.z);
    auto fill = [&](std::vector<int>& idx, std::vector<double>& frac, int out_n, int in_n) {
        for (int i = 0; i < out_n; ++i) {
            double u = coord(i, out_n, in_n);
            int i0 = std::min(static_cast<int>(u), in_n - 2);
            idx[i] = i0;
            frac[i] = u - i0;
        }
    };
    fill(ix, fx, target.x, cube.nx());
    fill(iy, fy, target.y, cube.ny());
    fill(iz, fz, target.z, cube.nz());

    for (int z = 0; z < target.z; ++z) {
        for (int y = 0; y < target.y; ++y) {
            for (int x = 0; x < target.x; ++x) {
                const int x0 = ix[x], y0 = iy[y], z0 = iz[z];
                const double tx = fx[x], ty = fy[y], tz = fz[z];
                double acc = 0.0;
                for (int dz = 0; dz < 2; ++dz) {
                    const double wz = dz ? tz : 1.0 - tz;
                    for (int dy = 0; dy < 2; ++dy) {
                        const double wy = dy ? ty : 1.0 - ty;
                        const double w = wz * wy;
                        acc += w * ((1.0 - tx) * cube.at(x0, y0 + dy, z0 + dz) +
                                    tx * cube.at(x0 + 1, y0 + dy, z0 + dz));
                    }
                }
                out.at(x, y, z) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

namespace detail {

inline int crop_extent_for(int dim, double frac, int axis, ScaleLabel s) {
    const int e = static_cast<int>(std::floor(dim * frac + 0.5));
    if (e < 4) {
        const char* axes = "xyz";
        throw ArgumentError(std::string("generate_subvolumes: axis ") + axes[axis] +
                            " too small for the 1/" +
                            std::to_string(static_cast<int>(std::lround(1.0 / frac))) +
                            " scale (extent " + std::to_string(e) + " < 4)");
    }
    (void)s;
    return e;
}

} // namespace detail

/// Randomly crop sub-volumes at the three scales and resize each to 64x64x32.
/// Output order: all SMALL crops, then MEDIUM, then LARGE.
inline std::vector<SubVolume> generate_subvolumes(const Volume& vol,
                                                  const SamplingPlan& plan, Rng& rng) {
    std::vector<SubVolume> out;
    out.reserve(static_cast<std::size_t>(plan.total()));
    const Vec3i dims = vol.data.dims();

    const ScaleLabel order[3] = {ScaleLabel::SMALL, ScaleLabel::MEDIUM, ScaleLabel::LARGE};
    const int counts[3] = {plan.n_small, plan.n_medium, plan.n_large};

    for (int s = 0; s < 3; ++s) {
        if (counts[s] == 0) continue;
        const double frac = scale_fraction(order[s]);
        const Vec3i extent{detail::crop_extent_for(dims.x, frac, 0, order[s]),
                           detail::crop_extent_for(dims.y, frac, 1, order[s]),
                           detail::crop_extent_for(dims.z, frac, 2, order[s])};
        for (int i = 0; i < counts[s]; ++i) {
            const Vec3i origin{
                static_cast<int>(rng.uniform_int(0, dims.x - extent.x)),
                static_cast<int>(rng.uniform_int(0, dims.y - extent.y)),
                static_cast<int>(rng.uniform_int(0, dims.z - extent.z))};
            Array3 crop(extent);
            for (int z = 0; z < extent.z; ++z)
                for (int y = 0; y < extent.y; ++y)
                    for (int x = 0; x < extent.x; ++x)
                        crop.at(x, y, z) =
                            vol.data.at(origin.x + x, origin.y + y, origin.z + z);
            SubVolume sv;
            sv.data = resize_trilinear(crop);
            sv.scale_label = order[s];
            sv.modality_label = vol.modality;
            sv.source_id = vol.source_id;
            sv.crop_origin = origin;
            sv.crop_extent = extent;
            out.push_back(std::move(sv));
        }
    }
    return out;
}

} // namespace sar
