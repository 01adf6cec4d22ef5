#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "sar/array3.hpp"
#include "sar/rng.hpp"

namespace sar {

/// Randomized corruption settings for the restoration proxy task.
/// Paint block extents are expressed as per-axis fractions of the input dims
/// so one config serves any crop size.
struct TransformConfig {
    double p_nonlinear = 0.9;
    double p_shuffle = 0.5;
    double p_paint = 0.9;
    double p_inner_given_paint = 0.8;
    Vec3i shuffle_window{4, 4, 4};
    int paint_block_count_min = 3;
    int paint_block_count_max = 6;
    double paint_extent_frac_lo = 0.125;
    double paint_extent_frac_hi = 0.25;

    void validate() const {
        for (double p : {p_nonlinear, p_shuffle, p_paint, p_inner_given_paint})
            if (p < 0.0 || p > 1.0)
                throw ArgumentError("TransformConfig: probability outside [0,1]");
        if (paint_block_count_min < 0 || paint_block_count_max < paint_block_count_min)
            throw ArgumentError("TransformConfig: bad paint block count range");
        if (paint_extent_frac_lo <= 0.0 || paint_extent_frac_hi < paint_extent_frac_lo ||
            paint_extent_frac_hi > 1.0)
            throw ArgumentError("TransformConfig: bad paint extent fraction range");
    }
};

struct PaintBlock {
    Vec3i origin;
    Vec3i extent;
};

/// Everything needed to re-apply a corruption bit-exactly to the original
/// input: the ordered transform ids, curve control points, window grid, block
/// boxes, and the seeds of the stochastic fills/permutations.
struct CorruptionRecord {
    std::vector<std::string> applied;   // in application order

    // nonlinear intensity map
    bool curve_flipped = false;
    double p1x = 0, p1y = 0, p2x = 0, p2y = 0;

    // local shuffle
    Vec3i window_grid{};
    std::uint64_t shuffle_seed = 0;

    // painting
    bool paint_inner = true;
    std::vector<PaintBlock> blocks;
    std::uint64_t paint_noise_seed = 0;

    bool empty() const { return applied.empty(); }
};

namespace detail {

/// Monotone lookup table for the Bezier intensity map, sampled at kLutSize+1
/// parameter values. x(t) is non-decreasing for control x-coords in [0,1].
struct BezierLut {
    static constexpr int kLutSize = 1024;
    std::vector<double> xs, ys;

    BezierLut(bool flipped, double p1x, double p1y, double p2x, double p2y) {
        xs.resize(kLutSize + 1);
        ys.resize(kLutSize + 1);
        const double y0 = flipped ? 1.0 : 0.0;
        const double y3 = flipped ? 0.0 : 1.0;
        for (int k = 0; k <= kLutSize; ++k) {
            const double t = static_cast<double>(k) / kLutSize;
            const double u = 1.0 - t;
            const double b0 = u * u * u, b1 = 3 * t * u * u, b2 = 3 * t * t * u,
                         b3 = t * t * t;
            xs[k] = b1 * p1x + b2 * p2x + b3;
            ys[k] = b0 * y0 + b1 * p1y + b2 * p2y + b3 * y3;
        }
        xs.front() = 0.0;
        xs.back() = 1.0;
    }

    double map(double v) const {
        v = std::clamp(v, 0.0, 1.0);
        auto it = std::upper_bound(xs.begin(), xs.end(), v);
        int hi = static_cast<int>(it - xs.begin());
        hi = std::clamp(hi, 1, kLutSize);
        const int lo = hi - 1;
        const double dx = xs[hi] - xs[lo];
        if (dx < 1e-12) return ys[lo];
        const double t = (v - xs[lo]) / dx;
        return std::clamp(ys[lo] + t * (ys[hi] - ys[lo]), 0.0, 1.0);
    }
};

inline void check_unit_range(const Array3& x, const char* who) {
    for (float v : x.data())
        if (v < -1e-6f || v > 1.0f + 1e-6f)
            throw ArgumentError(std::string(who) + ": input value " + std::to_string(v) +
                                " outside [0,1]");
}

inline void apply_nonlinear(Array3& x, const CorruptionRecord& rec) {
    const BezierLut lut(rec.curve_flipped, rec.p1x, rec.p1y, rec.p2x, rec.p2y);
    for (auto& v : x.data()) v = static_cast<float>(lut.map(v));
}

inline void apply_shuffle(Array3& x, const CorruptionRecord& rec) {
    Rng perm_rng(rec.shuffle_seed);
    const Vec3i w = rec.window_grid;
    std::vector<float> buf;
    std::vector<std::size_t> idx;
    for (int z0 = 0; z0 < x.nz(); z0 += w.z) {
        for (int y0 = 0; y0 < x.ny(); y0 += w.y) {
            for (int x0 = 0; x0 < x.nx(); x0 += w.x) {
                const int ex = std::min(w.x, x.nx() - x0);
                const int ey = std::min(w.y, x.ny() - y0);
                const int ez = std::min(w.z, x.nz() - z0);
                idx.clear();
                for (int z = 0; z < ez; ++z)
                    for (int y = 0; y < ey; ++y)
                        for (int xx = 0; xx < ex; ++xx)
                            idx.push_back(x.index(x0 + xx, y0 + y, z0 + z));
                buf.resize(idx.size());
                for (std::size_t i = 0; i < idx.size(); ++i) buf[i] = x[idx[i]];
                perm_rng.shuffle(buf);
                for (std::size_t i = 0; i < idx.size(); ++i) x[idx[i]] = buf[i];
            }
        }
    }
}

inline void apply_paint(Array3& x, const CorruptionRecord& rec) {
    Rng noise(rec.paint_noise_seed);
    if (rec.paint_inner) {
        for (const auto& b : rec.blocks)
            for (int z = 0; z < b.extent.z; ++z)
                for (int y = 0; y < b.extent.y; ++y)
                    for (int xx = 0; xx < b.extent.x; ++xx)
                        x.at(b.origin.x + xx, b.origin.y + y, b.origin.z + z) =
                            static_cast<float>(noise.uniform());
    } else {
        std::vector<std::uint8_t> keep(x.size(), 0);
        for (const auto& b : rec.blocks)
            for (int z = 0; z < b.extent.z; ++z)
                for (int y = 0; y < b.extent.y; ++y)
                    for (int xx = 0; xx < b.extent.x; ++xx)
                        keep[x.index(b.origin.x + xx, b.origin.y + y, b.origin.z + z)] = 1;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!keep[i]) x[i] = static_cast<float>(noise.uniform());
    }
}

inline std::vector<PaintBlock> draw_blocks(const Vec3i& dims, const TransformConfig& cfg,
                                           Rng& rng) {
    auto extent_range = [&](int dim, int& lo, int& hi) {
        lo = std::max(1, static_cast<int>(dim * cfg.paint_extent_frac_lo));
        hi = std::max(lo, static_cast<int>(dim * cfg.paint_extent_frac_hi));
        if (hi > dim)
            throw ArgumentError("painting: block extent range exceeds input dims");
    };
    int lx, hx, ly, hy, lz, hz;
    extent_range(dims.x, lx, hx);
    extent_range(dims.y, ly, hy);
    extent_range(dims.z, lz, hz);
    const int k = static_cast<int>(
        rng.uniform_int(cfg.paint_block_count_min, cfg.paint_block_count_max));
    std::vector<PaintBlock> blocks;
    blocks.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        PaintBlock b;
        b.extent = {static_cast<int>(rng.uniform_int(lx, hx)),
                    static_cast<int>(rng.uniform_int(ly, hy)),
                    static_cast<int>(rng.uniform_int(lz, hz))};
        b.origin = {static_cast<int>(rng.uniform_int(0, dims.x - b.extent.x)),
                    static_cast<int>(rng.uniform_int(0, dims.y - b.extent.y)),
                    static_cast<int>(rng.uniform_int(0, dims.z - b.extent.z))};
        blocks.push_back(b);
    }
    return blocks;
}

} // namespace detail

/// Voxel-wise monotone (or flipped) cubic Bezier intensity map on [0,1].
inline std::pair<Array3, CorruptionRecord> nonlinear_intensity(const Array3& x, Rng& rng) {
    detail::check_unit_range(x, "nonlinear_intensity");
    CorruptionRecord rec;
    rec.applied.push_back("nonlinear");
    rec.curve_flipped = rng.uniform() < 0.5;
    rec.p1x = rng.uniform();
    rec.p1y = rng.uniform();
    rec.p2x = rng.uniform();
    rec.p2y = rng.uniform();
    Array3 out = x;
    detail::apply_nonlinear(out, rec);
    return {std::move(out), std::move(rec)};
}

/// Permute voxels uniformly inside each tile of the shuffle window grid;
/// boundary-clipped tiles are shuffled within their clipped extent.
inline std::pair<Array3, CorruptionRecord> local_shuffle(const Array3& x,
                                                         const TransformConfig& cfg,
                                                         Rng& rng) {
    const Vec3i w = cfg.shuffle_window;
    if (w.x < 1 || w.y < 1 || w.z < 1 || w.x > x.nx() || w.y > x.ny() || w.z > x.nz())
        throw ArgumentError("local_shuffle: window " + to_string(w) +
                            " invalid for input " + to_string(x.dims()));
    CorruptionRecord rec;
    rec.applied.push_back("shuffle");
    rec.window_grid = w;
    rec.shuffle_seed = rng.next_u64();
    Array3 out = x;
    detail::apply_shuffle(out, rec);
    return {std::move(out), std::move(rec)};
}

/// Replace the inside of k random blocks with uniform [0,1] noise.
inline std::pair<Array3, CorruptionRecord> inner_painting(const Array3& x,
                                                          const TransformConfig& cfg,
                                                          Rng& rng) {
    CorruptionRecord rec;
    rec.applied.push_back("inner_paint");
    rec.paint_inner = true;
    rec.blocks = detail::draw_blocks(x.dims(), cfg, rng);
    rec.paint_noise_seed = rng.next_u64();
    Array3 out = x;
    detail::apply_paint(out, rec);
    return {std::move(out), std::move(rec)};
}

/// Dual of inner_painting: keep the blocks, replace everything outside.
inline std::pair<Array3, CorruptionRecord> outer_painting(const Array3& x,
                                                          const TransformConfig& cfg,
                                                          Rng& rng) {
    CorruptionRecord rec;
    rec.applied.push_back("outer_paint");
    rec.paint_inner = false;
    rec.blocks = detail::draw_blocks(x.dims(), cfg, rng);
    rec.paint_noise_seed = rng.next_u64();
    Array3 out = x;
    detail::apply_paint(out, rec);
    return {std::move(out), std::move(rec)};
}

/// Randomized composition: nonlinear, then local shuffle, then one of
/// inner/outer painting, each gated by its probability.
inline std::pair<Array3, CorruptionRecord> corrupt(const Array3& x,
                                                   const TransformConfig& cfg, Rng& rng) {
    cfg.validate();
    Array3 out = x;
    CorruptionRecord rec;
    if (rng.uniform() < cfg.p_nonlinear) {
        detail::check_unit_range(out, "corrupt");
        rec.applied.push_back("nonlinear");
        rec.curve_flipped = rng.uniform() < 0.5;
        rec.p1x = rng.uniform();
        rec.p1y = rng.uniform();
        rec.p2x = rng.uniform();
        rec.p2y = rng.uniform();
        detail::apply_nonlinear(out, rec);
    }
    if (rng.uniform() < cfg.p_shuffle) {
        const Vec3i w = cfg.shuffle_window;
        if (w.x < 1 || w.y < 1 || w.z < 1 || w.x > out.nx() || w.y > out.ny() ||
            w.z > out.nz())
            throw ArgumentError("corrupt: shuffle window " + to_string(w) +
                                " invalid for input " + to_string(out.dims()));
        rec.applied.push_back("shuffle");
        rec.window_grid = cfg.shuffle_window;
        rec.shuffle_seed = rng.next_u64();
        detail::apply_shuffle(out, rec);
    }
    if (rng.uniform() < cfg.p_paint) {
        rec.paint_inner = rng.uniform() < cfg.p_inner_given_paint;
        rec.applied.push_back(rec.paint_inner ? "inner_paint" : "outer_paint");
        rec.blocks = detail::draw_blocks(out.dims(), cfg, rng);
        rec.paint_noise_seed = rng.next_u64();
        detail::apply_paint(out, rec);
    }
    return {std::move(out), std::move(rec)};
}

/// Re-apply a recorded corruption to the original input; bit-exact.
inline Array3 replay(const CorruptionRecord& rec, const Array3& x) {
    Array3 out = x;
    for (const auto& id : rec.applied) {
        if (id == "nonlinear")
            detail::apply_nonlinear(out, rec);
        else if (id == "shuffle")
            detail::apply_shuffle(out, rec);
        else if (id == "inner_paint" || id == "outer_paint")
            detail::apply_paint(out, rec);
        else
            throw ArgumentError("replay: unknown transform id '" + id + "'");
    }
    return out;
}

} // namespace sar
