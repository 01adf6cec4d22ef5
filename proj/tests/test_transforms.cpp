#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include <sar/transforms.hpp>

using namespace sar;

namespace {

Array3 random_unit(Vec3i dims, std::uint64_t seed) {
    Array3 a(dims);
    Rng rng(seed);
    for (auto& v : a.data()) v = static_cast<float>(rng.uniform());
    return a;
}

/// Evaluate the Bezier map at value v by bisecting for the curve parameter t
/// with x(t) = v, then returning y(t). Independent of the LUT implementation.
double bezier_oracle(bool flipped, double p1x, double p1y, double p2x, double p2y,
                     double v) {
    auto xy = [&](double t, double& x, double& y) {
        const double u = 1.0 - t;
        const double b0 = u * u * u, b1 = 3 * t * u * u, b2 = 3 * t * t * u,
                     b3 = t * t * t;
        x = b1 * p1x + b2 * p2x + b3;
        const double y0 = flipped ? 1.0 : 0.0, y3 = flipped ? 0.0 : 1.0;
        y = b0 * y0 + b1 * p1y + b2 * p2y + b3 * y3;
    };
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        double x, y;
        xy(mid, x, y);
        (x < v ? lo : hi) = mid;
    }
    double x, y;
    xy(0.5 * (lo + hi), x, y);
    return y;
}

} // namespace

TEST_CASE("identity Bezier control points leave the volume unchanged") {
    auto x = random_unit({16, 16, 8}, 1);
    CorruptionRecord rec;
    rec.applied.push_back("nonlinear");
    rec.curve_flipped = false;
    rec.p1x = rec.p1y = 1.0 / 3.0;
    rec.p2x = rec.p2y = 2.0 / 3.0;
    auto out = replay(rec, x);
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(std::abs(out[i] - x[i]) < 1e-7);
}

TEST_CASE("nonlinear map matches the bisection oracle and preserves range") {
    auto x = random_unit({12, 12, 6}, 2);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        auto [out, rec] = nonlinear_intensity(x, rng);
        for (std::size_t i = 0; i < out.size(); ++i) {
            REQUIRE(out[i] >= 0.0f);
            REQUIRE(out[i] <= 1.0f);
            const double want = bezier_oracle(rec.curve_flipped, rec.p1x, rec.p1y,
                                              rec.p2x, rec.p2y, x[i]);
            REQUIRE(std::abs(out[i] - want) < 1e-5);
        }
    }
}

TEST_CASE("constant input maps to a constant output") {
    Array3 c(8, 8, 8, 0.37f);
    Rng rng(3);
    auto [out, rec] = nonlinear_intensity(c, rng);
    for (std::size_t i = 1; i < out.size(); ++i) REQUIRE(out[i] == out[0]);
}

TEST_CASE("unflipped nonlinear map is monotone non-decreasing") {
    auto x = random_unit({10, 10, 10}, 4);
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        Rng rng(derive_seed(100, seed));
        auto [out, rec] = nonlinear_intensity(x, rng);
        if (rec.curve_flipped) continue;
        std::vector<std::size_t> order(x.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
        for (std::size_t i = 1; i < order.size(); ++i)
            REQUIRE(out[order[i]] >= out[order[i - 1]] - 1e-9f);
    }
}

TEST_CASE("input outside the unit range is rejected") {
    Array3 bad(4, 4, 4, 1.5f);
    Rng rng(5);
    REQUIRE_THROWS_AS(nonlinear_intensity(bad, rng), ArgumentError);
}

TEST_CASE("local_shuffle window 1x1x1 is the identity") {
    auto x = random_unit({8, 8, 8}, 6);
    TransformConfig cfg;
    cfg.shuffle_window = {1, 1, 1};
    Rng rng(7);
    auto [out, rec] = local_shuffle(x, cfg, rng);
    REQUIRE(out == x);
}

TEST_CASE("whole-volume shuffle preserves the global multiset exactly") {
    auto x = random_unit({6, 5, 4}, 8);
    TransformConfig cfg;
    cfg.shuffle_window = {6, 5, 4};
    Rng rng(9);
    auto [out, rec] = local_shuffle(x, cfg, rng);
    auto a = x.data(), b = out.data();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    REQUIRE(a == b);
}

TEST_CASE("per-window multisets are conserved under a 4x4x4 shuffle") {
    auto x = random_unit({10, 9, 7}, 10);   // forces clipped remainder windows
    TransformConfig cfg;
    Rng rng(11);
    auto [out, rec] = local_shuffle(x, cfg, rng);
    const Vec3i w = cfg.shuffle_window;
    for (int z0 = 0; z0 < x.nz(); z0 += w.z)
        for (int y0 = 0; y0 < x.ny(); y0 += w.y)
            for (int x0 = 0; x0 < x.nx(); x0 += w.x) {
                std::vector<float> a, b;
                for (int z = z0; z < std::min(z0 + w.z, x.nz()); ++z)
                    for (int y = y0; y < std::min(y0 + w.y, x.ny()); ++y)
                        for (int xx = x0; xx < std::min(x0 + w.x, x.nx()); ++xx) {
                            a.push_back(x.at(xx, y, z));
                            b.push_back(out.at(xx, y, z));
                        }
                std::sort(a.begin(), a.end());
                std::sort(b.begin(), b.end());
                REQUIRE(a == b);
            }
}

TEST_CASE("oversized shuffle window is rejected") {
    auto x = random_unit({4, 4, 4}, 12);
    TransformConfig cfg;
    cfg.shuffle_window = {8, 4, 4};
    Rng rng(13);
    REQUIRE_THROWS_AS(local_shuffle(x, cfg, rng), ArgumentError);
}

TEST_CASE("inner painting preserves the complement of the block union") {
    auto x = random_unit({24, 24, 16}, 14);
    TransformConfig cfg;
    Rng rng(15);
    auto [out, rec] = inner_painting(x, cfg, rng);
    std::vector<std::uint8_t> mask(x.size(), 0);
    for (const auto& b : rec.blocks)
        for (int z = 0; z < b.extent.z; ++z)
            for (int y = 0; y < b.extent.y; ++y)
                for (int xx = 0; xx < b.extent.x; ++xx)
                    mask[x.index(b.origin.x + xx, b.origin.y + y, b.origin.z + z)] = 1;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (mask[i]) {
            REQUIRE(out[i] >= 0.0f);
            REQUIRE(out[i] <= 1.0f);
        } else {
            REQUIRE(out[i] == x[i]);
        }
    }
    REQUIRE(!rec.blocks.empty());
}

TEST_CASE("outer painting preserves the inside of the kept blocks") {
    auto x = random_unit({24, 24, 16}, 16);
    TransformConfig cfg;
    Rng rng(17);
    auto [out, rec] = outer_painting(x, cfg, rng);
    std::vector<std::uint8_t> mask(x.size(), 0);
    for (const auto& b : rec.blocks)
        for (int z = 0; z < b.extent.z; ++z)
            for (int y = 0; y < b.extent.y; ++y)
                for (int xx = 0; xx < b.extent.x; ++xx)
                    mask[x.index(b.origin.x + xx, b.origin.y + y, b.origin.z + z)] = 1;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (mask[i]) {
            REQUIRE(out[i] == x[i]);
        } else {
            REQUIRE(out[i] >= 0.0f);
            REQUIRE(out[i] <= 1.0f);
        }
    }
}

TEST_CASE("full-cover kept block makes outer painting the identity") {
    auto x = random_unit({8, 8, 8}, 18);
    CorruptionRecord rec;
    rec.applied.push_back("outer_paint");
    rec.paint_inner = false;
    rec.blocks = {{{0, 0, 0}, {8, 8, 8}}};
    rec.paint_noise_seed = 99;
    REQUIRE(replay(rec, x) == x);
}

TEST_CASE("single-voxel kept block preserves exactly that voxel") {
    Array3 x(6, 6, 6, 0.5f);
    CorruptionRecord rec;
    rec.applied.push_back("outer_paint");
    rec.paint_inner = false;
    rec.blocks = {{{2, 3, 4}, {1, 1, 1}}};
    rec.paint_noise_seed = 7;
    auto out = replay(rec, x);
    REQUIRE(out.at(2, 3, 4) == 0.5f);
    int untouched = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        REQUIRE(out[i] >= 0.0f);
        REQUIRE(out[i] <= 1.0f);
        if (out[i] == 0.5f) ++untouched;
    }
    REQUIRE(untouched < 10);   // noise rarely hits 0.5 exactly
}

TEST_CASE("corrupt with zero probabilities is the identity with empty record") {
    auto x = random_unit(kSubVolumeDims, 19);
    TransformConfig cfg;
    cfg.p_nonlinear = cfg.p_shuffle = cfg.p_paint = 0.0;
    Rng rng(20);
    auto [out, rec] = corrupt(x, cfg, rng);
    REQUIRE(out == x);
    REQUIRE(rec.empty());
}

TEST_CASE("forced inner painting differs only inside recorded blocks") {
    auto x = random_unit(kSubVolumeDims, 21);
    TransformConfig cfg;
    cfg.p_nonlinear = cfg.p_shuffle = 0.0;
    cfg.p_paint = 1.0;
    cfg.p_inner_given_paint = 1.0;
    Rng rng(22);
    auto [out, rec] = corrupt(x, cfg, rng);
    REQUIRE(rec.applied == std::vector<std::string>{"inner_paint"});
    std::vector<std::uint8_t> mask(x.size(), 0);
    for (const auto& b : rec.blocks)
        for (int z = 0; z < b.extent.z; ++z)
            for (int y = 0; y < b.extent.y; ++y)
                for (int xx = 0; xx < b.extent.x; ++xx)
                    mask[x.index(b.origin.x + xx, b.origin.y + y, b.origin.z + z)] = 1;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!mask[i]) REQUIRE(out[i] == x[i]);
}

TEST_CASE("corrupt is deterministic and replay is bit-exact") {
    auto x = random_unit(kSubVolumeDims, 23);
    TransformConfig cfg;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        Rng a(seed), b(seed);
        auto [o1, r1] = corrupt(x, cfg, a);
        auto [o2, r2] = corrupt(x, cfg, b);
        REQUIRE(o1 == o2);
        REQUIRE(r1.applied == r2.applied);
        REQUIRE(replay(r1, x) == o1);
        REQUIRE(o1.dims() == x.dims());
        for (float v : o1.data()) {
            REQUIRE(v >= 0.0f);
            REQUIRE(v <= 1.0f);
        }
    }
}
