#include <catch_amalgamated.hpp>

#include <cmath>

#include <sar/sampler.hpp>

using namespace sar;

namespace {

Volume unit_volume(Vec3i dims, Modality m, std::uint64_t seed) {
    Volume v;
    v.data = Array3(dims);
    v.modality = m;
    v.source_id = "t";
    Rng rng(seed);
    for (auto& x : v.data.data()) x = static_cast<float>(rng.uniform());
    return v;
}

} // namespace

TEST_CASE("scale_label_of maps the three fractions and rejects others") {
    REQUIRE(scale_label_of(0.125) == ScaleLabel::SMALL);
    REQUIRE(scale_label_of(0.25) == ScaleLabel::MEDIUM);
    REQUIRE(scale_label_of(0.5) == ScaleLabel::LARGE);
    REQUIRE_THROWS_AS(scale_label_of(1.0 / 3.0), ArgumentError);
}

TEST_CASE("Table 1 sampling arithmetic") {
    SamplingPlan plan;   // 32/16/16
    REQUIRE(623 * plan.n_small == 19936);
    REQUIRE(623 * plan.n_medium == 9968);
    REQUIRE(623 * plan.n_large == 9968);
    REQUIRE(760 * plan.n_small == 24320);
    REQUIRE(760 * plan.n_medium == 12160);
    REQUIRE(760 * plan.n_large == 12160);
    REQUIRE(plan.n_small == plan.n_medium + plan.n_large);   // 2:1:1 ratio
}

TEST_CASE("generate_subvolumes honors the plan, shapes, and containment") {
    auto vol = unit_volume({96, 80, 64}, Modality::CT, 1);
    SamplingPlan plan{8, 4, 4, 0};
    Rng rng(9);
    auto subs = generate_subvolumes(vol, plan, rng);
    REQUIRE(subs.size() == 16);
    int counts[3] = {0, 0, 0};
    for (const auto& s : subs) {
        REQUIRE(s.data.dims() == kSubVolumeDims);
        ++counts[static_cast<int>(s.scale_label)];
        REQUIRE(s.crop_origin.x >= 0);
        REQUIRE(s.crop_origin.x + s.crop_extent.x <= 96);
        REQUIRE(s.crop_origin.y + s.crop_extent.y <= 80);
        REQUIRE(s.crop_origin.z + s.crop_extent.z <= 64);
        const double frac = scale_fraction(s.scale_label);
        REQUIRE(s.crop_extent.x == static_cast<int>(std::floor(96 * frac + 0.5)));
        REQUIRE(s.crop_extent.y == static_cast<int>(std::floor(80 * frac + 0.5)));
        REQUIRE(s.crop_extent.z == static_cast<int>(std::floor(64 * frac + 0.5)));
        REQUIRE(s.modality_label == Modality::CT);
    }
    REQUIRE(counts[0] == 8);
    REQUIRE(counts[1] == 4);
    REQUIRE(counts[2] == 4);
}

TEST_CASE("sampling is deterministic in (vol, plan, seed)") {
    auto vol = unit_volume({64, 64, 64}, Modality::MRI, 2);
    SamplingPlan plan{4, 2, 2, 0};
    Rng a(7), b(7);
    auto s1 = generate_subvolumes(vol, plan, a);
    auto s2 = generate_subvolumes(vol, plan, b);
    REQUIRE(s1.size() == s2.size());
    for (std::size_t i = 0; i < s1.size(); ++i) {
        REQUIRE(s1[i].data == s2[i].data);
        REQUIRE(s1[i].crop_origin == s2[i].crop_origin);
    }
}

TEST_CASE("too-small volume names the failing axis") {
    auto vol = unit_volume({64, 64, 16}, Modality::CT, 3);   // 1/8 of z=16 is 2 < 4
    SamplingPlan plan{1, 0, 0, 0};
    Rng rng(1);
    REQUIRE_THROWS_WITH(generate_subvolumes(vol, plan, rng),
                        Catch::Matchers::ContainsSubstring("axis z"));
}

TEST_CASE("resize_trilinear identity, constant, bounds, ramp") {
    Rng rng(4);
    Array3 same(kSubVolumeDims);
    for (auto& v : same.data()) v = static_cast<float>(rng.uniform());
    auto out = resize_trilinear(same);
    for (std::size_t i = 0; i < out.size(); ++i)
        REQUIRE(std::abs(out[i] - same[i]) < 1e-12);

    Array3 c(5, 6, 7, 0.4f);
    auto oc = resize_trilinear(c);
    for (float v : oc.data()) REQUIRE(std::abs(v - 0.4f) < 1e-6);

    Array3 r(12, 10, 8);
    float mn = 1e9f, mx = -1e9f;
    for (auto& v : r.data()) {
        v = static_cast<float>(rng.uniform());
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    auto orr = resize_trilinear(r);
    for (float v : orr.data()) {
        REQUIRE(v >= mn - 1e-6f);
        REQUIRE(v <= mx + 1e-6f);
    }

    Array3 ramp(9, 9, 9);
    for (int z = 0; z < 9; ++z)
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 9; ++x)
                ramp.at(x, y, z) = static_cast<float>(0.1 * x + 0.05 * y + 0.02 * z);
    auto orm = resize_trilinear(ramp, {17, 17, 17});
    for (int z = 0; z < 17; ++z)
        for (int y = 0; y < 17; ++y)
            for (int x = 0; x < 17; ++x) {
                const double want = 0.1 * (x * 0.5) + 0.05 * (y * 0.5) + 0.02 * (z * 0.5);
                REQUIRE(std::abs(orm.at(x, y, z) - want) < 1e-6);
            }

    Array3 degenerate(1, 5, 5);
    REQUIRE_THROWS_AS(resize_trilinear(degenerate), ArgumentError);
}

TEST_CASE("half the paper-ratio sub-volumes carry SMALL") {
    auto vol = unit_volume({96, 96, 64}, Modality::CT, 5);
    SamplingPlan plan;   // 32/16/16
    Rng rng(6);
    auto subs = generate_subvolumes(vol, plan, rng);
    int small = 0;
    for (const auto& s : subs)
        if (s.scale_label == ScaleLabel::SMALL) ++small;
    REQUIRE(small * 2 == static_cast<int>(subs.size()));
}
