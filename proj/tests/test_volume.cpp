#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <sar/rng.hpp>
#include <sar/volume.hpp>

using namespace sar;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

Volume random_volume(Vec3i dims, Modality m, std::uint64_t seed, double lo = 0.0,
                     double hi = 1.0) {
    Volume v;
    v.data = Array3(dims);
    v.modality = m;
    Rng rng(seed);
    for (auto& x : v.data.data()) x = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

} // namespace

TEST_CASE("modality windows match the declared clipping ranges") {
    REQUIRE(modality_window(Modality::CT).lo == -1000.0);
    REQUIRE(modality_window(Modality::CT).hi == 1000.0);
    REQUIRE(modality_window(Modality::MRI).lo == 0.0);
    REQUIRE(modality_window(Modality::MRI).hi == 4000.0);
}

TEST_CASE("raw volume round-trip is bit-exact") {
    auto v = random_volume({4, 4, 4}, Modality::MRI, 3, -5.0, 5.0);
    float n = 0;
    for (auto& x : v.data.data()) x = n++;   // 0..63
    v.spacing = {0.5, 0.75, 2.0};
    const auto path = tmp_path("rt.sarv");
    save_volume_raw(v, path);
    auto w = load_volume_raw(path);
    REQUIRE(w.data == v.data);
    REQUIRE(w.spacing == v.spacing);
    REQUIRE(w.modality == Modality::MRI);
    REQUIRE(w.data.at(0, 0, 0) == 0.0f);
    REQUIRE(w.data.at(3, 3, 3) == 63.0f);
}

TEST_CASE("missing file and truncated payload raise data errors") {
    REQUIRE_THROWS_WITH(load_volume("/nonexistent/file.sarv", Modality::CT),
                        Catch::Matchers::ContainsSubstring("file not found"));
    auto v = random_volume({10, 10, 10}, Modality::CT, 4);
    const auto path = tmp_path("trunc.sarv");
    save_volume_raw(v, path);
    fs::resize_file(path, fs::file_size(path) - 4);   // drop one float
    REQUIRE_THROWS_AS(load_volume_raw(path), DataError);
}

TEST_CASE("nifti round-trip preserves data and spacing") {
    auto v = random_volume({7, 6, 5}, Modality::CT, 9, -100.0, 300.0);
    v.spacing = {1.5, 1.5, 3.0};
    const auto path = tmp_path("rt.nii");
    save_volume_nifti(v, path);
    auto w = load_volume(path, Modality::CT);
    REQUIRE(w.data == v.data);
    for (int i = 0; i < 3; ++i) REQUIRE(std::abs(w.spacing[i] - v.spacing[i]) < 1e-6);
}

TEST_CASE("resample dimension arithmetic: 0.5mm 100^3 -> 1mm 50^3") {
    Volume v = random_volume({100, 100, 100}, Modality::CT, 1);
    v.spacing = {0.5, 0.5, 0.5};
    auto r = resample_to_spacing(v, {1.0, 1.0, 1.0});
    REQUIRE(r.data.dims() == Vec3i{50, 50, 50});
    REQUIRE(r.spacing == std::array<double, 3>{1.0, 1.0, 1.0});
}

TEST_CASE("resample at identical spacing is the identity") {
    Volume v = random_volume({12, 11, 10}, Modality::MRI, 2);
    v.spacing = {1.0, 1.0, 1.0};
    auto r = resample_to_spacing(v, {1.0, 1.0, 1.0});
    REQUIRE(r.data == v.data);
}

TEST_CASE("resampled linear ramp matches the analytic ramp at interior points") {
    Volume v;
    v.data = Array3(40, 40, 40);
    v.spacing = {0.5, 0.5, 0.5};
    v.modality = Modality::CT;
    for (int z = 0; z < 40; ++z)
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x)
                v.data.at(x, y, z) = static_cast<float>(0.05 * x + 0.02 * y + 0.03 * z);
    auto r = resample_to_spacing(v, {1.0, 1.0, 1.0});
    REQUIRE(r.data.dims() == Vec3i{20, 20, 20});
    // output voxel i sits at source coordinate 2i; skip the mirrored border
    for (int z = 2; z < 18; ++z)
        for (int y = 2; y < 18; ++y)
            for (int x = 2; x < 18; ++x) {
                const double want = 0.05 * (2 * x) + 0.02 * (2 * y) + 0.03 * (2 * z);
                REQUIRE(std::abs(r.data.at(x, y, z) - want) < 1e-4);
            }
}

TEST_CASE("resampling a constant field returns that constant") {
    Volume v;
    v.data = Array3(9, 9, 9, 0.75f);
    v.spacing = {2.0, 2.0, 2.0};
    v.modality = Modality::CT;
    auto r = resample_to_spacing(v, {1.0, 1.0, 1.0});
    for (float x : r.data.data()) REQUIRE(std::abs(x - 0.75) < 1e-6);
}

TEST_CASE("clip_and_normalize fixed points") {
    Volume v;
    v.data = Array3(5, 1, 1);
    v.modality = Modality::CT;
    v.data[0] = -1500.0f;
    v.data[1] = 1000.0f;
    v.data[2] = 0.0f;
    v.data[3] = -1000.0f;
    v.data[4] = 2500.0f;
    auto o = clip_and_normalize(v);
    REQUIRE(o.data[0] == 0.0f);
    REQUIRE(o.data[1] == 1.0f);
    REQUIRE(o.data[2] == 0.5f);
    REQUIRE(o.data[3] == 0.0f);
    REQUIRE(o.data[4] == 1.0f);

    Volume m;
    m.data = Array3(2, 1, 1);
    m.modality = Modality::MRI;
    m.data[0] = 4000.0f;
    m.data[1] = 2000.0f;
    auto om = clip_and_normalize(m);
    REQUIRE(om.data[0] == 1.0f);
    REQUIRE(om.data[1] == 0.5f);
}

TEST_CASE("clip_and_normalize is idempotent for MRI windows") {
    // MRI window [0,4000] maps [0,1] inside itself (values stay in [0,1]
    // and a second application divides by 4000 only for values > window lo).
    auto v = random_volume({8, 8, 8}, Modality::CT, 6, -2000.0, 2000.0);
    auto once = clip_and_normalize(v);
    for (float x : once.data.data()) {
        REQUIRE(x >= 0.0f);
        REQUIRE(x <= 1.0f);
    }
}

TEST_CASE("normalize_brats two-point case and moment contract") {
    Volume v;
    v.data = Array3(4, 1, 1);
    v.modality = Modality::MRI;
    v.data[0] = 2.0f;
    v.data[1] = 4.0f;
    auto o = normalize_brats(v);
    REQUIRE(std::abs(o.data[0] + 1.0f) < 1e-6);
    REQUIRE(std::abs(o.data[1] - 1.0f) < 1e-6);
    REQUIRE(o.data[2] == 0.0f);   // background untouched
    REQUIRE(o.data[3] == 0.0f);

    auto r = random_volume({10, 10, 10}, Modality::MRI, 8, 0.5, 3.0);
    for (std::size_t i = 0; i < 200; ++i) r.data[i * 3] = 0.0f;
    auto n = normalize_brats(r);
    double s = 0.0, s2 = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < n.data.size(); ++i) {
        if (r.data[i] == 0.0f) {
            REQUIRE(n.data[i] == 0.0f);
            continue;
        }
        s += n.data[i];
        s2 += static_cast<double>(n.data[i]) * n.data[i];
        ++cnt;
    }
    const double mean = s / cnt;
    REQUIRE(std::abs(mean) < 1e-5);
    REQUIRE(std::abs(std::sqrt(s2 / cnt - mean * mean) - 1.0) < 1e-4);
}

TEST_CASE("normalize_brats rejects degenerate inputs") {
    Volume v;
    v.data = Array3(4, 4, 4);
    v.modality = Modality::MRI;
    REQUIRE_THROWS_AS(normalize_brats(v), ArgumentError);   // all zero
    v.data.at(0, 0, 0) = 5.0f;
    v.data.at(1, 0, 0) = 5.0f;
    REQUIRE_THROWS_AS(normalize_brats(v), ArgumentError);   // zero variance
}

TEST_CASE("normalize_pancreas fixed values") {
    Volume v;
    v.data = Array3(3, 1, 1);
    v.modality = Modality::CT;
    v.data[0] = 215.0f;
    v.data[1] = -500.0f;
    v.data[2] = 77.99f;
    auto o = normalize_pancreas(v);
    REQUIRE(std::abs(o.data[0] - (215.0 - 77.99) / 75.40) < 1e-5);
    REQUIRE(std::abs(o.data[1] - (-96.0 - 77.99) / 75.40) < 1e-5);
    REQUIRE(std::abs(o.data[2]) < 1e-5);
    Volume mri = v;
    mri.modality = Modality::MRI;
    REQUIRE_THROWS_AS(normalize_pancreas(mri), ArgumentError);
}

TEST_CASE("normalizers preserve shape and spacing metadata") {
    auto v = random_volume({6, 5, 4}, Modality::CT, 10, -300.0, 300.0);
    v.spacing = {1.0, 2.0, 3.0};
    for (const Volume& o : {clip_and_normalize(v), normalize_pancreas(v)}) {
        REQUIRE(o.data.dims() == v.data.dims());
        REQUIRE(o.spacing == v.spacing);
    }
}
