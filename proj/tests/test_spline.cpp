#include <catch_amalgamated.hpp>

#include <cmath>

#include <sar/rng.hpp>
#include <sar/spline.hpp>

using namespace sar;

TEST_CASE("reflect_index mirrors with period 2n-2") {
    REQUIRE(reflect_index(0, 5) == 0);
    REQUIRE(reflect_index(4, 5) == 4);
    REQUIRE(reflect_index(-1, 5) == 1);
    REQUIRE(reflect_index(5, 5) == 3);
    REQUIRE(reflect_index(8, 5) == 0);
    REQUIRE(reflect_index(-4, 5) == 4);
    REQUIRE(reflect_index(0, 1) == 0);
    REQUIRE(reflect_index(7, 1) == 0);
}

TEST_CASE("interpolation reproduces grid values") {
    Rng rng(5);
    Array3 a(9, 7, 6);
    for (auto& v : a.data()) v = static_cast<float>(rng.uniform());
    BSpline3Field f(a);
    for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 9; ++x)
                REQUIRE(std::abs(f.sample(x, y, z) - a.at(x, y, z)) < 1e-5);
}

TEST_CASE("constant field is reproduced everywhere") {
    Array3 a(6, 6, 6, 3.25f);
    BSpline3Field f(a);
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const double x = rng.uniform(0.0, 5.0);
        const double y = rng.uniform(0.0, 5.0);
        const double z = rng.uniform(0.0, 5.0);
        REQUIRE(std::abs(f.sample(x, y, z) - 3.25) < 1e-9);
    }
}

TEST_CASE("linear ramp reproduced at interior points") {
    // Cubic B-splines reproduce polynomials of degree <= 3; mirror boundary
    // bends the ramp outside, so probe away from the faces.
    Array3 a(16, 14, 12);
    for (int z = 0; z < 12; ++z)
        for (int y = 0; y < 14; ++y)
            for (int x = 0; x < 16; ++x)
                a.at(x, y, z) = static_cast<float>(0.3 * x + 0.1 * y - 0.2 * z + 1.0);
    BSpline3Field f(a);
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        const double x = rng.uniform(3.0, 12.0);
        const double y = rng.uniform(3.0, 10.0);
        const double z = rng.uniform(3.0, 8.0);
        const double want = 0.3 * x + 0.1 * y - 0.2 * z + 1.0;
        REQUIRE(std::abs(f.sample(x, y, z) - want) < 1e-4);
    }
}

TEST_CASE("1D cubic polynomial reproduced by the prefilter in double") {
    // Exercise the prefilter directly on a cubic, interior points only.
    const int n = 32;
    std::vector<double> c(n);
    auto poly = [](double t) { return 0.01 * t * t * t - 0.2 * t * t + t + 3.0; };
    for (int i = 0; i < n; ++i) c[i] = poly(i);
    detail::bspline3_prefilter_line(c.data(), n, 1);
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const double t = rng.uniform(4.0, n - 5.0);
        const int it = static_cast<int>(std::floor(t));
        double w[4];
        bspline3_weights(t - it, w);
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += w[k] * c[reflect_index(it - 1 + k, n)];
        REQUIRE(std::abs(acc - poly(t)) < 1e-8);
    }
}
