#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <sar/rng.hpp>

using namespace sar;

TEST_CASE("identical seeds give identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds give different streams") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i)
        if (a.next_u64() == b.next_u64()) ++same;
    REQUIRE(same == 0);
}

TEST_CASE("uniform lies in [0,1) with plausible mean") {
    Rng rng(7);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    REQUIRE(std::abs(sum / 100000 - 0.5) < 0.01);
}

TEST_CASE("uniform_int covers the inclusive range uniformly") {
    Rng rng(3);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        const auto v = rng.uniform_int(2, 8);
        REQUIRE(v >= 2);
        REQUIRE(v <= 8);
        ++counts[static_cast<std::size_t>(v - 2)];
    }
    // chi^2 with 6 dof; 22.46 is the 0.1% critical value
    double chi2 = 0.0;
    const double expect = n / 7.0;
    for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
    REQUIRE(chi2 < 22.46);
}

TEST_CASE("normal has unit mean and variance statistics") {
    Rng rng(11);
    double s = 0.0, s2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        s += v;
        s2 += v * v;
    }
    const double mean = s / n;
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(std::abs(s2 / n - mean * mean - 1.0) < 0.03);
}

TEST_CASE("shuffle is a permutation and seed-deterministic") {
    std::vector<int> v(100);
    for (int i = 0; i < 100; ++i) v[i] = i;
    auto w = v;
    Rng a(5), b(5);
    a.shuffle(v);
    std::vector<int> u = w;
    b.shuffle(u);
    REQUIRE(v == u);
    std::sort(u.begin(), u.end());
    REQUIRE(u == w);
}

TEST_CASE("derive_seed separates substreams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t a = 0; a < 10; ++a)
        for (std::uint64_t b = 0; b < 10; ++b)
            for (std::uint64_t c = 0; c < 10; ++c)
                seen.insert(derive_seed(123, a, b, c));
    REQUIRE(seen.size() == 1000);
    REQUIRE(derive_seed(1, 2, 3) != derive_seed(2, 1, 3));
}
