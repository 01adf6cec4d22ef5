#include <catch_amalgamated.hpp>

#include <sar/array3.hpp>

using namespace sar;

TEST_CASE("index layout is x-fastest") {
    Array3 a({4, 3, 2});
    REQUIRE(a.size() == 24);
    REQUIRE(a.index(0, 0, 0) == 0);
    REQUIRE(a.index(1, 0, 0) == 1);
    REQUIRE(a.index(0, 1, 0) == 4);
    REQUIRE(a.index(0, 0, 1) == 12);
    REQUIRE(a.index(3, 2, 1) == 23);
}

TEST_CASE("at reads back what was written") {
    Array3 a({4, 4, 4});
    float v = 0;
    for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) a.at(x, y, z) = v++;
    REQUIRE(a.at(0, 0, 0) == 0.0f);
    REQUIRE(a.at(3, 3, 3) == 63.0f);
    REQUIRE(a.at(1, 2, 3) == 57.0f);
}

TEST_CASE("equality and shape helpers") {
    Array3 a({2, 2, 2}), b({2, 2, 2}), c({2, 2, 3});
    REQUIRE(a == b);
    REQUIRE(a.same_shape(b));
    REQUIRE(!a.same_shape(c));
    b.at(1, 1, 1) = 1.0f;
    REQUIRE(!(a == b));
}

TEST_CASE("Vec3i formatting and comparison") {
    Vec3i v{64, 64, 32};
    REQUIRE(to_string(v) == "64x64x32");
    REQUIRE(v == Vec3i{64, 64, 32});
    REQUIRE(!(v == Vec3i{64, 64, 33}));
}
