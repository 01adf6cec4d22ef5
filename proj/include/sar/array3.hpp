#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sar/errors.hpp"

namespace sar {

struct Vec3i {
    int x = 0, y = 0, z = 0;

    bool operator==(const Vec3i&) const = default;
    int operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline std::string to_string(const Vec3i& v) {
    return std::to_string(v.x) + "x" + std::to_string(v.y) + "x" + std::to_string(v.z);
}

/// Dense 3D scalar grid, x-fastest storage order.
class Array3 {
public:
    Array3() = default;
    Array3(int nx, int ny, int nz, float fill = 0.0f)
        : nx_(nx), ny_(ny), nz_(nz),
          data_(static_cast<std::size_t>(nx) * ny * nz, fill) {
        if (nx < 1 || ny < 1 || nz < 1)
            throw ArgumentError("Array3: all dims must be >= 1");
    }
    explicit Array3(const Vec3i& d, float fill = 0.0f) : Array3(d.x, d.y, d.z, fill) {}

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int nz() const { return nz_; }
    Vec3i dims() const { return {nx_, ny_, nz_}; }
    std::size_t size() const { return data_.size(); }

    float& at(int x, int y, int z) { return data_[index(x, y, z)]; }
    float at(int x, int y, int z) const { return data_[index(x, y, z)]; }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(nx_) * (static_cast<std::size_t>(y) +
                                                static_cast<std::size_t>(ny_) * z);
    }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    bool same_shape(const Array3& o) const {
        return nx_ == o.nx_ && ny_ == o.ny_ && nz_ == o.nz_;
    }

    bool operator==(const Array3&) const = default;

private:
    int nx_ = 0, ny_ = 0, nz_ = 0;
    std::vector<float> data_;
};

} // namespace sar
