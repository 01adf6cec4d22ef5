#pragma once

#include <cstddef>
#include <vector>

#include "sar/array3.hpp"

namespace sar {

/// Batched feature map, layout [n][c][z][y][x], x fastest.
template <class T>
struct Tensor {
    int n = 0, c = 0, z = 0, y = 0, x = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int z_, int y_, int x_, T fill = T(0))
        : n(n_), c(c_), z(z_), y(y_), x(x_),
          v(static_cast<std::size_t>(n_) * c_ * z_ * y_ * x_, fill) {}

    std::size_t size() const { return v.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(z) * y * x; }

    std::size_t index(int in, int ic, int iz, int iy, int ix) const {
        return (((static_cast<std::size_t>(in) * c + ic) * z + iz) * y + iy) *
                   static_cast<std::size_t>(x) +
               ix;
    }
    T& at(int in, int ic, int iz, int iy, int ix) { return v[index(in, ic, iz, iy, ix)]; }
    T at(int in, int ic, int iz, int iy, int ix) const {
        return v[index(in, ic, iz, iy, ix)];
    }

    T* channel(int in, int ic) { return v.data() + (static_cast<std::size_t>(in) * c + ic) * plane(); }
    const T* channel(int in, int ic) const {
        return v.data() + (static_cast<std::size_t>(in) * c + ic) * plane();
    }

    Vec3i spatial() const { return {x, y, z}; }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && z == o.z && y == o.y && x == o.x;
    }

    void fill(T value) { std::fill(v.begin(), v.end(), value); }
};

/// Copy a single-channel 3D array into sample `in`, channel `ic`.
template <class T>
void copy_into(Tensor<T>& t, int in, int ic, const Array3& a) {
    if (t.x != a.nx() || t.y != a.ny() || t.z != a.nz())
        throw ShapeError("copy_into: tensor spatial " + to_string(t.spatial()) +
                         " vs array " + to_string(a.dims()));
    T* dst = t.channel(in, ic);
    for (std::size_t i = 0; i < a.size(); ++i) dst[i] = static_cast<T>(a[i]);
}

template <class T>
Array3 to_array3(const Tensor<T>& t, int in, int ic) {
    Array3 a(t.x, t.y, t.z);
    const T* src = t.channel(in, ic);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<float>(src[i]);
    return a;
}

} // namespace sar
