#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "sar/array3.hpp"
#include "sar/errors.hpp"
#include "sar/spline.hpp"

namespace sar {

enum class Modality : std::uint8_t { CT = 0, MRI = 1 };

inline const char* to_string(Modality m) { return m == Modality::CT ? "CT" : "MRI"; }

/// Intensity clipping window used before [0,1] normalization.
struct ModalityWindow {
    double lo;
    double hi;
};

inline ModalityWindow modality_window(Modality m) {
    return m == Modality::CT ? ModalityWindow{-1000.0, 1000.0}
                             : ModalityWindow{0.0, 4000.0};
}

/// A 3D scan: scalar field plus voxel spacing (mm), modality, and provenance.
struct Volume {
    Array3 data;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    Modality modality = Modality::CT;
    std::string source_id;
};

// ---------------------------------------------------------------------------
// Raw volume container ("SARV"): little-endian, bit-exact, dependency-free.
// Layout: magic "SARV", u32 version=1, u32 dx,dy,dz, f32 sx,sy,sz,
// u8 modality (0=CT, 1=MRI), then dx*dy*dz float32 values, x-fastest.
// ---------------------------------------------------------------------------

namespace rawio {

template <class T>
void write_le(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(std::istream& is, const std::string& field, const std::string& path) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("raw volume '" + path + "': truncated at field " + field);
    return v;
}

} // namespace rawio

inline void save_volume_raw(const Volume& vol, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write("SARV", 4);
    rawio::write_le<std::uint32_t>(os, 1);
    rawio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(vol.data.nx()));
    rawio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(vol.data.ny()));
    rawio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(vol.data.nz()));
    rawio::write_le<float>(os, static_cast<float>(vol.spacing[0]));
    rawio::write_le<float>(os, static_cast<float>(vol.spacing[1]));
    rawio::write_le<float>(os, static_cast<float>(vol.spacing[2]));
    rawio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(vol.modality));
    os.write(reinterpret_cast<const char*>(vol.data.data().data()),
             static_cast<std::streamsize>(vol.data.size() * sizeof(float)));
    if (!os) throw DataError("write failed: " + path);
}

inline Volume load_volume_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("file not found: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SARV", 4) != 0)
        throw DataError("raw volume '" + path + "': bad magic, expected SARV");
    const auto version = rawio::read_le<std::uint32_t>(is, "version", path);
    if (version != 1)
        throw DataError("raw volume '" + path + "': unsupported version " +
                        std::to_string(version));
    const auto dx = rawio::read_le<std::uint32_t>(is, "dx", path);
    const auto dy = rawio::read_le<std::uint32_t>(is, "dy", path);
    const auto dz = rawio::read_le<std::uint32_t>(is, "dz", path);
    if (dx < 1 || dy < 1 || dz < 1)
        throw DataError("raw volume '" + path + "': zero dimension in header");
    Volume vol;
    vol.spacing[0] = rawio::read_le<float>(is, "sx", path);
    vol.spacing[1] = rawio::read_le<float>(is, "sy", path);
    vol.spacing[2] = rawio::read_le<float>(is, "sz", path);
    const auto m = rawio::read_le<std::uint8_t>(is, "modality", path);
    if (m > 1)
        throw DataError("raw volume '" + path + "': bad modality byte " +
                        std::to_string(int(m)));
    vol.modality = static_cast<Modality>(m);
    vol.data = Array3(static_cast<int>(dx), static_cast<int>(dy), static_cast<int>(dz));
    is.read(reinterpret_cast<char*>(vol.data.data().data()),
            static_cast<std::streamsize>(vol.data.size() * sizeof(float)));
    if (static_cast<std::size_t>(is.gcount()) != vol.data.size() * sizeof(float))
        throw DataError("raw volume '" + path + "': payload holds " +
                        std::to_string(is.gcount() / sizeof(float)) +
                        " scalars, header declares " + std::to_string(vol.data.size()));
    // Trailing bytes indicate a header/payload mismatch as well.
    char extra;
    if (is.read(&extra, 1))
        throw DataError("raw volume '" + path + "': payload larger than header declares");
    vol.source_id = std::filesystem::path(path).stem().string();
    return vol;
}

// ---------------------------------------------------------------------------
// Minimal single-file NIfTI-1 (.nii) support: little-endian float32 only.
// ---------------------------------------------------------------------------

inline void save_volume_nifti(const Volume& vol, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    std::array<char, 352> hdr{};
    auto put32 = [&](int off, std::int32_t v) { std::memcpy(&hdr[off], &v, 4); };
    auto put16 = [&](int off, std::int16_t v) { std::memcpy(&hdr[off], &v, 2); };
    auto putf = [&](int off, float v) { std::memcpy(&hdr[off], &v, 4); };
    put32(0, 348);                       // sizeof_hdr
    put16(40, 3);                        // dim[0]
    put16(42, static_cast<std::int16_t>(vol.data.nx()));
    put16(44, static_cast<std::int16_t>(vol.data.ny()));
    put16(46, static_cast<std::int16_t>(vol.data.nz()));
    put16(48, 1);
    put16(50, 1);
    put16(52, 1);
    put16(54, 1);
    put16(70, 16);                       // datatype = NIFTI_TYPE_FLOAT32
    put16(72, 32);                       // bitpix
    putf(76, 1.0f);                      // pixdim[0]
    putf(80, static_cast<float>(vol.spacing[0]));
    putf(84, static_cast<float>(vol.spacing[1]));
    putf(88, static_cast<float>(vol.spacing[2]));
    putf(108, 352.0f);                   // vox_offset
    putf(112, 1.0f);                     // scl_slope
    std::memcpy(&hdr[344], "n+1\0", 4);  // magic
    os.write(hdr.data(), hdr.size());
    os.write(reinterpret_cast<const char*>(vol.data.data().data()),
             static_cast<std::streamsize>(vol.data.size() * sizeof(float)));
    if (!os) throw DataError("write failed: " + path);
}

inline Volume load_volume_nifti(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("file not found: " + path);
    std::array<char, 352> hdr{};
    is.read(hdr.data(), hdr.size());
    if (!is) throw DataError("nifti '" + path + "': truncated header");
    auto get32 = [&](int off) { std::int32_t v; std::memcpy(&v, &hdr[off], 4); return v; };
    auto get16 = [&](int off) { std::int16_t v; std::memcpy(&v, &hdr[off], 2); return v; };
    auto getf = [&](int off) { float v; std::memcpy(&v, &hdr[off], 4); return v; };
    if (get32(0) != 348)
        throw DataError("nifti '" + path + "': sizeof_hdr is " +
                        std::to_string(get32(0)) + ", expected 348 (big-endian or not NIfTI-1)");
    if (std::memcmp(&hdr[344], "n+1", 3) != 0 && std::memcmp(&hdr[344], "ni1", 3) != 0)
        throw DataError("nifti '" + path + "': bad magic field");
    if (get16(70) != 16)
        throw DataError("nifti '" + path + "': datatype " + std::to_string(get16(70)) +
                        " unsupported, only float32 (16)");
    const int ndim = get16(40);
    if (ndim < 3)
        throw DataError("nifti '" + path + "': dim[0]=" + std::to_string(ndim) +
                        ", need a 3D volume");
    for (int d = 4; d <= ndim; ++d)
        if (get16(40 + 2 * d) > 1)
            throw DataError("nifti '" + path + "': dim[" + std::to_string(d) +
                            "]>1, 4D volumes unsupported");
    Volume vol;
    vol.data = Array3(get16(42), get16(44), get16(46));
    vol.spacing = {getf(80), getf(84), getf(88)};
    const auto off = static_cast<std::streamoff>(getf(108));
    is.seekg(off, std::ios::beg);
    is.read(reinterpret_cast<char*>(vol.data.data().data()),
            static_cast<std::streamsize>(vol.data.size() * sizeof(float)));
    if (static_cast<std::size_t>(is.gcount()) != vol.data.size() * sizeof(float))
        throw DataError("nifti '" + path + "': payload smaller than dim field declares");
    const float slope = getf(112), inter = getf(116);
    if (slope != 0.0f && (slope != 1.0f || inter != 0.0f))
        for (auto& v : vol.data.data()) v = slope * v + inter;
    vol.source_id = std::filesystem::path(path).stem().string();
    return vol;
}

/// Load a volume by extension (.sarv/.raw or .nii), tagging it with the given
/// modality. A spacing override replaces whatever the file header declares.
inline Volume load_volume(const std::string& path, Modality modality,
                          std::optional<std::array<double, 3>> spacing = std::nullopt) {
    if (!std::filesystem::exists(path)) throw DataError("file not found: " + path);
    const auto ext = std::filesystem::path(path).extension().string();
    Volume vol;
    if (ext == ".nii")
        vol = load_volume_nifti(path);
    else if (ext == ".sarv" || ext == ".raw")
        vol = load_volume_raw(path);
    else
        throw DataError("unsupported volume format '" + ext + "' for " + path);
    vol.modality = modality;
    if (spacing) vol.spacing = *spacing;
    for (double s : vol.spacing)
        if (!(s > 0.0)) throw DataError("volume '" + path + "': non-positive spacing");
    return vol;
}

// ---------------------------------------------------------------------------
// Resampling and intensity normalization.
// ---------------------------------------------------------------------------

/// Resample onto an isotropic/anisotropic target spacing with cubic
/// B-spline interpolation, mirror boundary. Output dims are
/// round-half-up(dim * spacing / target), minimum 1.
inline Volume resample_to_spacing(const Volume& vol,
                                  std::array<double, 3> target = {1.0, 1.0, 1.0}) {
    for (double t : target)
        if (!(t > 0.0)) throw ArgumentError("resample_to_spacing: target spacing must be > 0");

    const Vec3i in = vol.data.dims();
    auto out_dim = [&](int d, int axis) {
        const long long n = static_cast<long long>(
            std::floor(d * vol.spacing[axis] / target[axis] + 0.5));
        return static_cast<int>(std::max(1LL, n));
    };
    const Vec3i out{out_dim(in.x, 0), out_dim(in.y, 1), out_dim(in.z, 2)};

    Volume res;
    res.spacing = target;
    res.modality = vol.modality;
    res.source_id = vol.source_id;

    if (out == in && vol.spacing == target) {
        res.data = vol.data;   // exact identity, no interpolation round-off
        return res;
    }

    BSpline3Field field(vol.data);
    res.data = Array3(out);
    const double rx = target[0] / vol.spacing[0];
    const double ry = target[1] / vol.spacing[1];
    const double rz = target[2] / vol.spacing[2];
    for (int z = 0; z < out.z; ++z)
        for (int y = 0; y < out.y; ++y)
            for (int x = 0; x < out.x; ++x)
                res.data.at(x, y, z) =
                    static_cast<float>(field.sample(x * rx, y * ry, z * rz));
    return res;
}

/// Clip to the modality window, then map affinely onto [0,1].
inline Volume clip_and_normalize(const Volume& vol) {
    const ModalityWindow w = modality_window(vol.modality);
    Volume out = vol;
    const double scale = 1.0 / (w.hi - w.lo);
    for (auto& v : out.data.data()) {
        double u = std::clamp(static_cast<double>(v), w.lo, w.hi);
        v = static_cast<float>((u - w.lo) * scale);
    }
    return out;
}

/// Z-score over the non-zero region; originally-zero voxels stay zero.
inline Volume normalize_brats(const Volume& vol) {
    double sum = 0.0, sum2 = 0.0;
    std::size_t n = 0;
    for (float v : vol.data.data()) {
        if (v != 0.0f) {
            sum += v;
            sum2 += static_cast<double>(v) * v;
            ++n;
        }
    }
    if (n < 2) throw ArgumentError("normalize_brats: fewer than 2 non-zero voxels");
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    if (var <= 0.0) throw ArgumentError("normalize_brats: zero variance over non-zero area");
    const double inv_std = 1.0 / std::sqrt(var);
    Volume out = vol;
    for (auto& v : out.data.data())
        if (v != 0.0f) v = static_cast<float>((v - mean) * inv_std);
    return out;
}

/// Pancreas-task CT recipe: clip HU to [-96, 215], subtract 77.99, divide by 75.40.
inline Volume normalize_pancreas(const Volume& vol) {
    if (vol.modality != Modality::CT)
        throw ArgumentError("normalize_pancreas: requires a CT volume");
    Volume out = vol;
    for (auto& v : out.data.data()) {
        const double u = std::clamp(static_cast<double>(v), -96.0, 215.0);
        v = static_cast<float>((u - 77.99) / 75.40);
    }
    return out;
}

} // namespace sar
