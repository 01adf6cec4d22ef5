#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sar/rng.hpp"
#include "sar/volume.hpp"

namespace sar {

/// Synthetic two-modality corpus settings. Modalities differ in first- and
/// second-order intensity statistics; blob diameters span the configured
/// fraction range of the side length.
struct SynthSpec {
    int n_ct = 4;
    int n_mri = 4;
    Vec3i dims{96, 96, 64};
    double tumor_frac_lo = 0.125;
    double tumor_frac_hi = 0.5;
    double ct_mean = 0.3, ct_std = 0.1;
    double mri_mean = 0.6, mri_std = 0.15;
    int smooth_radius = 2;
    double blob_contrast = 0.18;
    double blob_noise_std = 0.06;
    int n_classes = 2;   // 2 = background/tumor, 3 = adds an organ shell
    std::uint64_t seed = 0;

    void validate() const {
        if (dims.x < 32 || dims.y < 32 || dims.z < 32)
            throw ArgumentError("SynthSpec: dims must be >= 32 per axis, got " +
                                to_string(dims));
        if (tumor_frac_lo <= 0.0 || tumor_frac_hi < tumor_frac_lo || tumor_frac_hi > 1.0)
            throw ArgumentError("SynthSpec: bad tumor fraction range");
        if (n_classes != 2 && n_classes != 3)
            throw ArgumentError("SynthSpec: n_classes must be 2 or 3");
        if (smooth_radius < 0) throw ArgumentError("SynthSpec: negative smooth radius");
    }
};

struct Blob {
    double cx, cy, cz;
    double rx, ry, rz;

    bool contains(int x, int y, int z) const {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry, dz = (z - cz) / rz;
        return dx * dx + dy * dy + dz * dz <= 1.0;
    }
    bool contains_scaled(int x, int y, int z, double s) const {
        const double dx = (x - cx) / (rx * s), dy = (y - cy) / (ry * s),
                     dz = (z - cz) / (rz * s);
        return dx * dx + dy * dy + dz * dz <= 1.0;
    }
};

struct LabeledCase {
    Volume vol;
    std::vector<std::uint8_t> labels;   // x-fastest, same dims as vol
    std::vector<Blob> blobs;
};

namespace synth_detail {

/// Separable box blur with edge clamping.
inline void box_smooth(Array3& a, int radius) {
    if (radius < 1) return;
    const Vec3i d = a.dims();
    Array3 tmp(d);
    auto pass = [&](const Array3& src, Array3& dst, int axis) {
        const int n = axis == 0 ? d.x : axis == 1 ? d.y : d.z;
        for (int z = 0; z < d.z; ++z)
            for (int y = 0; y < d.y; ++y)
                for (int x = 0; x < d.x; ++x) {
                    double s = 0.0;
                    for (int k = -radius; k <= radius; ++k) {
                        int xx = x, yy = y, zz = z;
                        int& c = axis == 0 ? xx : axis == 1 ? yy : zz;
                        c = std::clamp(c + k, 0, n - 1);
                        s += src.at(xx, yy, zz);
                    }
                    dst.at(x, y, z) = static_cast<float>(s / (2 * radius + 1));
                }
    };
    pass(a, tmp, 0);
    pass(tmp, a, 1);
    pass(a, tmp, 2);
    a = tmp;
}

/// Smoothed gaussian noise affinely mapped to (mean, std), clamped to [0,1].
inline Array3 textured_field(const Vec3i& dims, double mean, double stddev,
                             int smooth_radius, Rng& rng) {
    Array3 a(dims);
    for (auto& v : a.data()) v = static_cast<float>(rng.normal());
    box_smooth(a, smooth_radius);
    double s = 0.0, s2 = 0.0;
    for (float v : a.data()) {
        s += v;
        s2 += static_cast<double>(v) * v;
    }
    const double m = s / a.size();
    const double sd = std::sqrt(std::max(1e-12, s2 / a.size() - m * m));
    for (auto& v : a.data())
        v = static_cast<float>(
            std::clamp(mean + stddev * (v - m) / sd, 0.0, 1.0));
    return a;
}

} // namespace synth_detail

/// Seed-deterministic unlabeled corpus: n_ct CT-tagged + n_mri MRI-tagged
/// volumes with modality-distinct intensity statistics, values in [0,1].
inline std::vector<Volume> make_pretrain_corpus(const SynthSpec& spec) {
    spec.validate();
    std::vector<Volume> out;
    out.reserve(static_cast<std::size_t>(spec.n_ct + spec.n_mri));
    for (int i = 0; i < spec.n_ct + spec.n_mri; ++i) {
        const bool ct = i < spec.n_ct;
        Rng rng(derive_seed(spec.seed, 11, static_cast<std::uint64_t>(i)));
        Volume v;
        v.data = synth_detail::textured_field(spec.dims, ct ? spec.ct_mean : spec.mri_mean,
                                              ct ? spec.ct_std : spec.mri_std,
                                              spec.smooth_radius, rng);
        v.modality = ct ? Modality::CT : Modality::MRI;
        v.source_id = (ct ? "ct_" : "mri_") + std::to_string(ct ? i : i - spec.n_ct);
        out.push_back(std::move(v));
    }
    return out;
}

/// Labeled cases: 1-3 ellipsoidal blobs with distinct texture over a smooth
/// background; labels are the analytic ellipsoid membership. With
/// n_classes == 3 an organ shell (1.3x radii) gets class 1 and tumors class 2.
inline std::vector<LabeledCase> make_segmentation_corpus(const SynthSpec& spec,
                                                         int n_cases) {
    spec.validate();
    std::vector<LabeledCase> out;
    out.reserve(static_cast<std::size_t>(n_cases));
    const Vec3i d = spec.dims;
    const int tumor_class = spec.n_classes == 3 ? 2 : 1;
    for (int i = 0; i < n_cases; ++i) {
        Rng rng(derive_seed(spec.seed, 13, static_cast<std::uint64_t>(i)));
        LabeledCase lc;
        lc.vol.data = synth_detail::textured_field(d, spec.ct_mean, spec.ct_std,
                                                   spec.smooth_radius, rng);
        lc.vol.modality = Modality::CT;
        lc.vol.source_id = "case_" + std::to_string(i);
        lc.labels.assign(lc.vol.data.size(), 0);

        const int nb = static_cast<int>(rng.uniform_int(1, 3));
        for (int b = 0; b < nb; ++b) {
            Blob blob;
            auto radius = [&](int dim) {
                const double diam = rng.uniform(spec.tumor_frac_lo * dim,
                                                spec.tumor_frac_hi * dim);
                return diam / 2.0;
            };
            blob.rx = radius(d.x);
            blob.ry = radius(d.y);
            blob.rz = radius(d.z);
            if (2.0 * blob.rx > d.x || 2.0 * blob.ry > d.y || 2.0 * blob.rz > d.z)
                throw ArgumentError("make_segmentation_corpus: blob cannot fit");
            blob.cx = rng.uniform(blob.rx, d.x - 1 - blob.rx);
            blob.cy = rng.uniform(blob.ry, d.y - 1 - blob.ry);
            blob.cz = rng.uniform(blob.rz, d.z - 1 - blob.rz);
            lc.blobs.push_back(blob);
        }

        Rng tex(derive_seed(spec.seed, 14, static_cast<std::uint64_t>(i)));
        for (int z = 0; z < d.z; ++z)
            for (int y = 0; y < d.y; ++y)
                for (int x = 0; x < d.x; ++x) {
                    int label = 0;
                    for (const auto& blob : lc.blobs) {
                        if (blob.contains(x, y, z)) {
                            label = tumor_class;
                            break;
                        }
                        if (spec.n_classes == 3 && blob.contains_scaled(x, y, z, 1.3))
                            label = 1;
                    }
                    if (label != 0) {
                        const std::size_t idx = lc.vol.data.index(x, y, z);
                        const double bump =
                            label == tumor_class ? spec.blob_contrast : spec.blob_contrast * 0.5;
                        lc.vol.data[idx] = static_cast<float>(std::clamp(
                            lc.vol.data[idx] + bump + tex.normal(0.0, spec.blob_noise_std),
                            0.0, 1.0));
                        lc.labels[idx] = static_cast<std::uint8_t>(label);
                    }
                }
        out.push_back(std::move(lc));
    }
    return out;
}

// ---------------------------------------------------------------------------
// On-disk corpus: raw volumes plus a JSON-lines manifest.
// ---------------------------------------------------------------------------

inline void write_pretrain_corpus(const std::vector<Volume>& corpus,
                                  const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.jsonl");
    if (!manifest) throw DataError("cannot write manifest in " + dir);
    for (const auto& v : corpus) {
        const std::string file = v.source_id + ".sarv";
        save_volume_raw(v, dir + "/" + file);
        nlohmann::json j{{"case_id", v.source_id},
                         {"modality", to_string(v.modality)},
                         {"path", file}};
        manifest << j.dump() << "\n";
    }
}

inline void write_segmentation_corpus(const std::vector<LabeledCase>& corpus,
                                      const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.jsonl");
    if (!manifest) throw DataError("cannot write manifest in " + dir);
    for (const auto& lc : corpus) {
        const std::string file = lc.vol.source_id + ".sarv";
        const std::string lfile = lc.vol.source_id + "_labels.sarv";
        save_volume_raw(lc.vol, dir + "/" + file);
        Volume lab;
        lab.data = Array3(lc.vol.data.dims());
        for (std::size_t i = 0; i < lc.labels.size(); ++i)
            lab.data[i] = static_cast<float>(lc.labels[i]);
        lab.modality = lc.vol.modality;
        lab.source_id = lc.vol.source_id + "_labels";
        save_volume_raw(lab, dir + "/" + lfile);
        nlohmann::json blobs = nlohmann::json::array();
        for (const auto& b : lc.blobs)
            blobs.push_back({{"center", {b.cx, b.cy, b.cz}}, {"radii", {b.rx, b.ry, b.rz}}});
        nlohmann::json j{{"case_id", lc.vol.source_id},
                         {"modality", to_string(lc.vol.modality)},
                         {"path", file},
                         {"labels_path", lfile},
                         {"blobs", blobs}};
        manifest << j.dump() << "\n";
    }
}

inline std::vector<Volume> read_pretrain_corpus(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.jsonl");
    if (!manifest) throw DataError("manifest not found in " + dir);
    std::vector<Volume> out;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        const Modality m =
            j.at("modality").get<std::string>() == "CT" ? Modality::CT : Modality::MRI;
        out.push_back(load_volume(dir + "/" + j.at("path").get<std::string>(), m));
        out.back().source_id = j.at("case_id").get<std::string>();
    }
    return out;
}

inline std::vector<LabeledCase> read_segmentation_corpus(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.jsonl");
    if (!manifest) throw DataError("manifest not found in " + dir);
    std::vector<LabeledCase> out;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        LabeledCase lc;
        lc.vol = load_volume(dir + "/" + j.at("path").get<std::string>(), Modality::CT);
        lc.vol.source_id = j.at("case_id").get<std::string>();
        Volume lab =
            load_volume(dir + "/" + j.at("labels_path").get<std::string>(), Modality::CT);
        if (!(lab.data.dims() == lc.vol.data.dims()))
            throw DataError("label/volume shape mismatch for " + lc.vol.source_id);
        lc.labels.resize(lab.data.size());
        for (std::size_t i = 0; i < lc.labels.size(); ++i)
            lc.labels[i] = static_cast<std::uint8_t>(lab.data[i]);
        for (const auto& jb : j.value("blobs", nlohmann::json::array())) {
            Blob b{};
            b.cx = jb.at("center")[0];
            b.cy = jb.at("center")[1];
            b.cz = jb.at("center")[2];
            b.rx = jb.at("radii")[0];
            b.ry = jb.at("radii")[1];
            b.rz = jb.at("radii")[2];
            lc.blobs.push_back(b);
        }
        out.push_back(std::move(lc));
    }
    return out;
}

} // namespace sar
