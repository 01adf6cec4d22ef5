#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sar/model.hpp"

namespace sar {

/// Versioned container of named parameter arrays + arch descriptor + run
/// metadata. Arrays are stored float32 little-endian; round-trips bit-exactly.
struct Checkpoint {
    Arch arch;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::map<std::string, std::vector<float>> arrays;
};

namespace ckpt_detail {

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw CheckpointError("checkpoint '" + path + "': truncated");
    return v;
}

} // namespace ckpt_detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    using namespace ckpt_detail;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open for writing: " + path);
    os.write("SARC", 4);
    put<std::uint32_t>(os, 1);
    put<std::int32_t>(os, ck.arch.depth);
    put<std::int32_t>(os, ck.arch.base_channels);
    put<std::int32_t>(os, ck.arch.n_classes);
    put<std::int32_t>(os, ck.arch.sa_hidden);
    put<std::int32_t>(os, ck.arch.mial_channels);
    put<std::int32_t>(os, ck.arch.mial_hidden);
    put<std::int32_t>(os, ck.arch.input_dims.x);
    put<std::int32_t>(os, ck.arch.input_dims.y);
    put<std::int32_t>(os, ck.arch.input_dims.z);
    put<std::uint64_t>(os, ck.seed);
    put<std::uint64_t>(os, ck.step);
    put<std::uint64_t>(os, ck.arrays.size());
    for (const auto& [name, data] : ck.arrays) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint64_t>(os, data.size());
        os.write(reinterpret_cast<const char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(float)));
    }
    if (!os) throw CheckpointError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    using namespace ckpt_detail;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SARC")
        throw CheckpointError("checkpoint '" + path + "': bad magic");
    const auto version = get<std::uint32_t>(is, path);
    if (version != 1)
        throw CheckpointError("checkpoint '" + path + "': unsupported version " +
                              std::to_string(version));
    Checkpoint ck;
    ck.arch.depth = get<std::int32_t>(is, path);
    ck.arch.base_channels = get<std::int32_t>(is, path);
    ck.arch.n_classes = get<std::int32_t>(is, path);
    ck.arch.sa_hidden = get<std::int32_t>(is, path);
    ck.arch.mial_channels = get<std::int32_t>(is, path);
    ck.arch.mial_hidden = get<std::int32_t>(is, path);
    ck.arch.input_dims.x = get<std::int32_t>(is, path);
    ck.arch.input_dims.y = get<std::int32_t>(is, path);
    ck.arch.input_dims.z = get<std::int32_t>(is, path);
    ck.seed = get<std::uint64_t>(is, path);
    ck.step = get<std::uint64_t>(is, path);
    const auto count = get<std::uint64_t>(is, path);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = get<std::uint32_t>(is, path);
        std::string name(len, '\0');
        is.read(name.data(), len);
        const auto numel = get<std::uint64_t>(is, path);
        std::vector<float> data(numel);
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!is) throw CheckpointError("checkpoint '" + path + "': truncated array " + name);
        ck.arrays.emplace(std::move(name), std::move(data));
    }
    return ck;
}

// ---------------------------------------------------------------------------
// Model <-> checkpoint glue.
// ---------------------------------------------------------------------------

namespace ckpt_detail {

template <class T>
void store_params(const std::vector<Param<T>*>& ps,
                  std::map<std::string, std::vector<float>>& out) {
    for (const auto* p : ps) {
        std::vector<float> a(p->w.size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<float>(p->w[i]);
        out[p->name] = std::move(a);
    }
}

template <class T>
void load_params(const std::vector<Param<T>*>& ps,
                 const std::map<std::string, std::vector<float>>& in,
                 const char* what) {
    for (auto* p : ps) {
        auto it = in.find(p->name);
        if (it == in.end())
            throw CheckpointError(std::string(what) + ": missing array '" + p->name + "'");
        if (it->second.size() != p->w.size())
            throw CheckpointError(std::string(what) + ": size mismatch for '" + p->name +
                                  "'");
        for (std::size_t i = 0; i < p->w.size(); ++i)
            p->w[i] = static_cast<T>(it->second[i]);
    }
}

template <class T>
void store_bn_stats(UNet<T>& unet, std::map<std::string, std::vector<float>>& out) {
    unet.visit_batchnorms([&](BatchNorm3d<T>& bn) {
        const std::string base = bn.gamma.name.substr(0, bn.gamma.name.size() - 6);
        std::vector<float> rm(bn.running_mean.size()), rv(bn.running_var.size());
        for (std::size_t i = 0; i < rm.size(); ++i) {
            rm[i] = static_cast<float>(bn.running_mean[i]);
            rv[i] = static_cast<float>(bn.running_var[i]);
        }
        out[base + ".running_mean"] = std::move(rm);
        out[base + ".running_var"] = std::move(rv);
    });
}

template <class T>
void load_bn_stats(UNet<T>& unet, const std::map<std::string, std::vector<float>>& in,
                   const char* what) {
    unet.visit_batchnorms([&](BatchNorm3d<T>& bn) {
        const std::string base = bn.gamma.name.substr(0, bn.gamma.name.size() - 6);
        for (const char* suffix : {".running_mean", ".running_var"}) {
            auto it = in.find(base + suffix);
            if (it == in.end())
                throw CheckpointError(std::string(what) + ": missing array '" + base +
                                      suffix + "'");
            auto& dst = suffix[9] == 'm' ? bn.running_mean : bn.running_var;
            if (it->second.size() != dst.size())
                throw CheckpointError(std::string(what) + ": size mismatch for '" + base +
                                      suffix + "'");
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] = static_cast<T>(it->second[i]);
        }
    });
}

} // namespace ckpt_detail

template <class T>
Checkpoint make_checkpoint(PretrainModel<T>& m, std::uint64_t seed, std::uint64_t step) {
    Checkpoint ck;
    ck.arch = m.arch;
    ck.seed = seed;
    ck.step = step;
    ckpt_detail::store_params<T>(m.all_params(), ck.arrays);
    ckpt_detail::store_bn_stats(m.unet, ck.arrays);
    return ck;
}

template <class T>
PretrainModel<T> pretrain_from_checkpoint(const Checkpoint& ck) {
    PretrainModel<T> m = PretrainModel<T>::init(ck.arch, ck.seed);
    ckpt_detail::load_params<T>(m.all_params(), ck.arrays, "pretrain checkpoint");
    ckpt_detail::load_bn_stats(m.unet, ck.arrays, "pretrain checkpoint");
    return m;
}

template <class T>
Checkpoint make_checkpoint(SegModel<T>& m, std::uint64_t seed, std::uint64_t step) {
    Checkpoint ck;
    ck.arch = m.arch;
    ck.seed = seed;
    ck.step = step;
    auto ps = m.trainable_params();
    for (auto* p : m.unet.recon.params()) ps.push_back(p);
    ckpt_detail::store_params<T>(ps, ck.arrays);
    ckpt_detail::store_bn_stats(m.unet, ck.arrays);
    return ck;
}

template <class T>
SegModel<T> seg_from_checkpoint(const Checkpoint& ck) {
    SegModel<T> m = SegModel<T>::init(ck.arch, ck.seed);
    auto ps = m.trainable_params();
    for (auto* p : m.unet.recon.params()) ps.push_back(p);
    ckpt_detail::load_params<T>(ps, ck.arrays, "finetune checkpoint");
    ckpt_detail::load_bn_stats(m.unet, ck.arrays, "finetune checkpoint");
    return m;
}

/// Fine-tune initialization: E and D transferred from a pre-train checkpoint,
/// fresh segmentation scoring layer.
template <class T>
SegModel<T> seg_init_from_pretrain(const Checkpoint& ck, int n_classes,
                                   std::uint64_t seed) {
    Arch arch = ck.arch;
    arch.n_classes = n_classes;
    SegModel<T> m = SegModel<T>::init(arch, seed);
    auto enc = m.unet.encoder_params();
    auto dec = m.unet.decoder_params(/*include_recon=*/true);
    ckpt_detail::load_params<T>(enc, ck.arrays, "pretrain checkpoint (encoder group)");
    ckpt_detail::load_params<T>(dec, ck.arrays, "pretrain checkpoint (decoder group)");
    ckpt_detail::load_bn_stats(m.unet, ck.arrays, "pretrain checkpoint");
    return m;
}

} // namespace sar
