#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sar/nn.hpp"

namespace sar {

/// Architecture descriptor. Channel count doubles per encoder stage.
struct Arch {
    int depth = 4;           // encoder stages (depth-1 downsamplings)
    int base_channels = 16;
    int n_classes = 1;       // segmentation classes (fine-tune); 1 = restoration head
    int sa_hidden = 64;
    int mial_channels = 32;
    int mial_hidden = 32;
    Vec3i input_dims{64, 64, 32};

    bool operator==(const Arch&) const = default;

    int channels(int level) const { return base_channels << level; }

    Vec3i level_dims(int level) const {
        return {input_dims.x >> level, input_dims.y >> level, input_dims.z >> level};
    }

    void validate() const {
        if (depth < 2) throw ArgumentError("Arch: depth must be >= 2");
        if (base_channels < 1) throw ArgumentError("Arch: base_channels must be >= 1");
        const int div = 1 << (depth - 1);
        if (input_dims.x % div || input_dims.y % div || input_dims.z % div ||
            input_dims.x / div < 1 || input_dims.y / div < 1 || input_dims.z / div < 1)
            throw ArgumentError("Arch: input dims " + to_string(input_dims) +
                                " not divisible by 2^" + std::to_string(depth - 1));
    }
};

/// conv(3x3x3) -> batch norm -> ReLU, with caches for backprop.
template <class T>
struct ConvBnRelu {
    Conv3d<T> conv;
    BatchNorm3d<T> bn;
    Tensor<T> x_in_, y_out_;

    void init(const std::string& name, int ci, int co, Rng& rng) {
        conv.init(name + ".conv", ci, co, 3, rng);
        bn.init(name + ".bn", co);
    }

    Tensor<T> forward(const Tensor<T>& x, Mode m, bool update_running = true) {
        auto y = relu(bn.forward(conv.forward(x), m, update_running));
        if (m == Mode::Train) {
            x_in_ = x;
            y_out_ = y;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        return conv.backward(x_in_, bn.backward(relu_backward(y_out_, gy)));
    }

    std::vector<Param<T>*> params() {
        return {&conv.w, &conv.b, &bn.gamma, &bn.beta};
    }
};

template <class T>
struct EncoderFeatures {
    std::vector<Tensor<T>> levels;   // coarsest last
    const Tensor<T>& bottleneck() const { return levels.back(); }
};

// ---------------------------------------------------------------------------
// 3D U-Net: encoder E, decoder D with skip concatenation, sigmoid recon head.
// ---------------------------------------------------------------------------

template <class T>
struct UNet {
    Arch arch;
    std::vector<ConvBnRelu<T>> enc_a, enc_b;
    std::vector<MaxPool2<T>> pools;
    std::vector<ConvBnRelu<T>> dec_a, dec_b;   // indexed by target level 0..depth-2
    Conv3d<T> recon;
    Tensor<T> recon_in_, recon_y_;

    void init(uint64_t seed, const Arch& a) {
        arch = a;
        arch.validate();
        Rng rng(derive_seed(seed, 1));
        enc_a.resize(arch.depth);
        enc_b.resize(arch.depth);
        pools.resize(arch.depth - 1);
        dec_a.resize(arch.depth - 1);
        dec_b.resize(arch.depth - 1);
        for (int s = 0; s < arch.depth; ++s) {
            const int ci = s == 0 ? 1 : arch.channels(s - 1);
            enc_a[s].init("E.stage" + std::to_string(s) + "a", ci, arch.channels(s), rng);
            enc_b[s].init("E.stage" + std::to_string(s) + "b", arch.channels(s),
                          arch.channels(s), rng);
        }
        for (int l = 0; l < arch.depth - 1; ++l) {
            const int ci = arch.channels(l + 1) + arch.channels(l);
            dec_a[l].init("D.stage" + std::to_string(l) + "a", ci, arch.channels(l), rng);
            dec_b[l].init("D.stage" + std::to_string(l) + "b", arch.channels(l),
                          arch.channels(l), rng);
        }
        recon.init("D.recon", arch.channels(0), 1, 1, rng, 1.0);
    }

    EncoderFeatures<T> encode(const Tensor<T>& x, Mode m, bool update_running = true) {
        if (x.c != 1 || x.spatial() != arch.input_dims)
            throw ShapeError("encoder: expected 1x" + to_string(arch.input_dims) +
                             ", got " + std::to_string(x.c) + "x" + to_string(x.spatial()));
        EncoderFeatures<T> f;
        Tensor<T> cur = x;
        for (int s = 0; s < arch.depth; ++s) {
            if (s > 0) cur = pools[s - 1].forward(cur, m);
            cur = enc_a[s].forward(cur, m, update_running);
            cur = enc_b[s].forward(cur, m, update_running);
            f.levels.push_back(cur);
        }
        return f;
    }

    /// Decoder trunk up to the level-0 feature map (shared by recon and seg heads).
    Tensor<T> decode_features(const EncoderFeatures<T>& f, Mode m,
                              bool update_running = true) {
        if (static_cast<int>(f.levels.size()) != arch.depth)
            throw ShapeError("decoder: features from mismatched arch");
        Tensor<T> cur = f.levels.back();
        for (int l = arch.depth - 2; l >= 0; --l) {
            Tensor<T> up = interp_resize(cur, f.levels[l].spatial());
            Tensor<T> cat = concat_channels<T>({&up, &f.levels[l]});
            cur = dec_a[l].forward(cat, m, update_running);
            cur = dec_b[l].forward(cur, m, update_running);
        }
        return cur;
    }

    /// Accumulates skip/bottleneck grads into g_levels (sized like features).
    Tensor<T> decode_features_backward(Tensor<T> g, std::vector<Tensor<T>>& g_levels) {
        for (int l = 0; l <= arch.depth - 2; ++l) {
            g = dec_a[l].backward(dec_b[l].backward(g));
            auto parts = split_channels(g, {arch.channels(l + 1), arch.channels(l)});
            add_into(g_levels[l], parts[1]);
            const Vec3i d = arch.level_dims(l + 1);
            g = interp_resize_backward(parts[0], d.z, d.y, d.x);
        }
        return g;   // grad w.r.t. bottleneck via the decoder path
    }

    Tensor<T> recon_forward(const Tensor<T>& h, Mode m) {
        auto y = sigmoid(recon.forward(h));
        if (m == Mode::Train) {
            recon_in_ = h;
            recon_y_ = y;
        }
        return y;
    }

    Tensor<T> recon_backward(const Tensor<T>& gy) {
        Tensor<T> gz = gy;
        for (std::size_t i = 0; i < gz.v.size(); ++i)
            gz.v[i] *= recon_y_.v[i] * (T(1) - recon_y_.v[i]);
        return recon.backward(recon_in_, gz);
    }

    /// Propagates accumulated per-level grads back through the encoder.
    void encode_backward(std::vector<Tensor<T>>& g_levels) {
        Tensor<T> g;
        for (int s = arch.depth - 1; s >= 0; --s) {
            if (s == arch.depth - 1)
                g = std::move(g_levels[s]);
            else
                add_into(g, g_levels[s]);
            g = enc_a[s].backward(enc_b[s].backward(g));
            if (s > 0) g = pools[s - 1].backward(g);
        }
    }

    static void add_into(Tensor<T>& dst, const Tensor<T>& src) {
        if (dst.size() == 0) {
            dst = src;
            return;
        }
        for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
    }

    std::vector<Param<T>*> encoder_params() {
        std::vector<Param<T>*> out;
        for (int s = 0; s < arch.depth; ++s) {
            for (auto* p : enc_a[s].params()) out.push_back(p);
            for (auto* p : enc_b[s].params()) out.push_back(p);
        }
        return out;
    }

    std::vector<Param<T>*> decoder_params(bool include_recon = true) {
        std::vector<Param<T>*> out;
        for (int l = 0; l < arch.depth - 1; ++l) {
            for (auto* p : dec_a[l].params()) out.push_back(p);
            for (auto* p : dec_b[l].params()) out.push_back(p);
        }
        if (include_recon)
            for (auto* p : recon.params()) out.push_back(p);
        return out;
    }

    template <class Fn>
    void visit_batchnorms(Fn&& fn) {
        for (int s = 0; s < arch.depth; ++s) {
            fn(enc_a[s].bn);
            fn(enc_b[s].bn);
        }
        for (int l = 0; l < arch.depth - 1; ++l) {
            fn(dec_a[l].bn);
            fn(dec_b[l].bn);
        }
    }
};

// ---------------------------------------------------------------------------
// Scale-Aware head: GAP + two FC layers over the bottleneck.
// ---------------------------------------------------------------------------

template <class T>
struct ScaleHead {
    Linear<T> fc1, fc2;
    Tensor<T> gap_, relu_;
    Vec3i bneck_dims_{};

    void init(uint64_t seed, const Arch& arch) {
        Rng rng(derive_seed(seed, 2));
        fc1.init("S.fc1", arch.channels(arch.depth - 1), arch.sa_hidden, rng);
        fc2.init("S.fc2", arch.sa_hidden, 3, rng);
    }

    /// Bottleneck -> 3 unnormalized scale logits [n, 3, 1, 1, 1].
    Tensor<T> forward(const Tensor<T>& bottleneck, Mode m) {
        auto g = gap(bottleneck);
        auto r = relu(fc1.forward(g));
        auto logits = fc2.forward(r);
        if (m == Mode::Train) {
            gap_ = g;
            relu_ = r;
            bneck_dims_ = bottleneck.spatial();
        }
        return logits;
    }

    Tensor<T> backward(const Tensor<T>& glogits) {
        auto gr = fc2.backward(relu_, glogits);
        auto gg = fc1.backward(gap_, relu_backward(relu_, gr));
        return gap_backward(gg, bneck_dims_.z, bneck_dims_.y, bneck_dims_.x);
    }

    std::vector<Param<T>*> params() { return {&fc1.w, &fc1.b, &fc2.w, &fc2.b}; }
};

// ---------------------------------------------------------------------------
// MIAL discriminator: one conv stage per intermediate encoder level, each
// densely fed by the matching (average-pooled) encoder features; the final
// stage also consumes the bottleneck. GAP + two FC layers + logistic output.
// ---------------------------------------------------------------------------

template <class T>
struct Discriminator {
    Arch arch;
    std::vector<Conv3d<T>> convs;
    Linear<T> fc1, fc2;

    // caches
    std::vector<Tensor<T>> conv_in_, conv_out_;
    Tensor<T> gap_, relu_;
    Vec3i last_dims_{};

    int stages() const { return arch.depth - 1; }

    void init(uint64_t seed, const Arch& a) {
        arch = a;
        Rng rng(derive_seed(seed, 3));
        const int S = stages();
        convs.resize(S);
        const int cb = arch.channels(arch.depth - 1);
        for (int s = 0; s < S; ++s) {
            int ci = arch.channels(s);
            if (s > 0) ci += arch.mial_channels;
            if (s == S - 1) ci += cb;
            convs[s].init("M.conv" + std::to_string(s), ci, arch.mial_channels, 3, rng);
        }
        fc1.init("M.fc1", arch.mial_channels, arch.mial_hidden, rng);
        fc2.init("M.fc2", arch.mial_hidden, 1, rng);
    }

    /// Returns the pre-sigmoid logit [n, 1, 1, 1, 1].
    Tensor<T> forward(const EncoderFeatures<T>& f, Mode m) {
        const int S = stages();
        std::vector<Tensor<T>> cin(S), cout(S);
        Tensor<T> h;
        for (int s = 0; s < S; ++s) {
            Tensor<T> pl = avgpool2(f.levels[s]);
            std::vector<const Tensor<T>*> parts;
            Tensor<T> pp;
            if (s > 0) {
                pp = avgpool2(h);
                parts.push_back(&pp);
            }
            parts.push_back(&pl);
            if (s == S - 1) parts.push_back(&f.levels[arch.depth - 1]);
            Tensor<T> in = parts.size() == 1 ? pl : concat_channels(parts);
            h = relu(convs[s].forward(in));
            if (m == Mode::Train) {
                cin[s] = in;
                cout[s] = h;
            }
        }
        auto g = gap(h);
        auto r = relu(fc1.forward(g));
        auto logit = fc2.forward(r);
        if (m == Mode::Train) {
            conv_in_ = std::move(cin);
            conv_out_ = std::move(cout);
            gap_ = g;
            relu_ = r;
            last_dims_ = h.spatial();
        }
        return logit;
    }

    /// Grad of the adversarial loss w.r.t. every encoder level (bottleneck last).
    std::vector<Tensor<T>> backward(const Tensor<T>& glogit) {
        const int S = stages();
        std::vector<Tensor<T>> g_levels(arch.depth);
        for (int l = 0; l < arch.depth; ++l) {
            const Vec3i d = arch.level_dims(l);
            g_levels[l] = Tensor<T>(conv_in_[S - 1].n, arch.channels(l), d.z, d.y, d.x);
        }
        auto gr = fc2.backward(relu_, glogit);
        auto gg = fc1.backward(gap_, relu_backward(relu_, gr));
        Tensor<T> g = gap_backward(gg, last_dims_.z, last_dims_.y, last_dims_.x);
        for (int s = S - 1; s >= 0; --s) {
            Tensor<T> gin = convs[s].backward(conv_in_[s], relu_backward(conv_out_[s], g));
            std::vector<int> counts;
            if (s > 0) counts.push_back(arch.mial_channels);
            counts.push_back(arch.channels(s));
            if (s == S - 1) counts.push_back(arch.channels(arch.depth - 1));
            auto parts = split_channels(gin, counts);
            std::size_t pi = 0;
            Tensor<T> gprev;
            if (s > 0) gprev = std::move(parts[pi++]);
            const Vec3i dl = arch.level_dims(s);
            UNet<T>::add_into(g_levels[s],
                              avgpool2_backward(parts[pi], dl.z, dl.y, dl.x));
            ++pi;
            if (s == S - 1) UNet<T>::add_into(g_levels[arch.depth - 1], parts[pi]);
            if (s > 0) {
                const Vec3i dh = arch.level_dims(s);   // h_{s-1} lives at level-s dims
                g = avgpool2_backward(gprev, dh.z, dh.y, dh.x);
            }
        }
        return g_levels;
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        for (auto& c : convs)
            for (auto* p : c.params()) out.push_back(p);
        for (auto* p : fc1.params()) out.push_back(p);
        for (auto* p : fc2.params()) out.push_back(p);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Assembled models.
// ---------------------------------------------------------------------------

template <class T>
struct PretrainModel {
    Arch arch;
    UNet<T> unet;
    ScaleHead<T> sa;
    Discriminator<T> mial;

    static PretrainModel init(const Arch& arch, std::uint64_t seed) {
        PretrainModel m;
        m.arch = arch;
        m.unet.init(seed, arch);
        m.sa.init(seed, arch);
        m.mial.init(seed, arch);
        return m;
    }

    std::vector<Param<T>*> unet_params() {
        auto out = unet.encoder_params();
        for (auto* p : unet.decoder_params()) out.push_back(p);
        return out;
    }
    std::vector<Param<T>*> all_params() {
        auto out = unet_params();
        for (auto* p : sa.params()) out.push_back(p);
        for (auto* p : mial.params()) out.push_back(p);
        return out;
    }
};

template <class T>
struct SegModel {
    Arch arch;
    UNet<T> unet;
    Conv3d<T> seg;
    Tensor<T> seg_in_, probs_;

    static SegModel init(const Arch& arch, std::uint64_t seed) {
        if (arch.n_classes < 2)
            throw ArgumentError("SegModel: n_classes must be >= 2, got " +
                                std::to_string(arch.n_classes));
        SegModel m;
        m.arch = arch;
        m.unet.init(seed, arch);
        Rng rng(derive_seed(seed, 4));
        m.seg.init("G.seg", arch.channels(0), arch.n_classes, 1, rng, 1.0);
        return m;
    }

    /// Per-voxel class probabilities [n, n_classes, z, y, x]; sums to 1.
    Tensor<T> forward(const Tensor<T>& x, Mode m, bool update_running = true) {
        auto f = unet.encode(x, m, update_running);
        auto h = unet.decode_features(f, m, update_running);
        auto z = seg.forward(h);
        Tensor<T> p = softmax_channels(z);
        if (m == Mode::Train) {
            seg_in_ = h;
            probs_ = p;
            feats_ = std::move(f);
        }
        return p;
    }

    /// gprobs = dLoss/dprobabilities; backprops the whole network.
    void backward(const Tensor<T>& gprobs) {
        // softmax jacobian: gz_c = p_c * (g_c - sum_k p_k g_k)
        Tensor<T> gz = gprobs;
        const std::size_t plane = gz.plane();
        for (int n = 0; n < gz.n; ++n)
            for (std::size_t i = 0; i < plane; ++i) {
                double dot = 0.0;
                for (int c = 0; c < gz.c; ++c)
                    dot += static_cast<double>(probs_.channel(n, c)[i]) *
                           gprobs.channel(n, c)[i];
                for (int c = 0; c < gz.c; ++c)
                    gz.channel(n, c)[i] = static_cast<T>(
                        probs_.channel(n, c)[i] * (gprobs.channel(n, c)[i] - dot));
            }
        Tensor<T> gh = seg.backward(seg_in_, gz);
        std::vector<Tensor<T>> g_levels(arch.depth);
        Tensor<T> gb = unet.decode_features_backward(gh, g_levels);
        UNet<T>::add_into(g_levels[arch.depth - 1], gb);
        unet.encode_backward(g_levels);
    }

    static Tensor<T> softmax_channels(const Tensor<T>& z) {
        Tensor<T> p = z;
        const std::size_t plane = z.plane();
        for (int n = 0; n < z.n; ++n)
            for (std::size_t i = 0; i < plane; ++i) {
                double mx = -1e300;
                for (int c = 0; c < z.c; ++c)
                    mx = std::max(mx, static_cast<double>(z.channel(n, c)[i]));
                double sum = 0.0;
                for (int c = 0; c < z.c; ++c)
                    sum += std::exp(static_cast<double>(z.channel(n, c)[i]) - mx);
                for (int c = 0; c < z.c; ++c)
                    p.channel(n, c)[i] = static_cast<T>(
                        std::exp(static_cast<double>(z.channel(n, c)[i]) - mx) / sum);
            }
        return p;
    }

    std::vector<Param<T>*> trainable_params() {
        auto out = unet.encoder_params();
        for (auto* p : unet.decoder_params(/*include_recon=*/false)) out.push_back(p);
        for (auto* p : seg.params()) out.push_back(p);
        return out;
    }

private:
    EncoderFeatures<T> feats_;
};

} // namespace sar
