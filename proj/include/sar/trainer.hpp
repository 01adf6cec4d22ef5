#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "sar/checkpoint.hpp"
#include "sar/objectives.hpp"
#include "sar/optim.hpp"
#include "sar/sampler.hpp"
#include "sar/synth.hpp"
#include "sar/transforms.hpp"

namespace sar {

using TrainScalar = float;

struct PretrainConfig {
    Arch arch{};
    double lr_unet = 1e0;
    double lr_sa = 1e-1;
    double lr_mial = 1e-3;
    double momentum = 0.9;
    int batch_size = 8;
    int max_epochs = 20;
    int plateau_patience = 5;
    double plateau_factor = 0.1;
    double plateau_min_delta = 1e-4;
    std::uint64_t seed = 0;
    SamplingPlan plan{};
    TransformConfig transform{};
    double alpha = 1.0;
    double beta = 10.0;
    double reversal_coeff = 1.0;   // 0 detaches the adversarial signal from E
    double val_split = 0.25;

    void validate() const {
        if (lr_unet <= 0 || lr_sa <= 0 || lr_mial <= 0)
            throw ConfigError("PretrainConfig: learning rates must be > 0");
        if (batch_size < 2) throw ConfigError("PretrainConfig: batch_size must be >= 2");
        if (max_epochs < 1) throw ConfigError("PretrainConfig: max_epochs must be >= 1");
        if (val_split <= 0.0 || val_split > 0.5)
            throw ConfigError("PretrainConfig: val_split must be in (0, 0.5]");
        transform.validate();
    }
};

struct FinetuneConfig {
    Arch arch{};                // arch.n_classes >= 2
    double lr = 1e-3;
    int batch_size = 4;
    int max_epochs = 20;
    int patches_per_case = 4;
    int plateau_patience = 5;
    double plateau_factor = 0.1;
    double plateau_min_delta = 1e-4;
    std::uint64_t seed = 0;
    double data_fraction = 1.0;
    double val_split = 0.25;

    void validate() const {
        if (lr <= 0) throw ConfigError("FinetuneConfig: lr must be > 0");
        if (data_fraction <= 0.0 || data_fraction > 1.0)
            throw ConfigError("FinetuneConfig: data_fraction must be in (0,1]");
        if (arch.n_classes < 2) throw ConfigError("FinetuneConfig: n_classes must be >= 2");
        if (max_epochs < 1 || batch_size < 1 || patches_per_case < 1)
            throw ConfigError("FinetuneConfig: bad loop sizes");
    }
};

// ---------------------------------------------------------------------------
// Batch building.
// ---------------------------------------------------------------------------

struct TrainSample {
    Array3 corrupted;
    Array3 original;
    int scale_label;
    Modality modality;
    CorruptionRecord record;
};

/// One pass of sampling + corruption over the corpus under the plan.
inline std::vector<TrainSample> build_training_samples(
    const std::vector<const Volume*>& corpus, const SamplingPlan& plan,
    const TransformConfig& tcfg, std::uint64_t seed) {
    std::vector<TrainSample> samples;
    for (std::size_t vi = 0; vi < corpus.size(); ++vi) {
        Rng srng(derive_seed(seed, 21, vi));
        auto subs = generate_subvolumes(*corpus[vi], plan, srng);
        for (std::size_t si = 0; si < subs.size(); ++si) {
            Rng crng(derive_seed(seed, 22, vi, si));
            auto [xc, rec] = corrupt(subs[si].data, tcfg, crng);
            samples.push_back(TrainSample{std::move(xc), std::move(subs[si].data),
                                          static_cast<int>(subs[si].scale_label),
                                          subs[si].modality_label, std::move(rec)});
        }
    }
    return samples;
}

/// Shuffle samples into batches of `batch_size`; a repair pass swaps samples
/// between batches so that every batch holds both modalities where the
/// global mix allows it.
inline std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<TrainSample>& samples, int batch_size, Rng& rng) {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
        batches.emplace_back(order.begin() + i,
                             order.begin() + std::min(order.size(),
                                                      i + static_cast<std::size_t>(batch_size)));
    }
    auto count = [&](const std::vector<std::size_t>& b, Modality m) {
        int c = 0;
        for (auto i : b)
            if (samples[i].modality == m) ++c;
        return c;
    };
    for (auto& b : batches) {
        for (Modality need : {Modality::CT, Modality::MRI}) {
            if (count(b, need) > 0) continue;
            const Modality have = need == Modality::CT ? Modality::MRI : Modality::CT;
            for (auto& donor : batches) {
                if (&donor == &b || count(donor, need) < 2) continue;
                auto di = std::find_if(donor.begin(), donor.end(), [&](std::size_t i) {
                    return samples[i].modality == need;
                });
                auto bi = std::find_if(b.begin(), b.end(), [&](std::size_t i) {
                    return samples[i].modality == have;
                });
                if (di != donor.end() && bi != b.end()) {
                    std::swap(*di, *bi);
                    break;
                }
            }
        }
    }
    return batches;
}

/// Spec-level convenience: one shuffled, modality-mixed batch set for a corpus.
inline std::vector<std::vector<TrainSample>> batch_builder(
    const std::vector<const Volume*>& corpus, const SamplingPlan& plan,
    const TransformConfig& tcfg, std::uint64_t seed, int batch_size) {
    if (corpus.empty()) throw ArgumentError("batch_builder: empty corpus");
    auto samples = build_training_samples(corpus, plan, tcfg, seed);
    Rng rng(derive_seed(seed, 23));
    auto batches = make_batches(samples, batch_size, rng);
    std::vector<std::vector<TrainSample>> out;
    for (const auto& b : batches) {
        std::vector<TrainSample> group;
        for (auto i : b) group.push_back(samples[i]);
        out.push_back(std::move(group));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics rows.
// ---------------------------------------------------------------------------

struct PretrainRow {
    int epoch;
    std::string split;   // "train" | "val"
    double l_res, l_scale, l_adv_d, combined;
    double lr_unet, lr_sa, lr_mial;
    double wall_seconds;
    // extra diagnostics, not part of the CSV contract
    double scale_accuracy = 0.0;
    double disc_accuracy = 0.0;
};

struct FinetuneRow {
    int epoch;
    std::string split;
    double dice_loss;
    double dice_score;
    double lr;
};

namespace csv_detail {

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace csv_detail

inline std::string pretrain_csv(const std::vector<PretrainRow>& rows) {
    std::string s = "epoch,split,l_res,l_scale,l_adv_d,combined,lr_unet,lr_sa,lr_mial,wall_seconds\n";
    using csv_detail::num;
    for (const auto& r : rows)
        s += std::to_string(r.epoch) + "," + r.split + "," + num(r.l_res) + "," +
             num(r.l_scale) + "," + num(r.l_adv_d) + "," + num(r.combined) + "," +
             num(r.lr_unet) + "," + num(r.lr_sa) + "," + num(r.lr_mial) + "," +
             num(r.wall_seconds) + "\n";
    return s;
}

inline std::string finetune_csv(const std::vector<FinetuneRow>& rows) {
    std::string s = "epoch,split,dice_loss,dice_score,lr\n";
    using csv_detail::num;
    for (const auto& r : rows)
        s += std::to_string(r.epoch) + "," + r.split + "," + num(r.dice_loss) + "," +
             num(r.dice_score) + "," + num(r.lr) + "\n";
    return s;
}

// ---------------------------------------------------------------------------
// Pre-training.
// ---------------------------------------------------------------------------

struct PretrainResult {
    PretrainModel<TrainScalar> model;
    Checkpoint best_checkpoint;
    std::vector<PretrainRow> rows;
    std::string metrics_csv;
    double best_val_combined = 0.0;
    double final_val_scale_accuracy = 0.0;
    double final_val_disc_accuracy = 0.0;
};

namespace trainer_detail {

using S = TrainScalar;

inline Tensor<S> pack_batch(const std::vector<TrainSample>& samples,
                            const std::vector<std::size_t>& idx, bool corrupted) {
    const Array3& first = corrupted ? samples[idx[0]].corrupted : samples[idx[0]].original;
    Tensor<S> t(static_cast<int>(idx.size()), 1, first.nz(), first.ny(), first.nx());
    for (std::size_t i = 0; i < idx.size(); ++i)
        copy_into(t, static_cast<int>(i), 0,
                  corrupted ? samples[idx[i]].corrupted : samples[idx[i]].original);
    return t;
}

struct BatchEval {
    LossBundle losses;
    double scale_correct = 0;
    double disc_correct = 0;
    int n = 0;
    bool has_both_modalities = false;
};

/// Forward pass + losses on one batch. Train mode caches for backprop.
inline BatchEval pretrain_forward(PretrainModel<S>& model,
                                  const std::vector<TrainSample>& samples,
                                  const std::vector<std::size_t>& idx,
                                  const PretrainConfig& cfg, Mode mode,
                                  EncoderFeatures<S>* feats_out = nullptr,
                                  Tensor<S>* recon_grad = nullptr,
                                  Tensor<S>* scale_grad = nullptr,
                                  Tensor<S>* adv_grad = nullptr) {
    BatchEval ev;
    ev.n = static_cast<int>(idx.size());
    Tensor<S> x_hat = pack_batch(samples, idx, true);
    Tensor<S> x_orig = pack_batch(samples, idx, false);
    std::vector<int> labels;
    std::vector<bool> is_ct;
    for (auto i : idx) {
        labels.push_back(samples[i].scale_label);
        is_ct.push_back(samples[i].modality == Modality::CT);
    }
    const bool train = mode == Mode::Train;

    auto feats = model.unet.encode(x_hat, mode);
    auto h = model.unet.decode_features(feats, mode);
    auto recon = model.unet.recon_forward(h, mode);
    auto logits = model.sa.forward(feats.bottleneck(), mode);
    auto d_logit = model.mial.forward(feats, mode);

    ev.losses.alpha = cfg.alpha;
    ev.losses.beta = cfg.beta;
    ev.losses.l_res = restoration_loss(recon, x_orig);
    ev.losses.l_scale = scale_loss(logits, labels);

    std::vector<double> d_ct, d_mri;
    for (int n = 0; n < d_logit.n; ++n) {
        const double d =
            1.0 / (1.0 + std::exp(-static_cast<double>(d_logit.at(n, 0, 0, 0, 0))));
        (is_ct[static_cast<std::size_t>(n)] ? d_ct : d_mri).push_back(d);
        if ((d > 0.5) == is_ct[static_cast<std::size_t>(n)]) ev.disc_correct += 1.0;
    }
    ev.has_both_modalities = !d_ct.empty() && !d_mri.empty();
    if (ev.has_both_modalities) {
        auto adv = adversarial_losses(d_ct, d_mri);
        ev.losses.l_adv_d = adv.l_adv_d;
        ev.losses.l_adv_e = adv.l_adv_e;
    }
    ev.losses.combined = combined_objective(ev.losses.l_res, ev.losses.l_scale,
                                            ev.losses.l_adv_e, cfg.alpha, cfg.beta);

    for (int n = 0; n < logits.n; ++n) {
        int best = 0;
        for (int c = 1; c < 3; ++c)
            if (logits.at(n, c, 0, 0, 0) > logits.at(n, best, 0, 0, 0)) best = c;
        if (best == labels[static_cast<std::size_t>(n)]) ev.scale_correct += 1.0;
    }

    if (!std::isfinite(ev.losses.combined) || !std::isfinite(ev.losses.l_adv_d))
        throw NumericalError("pretrain: non-finite loss (l_res=" +
                             std::to_string(ev.losses.l_res) + ", l_scale=" +
                             std::to_string(ev.losses.l_scale) + ", l_adv_d=" +
                             std::to_string(ev.losses.l_adv_d) + ")");

    if (train) {
        *feats_out = std::move(feats);
        Tensor<S> gres = restoration_loss_grad(recon, x_orig);
        for (auto& v : gres.v) v = static_cast<S>(cfg.beta * v);
        *recon_grad = std::move(gres);
        Tensor<S> gsc = scale_loss_grad(logits, labels);
        for (auto& v : gsc.v) v = static_cast<S>(cfg.alpha * v);
        *scale_grad = std::move(gsc);
        if (ev.has_both_modalities)
            *adv_grad = adversarial_logit_grad(d_logit, is_ct);
        else
            *adv_grad = Tensor<S>();
    }
    return ev;
}

} // namespace trainer_detail

/// Pre-train on a mixed-modality corpus. Deterministic for a fixed
/// (config, corpus, seed): data regeneration is keyed by (seed, epoch), so a
/// resumed run consumes the same stream as an uninterrupted one.
inline PretrainResult pretrain(const PretrainConfig& cfg, const std::vector<Volume>& corpus,
                               std::optional<Checkpoint> resume = std::nullopt) {
    using S = TrainScalar;
    cfg.validate();

    std::vector<const Volume*> ct, mri;
    for (const auto& v : corpus)
        (v.modality == Modality::CT ? ct : mri).push_back(&v);
    if (ct.size() < 2 || mri.size() < 2)
        throw ConfigError("pretrain: corpus needs >= 2 volumes of each modality "
                          "(adversarial loss undefined otherwise)");

    // Stratified validation split.
    Rng split_rng(derive_seed(cfg.seed, 31));
    split_rng.shuffle(ct);
    split_rng.shuffle(mri);
    auto n_val = [&](std::size_t n) {
        return std::max<std::size_t>(1, std::min(n - 1, static_cast<std::size_t>(
                                                            std::llround(cfg.val_split * n))));
    };
    const std::size_t vct = n_val(ct.size()), vmri = n_val(mri.size());
    std::vector<const Volume*> train_vols(ct.begin() + vct, ct.end());
    train_vols.insert(train_vols.end(), mri.begin() + vmri, mri.end());
    std::vector<const Volume*> val_vols(ct.begin(), ct.begin() + vct);
    val_vols.insert(val_vols.end(), mri.begin(), mri.begin() + vmri);

    // Fixed validation sample set.
    auto val_samples = build_training_samples(val_vols, cfg.plan, cfg.transform,
                                              derive_seed(cfg.seed, 32));

    PretrainResult result;
    result.model = PretrainModel<S>::init(cfg.arch, cfg.seed);
    auto& model = result.model;

    double lr_unet = cfg.lr_unet, lr_sa = cfg.lr_sa, lr_mial = cfg.lr_mial;
    SgdOptimizer<S> opt_unet(model.unet_params(), lr_unet, cfg.momentum);
    SgdOptimizer<S> opt_sa(model.sa.params(), lr_sa, cfg.momentum);
    SgdOptimizer<S> opt_mial(model.mial.params(), lr_mial, cfg.momentum);
    PlateauScheduler sched(cfg.plateau_patience, cfg.plateau_factor, cfg.plateau_min_delta);

    int start_epoch = 1;
    if (resume) {
        model = pretrain_from_checkpoint<S>(*resume);
        start_epoch = static_cast<int>(resume->step) + 1;
        opt_unet = SgdOptimizer<S>(model.unet_params(), lr_unet, cfg.momentum);
        opt_sa = SgdOptimizer<S>(model.sa.params(), lr_sa, cfg.momentum);
        opt_mial = SgdOptimizer<S>(model.mial.params(), lr_mial, cfg.momentum);
        auto restore_vel = [&](SgdOptimizer<S>& opt) {
            for (std::size_t i = 0; i < opt.params.size(); ++i) {
                auto it = resume->arrays.find("opt.v." + opt.params[i]->name);
                if (it == resume->arrays.end()) continue;
                for (std::size_t j = 0; j < opt.velocity[i].size(); ++j)
                    opt.velocity[i][j] = static_cast<S>(it->second[j]);
            }
        };
        restore_vel(opt_unet);
        restore_vel(opt_sa);
        restore_vel(opt_mial);
        if (auto it = resume->arrays.find("opt.sched"); it != resume->arrays.end()) {
            sched.best = it->second[0];
            sched.bad_count = static_cast<int>(it->second[1]);
            lr_unet = it->second[2];
            lr_sa = it->second[3];
            lr_mial = it->second[4];
            opt_unet.lr = lr_unet;
            opt_sa.lr = lr_sa;
            opt_mial.lr = lr_mial;
        }
    }

    double best_val = std::numeric_limits<double>::infinity();
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = start_epoch; epoch <= cfg.max_epochs; ++epoch) {
        auto samples = build_training_samples(train_vols, cfg.plan, cfg.transform,
                                              derive_seed(cfg.seed, 33, epoch));
        Rng order_rng(derive_seed(cfg.seed, 34, epoch));
        auto batches = make_batches(samples, cfg.batch_size, order_rng);

        LossBundle train_sum;
        int n_batches = 0;
        for (const auto& batch : batches) {
            EncoderFeatures<S> feats;
            Tensor<S> g_recon, g_scale, g_adv;
            auto ev = trainer_detail::pretrain_forward(model, samples, batch, cfg,
                                                       Mode::Train, &feats, &g_recon,
                                                       &g_scale, &g_adv);
            opt_unet.zero_grad();
            opt_sa.zero_grad();
            opt_mial.zero_grad();

            std::vector<Tensor<S>> g_levels(static_cast<std::size_t>(cfg.arch.depth));
            Tensor<S> gh = model.unet.recon_backward(g_recon);
            Tensor<S> gb = model.unet.decode_features_backward(gh, g_levels);
            UNet<S>::add_into(g_levels[static_cast<std::size_t>(cfg.arch.depth - 1)], gb);
            UNet<S>::add_into(g_levels[static_cast<std::size_t>(cfg.arch.depth - 1)],
                              model.sa.backward(g_scale));
            if (g_adv.size() > 0) {
                auto g_disc_levels = model.mial.backward(g_adv);
                if (cfg.reversal_coeff != 0.0) {
                    for (int l = 0; l < cfg.arch.depth; ++l) {
                        auto& gd = g_disc_levels[static_cast<std::size_t>(l)];
                        for (auto& v : gd.v)
                            v = static_cast<S>(-cfg.reversal_coeff * v);
                        UNet<S>::add_into(g_levels[static_cast<std::size_t>(l)], gd);
                    }
                }
            }
            model.unet.encode_backward(g_levels);

            opt_unet.step();
            opt_sa.step();
            if (g_adv.size() > 0) opt_mial.step();

            train_sum.l_res += ev.losses.l_res;
            train_sum.l_scale += ev.losses.l_scale;
            train_sum.l_adv_d += ev.losses.l_adv_d;
            train_sum.combined += ev.losses.combined;
            ++n_batches;
        }

        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.rows.push_back(PretrainRow{epoch, "train", train_sum.l_res / n_batches,
                                          train_sum.l_scale / n_batches,
                                          train_sum.l_adv_d / n_batches,
                                          train_sum.combined / n_batches, lr_unet, lr_sa,
                                          lr_mial, wall});

        // Validation (inference mode, fixed sample set).
        LossBundle val_sum;
        double scale_ok = 0, disc_ok = 0, n_val_samples = 0;
        int vbatches = 0;
        std::vector<std::size_t> vidx;
        for (std::size_t i = 0; i < val_samples.size(); i += cfg.batch_size) {
            vidx.clear();
            for (std::size_t j = i;
                 j < std::min(val_samples.size(), i + static_cast<std::size_t>(cfg.batch_size));
                 ++j)
                vidx.push_back(j);
            auto ev = trainer_detail::pretrain_forward(model, val_samples, vidx, cfg,
                                                       Mode::Eval);
            val_sum.l_res += ev.losses.l_res;
            val_sum.l_scale += ev.losses.l_scale;
            val_sum.l_adv_d += ev.losses.l_adv_d;
            val_sum.combined += ev.losses.combined;
            scale_ok += ev.scale_correct;
            disc_ok += ev.disc_correct;
            n_val_samples += ev.n;
            ++vbatches;
        }
        PretrainRow vrow{epoch,
                         "val",
                         val_sum.l_res / vbatches,
                         val_sum.l_scale / vbatches,
                         val_sum.l_adv_d / vbatches,
                         val_sum.combined / vbatches,
                         lr_unet,
                         lr_sa,
                         lr_mial,
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                             .count()};
        vrow.scale_accuracy = scale_ok / n_val_samples;
        vrow.disc_accuracy = disc_ok / n_val_samples;
        result.rows.push_back(vrow);
        result.final_val_scale_accuracy = vrow.scale_accuracy;
        result.final_val_disc_accuracy = vrow.disc_accuracy;

        if (vrow.combined < best_val) {
            best_val = vrow.combined;
            result.best_checkpoint = make_checkpoint(model, cfg.seed,
                                                     static_cast<std::uint64_t>(epoch));
            result.best_val_combined = best_val;
        }
        if (sched.step(vrow.combined)) {
            lr_unet *= cfg.plateau_factor;
            lr_sa *= cfg.plateau_factor;
            lr_mial *= cfg.plateau_factor;
            opt_unet.lr = lr_unet;
            opt_sa.lr = lr_sa;
            opt_mial.lr = lr_mial;
        }
    }

    result.metrics_csv = pretrain_csv(result.rows);
    return result;
}

/// Full resumable state: model + optimizer velocities + scheduler.
inline Checkpoint make_resume_checkpoint(PretrainResult& result, const PretrainConfig& cfg,
                                         SgdOptimizer<TrainScalar>* opts[3], int epoch,
                                         const PlateauScheduler& sched, double lrs[3]) {
    Checkpoint ck = make_checkpoint(result.model, cfg.seed,
                                    static_cast<std::uint64_t>(epoch));
    for (int k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < opts[k]->params.size(); ++i) {
            std::vector<float> v(opts[k]->velocity[i].size());
            for (std::size_t j = 0; j < v.size(); ++j)
                v[j] = static_cast<float>(opts[k]->velocity[i][j]);
            ck.arrays["opt.v." + opts[k]->params[i]->name] = std::move(v);
        }
    ck.arrays["opt.sched"] = {static_cast<float>(sched.best),
                              static_cast<float>(sched.bad_count),
                              static_cast<float>(lrs[0]), static_cast<float>(lrs[1]),
                              static_cast<float>(lrs[2])};
    return ck;
}

// ---------------------------------------------------------------------------
// Sliding-window inference.
// ---------------------------------------------------------------------------

/// Per-voxel class probabilities for a whole volume: windows of the model's
/// input size with 50% overlap, per-voxel score averaging.
inline Tensor<TrainScalar> predict_volume(SegModel<TrainScalar>& model, const Volume& vol) {
    using S = TrainScalar;
    const Vec3i w = model.arch.input_dims;
    const Vec3i d = vol.data.dims();
    if (d.x < w.x || d.y < w.y || d.z < w.z)
        throw DataError("predict_volume: volume " + to_string(d) +
                        " smaller than model window " + to_string(w));
    auto starts = [](int dim, int win) {
        std::vector<int> s;
        const int stride = std::max(1, win / 2);
        for (int o = 0;; o += stride) {
            if (o + win >= dim) {
                s.push_back(dim - win);
                break;
            }
            s.push_back(o);
        }
        return s;
    };
    Tensor<S> acc(1, model.arch.n_classes, d.z, d.y, d.x);
    std::vector<float> counts(static_cast<std::size_t>(d.x) * d.y * d.z, 0.0f);
    Tensor<S> x(1, 1, w.z, w.y, w.x);
    for (int oz : starts(d.z, w.z))
        for (int oy : starts(d.y, w.y))
            for (int ox : starts(d.x, w.x)) {
                for (int z = 0; z < w.z; ++z)
                    for (int y = 0; y < w.y; ++y)
                        for (int xx = 0; xx < w.x; ++xx)
                            x.at(0, 0, z, y, xx) =
                                static_cast<S>(vol.data.at(ox + xx, oy + y, oz + z));
                auto probs = model.forward(x, Mode::Eval);
                for (int c = 0; c < model.arch.n_classes; ++c)
                    for (int z = 0; z < w.z; ++z)
                        for (int y = 0; y < w.y; ++y)
                            for (int xx = 0; xx < w.x; ++xx)
                                acc.at(0, c, oz + z, oy + y, ox + xx) +=
                                    probs.at(0, c, z, y, xx);
                for (int z = 0; z < w.z; ++z)
                    for (int y = 0; y < w.y; ++y)
                        for (int xx = 0; xx < w.x; ++xx)
                            counts[(static_cast<std::size_t>(oz + z) * d.y + oy + y) * d.x +
                                   ox + xx] += 1.0f;
            }
    for (int c = 0; c < model.arch.n_classes; ++c) {
        S* p = acc.channel(0, c);
        for (std::size_t i = 0; i < counts.size(); ++i) p[i] /= counts[i];
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Fine-tuning.
// ---------------------------------------------------------------------------

struct FinetuneResult {
    SegModel<TrainScalar> model;
    Checkpoint best_checkpoint;
    std::vector<FinetuneRow> rows;
    std::string metrics_csv;
    double best_val_dice = 0.0;
    int first_epoch_reaching(double dice_threshold) const {
        for (const auto& r : rows)
            if (r.split == "val" && r.dice_score >= dice_threshold) return r.epoch;
        return -1;
    }
};

inline std::vector<int> foreground_classes(int n_classes) {
    std::vector<int> fg;
    for (int c = 1; c < n_classes; ++c) fg.push_back(c);
    return fg;
}

/// Fine-tune (from scratch or from a pre-train checkpoint) with dice loss.
inline FinetuneResult finetune(const FinetuneConfig& cfg,
                               const std::vector<LabeledCase>& labeled,
                               std::optional<Checkpoint> init = std::nullopt) {
    using S = TrainScalar;
    cfg.validate();
    if (labeled.size() < 2) throw ConfigError("finetune: need >= 2 labeled cases");
    for (const auto& lc : labeled)
        if (lc.labels.size() != lc.vol.data.size())
            throw DataError("finetune: label/volume shape mismatch for " +
                            lc.vol.source_id);

    // Split, then apply the data fraction to the training side only.
    std::vector<std::size_t> order(labeled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng(derive_seed(cfg.seed, 41));
    split_rng.shuffle(order);
    const std::size_t nv = std::max<std::size_t>(
        1, std::min(order.size() - 1,
                    static_cast<std::size_t>(std::llround(cfg.val_split * order.size()))));
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + nv);
    std::vector<std::size_t> train_idx(order.begin() + nv, order.end());
    const std::size_t n_used = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.data_fraction * train_idx.size())));
    train_idx.resize(n_used);

    FinetuneResult result;
    result.model = init ? seg_init_from_pretrain<S>(*init, cfg.arch.n_classes, cfg.seed)
                        : SegModel<S>::init(cfg.arch, cfg.seed);
    auto& model = result.model;
    if (init && !(model.arch.depth == cfg.arch.depth &&
                  model.arch.base_channels == cfg.arch.base_channels &&
                  model.arch.input_dims == cfg.arch.input_dims))
        throw CheckpointError("finetune: checkpoint arch incompatible with config");

    double lr = cfg.lr;
    AdamOptimizer<S> opt(model.trainable_params(), lr);
    PlateauScheduler sched(cfg.plateau_patience, cfg.plateau_factor, cfg.plateau_min_delta);
    const auto fg = foreground_classes(cfg.arch.n_classes);
    const Vec3i w = cfg.arch.input_dims;

    double best_val = std::numeric_limits<double>::infinity();

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        // Collect random patches for this epoch.
        struct Patch {
            std::size_t case_idx;
            Vec3i origin;
        };
        std::vector<Patch> patches;
        Rng prng(derive_seed(cfg.seed, 42, epoch));
        for (auto ci : train_idx) {
            const Vec3i d = labeled[ci].vol.data.dims();
            if (d.x < w.x || d.y < w.y || d.z < w.z)
                throw DataError("finetune: case " + labeled[ci].vol.source_id +
                                " smaller than the model window");
            for (int p = 0; p < cfg.patches_per_case; ++p)
                patches.push_back(
                    {ci, Vec3i{static_cast<int>(prng.uniform_int(0, d.x - w.x)),
                               static_cast<int>(prng.uniform_int(0, d.y - w.y)),
                               static_cast<int>(prng.uniform_int(0, d.z - w.z))}});
        }
        prng.shuffle(patches);

        double train_loss = 0.0;
        int n_batches = 0;
        for (std::size_t b0 = 0; b0 < patches.size();
             b0 += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t b1 =
                std::min(patches.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
            const int bn = static_cast<int>(b1 - b0);
            Tensor<S> x(bn, 1, w.z, w.y, w.x);
            std::vector<std::uint8_t> lab(static_cast<std::size_t>(bn) * x.plane());
            for (int bi = 0; bi < bn; ++bi) {
                const auto& pt = patches[b0 + static_cast<std::size_t>(bi)];
                const auto& lc = labeled[pt.case_idx];
                std::size_t li = static_cast<std::size_t>(bi) * x.plane();
                for (int z = 0; z < w.z; ++z)
                    for (int y = 0; y < w.y; ++y)
                        for (int xx = 0; xx < w.x; ++xx, ++li) {
                            x.at(bi, 0, z, y, xx) = static_cast<S>(lc.vol.data.at(
                                pt.origin.x + xx, pt.origin.y + y, pt.origin.z + z));
                            lab[li] = lc.labels[lc.vol.data.index(
                                pt.origin.x + xx, pt.origin.y + y, pt.origin.z + z)];
                        }
            }
            auto probs = model.forward(x, Mode::Train);
            const double loss = dice_loss(probs, lab, fg);
            if (!std::isfinite(loss))
                throw NumericalError("finetune: non-finite dice loss at epoch " +
                                     std::to_string(epoch));
            opt.zero_grad();
            model.backward(dice_loss_grad(probs, lab, fg));
            opt.step();
            train_loss += loss;
            ++n_batches;
        }
        result.rows.push_back(
            FinetuneRow{epoch, "train", train_loss / std::max(1, n_batches), 0.0, lr});

        // Validation: sliding-window dice on held-out cases.
        double vloss = 0.0, vscore = 0.0;
        for (auto ci : val_idx) {
            const auto& lc = labeled[ci];
            auto probs = predict_volume(model, lc.vol);
            vloss += dice_loss(probs, lc.labels, fg);
            // hard dice of the argmax mask, averaged over foreground classes
            double case_dice = 0.0;
            for (int c : fg) {
                std::size_t inter = 0, psum = 0, gsum = 0;
                for (std::size_t i = 0; i < lc.labels.size(); ++i) {
                    int best = 0;
                    for (int k = 1; k < probs.c; ++k)
                        if (probs.channel(0, k)[i] > probs.channel(0, best)[i]) best = k;
                    const bool p = best == c, g = lc.labels[i] == c;
                    inter += p && g;
                    psum += p;
                    gsum += g;
                }
                case_dice += (psum + gsum) == 0
                                 ? 1.0
                                 : 2.0 * static_cast<double>(inter) /
                                       static_cast<double>(psum + gsum);
            }
            vscore += case_dice / fg.size();
        }
        vloss /= static_cast<double>(val_idx.size());
        vscore /= static_cast<double>(val_idx.size());
        result.rows.push_back(FinetuneRow{epoch, "val", vloss, vscore, lr});

        if (vloss < best_val) {
            best_val = vloss;
            result.best_checkpoint =
                make_checkpoint(model, cfg.seed, static_cast<std::uint64_t>(epoch));
            result.best_val_dice = vscore;
        }
        if (sched.step(vloss)) {
            lr *= cfg.plateau_factor;
            opt.lr = lr;
        }
    }
    result.metrics_csv = finetune_csv(result.rows);
    return result;
}

} // namespace sar
