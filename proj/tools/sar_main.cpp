// sar: scale-aware restoration pre-training toolchain.
//
// Subcommands: synth, preprocess, pretrain, finetune, evaluate,
// transform-preview. Exit codes: 0 success, 2 config error, 3 data error,
// 4 numerical failure, 1 anything else.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <sar/config.hpp>

namespace fs = std::filesystem;

namespace {

sar::RunConfig load_config(const std::string& path) {
    if (path.empty()) return sar::RunConfig{};
    return sar::parse_config_file(path);
}

void write_resolved(sar::RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream os(out_dir + "/config.resolved.txt");
    if (!os) throw sar::DataError("cannot write resolved config in " + out_dir);
    os << sar::resolved_config(cfg);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw sar::DataError("cannot write " + path);
    os << text;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
    auto cfg = load_config(config_path);
    write_resolved(cfg, out_dir);
    auto corpus = sar::make_pretrain_corpus(cfg.synth);
    sar::write_pretrain_corpus(corpus, out_dir + "/pretrain");
    sar::SynthSpec seg_spec = cfg.synth;
    seg_spec.n_classes = cfg.finetune.arch.n_classes;
    auto labeled = sar::make_segmentation_corpus(seg_spec, cfg.synth_n_cases);
    sar::write_segmentation_corpus(labeled, out_dir + "/seg");
    std::cout << "wrote " << corpus.size() << " pretrain volumes and " << labeled.size()
              << " labeled cases under " << out_dir << "\n";
    return 0;
}

int cmd_preprocess(const std::string& in_dir, const std::string& out_dir,
                   const std::string& modality_str, const std::string& recipe) {
    const sar::Modality modality =
        modality_str == "CT" ? sar::Modality::CT
        : modality_str == "MRI"
            ? sar::Modality::MRI
            : throw sar::ConfigError("preprocess: modality must be CT or MRI, got '" +
                                     modality_str + "'");
    fs::create_directories(out_dir);
    std::vector<fs::path> inputs;
    for (const auto& e : fs::directory_iterator(in_dir)) {
        const auto ext = e.path().extension().string();
        if (ext == ".nii" || ext == ".sarv") inputs.push_back(e.path());
    }
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) throw sar::DataError("preprocess: no .nii/.sarv volumes in " + in_dir);
    std::ofstream manifest(out_dir + "/manifest.jsonl");
    for (const auto& p : inputs) {
        auto vol = sar::load_volume(p.string(), modality);
        vol = sar::resample_to_spacing(vol, {1.0, 1.0, 1.0});
        if (recipe == "pancreas")
            vol = sar::normalize_pancreas(vol);
        else if (recipe == "brats")
            vol = sar::normalize_brats(vol);
        else if (recipe == "window")
            vol = sar::clip_and_normalize(vol);
        else
            throw sar::ConfigError("preprocess: recipe must be window|pancreas|brats");
        vol.source_id = p.stem().string();
        const std::string file = vol.source_id + ".sarv";
        sar::save_volume_raw(vol, out_dir + "/" + file);
        manifest << nlohmann::json{{"case_id", vol.source_id},
                                   {"modality", modality_str},
                                   {"path", file}}
                        .dump()
                 << "\n";
        std::cout << "preprocessed " << p.filename().string() << " -> " << file << "\n";
    }
    return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& data_dir,
                 const std::string& out_dir, const std::string& resume_path) {
    auto cfg = load_config(config_path);
    write_resolved(cfg, out_dir);
    auto corpus = sar::read_pretrain_corpus(data_dir);
    std::optional<sar::Checkpoint> resume;
    if (!resume_path.empty()) resume = sar::load_checkpoint(resume_path);
    auto result = sar::pretrain(cfg.pretrain, corpus, resume);
    write_text(out_dir + "/metrics.csv", result.metrics_csv);
    sar::save_checkpoint(result.best_checkpoint, out_dir + "/best.ckpt");
    std::cout << "pretrain done: best val combined " << result.best_val_combined
              << ", val scale acc " << result.final_val_scale_accuracy
              << ", val disc acc " << result.final_val_disc_accuracy << "\n";
    return 0;
}

int cmd_finetune(const std::string& config_path, const std::string& data_dir,
                 const std::string& out_dir, const std::string& ckpt_path) {
    auto cfg = load_config(config_path);
    write_resolved(cfg, out_dir);
    auto labeled = sar::read_segmentation_corpus(data_dir);
    std::optional<sar::Checkpoint> init;
    if (!ckpt_path.empty()) init = sar::load_checkpoint(ckpt_path);
    auto result = sar::finetune(cfg.finetune, labeled, init);
    write_text(out_dir + "/metrics.csv", result.metrics_csv);
    sar::save_checkpoint(result.best_checkpoint, out_dir + "/best.ckpt");
    std::cout << "finetune done: best val dice " << result.best_val_dice << "\n";
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& data_dir,
                 const std::string& ckpt_path, const std::string& out_dir) {
    auto cfg = load_config(config_path);
    write_resolved(cfg, out_dir);
    auto labeled = sar::read_segmentation_corpus(data_dir);
    auto ck = sar::load_checkpoint(ckpt_path);
    auto model = sar::seg_from_checkpoint<sar::TrainScalar>(ck);
    auto results = sar::evaluate_cases(model, labeled);
    const bool all_equal_sizes = sar::stratify_by_size(results);
    const int tumor_class = model.arch.n_classes - 1;
    auto report = sar::make_report(results, tumor_class, 1, config_path);

    std::string csv = "case_id,tumor_voxels,size_bucket,dice\n";
    for (const auto& r : results)
        csv += r.case_id + "," + std::to_string(r.tumor_voxels) + "," +
               sar::to_string(r.size_bucket) + "," +
               sar::csv_detail::num(r.dice.at(tumor_class)) + "\n";
    write_text(out_dir + "/cases.csv", csv);

    nlohmann::json j{{"overall_mean", report.overall.mean},
                     {"n_cases", report.overall.n},
                     {"all_sizes_equal", all_equal_sizes},
                     {"config_fingerprint", report.config_fingerprint}};
    for (int b = 0; b < 3; ++b) {
        const char* names[] = {"S", "M", "L"};
        j["bucket"][names[b]] = {{"mean", report.bucket[b].mean},
                                 {"n", report.bucket[b].n}};
        if (report.bucket[b].stddev) j["bucket"][names[b]]["std"] = *report.bucket[b].stddev;
    }
    write_text(out_dir + "/report.json", j.dump(2) + "\n");
    std::cout << "evaluate done: overall mean dice " << report.overall.mean << " over "
              << report.overall.n << " cases\n";
    return 0;
}

int cmd_transform_preview(const std::string& volume_path, std::uint64_t seed,
                          const std::string& out_dir) {
    auto vol = sar::load_volume(volume_path, sar::Modality::CT);
    const sar::Vec3i want = sar::kSubVolumeDims;
    const sar::Vec3i d = vol.data.dims();
    if (d.x < want.x || d.y < want.y || d.z < want.z)
        throw sar::DataError("transform-preview: volume " + sar::to_string(d) +
                             " smaller than " + sar::to_string(want));
    sar::Array3 x(want);
    const sar::Vec3i o{(d.x - want.x) / 2, (d.y - want.y) / 2, (d.z - want.z) / 2};
    for (int z = 0; z < want.z; ++z)
        for (int y = 0; y < want.y; ++y)
            for (int xx = 0; xx < want.x; ++xx)
                x.at(xx, y, z) = vol.data.at(o.x + xx, o.y + y, o.z + z);

    fs::create_directories(out_dir);
    sar::TransformConfig tcfg;
    auto save = [&](const char* name, const sar::Array3& a) {
        sar::Volume v;
        v.data = a;
        v.modality = vol.modality;
        v.source_id = name;
        sar::save_volume_raw(v, out_dir + "/" + name + ".sarv");
    };
    save("original", x);
    {
        sar::Rng rng(sar::derive_seed(seed, 1));
        save("nonlinear", sar::nonlinear_intensity(x, rng).first);
    }
    {
        sar::Rng rng(sar::derive_seed(seed, 2));
        save("shuffle", sar::local_shuffle(x, tcfg, rng).first);
    }
    {
        sar::Rng rng(sar::derive_seed(seed, 3));
        save("inner_paint", sar::inner_painting(x, tcfg, rng).first);
    }
    {
        sar::Rng rng(sar::derive_seed(seed, 4));
        save("outer_paint", sar::outer_painting(x, tcfg, rng).first);
    }
    std::cout << "wrote 5 preview volumes under " << out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"scale-aware restoration pre-training toolchain"};
    app.require_subcommand(1);

    std::string config_path, in_dir, out_dir = "out", data_dir, ckpt_path, resume_path;
    std::string modality = "CT", recipe = "window", volume_path;
    std::uint64_t seed = 0;

    auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
    synth->add_option("--config", config_path, "config file");
    synth->add_option("--out", out_dir, "output directory");

    auto* prep = app.add_subcommand("preprocess", "resample to 1mm and normalize");
    prep->add_option("--in", in_dir, "input directory")->required();
    prep->add_option("--out", out_dir, "output directory");
    prep->add_option("--modality", modality, "CT or MRI");
    prep->add_option("--recipe", recipe, "window | pancreas | brats");

    auto* pre = app.add_subcommand("pretrain", "self-supervised pre-training");
    pre->add_option("--config", config_path, "config file");
    pre->add_option("--data", data_dir, "pretrain corpus directory")->required();
    pre->add_option("--out", out_dir, "output directory");
    pre->add_option("--resume", resume_path, "resume checkpoint");

    auto* ft = app.add_subcommand("finetune", "dice-loss fine-tuning");
    ft->add_option("--config", config_path, "config file");
    ft->add_option("--data", data_dir, "labeled corpus directory")->required();
    ft->add_option("--out", out_dir, "output directory");
    ft->add_option("--checkpoint", ckpt_path, "pre-train checkpoint init");

    auto* ev = app.add_subcommand("evaluate", "size-stratified dice report");
    ev->add_option("--config", config_path, "config file");
    ev->add_option("--data", data_dir, "labeled corpus directory")->required();
    ev->add_option("--checkpoint", ckpt_path, "fine-tuned checkpoint")->required();
    ev->add_option("--out", out_dir, "output directory");

    auto* tp = app.add_subcommand("transform-preview", "emit the corruption family");
    tp->add_option("--volume", volume_path, "input volume")->required();
    tp->add_option("--seed", seed, "rng seed");
    tp->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
        if (*synth) return cmd_synth(config_path, out_dir);
        if (*prep) return cmd_preprocess(in_dir, out_dir, modality, recipe);
        if (*pre) return cmd_pretrain(config_path, data_dir, out_dir, resume_path);
        if (*ft) return cmd_finetune(config_path, data_dir, out_dir, ckpt_path);
        if (*ev) return cmd_evaluate(config_path, data_dir, ckpt_path, out_dir);
        if (*tp) return cmd_transform_preview(volume_path, seed, out_dir);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const sar::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sar::ArgumentError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sar::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const sar::Error& e) {
        // DataError, ShapeError, CheckpointError
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
