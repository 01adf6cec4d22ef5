#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sar/trainer.hpp"

namespace sar {

enum class SizeBucket { S, M, L };

inline const char* to_string(SizeBucket b) {
    switch (b) {
        case SizeBucket::S: return "S";
        case SizeBucket::M: return "M";
        default: return "L";
    }
}

struct CaseResult {
    std::string case_id;
    std::map<int, double> dice;   // class -> dice in [0,1]
    std::size_t tumor_voxels = 0;
    SizeBucket size_bucket = SizeBucket::M;
};

struct MeanStd {
    double mean = 0.0;
    std::optional<double> stddev;   // absent for < 2 observations
    int n = 0;
};

struct StudyReport {
    MeanStd bucket[3];       // indexed by SizeBucket
    MeanStd overall;
    int n_trials = 0;
    std::string config_fingerprint;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd r;
    r.n = static_cast<int>(xs.size());
    if (xs.empty()) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / xs.size();
    if (xs.size() >= 2) {
        double q = 0.0;
        for (double x : xs) q += (x - r.mean) * (x - r.mean);
        r.stddev = std::sqrt(q / (xs.size() - 1));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Dice score on binary masks.
// ---------------------------------------------------------------------------

inline double dice_score(const std::vector<std::uint8_t>& pred,
                         const std::vector<std::uint8_t>& gt) {
    if (pred.size() != gt.size()) throw ShapeError("dice_score: mask size mismatch");
    std::size_t inter = 0, psum = 0, gsum = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, g = gt[i] != 0;
        inter += p && g;
        psum += p;
        gsum += g;
    }
    if (psum + gsum == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(psum + gsum);
}

// ---------------------------------------------------------------------------
// Tercile size stratification.
// ---------------------------------------------------------------------------

/// Lowest third of tumor_voxels -> S, middle -> M, top -> L; the floor rule
/// gives M and L exactly floor(n/3) cases each and S the remainder. Ties keep
/// input (case_id) order. All sizes equal -> everything M, warning flag set.
inline bool stratify_by_size(std::vector<CaseResult>& results) {
    const std::size_t n = results.size();
    if (n < 3) throw ArgumentError("stratify_by_size: need >= 3 cases");
    bool all_equal = true;
    for (const auto& r : results)
        if (r.tumor_voxels != results[0].tumor_voxels) all_equal = false;
    if (all_equal) {
        for (auto& r : results) r.size_bucket = SizeBucket::M;
        return true;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return results[a].tumor_voxels < results[b].tumor_voxels;
    });
    const std::size_t third = n / 3;
    const std::size_t n_s = n - 2 * third;
    for (std::size_t k = 0; k < n; ++k)
        results[order[k]].size_bucket = k < n_s            ? SizeBucket::S
                                        : k < n_s + third ? SizeBucket::M
                                                          : SizeBucket::L;
    return false;
}

// ---------------------------------------------------------------------------
// Welch's two-sample t-test with a two-sided p-value.
// ---------------------------------------------------------------------------

namespace eval_detail {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

inline double ibeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

} // namespace eval_detail

struct TTestResult {
    double t;
    double p;
    double df;
};

inline TTestResult two_sample_ttest(const std::vector<double>& a,
                                    const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw ArgumentError("two_sample_ttest: need >= 2 samples per group");
    const auto ma = mean_std(a), mb = mean_std(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double va = *ma.stddev * *ma.stddev, vb = *mb.stddev * *mb.stddev;
    constexpr double kEps = 1e-300;
    const double sa = va / na, sb = vb / nb;
    const double se = std::sqrt(std::max(sa + sb, kEps));
    const double t = (ma.mean - mb.mean) / se;
    double df;
    if (sa + sb < kEps) {
        df = na + nb - 2.0;   // degenerate zero-variance case; p -> 0 if means differ
    } else {
        df = (sa + sb) * (sa + sb) /
             (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    }
    const double p =
        t == 0.0 ? 1.0 : eval_detail::ibeta(df / 2.0, 0.5, df / (df + t * t));
    return {t, p, df};
}

// ---------------------------------------------------------------------------
// Volume-level evaluation of a segmentation model.
// ---------------------------------------------------------------------------

/// Per-case dice over foreground classes via sliding-window prediction;
/// tumor_voxels counts ground-truth voxels of the highest class.
inline std::vector<CaseResult> evaluate_cases(SegModel<TrainScalar>& model,
                                              const std::vector<LabeledCase>& cases) {
    std::vector<CaseResult> out;
    const auto fg = foreground_classes(model.arch.n_classes);
    const int tumor_class = model.arch.n_classes - 1;
    for (const auto& lc : cases) {
        auto probs = predict_volume(model, lc.vol);
        CaseResult r;
        r.case_id = lc.vol.source_id;
        std::vector<std::uint8_t> pred(lc.labels.size());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            int best = 0;
            for (int c = 1; c < probs.c; ++c)
                if (probs.channel(0, c)[i] > probs.channel(0, best)[i]) best = c;
            pred[i] = static_cast<std::uint8_t>(best);
        }
        for (int c : fg) {
            std::vector<std::uint8_t> pm(pred.size()), gm(pred.size());
            for (std::size_t i = 0; i < pred.size(); ++i) {
                pm[i] = pred[i] == c;
                gm[i] = lc.labels[i] == c;
            }
            r.dice[c] = dice_score(pm, gm);
        }
        for (auto l : lc.labels)
            if (l == tumor_class) ++r.tumor_voxels;
        out.push_back(std::move(r));
    }
    return out;
}

inline StudyReport make_report(const std::vector<CaseResult>& results, int tumor_class,
                               int n_trials, const std::string& fingerprint) {
    StudyReport rep;
    rep.n_trials = n_trials;
    rep.config_fingerprint = fingerprint;
    std::vector<double> by_bucket[3], all;
    for (const auto& r : results) {
        auto it = r.dice.find(tumor_class);
        if (it == r.dice.end()) continue;
        by_bucket[static_cast<int>(r.size_bucket)].push_back(it->second);
        all.push_back(it->second);
    }
    for (int b = 0; b < 3; ++b) rep.bucket[b] = mean_std(by_bucket[b]);
    rep.overall = mean_std(all);
    return rep;
}

// ---------------------------------------------------------------------------
// Annotation-fraction study (Table 4 analogue).
// ---------------------------------------------------------------------------

inline const std::vector<std::pair<std::string, double>>& annotation_fractions() {
    static const std::vector<std::pair<std::string, double>> kFractions = {
        {"1/2", 1.0 / 2}, {"1/5", 1.0 / 5}, {"1/10", 1.0 / 10},
        {"1/20", 1.0 / 20}, {"1/50", 1.0 / 50}};
    return kFractions;
}

struct FractionRow {
    std::string fraction;
    std::string init;   // "scratch" | "checkpoint"
    MeanStd dice;
};

struct FractionStudy {
    std::vector<FractionRow> rows;

    std::string to_csv() const {
        std::string s = "# fractions: ";
        bool first = true;
        for (const auto& [label, value] : annotation_fractions()) {
            (void)value;
            if (!first) s += ", ";
            s += label;
            first = false;
        }
        s += "\nfraction,init,dice_mean,dice_std,n_trials\n";
        for (const auto& r : rows) {
            s += r.fraction + "," + r.init + "," + csv_detail::num(r.dice.mean) + ",";
            s += r.dice.stddev ? csv_detail::num(*r.dice.stddev) : std::string("NA");
            s += "," + std::to_string(r.dice.n) + "\n";
        }
        return s;
    }
};

/// Fine-tunes per (fraction, init, trial); each trial perturbs only the seed.
/// The train/val split inside finetune() is seed-keyed, so "fixed test split"
/// is achieved by keeping the split seed constant and varying the init seed.
inline FractionStudy annotation_fraction_study(const FinetuneConfig& base,
                                               const std::vector<LabeledCase>& labeled,
                                               const Checkpoint& pretrain_ck,
                                               int n_trials = 5) {
    if (n_trials < 1) throw ArgumentError("annotation_fraction_study: n_trials >= 1");
    FractionStudy study;
    for (const auto& [label, value] : annotation_fractions()) {
        for (const char* init : {"scratch", "checkpoint"}) {
            std::vector<double> dices;
            for (int trial = 0; trial < n_trials; ++trial) {
                FinetuneConfig cfg = base;
                cfg.data_fraction = value;
                cfg.seed = derive_seed(base.seed, 51, static_cast<std::uint64_t>(trial));
                auto res = std::string(init) == "checkpoint"
                               ? finetune(cfg, labeled, pretrain_ck)
                               : finetune(cfg, labeled, std::nullopt);
                dices.push_back(res.best_val_dice);
            }
            study.rows.push_back({label, init, mean_std(dices)});
        }
    }
    return study;
}

// ---------------------------------------------------------------------------
// Single-scale ablation (Table 3 analogue).
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string scale;   // "1/2" | "1/4" | "1/8" | "multi"
    StudyReport report;
};

inline SamplingPlan single_scale_plan(const std::string& scale, const SamplingPlan& multi) {
    const int total = multi.n_small + multi.n_medium + multi.n_large;
    SamplingPlan p = multi;
    if (scale == "multi") return p;
    p.n_small = p.n_medium = p.n_large = 0;
    if (scale == "1/8")
        p.n_small = total;
    else if (scale == "1/4")
        p.n_medium = total;
    else if (scale == "1/2")
        p.n_large = total;
    else
        throw ArgumentError("single_scale_ablation: unknown scale '" + scale + "'");
    return p;
}

inline std::vector<AblationRow> single_scale_ablation(
    const std::vector<std::string>& scales, const PretrainConfig& pre_base,
    const FinetuneConfig& ft_base, const std::vector<Volume>& pretrain_corpus,
    const std::vector<LabeledCase>& labeled) {
    std::vector<AblationRow> rows;
    for (const auto& scale : scales) {
        PretrainConfig pcfg = pre_base;
        pcfg.plan = single_scale_plan(scale, pre_base.plan);
        auto pre = pretrain(pcfg, pretrain_corpus);
        auto ft = finetune(ft_base, labeled, pre.best_checkpoint);
        auto model = seg_from_checkpoint<TrainScalar>(ft.best_checkpoint);
        auto results = evaluate_cases(model, labeled);
        stratify_by_size(results);
        rows.push_back({scale, make_report(results, ft_base.arch.n_classes - 1, 1,
                                           "scale=" + scale)});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Loss-curve export: merged CSV + a simple SVG line figure.
// ---------------------------------------------------------------------------

namespace eval_detail {

struct Curve {
    std::string name;
    std::vector<double> epochs, values;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

} // namespace eval_detail

/// Reads metrics CSVs, overlays the training-split loss column (dice_loss or
/// combined) per file in one SVG, and writes a merged CSV with a `series`
/// column. Merged row count equals the sum of input data rows.
inline void export_curves(const std::vector<std::string>& csv_paths,
                          const std::string& out_svg, const std::string& out_csv) {
    using eval_detail::split_csv_line;
    if (csv_paths.empty()) throw ArgumentError("export_curves: no input CSVs");
    std::vector<eval_detail::Curve> curves;
    std::ofstream merged(out_csv);
    if (!merged) throw DataError("export_curves: cannot write " + out_csv);
    merged << "series,row\n";
    for (const auto& path : csv_paths) {
        std::ifstream in(path);
        if (!in) throw DataError("export_curves: cannot open " + path);
        std::string header;
        if (!std::getline(in, header) || header.empty())
            throw DataError("export_curves: empty CSV: " + path);
        auto cols = split_csv_line(header);
        int epoch_col = -1, split_col = -1, loss_col = -1;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (cols[i] == "epoch") epoch_col = static_cast<int>(i);
            if (cols[i] == "split") split_col = static_cast<int>(i);
            if (cols[i] == "dice_loss" || (cols[i] == "combined" && loss_col < 0))
                loss_col = static_cast<int>(i);
        }
        if (epoch_col < 0 || split_col < 0 || loss_col < 0)
            throw DataError("export_curves: unrecognized header in " + path);
        eval_detail::Curve c;
        c.name = std::filesystem::path(path).stem().string();
        std::string line;
        bool any_row = false;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            any_row = true;
            merged << c.name << ",\"" << line << "\"\n";
            auto f = split_csv_line(line);
            if (f[static_cast<std::size_t>(split_col)] != "train") continue;
            c.epochs.push_back(std::stod(f[static_cast<std::size_t>(epoch_col)]));
            c.values.push_back(std::stod(f[static_cast<std::size_t>(loss_col)]));
        }
        if (!any_row) throw DataError("export_curves: empty CSV: " + path);
        curves.push_back(std::move(c));
    }

    constexpr double W = 640, H = 400, M = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.epochs.size(); ++i) {
            xmin = std::min(xmin, c.epochs[i]);
            xmax = std::max(xmax, c.epochs[i]);
            ymin = std::min(ymin, c.values[i]);
            ymax = std::max(ymax, c.values[i]);
        }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    auto sx = [&](double x) { return M + (x - xmin) / (xmax - xmin) * (W - 2 * M); };
    auto sy = [&](double y) { return H - M - (y - ymin) / (ymax - ymin) * (H - 2 * M); };
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b"};
    std::ofstream svg(out_svg);
    if (!svg) throw DataError("export_curves: cannot write " + out_svg);
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
        << "<line x1='" << M << "' y1='" << H - M << "' x2='" << W - M << "' y2='"
        << H - M << "' stroke='black'/>\n"
        << "<line x1='" << M << "' y1='" << M << "' x2='" << M << "' y2='" << H - M
        << "' stroke='black'/>\n"
        << "<text x='" << W / 2 << "' y='" << H - 10 << "' text-anchor='middle'>epoch"
        << "</text>\n<text x='15' y='" << H / 2
        << "' transform='rotate(-90 15 " << H / 2 << ")' text-anchor='middle'>"
        << "training loss</text>\n";
    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const auto& c = curves[ci];
        const char* color = kColors[ci % 6];
        svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < c.epochs.size(); ++i)
            svg << sx(c.epochs[i]) << "," << sy(c.values[i]) << " ";
        svg << "'/>\n<text x='" << W - M + 5 - 120 << "' y='" << M + 16 * (ci + 1)
            << "' fill='" << color << "'>" << c.name << "</text>\n";
    }
    svg << "</svg>\n";
    if (!svg) throw DataError("export_curves: write failed: " + out_svg);
}

} // namespace sar
