#ifndef VSTAIN_STUDIES_HPP
#define VSTAIN_STUDIES_HPP

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "vstain/config.hpp"
#include "vstain/quality.hpp"
#include "vstain/sampling.hpp"
#include "vstain/training.hpp"

namespace vstain::studies {

struct TestFov {
    std::string id;
    ImageTensor ions_raw;    // untouched dataset channels
    ImageTensor ions_ready;  // checkpoint pipeline applied
    ImageTensor gt01;        // ground-truth stain in [0,1]
};

inline std::vector<TestFov> load_test_split(const std::string& data_dir,
                                            const training::Checkpoint& ck) {
    const dataio::DatasetManifest manifest = phantom::load_manifest(data_dir);
    training::Pipeline pipe;
    pipe.channels = ck.channels;
    pipe.norm = ck.norm;
    pipe.tic = ck.train_cfg.tic;
    std::vector<TestFov> fovs;
    for (const auto* e : manifest.split("test")) {
        TestFov fov;
        fov.id = e->id;
        const phantom::PairedSample s = phantom::load_sample(data_dir, *e);
        fov.ions_raw = s.ions;
        fov.ions_ready = pipe.prepare(s.ions);
        fov.gt01 = s.stain;
        for (float& v : fov.gt01.data) v /= 255.f;
        fov.gt01.range_min = 0.f;
        fov.gt01.range_max = 1.f;
        fovs.push_back(std::move(fov));
    }
    VSTAIN_REQUIRE(!fovs.empty(), "load_test_split: dataset has no test entries");
    return fovs;
}

inline ImageTensor unit_from_sample(const ImageTensor& out_pm1) {
    ImageTensor img(out_pm1.channels, out_pm1.height, out_pm1.width, 0.f, 1.f);
    for (size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = clamp((out_pm1.data[i] + 1.f) * 0.5f, 0.f, 1.f);
    return img;
}

/*------------------------------------- sample command --------------------------------------*/

struct SampledFov {
    std::string id;
    ImageTensor out01;  // prediction in [0,1]
    ImageTensor xT01;   // conditioner-only baseline in [0,1]
};

// Samples every test FOV; optionally writes PPM previews plus raw tensors.
inline std::vector<SampledFov> sample_split(training::Checkpoint& ck,
                                            const std::vector<TestFov>& fovs,
                                            const sampling::SamplingConfig& scfg,
                                            const std::string& out_dir = "", int run_index = 0) {
    const bridge::BridgeSchedule sched = bridge::build_schedule(ck.train_cfg.T, ck.train_cfg.s);
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    std::vector<SampledFov> results;
    for (const TestFov& fov : fovs) {
        const sampling::SampleResult r = sampling::sample(*ck.model, sched, fov.ions_ready, scfg,
                                                          run_index);
        SampledFov s;
        s.id = fov.id;
        s.out01 = unit_from_sample(r.out);
        s.xT01 = unit_from_sample(r.x_T);
        if (!out_dir.empty()) {
            dataio::ppm_write(out_dir + "/" + fov.id + ".ppm", r.out);
            dataio::tensor_write(out_dir + "/" + fov.id + ".raw.vstn", r.out);
            dataio::tensor_write(out_dir + "/" + fov.id + ".xT.vstn", r.x_T);
        }
        results.push_back(std::move(s));
    }
    return results;
}

/*-------------------------------------- eval command ---------------------------------------*/

struct EvalRow {
    std::string id;
    double contrast_gt = 0, contrast_pred = 0;
    double mse = 0, psnr = 0, cie94 = 0, lpips = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::map<std::string, double> mean, stdev;
    quality::TTestResult contrast_test;  // two-tailed paired t-test GT vs prediction
};

inline EvalRow eval_pair(const std::string& id, const ImageTensor& gt01, const ImageTensor& pred01,
                         const quality::FeatureExtractor& extractor) {
    require_same_shape(gt01, pred01, "eval_pair");
    EvalRow row;
    row.id = id;
    row.contrast_gt = quality::contrast(to_grayscale(gt01));
    row.contrast_pred = quality::contrast(to_grayscale(pred01));
    row.mse = quality::mse(gt01, pred01);
    row.psnr = quality::psnr(gt01, pred01);
    row.cie94 = quality::fov_color_distance(gt01, pred01);
    row.lpips = quality::perceptual_distance(gt01, pred01, extractor);
    return row;
}

inline EvalReport evaluate_pairs(const std::vector<std::pair<ImageTensor, ImageTensor>>& gt_pred,
                                 const std::vector<std::string>& ids,
                                 const quality::FeatureExtractor& extractor) {
    EvalReport report;
    for (size_t i = 0; i < gt_pred.size(); ++i)
        report.rows.push_back(eval_pair(ids[i], gt_pred[i].first, gt_pred[i].second, extractor));

    auto column = [&](auto getter) {
        std::vector<double> v;
        for (const EvalRow& r : report.rows) v.push_back(getter(r));
        return v;
    };
    const std::map<std::string, std::vector<double>> cols = {
        {"contrast_gt", column([](const EvalRow& r) { return r.contrast_gt; })},
        {"contrast_pred", column([](const EvalRow& r) { return r.contrast_pred; })},
        {"mse", column([](const EvalRow& r) { return r.mse; })},
        {"psnr_db", column([](const EvalRow& r) { return r.psnr; })},
        {"cie94", column([](const EvalRow& r) { return r.cie94; })},
        {"lpips_proxy", column([](const EvalRow& r) { return r.lpips; })},
    };
    for (const auto& [name, v] : cols) {
        double mean = 0;
        for (double x : v) mean += x;
        mean /= v.size();
        double var = 0;
        for (double x : v) var += (x - mean) * (x - mean);
        report.mean[name] = mean;
        report.stdev[name] = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
    }
    if (report.rows.size() >= 2)
        report.contrast_test = quality::paired_t_test(cols.at("contrast_gt"),
                                                      cols.at("contrast_pred"), quality::Tails::two);
    return report;
}

// One row per FOV with named metric columns plus a trailing aggregate block.
inline void write_metric_report(const std::string& path, const EvalReport& report) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    const char* cols[] = {"contrast_gt", "contrast_pred", "mse", "psnr_db", "cie94", "lpips_proxy"};
    f << "id";
    for (const char* c : cols) f << "\t" << c;
    f << "\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    for (const EvalRow& r : report.rows)
        f << r.id << "\t" << num(r.contrast_gt) << "\t" << num(r.contrast_pred) << "\t"
          << num(r.mse) << "\t" << num(r.psnr) << "\t" << num(r.cie94) << "\t" << num(r.lpips)
          << "\n";
    f << "#aggregate\tmean";
    for (const char* c : cols) f << "\t" << num(report.mean.at(c));
    f << "\n#aggregate\tstd";
    for (const char* c : cols) f << "\t" << num(report.stdev.at(c));
    f << "\n#test\tcontrast_gt_vs_pred_two_tailed_paired_t\tt=" << num(report.contrast_test.t)
      << "\tp=" << num(report.contrast_test.p) << "\n";
}

// pred_dir accepts either sampled outputs (<id>.raw.vstn) or a dataset
// directory (<id>.stain.vstn), so ground truth can be evaluated against itself.
inline EvalReport run_eval(const std::string& pred_dir, const std::string& gt_dir,
                           const std::string& out_path, std::uint64_t extractor_seed,
                           int histogram_bins = 0) {
    const dataio::DatasetManifest manifest = phantom::load_manifest(gt_dir);
    const quality::ProxyConvExtractor extractor(extractor_seed);
    std::vector<std::pair<ImageTensor, ImageTensor>> pairs;
    std::vector<std::string> ids;
    for (const auto* e : manifest.split("test")) {
        ImageTensor gt01 = dataio::tensor_read_image(gt_dir + "/" + e->stain_path, 0.f, 255.f);
        for (float& v : gt01.data) v /= 255.f;

        ImageTensor pred01;
        const std::string raw_path = pred_dir + "/" + e->id + ".raw.vstn";
        if (std::filesystem::exists(raw_path)) {
            pred01 = unit_from_sample(dataio::tensor_read_image(raw_path, -1.f, 1.f));
        } else {
            const std::string stain_path = pred_dir + "/" + e->stain_path;
            if (!std::filesystem::exists(stain_path))
                throw IoError("no prediction for " + e->id + " under " + pred_dir);
            pred01 = dataio::tensor_read_image(stain_path, 0.f, 255.f);
            for (float& v : pred01.data) v /= 255.f;
        }
        pairs.emplace_back(std::move(gt01), std::move(pred01));
        ids.push_back(e->id);
    }
    VSTAIN_REQUIRE(!pairs.empty(), "run_eval: no test FOVs found");
    EvalReport report = evaluate_pairs(pairs, ids, extractor);
    if (!out_path.empty()) write_metric_report(out_path, report);

    if (histogram_bins > 0 && !out_path.empty()) {
        // YCbCr channel histograms across all FOVs, ground truth vs prediction
        std::vector<ImageTensor> gt_ycc, pred_ycc;
        for (const auto& [gt01, pred01] : pairs) {
            gt_ycc.push_back(quality::rgb_to_ycbcr(gt01));
            pred_ycc.push_back(quality::rgb_to_ycbcr(pred01));
        }
        const auto hg = quality::ycbcr_histograms(gt_ycc, histogram_bins);
        const auto hp = quality::ycbcr_histograms(pred_ycc, histogram_bins);
        const std::string hist_path =
            std::filesystem::path(out_path).parent_path() / "histograms.tsv";
        std::ofstream f(hist_path, std::ios::trunc);
        if (!f) throw IoError("cannot write " + hist_path);
        f << "channel\tbin\tgt_count\tpred_count\n";
        const char* names[3] = {"Y", "Cb", "Cr"};
        for (int c = 0; c < 3; ++c)
            for (int b = 0; b < histogram_bins; ++b)
                f << names[c] << "\t" << b << "\t" << hg[c][b] << "\t" << hp[c][b] << "\n";
    }
    return report;
}

/*------------------------------------ channel ablation -------------------------------------*/

struct AblationRow {
    int factor = 1;
    int k = 0;  // selected channel count
    double mean_psnr = 0, mean_lpips = 0;
    std::vector<double> psnr, lpips;   // per FOV, kept for the paired tests
    std::vector<double> train_losses;  // one per training step
    std::string checkpoint_dir;
};

struct AblationReport {
    std::vector<AblationRow> rows;  // one per factor, in config order
    struct Test {
        int factor_more = 0, factor_less = 0;
        quality::TTestResult psnr;   // one-tailed, more channels > fewer
        quality::TTestResult lpips;  // one-tailed, more channels < fewer
    };
    std::vector<Test> tests;  // adjacent pairs plus largest-vs-smallest when absent
};

// Trains one model per reduction factor on SNR-selected subsets and compares
// adjacent factors with one-tailed paired t-tests on the shared test split.
inline std::vector<double> read_loss_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::vector<double> losses;
    int step;
    double loss;
    while (f >> step >> loss) losses.push_back(loss);
    return losses;
}

inline AblationReport run_ablation(const config::RunConfig& rc, const std::string& data_dir,
                                   const std::string& out_dir, std::uint64_t seed,
                                   bool reuse_existing = false) {
    const auto factors = rc.evaluation().at("ablation_factors").get<std::vector<int>>();
    VSTAIN_REQUIRE(!factors.empty(), "run_ablation: no factors configured");
    std::filesystem::create_directories(out_dir);
    const quality::ProxyConvExtractor extractor(
        rc.evaluation().at("extractor_seed").get<std::uint64_t>());

    AblationReport report;
    for (int factor : factors) {
        training::TrainConfig tcfg = rc.train_config(seed);
        tcfg.reduction_factor = factor;
        const model::ConditionerConfig cond = rc.conditioner_template();
        const model::DenoiserConfig den = rc.denoiser_config();
        const std::string model_dir = out_dir + "/factor_" + std::to_string(factor);
        std::vector<double> losses;
        if (reuse_existing && std::filesystem::exists(model_dir + "/final/manifest.json")) {
            losses = read_loss_log(model_dir + "/loss.tsv");
        } else {
            std::filesystem::remove_all(model_dir);
            const training::TrainResult tr =
                training::train(tcfg, data_dir, model_dir, "", &cond, &den);
            losses = tr.losses;
        }

        training::Checkpoint ck = training::load_checkpoint(model_dir + "/final");
        const std::vector<TestFov> fovs = load_test_split(data_dir, ck);
        const sampling::SamplingConfig scfg = rc.sampling_config(tcfg.T, seed);
        const std::vector<SampledFov> preds = sample_split(ck, fovs, scfg, model_dir + "/samples");

        AblationRow row;
        row.factor = factor;
        row.k = static_cast<int>(ck.channels.selected.size());
        row.train_losses = std::move(losses);
        row.checkpoint_dir = model_dir + "/final";
        for (size_t i = 0; i < fovs.size(); ++i) {
            row.psnr.push_back(quality::psnr(fovs[i].gt01, preds[i].out01));
            row.lpips.push_back(quality::perceptual_distance(fovs[i].gt01, preds[i].out01, extractor));
            row.mean_psnr += row.psnr.back();
            row.mean_lpips += row.lpips.back();
        }
        row.mean_psnr /= fovs.size();
        row.mean_lpips /= fovs.size();
        report.rows.push_back(std::move(row));
    }

    // factors are ordered small to large reduction; adjacent pairs compare
    // a model with ~4x more channels against the next reduction
    for (size_t i = 0; i + 1 < report.rows.size(); ++i) {
        AblationReport::Test t;
        t.factor_more = report.rows[i].factor;
        t.factor_less = report.rows[i + 1].factor;
        t.psnr = quality::paired_t_test(report.rows[i].psnr, report.rows[i + 1].psnr,
                                        quality::Tails::one, quality::Alternative::greater);
        t.lpips = quality::paired_t_test(report.rows[i].lpips, report.rows[i + 1].lpips,
                                         quality::Tails::one, quality::Alternative::less);
        report.tests.push_back(t);
    }
    if (report.rows.size() > 2) {
        AblationReport::Test t;
        t.factor_more = report.rows.front().factor;
        t.factor_less = report.rows.back().factor;
        t.psnr = quality::paired_t_test(report.rows.front().psnr, report.rows.back().psnr,
                                        quality::Tails::one, quality::Alternative::greater);
        t.lpips = quality::paired_t_test(report.rows.front().lpips, report.rows.back().lpips,
                                         quality::Tails::one, quality::Alternative::less);
        report.tests.push_back(t);
    }

    std::ofstream f(out_dir + "/ablation.tsv", std::ios::trunc);
    if (!f) throw IoError("cannot write " + out_dir + "/ablation.tsv");
    f << "factor\tchannels\tmean_psnr_db\tmean_lpips_proxy\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    for (const AblationRow& r : report.rows)
        f << r.factor << "\t" << r.k << "\t" << num(r.mean_psnr) << "\t" << num(r.mean_lpips) << "\n";
    for (const auto& t : report.tests)
        f << "#test\tfactor" << t.factor_more << "_vs_factor" << t.factor_less
          << "\tpsnr_one_tailed_p=" << num(t.psnr.p) << "\tlpips_one_tailed_p=" << num(t.lpips.p)
          << "\n";
    return report;
}

/*-------------------------------------- exit sweep -----------------------------------------*/

struct SweepRow {
    std::string strategy;  // "vanilla" or "mean"/"skip"
    double te_fraction = 0;
    int t_e = 0;
    double lpips = 0, fid = 0, niqe = 0;
    std::vector<float> first_fov;  // raw pixels of the first FOV, for equality checks
};

struct SweepReport {
    std::vector<SweepRow> rows;  // vanilla row first, then mean x fractions, skip x fractions
    double reference_fraction = 0.1;
    std::string best_strategy;
    double best_fraction = 0;
};

// fits the NIQE reference model on ground-truth stain patches drawn from both splits
inline quality::MvgModel fit_niqe_reference(const std::string& data_dir, int patch,
                                            int max_patches) {
    const dataio::DatasetManifest manifest = phantom::load_manifest(data_dir);
    std::vector<ImageTensor> patches;
    for (const auto& e : manifest.entries) {
        ImageTensor gray = to_grayscale(
            dataio::tensor_read_image(data_dir + "/" + e.stain_path, 0.f, 255.f));
        for (float& v : gray.data) v /= 255.f;
        for (int y = 0; y + patch <= gray.height && static_cast<int>(patches.size()) < max_patches;
             y += patch)
            for (int x = 0; x + patch <= gray.width &&
                            static_cast<int>(patches.size()) < max_patches;
                 x += patch)
                patches.push_back(dataio::crop(gray, x, y, patch, patch));
        if (static_cast<int>(patches.size()) >= max_patches) break;
    }
    return quality::niqe_fit(patches);
}

inline SweepReport run_sweep(const config::RunConfig& rc, training::Checkpoint& ck,
                             const std::string& data_dir, const std::string& out_dir,
                             std::uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    const auto fractions = rc.evaluation().at("sweep_fractions").get<std::vector<double>>();
    const int T = ck.train_cfg.T;
    const int niqe_patch = rc.evaluation().at("niqe_patch").get<int>();
    const quality::ProxyConvExtractor extractor(
        rc.evaluation().at("extractor_seed").get<std::uint64_t>());
    const quality::MvgModel niqe_ref = fit_niqe_reference(
        data_dir, niqe_patch, rc.evaluation().at("niqe_fit_patches").get<int>());
    const std::vector<TestFov> fovs = load_test_split(data_dir, ck);

    std::vector<std::vector<double>> gt_features;
    for (const TestFov& fov : fovs) gt_features.push_back(extractor.fid_vector(fov.gt01));
    const quality::FeatureGaussian gt_gauss = quality::fit_feature_gaussian(gt_features);

    SweepReport report;
    report.reference_fraction = rc.evaluation().at("reference_optimum_fraction").get<double>();

    auto evaluate_row = [&](sampling::Strategy strategy, double frac) {
        sampling::SamplingConfig scfg = rc.sampling_config(T, seed);
        scfg.strategy = strategy;
        scfg.t_e = static_cast<int>(round_half_away(frac * T));
        const std::vector<SampledFov> preds = sample_split(ck, fovs, scfg);
        SweepRow row;
        row.strategy = sampling::strategy_name(strategy);
        row.te_fraction = frac;
        row.t_e = scfg.t_e;
        std::vector<std::vector<double>> features;
        for (size_t i = 0; i < fovs.size(); ++i) {
            row.lpips += quality::perceptual_distance(fovs[i].gt01, preds[i].out01, extractor);
            row.niqe += quality::niqe_score(to_grayscale(preds[i].out01), niqe_ref, niqe_patch);
            features.push_back(extractor.fid_vector(preds[i].out01));
        }
        row.lpips /= fovs.size();
        row.niqe /= fovs.size();
        row.fid = quality::fid(gt_gauss, quality::fit_feature_gaussian(features));
        row.first_fov = preds[0].out01.data;
        return row;
    };

    report.rows.push_back(evaluate_row(sampling::Strategy::vanilla, 0.0));
    report.rows[0].strategy = "vanilla";
    for (sampling::Strategy s : {sampling::Strategy::mean, sampling::Strategy::skip})
        for (double frac : fractions) report.rows.push_back(evaluate_row(s, frac));

    double best = std::numeric_limits<double>::infinity();
    for (const SweepRow& r : report.rows) {
        if (r.strategy == "vanilla") continue;
        if (r.lpips < best) {
            best = r.lpips;
            report.best_strategy = r.strategy;
            report.best_fraction = r.te_fraction;
        }
    }

    std::ofstream f(out_dir + "/sweep.tsv", std::ios::trunc);
    if (!f) throw IoError("cannot write " + out_dir + "/sweep.tsv");
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    f << "#reference_optimum\tte_fraction=" << num(report.reference_fraction)
      << "\t(reported optimum t_e ~ 10 of 100)\n";
    f << "#measured_optimum\tstrategy=" << report.best_strategy
      << "\tte_fraction=" << num(report.best_fraction) << "\n";
    f << "strategy\tte_fraction\tt_e\tlpips_proxy\tfid_proxy\tniqe_style\n";
    for (const SweepRow& r : report.rows)
        f << r.strategy << "\t" << num(r.te_fraction) << "\t" << r.t_e << "\t" << num(r.lpips)
          << "\t" << num(r.fid) << "\t" << num(r.niqe) << "\n";
    return report;
}

/*------------------------------------ CV repeatability -------------------------------------*/

struct CvReport {
    // strategy -> mean CV per YCbCr channel, averaged over FOVs
    std::vector<std::pair<std::string, std::array<double, 3>>> summary;
};

inline CvReport run_cv(const config::RunConfig& rc, training::Checkpoint& ck,
                       const std::string& data_dir, const std::string& out_dir,
                       std::uint64_t seed) {
    std::filesystem::create_directories(out_dir + "/cv_maps");
    const int R = rc.evaluation().at("cv_repeats").get<int>();
    VSTAIN_REQUIRE(R >= 2, "run_cv: need at least 2 repeats");
    const int T = ck.train_cfg.T;
    const bridge::BridgeSchedule sched = bridge::build_schedule(T, ck.train_cfg.s);
    const std::vector<TestFov> fovs = load_test_split(data_dir, ck);

    std::vector<sampling::Strategy> strategies = {sampling::Strategy::vanilla,
                                                  sampling::Strategy::mean,
                                                  sampling::Strategy::skip};
    if (rc.evaluation().at("cv_include_average").get<bool>())
        strategies.push_back(sampling::Strategy::average);

    CvReport report;
    for (sampling::Strategy strategy : strategies) {
        sampling::SamplingConfig scfg = rc.sampling_config(T, seed);
        scfg.strategy = strategy;
        std::array<double, 3> acc{};
        for (const TestFov& fov : fovs) {
            std::vector<ImageTensor> repeats;
            for (int r = 0; r < R; ++r) {
                const sampling::SampleResult res =
                    sampling::sample(*ck.model, sched, fov.ions_ready, scfg, r);
                repeats.push_back(quality::rgb_to_ycbcr(unit_from_sample(res.out)));
            }
            const ImageTensor map = quality::cv_map(repeats);
            dataio::tensor_write(out_dir + "/cv_maps/" +
                                     std::string(sampling::strategy_name(strategy)) + "_" + fov.id +
                                     ".vstn",
                                 map);
            const std::array<double, 3> per_channel = quality::mean_cv_per_channel(map);
            for (int c = 0; c < 3; ++c) acc[c] += per_channel[c];
        }
        for (int c = 0; c < 3; ++c) acc[c] /= fovs.size();
        report.summary.emplace_back(sampling::strategy_name(strategy), acc);
    }

    std::ofstream f(out_dir + "/cv_summary.tsv", std::ios::trunc);
    if (!f) throw IoError("cannot write " + out_dir + "/cv_summary.tsv");
    f << "strategy\tchannel\tmean_cv\n";
    char buf[64];
    const char* channels[3] = {"Y", "Cb", "Cr"};
    for (const auto& [name, values] : report.summary)
        for (int c = 0; c < 3; ++c) {
            std::snprintf(buf, sizeof(buf), "%.9g", values[c]);
            f << name << "\t" << channels[c] << "\t" << buf << "\n";
        }
    return report;
}

/*------------------------------------ radial spectrum --------------------------------------*/

struct SpectrumReport {
    int channel = 0;
    std::vector<double> input, prediction, ground_truth;  // radial bins
};

// Fig. 3(d) analog: the single ion channel with the highest image contrast,
// bilinearly upsampled 10x, against the grayscale prediction and ground truth.
inline SpectrumReport run_spectrum(const std::string& data_dir, const std::string& pred_dir,
                                   int channel, const std::string& out_path) {
    const dataio::DatasetManifest manifest = phantom::load_manifest(data_dir);
    const auto test = manifest.split("test");
    VSTAIN_REQUIRE(!test.empty(), "run_spectrum: dataset has no test entries");
    const dataio::DatasetEntry& e = *test.front();
    const ImageTensor ions = dataio::tensor_read_image(data_dir + "/" + e.ions_path, 0.f, 64.f);
    if (channel < 0) {
        double best = -1;
        for (int c = 0; c < ions.channels; ++c) {
            ImageTensor plane = dataio::take_channels(ions, {c});
            const double score = quality::contrast(plane);
            if (score > best) {
                best = score;
                channel = c;
            }
        }
    }
    VSTAIN_REQUIRE(channel >= 0 && channel < ions.channels, "run_spectrum: channel out of range");

    ImageTensor plane = dataio::take_channels(ions, {channel});
    float lo = plane.data[0], hi = plane.data[0];
    for (float v : plane.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (float& v : plane.data) v = hi > lo ? (v - lo) / (hi - lo) : 0.f;
    const ImageTensor upsampled = quality::bilinear_upsample(plane, 10);

    ImageTensor gt = to_grayscale(dataio::tensor_read_image(data_dir + "/" + e.stain_path, 0.f, 255.f));
    for (float& v : gt.data) v /= 255.f;
    const std::string raw_path = pred_dir + "/" + e.id + ".raw.vstn";
    if (!std::filesystem::exists(raw_path)) throw IoError("no prediction " + raw_path);
    const ImageTensor pred =
        to_grayscale(unit_from_sample(dataio::tensor_read_image(raw_path, -1.f, 1.f)));

    SpectrumReport report;
    report.channel = channel;
    report.input = quality::radial_power_spectrum(upsampled);
    report.prediction = quality::radial_power_spectrum(pred);
    report.ground_truth = quality::radial_power_spectrum(gt);

    if (!out_path.empty()) {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw IoError("cannot write " + out_path);
        f << "#channel\t" << channel << "\n";
        f << "r\tinput_upsampled\tprediction\tground_truth\n";
        char buf[64];
        auto num = [&](double v) {
            std::snprintf(buf, sizeof(buf), "%.9g", v);
            return std::string(buf);
        };
        for (size_t r = 0; r < report.input.size(); ++r)
            f << r << "\t" << num(report.input[r]) << "\t" << num(report.prediction[r]) << "\t"
              << num(report.ground_truth[r]) << "\n";
    }
    return report;
}

} // namespace vstain::studies

#endif
