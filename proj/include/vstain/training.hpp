#ifndef VSTAIN_TRAINING_HPP
#define VSTAIN_TRAINING_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "vstain/core.hpp"
#include "vstain/dataio.hpp"
#include "vstain/model.hpp"
#include "vstain/phantom.hpp"
#include "vstain/schedule.hpp"

namespace vstain::training {

struct TrainConfig {
    int T = 200;
    double s = 1.0;
    int batch = 4;
    double lr = 1e-4;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int steps = 2000;
    int crop = 160;  // high-res crop size, multiple of 10
    int checkpoint_interval = 1000;
    int reduction_factor = 1;  // SNR channel reduction; 1 keeps all channels
    bool tic = false;
    bool augment = true;  // dihedral augmentation of training crops
    std::uint64_t seed = 0;

    void validate() const {
        VSTAIN_REQUIRE(T >= 2 && s > 0, "TrainConfig: invalid schedule");
        VSTAIN_REQUIRE(batch >= 1 && steps >= 0 && checkpoint_interval >= 1,
                       "TrainConfig: counts must be positive");
        VSTAIN_REQUIRE(lr >= 0 && weight_decay >= 0, "TrainConfig: rates must be nonnegative");
        VSTAIN_REQUIRE(crop >= 10 && crop % 10 == 0, "TrainConfig: crop must be a multiple of 10");
        VSTAIN_REQUIRE(reduction_factor >= 1, "TrainConfig: reduction factor must be >= 1");
    }
};

/*------------------------------------- normalization --------------------------------------*/

// per-channel standardization over the training split, reused verbatim at
// sampling and evaluation time via the checkpoint
struct Normalization {
    std::vector<float> mean;
    std::vector<float> stdev;
};

inline ImageTensor standardize(const ImageTensor& ions, const Normalization& norm) {
    VSTAIN_REQUIRE(ions.channels == static_cast<int>(norm.mean.size()),
                   "standardize: channel mismatch");
    ImageTensor out = ions;
    const size_t n = out.plane();
    for (int c = 0; c < out.channels; ++c) {
        const float m = norm.mean[c];
        const float sd = norm.stdev[c];
        float* p = out.data.data() + c * n;
        for (size_t i = 0; i < n; ++i) p[i] = (p[i] - m) / sd;
    }
    return out;
}

inline ImageTensor stain_to_unit(const ImageTensor& stain255) {
    ImageTensor out(stain255.channels, stain255.height, stain255.width, -1.f, 1.f);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = stain255.data[i] / 127.5f - 1.f;
    return out;
}

inline ImageTensor stain_from_unit(const ImageTensor& unit) {
    ImageTensor out(unit.channels, unit.height, unit.width, 0.f, 255.f);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = clamp((unit.data[i] + 1.f) * 127.5f, 0.f, 255.f);
    return out;
}

// pooled over all pixels of all images; same mean/(popstd+guard) rule as the
// per-image channel_snr
inline std::vector<double> pooled_channel_snr(const std::vector<ImageTensor>& ions) {
    VSTAIN_REQUIRE(!ions.empty(), "pooled_channel_snr: empty set");
    const int C = ions[0].channels;
    std::vector<double> sum(C, 0), sum2(C, 0);
    std::uint64_t n = 0;
    for (const ImageTensor& img : ions) {
        VSTAIN_REQUIRE(img.channels == C, "pooled_channel_snr: channel mismatch");
        const size_t plane = img.plane();
        for (int c = 0; c < C; ++c) {
            const float* p = img.data.data() + c * plane;
            for (size_t i = 0; i < plane; ++i) {
                sum[c] += p[i];
                sum2[c] += double(p[i]) * p[i];
            }
        }
        n += plane;
    }
    std::vector<double> scores(C);
    for (int c = 0; c < C; ++c) {
        const double mean = sum[c] / n;
        const double var = std::max(0.0, sum2[c] / n - mean * mean);
        scores[c] = mean / (std::sqrt(var) + 1e-12);
    }
    return scores;
}

inline Normalization fit_normalization(const std::vector<ImageTensor>& ions) {
    const int C = ions[0].channels;
    std::vector<double> sum(C, 0), sum2(C, 0);
    std::uint64_t n = 0;
    for (const ImageTensor& img : ions) {
        const size_t plane = img.plane();
        for (int c = 0; c < C; ++c) {
            const float* p = img.data.data() + c * plane;
            for (size_t i = 0; i < plane; ++i) {
                sum[c] += p[i];
                sum2[c] += double(p[i]) * p[i];
            }
        }
        n += plane;
    }
    Normalization norm;
    norm.mean.resize(C);
    norm.stdev.resize(C);
    for (int c = 0; c < C; ++c) {
        const double mean = sum[c] / n;
        const double var = std::max(0.0, sum2[c] / n - mean * mean);
        norm.mean[c] = static_cast<float>(mean);
        norm.stdev[c] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
    }
    return norm;
}

/*------------------------------------------ loss -------------------------------------------*/

// the denoising target: D should equal x_t - x0
template <typename S>
inline S mse_to_target(const nn::Tensor3<S>& D, const nn::Tensor3<S>& x_t,
                       const nn::Tensor3<S>& x0) {
    VSTAIN_REQUIRE(D.same_shape(x_t) && D.same_shape(x0), "mse_to_target: shape mismatch");
    S acc = S(0);
    for (size_t i = 0; i < D.v.size(); ++i) {
        const S d = D.v[i] - (x_t.v[i] - x0.v[i]);
        acc += d * d;
    }
    return acc / static_cast<S>(D.v.size());
}

namespace detail {
enum Stream : std::uint64_t {
    kTrain = 301,
    kFieldSample = 1,
    kFieldCropX = 2,
    kFieldCropY = 3,
    kFieldAug = 4,
    kFieldT = 5,
    kFieldNoise = 6,
};
} // namespace detail

template <typename S>
struct BatchItem {
    nn::Tensor3<S> ions;  // selected + standardized
    nn::Tensor3<S> x0;    // stain in [-1, 1]
};

// Mean squared error between the denoiser output and x_t - x0 over the batch.
// Gradients flow to the conditioner through the bridge state, through the
// conditioning input and through the target itself.
template <typename S>
S loss_and_grads(model::ModelT<S>& m, const bridge::BridgeSchedule& sched,
                 const std::vector<BatchItem<S>>& batch, std::uint64_t seed, int step,
                 bool backward, const std::vector<int>* forced_t = nullptr) {
    VSTAIN_REQUIRE(!batch.empty(), "loss: batch must be nonempty");
    S total = S(0);
    const size_t numel = batch[0].x0.v.size();
    const S inv_n = S(1) / static_cast<S>(batch.size() * numel);
    for (size_t slot = 0; slot < batch.size(); ++slot) {
        const BatchItem<S>& item = batch[slot];
        VSTAIN_REQUIRE(item.x0.v.size() == numel, "loss: ragged batch");
        const Rng r = Rng(seed).fork(detail::kTrain).fork(step).fork(slot);
        const int t = forced_t ? (*forced_t)[slot]
                               : 1 + static_cast<int>(r.below(detail::kFieldT, sched.T));

        nn::Tensor3<S> x_T = m.conditioner.forward(item.ions);
        VSTAIN_REQUIRE(x_T.same_shape(item.x0), "loss: conditioner output/stain shape mismatch");

        const double mt = sched.m[t];
        const double sd = std::sqrt(sched.delta[t]);
        const Rng noise = r.fork(detail::kFieldNoise);
        nn::Tensor3<S> x_t(x_T.c, x_T.h, x_T.w);
        for (size_t i = 0; i < numel; ++i)
            x_t.v[i] = static_cast<S>((1.0 - mt) * item.x0.v[i] + mt * x_T.v[i] +
                                      sd * noise.gaussian(i));

        nn::Tensor3<S> D = m.denoiser.forward(x_t, x_T, t, sched.T);
        S acc = S(0);
        for (size_t i = 0; i < numel; ++i) {
            const S diff = D.v[i] - (x_t.v[i] - item.x0.v[i]);
            acc += diff * diff;
        }
        total += acc * inv_n;

        if (backward) {
            nn::Tensor3<S> gD(D.c, D.h, D.w);
            for (size_t i = 0; i < numel; ++i)
                gD.v[i] = S(2) * (D.v[i] - (x_t.v[i] - item.x0.v[i])) * inv_n;
            auto [dx_t, dx_T] = m.denoiser.backward(gD);
            // target = x_t - x0 contributes -gD to dL/dx_t
            for (size_t i = 0; i < numel; ++i) dx_t.v[i] -= gD.v[i];
            // x_t depends on x_T with weight m_t
            for (size_t i = 0; i < numel; ++i)
                dx_T.v[i] += static_cast<S>(mt) * dx_t.v[i];
            m.conditioner.backward(dx_T);
        }
    }
    return total;
}

/*----------------------------------------- AdamW ------------------------------------------*/

struct AdamW {
    std::vector<std::vector<float>> m, v;
    std::int64_t step = 0;

    void init(nn::ParamList<float>& params) {
        m.clear();
        v.clear();
        for (auto* p : params) {
            m.emplace_back(p->size(), 0.f);
            v.emplace_back(p->size(), 0.f);
        }
        step = 0;
    }

    // decoupled weight decay applied uniformly to all parameters
    void update(nn::ParamList<float>& params, const TrainConfig& cfg) {
        VSTAIN_REQUIRE(m.size() == params.size(), "AdamW: state/param mismatch");
        ++step;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        for (size_t pi = 0; pi < params.size(); ++pi) {
            nn::Param<float>& p = *params[pi];
            float* mm = m[pi].data();
            float* vv = v[pi].data();
            for (size_t i = 0; i < p.size(); ++i) {
                const double g = p.g[i];
                mm[i] = static_cast<float>(cfg.beta1 * mm[i] + (1.0 - cfg.beta1) * g);
                vv[i] = static_cast<float>(cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * g * g);
                const double mhat = mm[i] / bc1;
                const double vhat = vv[i] / bc2;
                p.w[i] = static_cast<float>(
                    p.w[i] - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                       cfg.weight_decay * p.w[i]));
            }
        }
    }
};

/*--------------------------------------- checkpoint ---------------------------------------*/

struct Checkpoint {
    model::ConditionerConfig cond_cfg;
    model::DenoiserConfig den_cfg;
    std::unique_ptr<model::Model> model;
    AdamW opt;
    TrainConfig train_cfg;
    dataio::ChannelManifest channels;
    Normalization norm;
    int step = 0;
};

namespace detail {

inline nlohmann::json cond_to_json(const model::ConditionerConfig& c) {
    return {{"in_channels", c.in_channels},
            {"hidden_channels", c.hidden_channels},
            {"upsample_factor", c.upsample_factor},
            {"out_channels", c.out_channels},
            {"shuffle_stages", c.shuffle_stages}};
}

inline model::ConditionerConfig cond_from_json(const nlohmann::json& j) {
    model::ConditionerConfig c;
    c.in_channels = j.at("in_channels");
    c.hidden_channels = j.at("hidden_channels");
    c.upsample_factor = j.at("upsample_factor");
    c.out_channels = j.at("out_channels");
    c.shuffle_stages = j.at("shuffle_stages").get<std::vector<int>>();
    return c;
}

inline nlohmann::json den_to_json(const model::DenoiserConfig& c) {
    return {{"in_image_channels", c.in_image_channels},
            {"base_channels", c.base_channels},
            {"channel_multipliers", c.channel_multipliers},
            {"attention_levels", c.attention_levels},
            {"time_embed_dim", c.time_embed_dim},
            {"res_blocks_per_level", c.res_blocks_per_level},
            {"groups", c.groups}};
}

inline model::DenoiserConfig den_from_json(const nlohmann::json& j) {
    model::DenoiserConfig c;
    c.in_image_channels = j.at("in_image_channels");
    c.base_channels = j.at("base_channels");
    c.channel_multipliers = j.at("channel_multipliers").get<std::vector<int>>();
    c.attention_levels = j.at("attention_levels").get<std::vector<int>>();
    c.time_embed_dim = j.at("time_embed_dim");
    c.res_blocks_per_level = j.at("res_blocks_per_level");
    c.groups = j.at("groups");
    return c;
}

inline nlohmann::json train_to_json(const TrainConfig& c) {
    return {{"T", c.T},
            {"s", c.s},
            {"batch", c.batch},
            {"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"steps", c.steps},
            {"crop", c.crop},
            {"checkpoint_interval", c.checkpoint_interval},
            {"reduction_factor", c.reduction_factor},
            {"tic", c.tic},
            {"augment", c.augment},
            {"seed", c.seed}};
}

inline TrainConfig train_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.T = j.at("T");
    c.s = j.at("s");
    c.batch = j.at("batch");
    c.lr = j.at("lr");
    c.weight_decay = j.at("weight_decay");
    c.beta1 = j.at("beta1");
    c.beta2 = j.at("beta2");
    c.eps = j.at("eps");
    c.steps = j.at("steps");
    c.crop = j.at("crop");
    c.checkpoint_interval = j.at("checkpoint_interval");
    c.reduction_factor = j.at("reduction_factor");
    c.tic = j.at("tic");
    c.augment = j.value("augment", true);
    c.seed = j.at("seed");
    return c;
}

inline void append_f32(std::vector<std::uint8_t>& blob, const std::vector<float>& v) {
    const size_t base = blob.size();
    blob.resize(base + 4 * v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &v[i], 4);
        dataio::detail::store_u32le(blob.data() + base + 4 * i, bits);
    }
}

inline void read_f32(const std::vector<std::uint8_t>& blob, size_t offset, std::vector<float>& v) {
    for (size_t i = 0; i < v.size(); ++i) {
        const std::uint32_t bits = dataio::detail::load_u32le(blob.data() + offset + 4 * i);
        std::memcpy(&v[i], &bits, 4);
    }
}

} // namespace detail

// Directory layout: manifest.json (tensor names, shapes, dtype, byte offsets,
// configs, channel subset, normalization, seed lineage) + weights.bin, one
// little-endian f32 blob. Round-trip is bit-exact.
inline void save_checkpoint(const std::string& dir, model::Model& m, const AdamW& opt,
                            const TrainConfig& cfg, const dataio::ChannelManifest& channels,
                            const Normalization& norm, int step) {
    std::filesystem::create_directories(dir);
    nn::ParamList<float> params = m.params();
    VSTAIN_REQUIRE(opt.m.size() == params.size(), "save_checkpoint: optimizer state mismatch");

    std::vector<std::uint8_t> blob;
    nlohmann::json tensors = nlohmann::json::array();
    auto emit = [&](const std::string& name, const std::vector<int>& shape,
                    const std::vector<float>& data) {
        tensors.push_back({{"name", name},
                           {"shape", shape},
                           {"dtype", "f32"},
                           {"offset", blob.size()},
                           {"count", data.size()}});
        detail::append_f32(blob, data);
    };
    for (auto* p : params) emit("param:" + p->name, p->shape, p->w);
    for (size_t i = 0; i < params.size(); ++i)
        emit("opt.m:" + params[i]->name, params[i]->shape, opt.m[i]);
    for (size_t i = 0; i < params.size(); ++i)
        emit("opt.v:" + params[i]->name, params[i]->shape, opt.v[i]);

    nlohmann::json j;
    j["format_version"] = 1;
    j["tensors"] = tensors;
    j["step"] = step;
    j["adam_step"] = opt.step;
    j["train_config"] = detail::train_to_json(cfg);
    j["conditioner"] = detail::cond_to_json(m.cond_cfg);
    j["denoiser"] = detail::den_to_json(m.den_cfg);
    nlohmann::json ranked = nlohmann::json::array();
    for (const auto& [idx, snr] : channels.ranked) ranked.push_back({{"index", idx}, {"snr", snr}});
    j["channels"] = {{"ranked", ranked}, {"selected", channels.selected}};
    j["normalization"] = {{"mean", norm.mean}, {"std", norm.stdev}};
    j["seed_lineage"] = {{"base_seed", cfg.seed}, {"stream", "counter-rng fork(train, step, slot)"}};

    std::ofstream mf(dir + "/manifest.json", std::ios::trunc);
    if (!mf) throw IoError("cannot write " + dir + "/manifest.json");
    mf << j.dump(2) << "\n";
    std::ofstream bf(dir + "/weights.bin", std::ios::binary | std::ios::trunc);
    if (!bf) throw IoError("cannot write " + dir + "/weights.bin");
    bf.write(reinterpret_cast<const char*>(blob.data()), blob.size());
    if (!bf) throw IoError("short write: " + dir + "/weights.bin");
}

inline Checkpoint load_checkpoint(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw IoError("cannot open " + dir + "/manifest.json");
    nlohmann::json j;
    try {
        mf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(dir + "/manifest.json: " + e.what());
    }
    std::ifstream bf(dir + "/weights.bin", std::ios::binary);
    if (!bf) throw IoError("cannot open " + dir + "/weights.bin");
    std::vector<std::uint8_t> blob(std::istreambuf_iterator<char>(bf), {});

    Checkpoint ck;
    ck.cond_cfg = detail::cond_from_json(j.at("conditioner"));
    ck.den_cfg = detail::den_from_json(j.at("denoiser"));
    ck.train_cfg = detail::train_from_json(j.at("train_config"));
    ck.step = j.at("step");
    ck.model = std::make_unique<model::Model>(ck.cond_cfg, ck.den_cfg);
    nn::ParamList<float> params = ck.model->params();
    ck.opt.init(params);
    ck.opt.step = j.at("adam_step");

    std::map<std::string, std::pair<size_t, size_t>> index;  // name -> (offset, count)
    for (const auto& t : j.at("tensors"))
        index[t.at("name")] = {t.at("offset").get<size_t>(), t.at("count").get<size_t>()};
    auto fetch = [&](const std::string& name, std::vector<float>& into) {
        const auto it = index.find(name);
        if (it == index.end()) throw IoError(dir + ": checkpoint missing tensor " + name);
        if (it->second.second != into.size())
            throw IoError(dir + ": tensor size mismatch for " + name);
        if (it->second.first + 4 * into.size() > blob.size())
            throw IoError(dir + ": blob truncated at " + name, it->second.first);
        detail::read_f32(blob, it->second.first, into);
    };
    for (size_t i = 0; i < params.size(); ++i) {
        fetch("param:" + params[i]->name, params[i]->w);
        fetch("opt.m:" + params[i]->name, ck.opt.m[i]);
        fetch("opt.v:" + params[i]->name, ck.opt.v[i]);
    }
    for (const auto& r : j.at("channels").at("ranked"))
        ck.channels.ranked.emplace_back(r.at("index").get<int>(), r.at("snr").get<double>());
    ck.channels.selected = j.at("channels").at("selected").get<std::vector<int>>();
    ck.norm.mean = j.at("normalization").at("mean").get<std::vector<float>>();
    ck.norm.stdev = j.at("normalization").at("std").get<std::vector<float>>();
    return ck;
}

/*--------------------------------------- train loop ---------------------------------------*/

struct LoadedData {
    std::vector<phantom::PairedSample> train;
    std::vector<phantom::PairedSample> test;
};

inline LoadedData load_dataset(const std::string& dir) {
    const dataio::DatasetManifest manifest = phantom::load_manifest(dir);
    LoadedData data;
    for (const auto& e : manifest.entries) {
        phantom::PairedSample s = phantom::load_sample(dir, e);
        (e.split == "test" ? data.test : data.train).push_back(std::move(s));
    }
    VSTAIN_REQUIRE(!data.train.empty(), "load_dataset: no training samples");
    return data;
}

// Channel selection and standardization fitted on the training split only.
struct Pipeline {
    dataio::ChannelManifest channels;
    Normalization norm;
    bool tic = false;

    ImageTensor prepare(const ImageTensor& raw_ions) const {
        ImageTensor x = tic ? dataio::tic_normalize(raw_ions) : raw_ions;
        x = dataio::take_channels(x, channels.selected);
        return standardize(x, norm);
    }
};

inline Pipeline fit_pipeline(const std::vector<phantom::PairedSample>& train, int reduction_factor,
                             bool tic) {
    Pipeline pipe;
    pipe.tic = tic;
    std::vector<ImageTensor> ions;
    ions.reserve(train.size());
    for (const auto& s : train) ions.push_back(tic ? dataio::tic_normalize(s.ions) : s.ions);
    pipe.channels = dataio::select_top_k(dataio::rank_channels(pooled_channel_snr(ions)),
                                         reduction_factor);
    std::vector<ImageTensor> selected;
    selected.reserve(ions.size());
    for (const auto& img : ions) selected.push_back(dataio::take_channels(img, pipe.channels.selected));
    pipe.norm = fit_normalization(selected);
    return pipe;
}

struct TrainResult {
    std::string final_dir;
    std::vector<double> losses;  // one entry per step
};

// Core loop shared by train() and callers that build their own model configs.
inline TrainResult train_prepared(const TrainConfig& cfg, const LoadedData& data, Checkpoint& ck,
                                  const std::string& out_dir, int start_step = 0) {
    cfg.validate();
    const bridge::BridgeSchedule sched = bridge::build_schedule(cfg.T, cfg.s);
    std::filesystem::create_directories(out_dir);
    const int crop_hi = cfg.crop;
    const int crop_ion = crop_hi / 10;

    Pipeline pipe;
    pipe.channels = ck.channels;
    pipe.norm = ck.norm;
    pipe.tic = cfg.tic;

    // bake prepared tensors once; crops are cut per step
    std::vector<BatchItem<float>> prepared(data.train.size());
    for (size_t i = 0; i < data.train.size(); ++i) {
        prepared[i].ions = nn::from_image<float>(pipe.prepare(data.train[i].ions));
        prepared[i].x0 = nn::from_image<float>(stain_to_unit(data.train[i].stain));
    }

    std::ofstream log(out_dir + "/loss.tsv", start_step == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot write " + out_dir + "/loss.tsv");

    nn::ParamList<float> params = ck.model->params();
    TrainResult result;
    for (int step = start_step + 1; step <= cfg.steps; ++step) {
        std::vector<BatchItem<float>> batch(cfg.batch);
        for (int slot = 0; slot < cfg.batch; ++slot) {
            const Rng r = Rng(cfg.seed).fork(detail::kTrain).fork(step).fork(slot);
            const size_t si = r.below(detail::kFieldSample, prepared.size());
            const BatchItem<float>& src = prepared[si];
            const int ion_h = src.ions.h, ion_w = src.ions.w;
            const int ox = static_cast<int>(r.below(detail::kFieldCropX, ion_w - crop_ion + 1));
            const int oy = static_cast<int>(r.below(detail::kFieldCropY, ion_h - crop_ion + 1));
            const int aug = cfg.augment ? static_cast<int>(r.below(detail::kFieldAug, 8)) : 0;

            dataio::TilePair tile;
            tile.ions = dataio::crop(nn::to_image(src.ions, 0.f, 1.f), ox, oy, crop_ion, crop_ion);
            tile.stain = dataio::crop(nn::to_image(src.x0, -1.f, 1.f), 10 * ox, 10 * oy, crop_hi, crop_hi);
            tile = dataio::augment(tile, aug);
            batch[slot].ions = nn::from_image<float>(tile.ions);
            batch[slot].x0 = nn::from_image<float>(tile.stain);
        }
        ck.model->zero_grads();
        const float loss = loss_and_grads(*ck.model, sched, batch, cfg.seed, step, true);
        if (!std::isfinite(loss))
            throw NumericError("training diverged at step " + std::to_string(step));
        ck.opt.update(params, cfg);
        char row[64];
        std::snprintf(row, sizeof(row), "%d\t%.9g\n", step, static_cast<double>(loss));
        log << row;
        result.losses.push_back(loss);
        if (step % cfg.checkpoint_interval == 0 && step != cfg.steps) {
            char name[32];
            std::snprintf(name, sizeof(name), "step_%06d", step);
            save_checkpoint(out_dir + "/" + name, *ck.model, ck.opt, cfg, ck.channels, ck.norm, step);
        }
    }
    log.flush();
    result.final_dir = out_dir + "/final";
    save_checkpoint(result.final_dir, *ck.model, ck.opt, cfg, ck.channels, ck.norm, cfg.steps);
    return result;
}

// Runs the loop with per-step seeded crops/augmentation, writes periodic
// checkpoints plus loss.tsv (step<TAB>loss, one row per step). The
// conditioner template's in_channels is replaced by the fitted selection.
inline TrainResult train(const TrainConfig& cfg, const std::string& data_dir,
                         const std::string& out_dir, const std::string& resume_dir = "",
                         const model::ConditionerConfig* cond_template = nullptr,
                         const model::DenoiserConfig* den_override = nullptr) {
    cfg.validate();
    const LoadedData data = load_dataset(data_dir);
    for (const auto& s : data.train)
        VSTAIN_REQUIRE(s.stain.height >= cfg.crop && s.stain.width >= cfg.crop,
                       "train: crop larger than sample");

    Checkpoint ck;
    int start_step = 0;
    if (!resume_dir.empty()) {
        ck = load_checkpoint(resume_dir);
        start_step = ck.step;
    } else {
        const Pipeline pipe = fit_pipeline(data.train, cfg.reduction_factor, cfg.tic);
        model::ConditionerConfig cc = cond_template ? *cond_template : model::ConditionerConfig{};
        cc.in_channels = static_cast<int>(pipe.channels.selected.size());
        model::DenoiserConfig dc = den_override ? *den_override : model::DenoiserConfig{};
        ck.cond_cfg = cc;
        ck.den_cfg = dc;
        ck.model = std::make_unique<model::Model>(cc, dc);
        ck.model->init(cfg.seed);
        nn::ParamList<float> params = ck.model->params();
        ck.opt.init(params);
        ck.channels = pipe.channels;
        ck.norm = pipe.norm;
    }
    return train_prepared(cfg, data, ck, out_dir, start_step);
}

} // namespace vstain::training

#endif
