#ifndef VSTAIN_PHANTOM_HPP
#define VSTAIN_PHANTOM_HPP

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vstain/core.hpp"
#include "vstain/dataio.hpp"
#include "vstain/rng.hpp"

namespace vstain::phantom {

// Label codes shared with the stain palette and the evaluation tooling.
enum Label : std::uint8_t {
    kBackground = 0,
    kGlomerulus = 1,
    kProximal = 2,
    kDistal = 3,
    kNucleus = 4,
    kLumen = 5,
};
constexpr int kLabelCount = 6;
constexpr int kScale = 10;  // stain resolution is 10x the ion resolution

struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> codes;

    std::uint8_t& at(int y, int x) { return codes[static_cast<size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return codes[static_cast<size_t>(y) * width + x]; }
};

struct PhantomConfig {
    int height = 160;  // high-res, multiples of 10
    int width = 160;
    int channels = 16;
    // structure counts per 10^4 high-res pixels
    double glomerulus_density = 0.5;
    double proximal_density = 3.0;
    double distal_density = 2.0;
    double nucleus_density = 45.0;
    std::vector<double> noise_levels;  // per channel; empty -> log-spaced default
    double blur_sigma = 3.0;           // high-res px, applied to structure indicators
    std::uint64_t seed = 1;

    void validate() const {
        VSTAIN_REQUIRE(height >= kScale && width >= kScale, "PhantomConfig: image too small");
        VSTAIN_REQUIRE(height % kScale == 0 && width % kScale == 0,
                       "PhantomConfig: dims must be divisible by 10");
        VSTAIN_REQUIRE(channels >= 1, "PhantomConfig: need at least one channel");
        VSTAIN_REQUIRE(glomerulus_density >= 0 && proximal_density >= 0 && distal_density >= 0 &&
                           nucleus_density >= 0,
                       "PhantomConfig: densities must be nonnegative");
        VSTAIN_REQUIRE(blur_sigma >= 0, "PhantomConfig: blur width must be nonnegative");
        for (double v : noise_levels)
            VSTAIN_REQUIRE(v >= 0, "PhantomConfig: noise levels must be nonnegative");
        VSTAIN_REQUIRE(noise_levels.empty() || noise_levels.size() == 1 ||
                           static_cast<int>(noise_levels.size()) == channels,
                       "PhantomConfig: noise level count must be 1 or match channels");
    }

    // log-spaced 0.05 .. 2.0: early channels nearly clean, late ones noise-dominated
    std::vector<double> resolved_noise() const {
        std::vector<double> out(channels);
        if (!noise_levels.empty()) {
            for (int c = 0; c < channels; ++c)
                out[c] = noise_levels.size() == 1 ? noise_levels[0] : noise_levels[c];
            return out;
        }
        const double lo = std::log(0.05), hi = std::log(2.0);
        for (int c = 0; c < channels; ++c) {
            const double f = channels == 1 ? 0.0 : static_cast<double>(c) / (channels - 1);
            out[c] = std::exp(lo + f * (hi - lo));
        }
        return out;
    }
};

struct PairedSample {
    ImageTensor ions;   // C x H/10 x W/10
    ImageTensor stain;  // 3 x H x W in [0, 255]
    LabelMap labels;    // H x W, codes 0..5
};

// exposed for the linear-mixing recoverability check and generator tests
struct PhantomInternals {
    std::vector<std::vector<double>> signatures;    // [label][channel]
    std::vector<std::vector<float>> blurred_masks;  // [label][H*W]
    ImageTensor noiseless_ions;                     // C x H/10 x W/10, before channel noise
};

namespace detail {

// PAS-like palette; artifact constants, not values from any dataset
inline const std::array<std::array<float, 3>, kLabelCount>& palette() {
    static const std::array<std::array<float, 3>, kLabelCount> p = {{
        {228.f, 205.f, 212.f},  // interstitium: pale pink
        {172.f, 96.f, 146.f},   // glomerular tuft: magenta
        {196.f, 126.f, 158.f},  // proximal wall: darker pink
        {208.f, 152.f, 176.f},  // distal wall: lighter pink
        {72.f, 42.f, 110.f},    // nucleus: dark purple
        {246.f, 242.f, 246.f},  // lumen / Bowman space: near white
    }};
    return p;
}

inline void fill_disk(LabelMap& map, double cx, double cy, double r, std::uint8_t code) {
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int y1 = std::min(map.height - 1, static_cast<int>(std::ceil(cy + r)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int x1 = std::min(map.width - 1, static_cast<int>(std::ceil(cx + r)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dy = y - cy, dx = x - cx;
            if (dy * dy + dx * dx <= r * r) map.at(y, x) = code;
        }
}

inline void fill_ring(LabelMap& map, double cx, double cy, double outer, double inner,
                      std::uint8_t wall, std::uint8_t interior) {
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - outer)));
    const int y1 = std::min(map.height - 1, static_cast<int>(std::ceil(cy + outer)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - outer)));
    const int x1 = std::min(map.width - 1, static_cast<int>(std::ceil(cx + outer)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            if (d2 <= inner * inner)
                map.at(y, x) = interior;
            else if (d2 <= outer * outer)
                map.at(y, x) = wall;
        }
}

// separable Gaussian blur, kernel radius 3*sigma, edge clamped
inline std::vector<float> gaussian_blur(const std::vector<float>& src, int h, int w, double sigma) {
    if (sigma <= 0) return src;
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * r + 1);
    double sum = 0;
    for (int i = -r; i <= r; ++i) {
        kernel[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + r];
    }
    for (double& k : kernel) k /= sum;

    std::vector<float> tmp(src.size()), out(src.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += kernel[i + r] * src[static_cast<size_t>(y) * w + clamp(x + i, 0, w - 1)];
            tmp[static_cast<size_t>(y) * w + x] = static_cast<float>(acc);
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += kernel[i + r] * tmp[static_cast<size_t>(clamp(y + i, 0, h - 1)) * w + x];
            out[static_cast<size_t>(y) * w + x] = static_cast<float>(acc);
        }
    return out;
}

// count per tile jittered by +-50% so tiles vary in structure load
inline int jittered_count(double density, double area, const Rng& rng, std::uint64_t tag) {
    const double base = density * area / 1e4;
    return static_cast<int>(std::floor(base * (0.5 + rng.fork(tag).uniform(0))));
}

enum Stream : std::uint64_t {
    kPlace = 101,
    kSignature = 102,
    kStainNoise = 103,
    kIonNoise = 104,
    kCounts = 105,
};

} // namespace detail

inline PairedSample generate(const PhantomConfig& config, PhantomInternals* internals = nullptr) {
    config.validate();
    const int H = config.height, W = config.width;
    const Rng rng(config.seed);

    // 1) rasterize structures
    LabelMap labels{H, W, std::vector<std::uint8_t>(static_cast<size_t>(H) * W, kBackground)};
    const double area = static_cast<double>(H) * W;
    const Rng counts = rng.fork(detail::kCounts);
    const int n_prox = detail::jittered_count(config.proximal_density, area, counts, 1);
    const int n_dist = detail::jittered_count(config.distal_density, area, counts, 2);
    const int n_glom = detail::jittered_count(config.glomerulus_density, area, counts, 3);
    const int n_nuc = detail::jittered_count(config.nucleus_density, area, counts, 4);

    const Rng place = rng.fork(detail::kPlace);
    std::uint64_t ctr = 0;
    auto u = [&](double lo, double hi) { return lo + (hi - lo) * place.uniform(ctr++); };

    for (int i = 0; i < n_prox; ++i) {
        const double cx = u(0, W), cy = u(0, H);
        const double outer = u(7.0, 12.0);
        detail::fill_ring(labels, cx, cy, outer, outer - u(2.5, 4.0), kProximal, kLumen);
    }
    for (int i = 0; i < n_dist; ++i) {
        const double cx = u(0, W), cy = u(0, H);
        const double outer = u(6.0, 10.0);
        detail::fill_ring(labels, cx, cy, outer, outer - u(1.5, 2.5), kDistal, kLumen);
    }
    for (int i = 0; i < n_glom; ++i) {
        const double cx = u(0, W), cy = u(0, H);
        const double r = u(14.0, 22.0);
        detail::fill_ring(labels, cx, cy, r + u(2.0, 3.5), r, kLumen, kGlomerulus);
    }
    for (int i = 0; i < n_nuc; ++i) {
        // bias nuclei towards tissue: retry open-space placements a few times
        double cx = 0, cy = 0;
        for (int attempt = 0; attempt < 4; ++attempt) {
            cx = u(0, W);
            cy = u(0, H);
            const std::uint8_t under = labels.at(static_cast<int>(cy), static_cast<int>(cx));
            if (under == kGlomerulus || under == kProximal || under == kDistal) break;
        }
        detail::fill_disk(labels, cx, cy, u(1.5, 3.0), kNucleus);
    }

    // 2) stain image: palette fill, 3x3 box soften, texture noise
    PairedSample sample;
    sample.labels = labels;
    sample.stain = ImageTensor(3, H, W, 0.f, 255.f);
    const auto& pal = detail::palette();
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) sample.stain.at(c, y, x) = pal[labels.at(y, x)][c];
    const Rng stain_noise = rng.fork(detail::kStainNoise);
    for (int c = 0; c < 3; ++c) {
        std::vector<float> plane(sample.stain.data.begin() + c * sample.stain.plane(),
                                 sample.stain.data.begin() + (c + 1) * sample.stain.plane());
        plane = detail::gaussian_blur(plane, H, W, 0.8);
        for (size_t i = 0; i < plane.size(); ++i) {
            const double noisy =
                plane[i] + 3.5 * stain_noise.gaussian(static_cast<std::uint64_t>(c) * plane.size() + i);
            sample.stain.data[c * sample.stain.plane() + i] =
                static_cast<float>(clamp(noisy, 0.0, 255.0));
        }
    }

    // 3) per-structure channel signatures, log-normal
    const Rng sig_rng = rng.fork(detail::kSignature);
    std::vector<std::vector<double>> signatures(kLabelCount, std::vector<double>(config.channels));
    for (int k = 0; k < kLabelCount; ++k)
        for (int c = 0; c < config.channels; ++c)
            signatures[k][c] =
                std::exp(1.0 * sig_rng.fork(k).gaussian(c));

    // blurred indicator per label, then linear mixing
    std::vector<std::vector<float>> masks(kLabelCount);
    for (int k = 0; k < kLabelCount; ++k) {
        std::vector<float> ind(static_cast<size_t>(H) * W, 0.f);
        for (size_t i = 0; i < ind.size(); ++i) ind[i] = labels.codes[i] == k ? 1.f : 0.f;
        masks[k] = detail::gaussian_blur(ind, H, W, config.blur_sigma);
    }

    ImageTensor high(config.channels, H, W, 0.f, 64.f);
    for (int c = 0; c < config.channels; ++c) {
        float* plane = high.data.data() + static_cast<size_t>(c) * high.plane();
        for (int k = 0; k < kLabelCount; ++k) {
            const double s = signatures[k][c];
            const float* m = masks[k].data();
            for (size_t i = 0; i < high.plane(); ++i) plane[i] += static_cast<float>(s * m[i]);
        }
    }

    // 4) 10x10 mean pool plus per-channel Gaussian noise
    ImageTensor pooled = dataio::meanpool_downsample(high, kScale);
    if (internals) {
        internals->signatures = signatures;
        internals->blurred_masks = masks;
        internals->noiseless_ions = pooled;
    }
    const std::vector<double> noise = config.resolved_noise();
    const Rng ion_noise = rng.fork(detail::kIonNoise);
    for (int c = 0; c < config.channels; ++c) {
        float* plane = pooled.data.data() + static_cast<size_t>(c) * pooled.plane();
        const Rng chan = ion_noise.fork(c);
        for (size_t i = 0; i < pooled.plane(); ++i)
            plane[i] = static_cast<float>(plane[i] + noise[c] * chan.gaussian(i));
    }
    sample.ions = std::move(pooled);
    return sample;
}

/*------------------------------------ dataset files ---------------------------------------*/

inline void write_labels(const std::string& path, const LabelMap& labels) {
    dataio::TensorBlob blob;
    blob.dtype = dataio::Dtype::u8;
    blob.shape = {static_cast<std::uint32_t>(labels.height), static_cast<std::uint32_t>(labels.width)};
    blob.raw = labels.codes;
    dataio::tensor_write(path, blob);
}

inline LabelMap read_labels(const std::string& path) {
    const dataio::TensorBlob blob = dataio::tensor_read(path);
    if (blob.dtype != dataio::Dtype::u8 || blob.shape.size() != 2)
        throw IoError(path + ": expected u8 tensor with 2 dims");
    return {static_cast<int>(blob.shape[0]), static_cast<int>(blob.shape[1]), blob.raw};
}

constexpr std::uint64_t kTestSeedOffset = 1000000;

// Writes tensors plus manifest.json. Train and test draw from disjoint seed
// ranges; test samples are never augmented (augmentation happens at training
// time and only for the train split).
inline dataio::DatasetManifest generate_dataset(const PhantomConfig& config, int n_train,
                                                int n_test, const std::string& out_dir) {
    VSTAIN_REQUIRE(n_train >= 1 && n_test >= 1, "generate_dataset: need n_train, n_test >= 1");
    VSTAIN_REQUIRE(n_train < static_cast<int>(kTestSeedOffset),
                   "generate_dataset: train count exceeds the seed range");
    std::filesystem::create_directories(out_dir);

    dataio::DatasetManifest manifest;
    nlohmann::json jentries = nlohmann::json::array();
    auto emit = [&](const std::string& split, int index, std::uint64_t seed) {
        PhantomConfig c = config;
        c.seed = seed;
        const PairedSample sample = generate(c);
        char id[32];
        std::snprintf(id, sizeof(id), "%s_%04d", split.c_str(), index);
        dataio::DatasetEntry e;
        e.id = id;
        e.split = split;
        e.seed = seed;
        e.ions_path = std::string(id) + ".ions.vstn";
        e.stain_path = std::string(id) + ".stain.vstn";
        e.labels_path = std::string(id) + ".labels.vstn";
        dataio::tensor_write(out_dir + "/" + e.ions_path, sample.ions);
        dataio::tensor_write(out_dir + "/" + e.stain_path, sample.stain);
        write_labels(out_dir + "/" + e.labels_path, sample.labels);
        jentries.push_back({{"id", e.id},
                            {"split", e.split},
                            {"seed", e.seed},
                            {"ions", e.ions_path},
                            {"stain", e.stain_path},
                            {"labels", e.labels_path}});
        manifest.entries.push_back(std::move(e));
    };
    for (int i = 0; i < n_train; ++i) emit("train", i, config.seed + i);
    for (int i = 0; i < n_test; ++i) emit("test", i, config.seed + kTestSeedOffset + i);

    nlohmann::json j;
    j["entries"] = jentries;
    j["channels"] = config.channels;
    j["height"] = config.height;
    j["width"] = config.width;
    std::ofstream f(out_dir + "/manifest.json", std::ios::trunc);
    if (!f) throw IoError("cannot write manifest: " + out_dir);
    f << j.dump(2) << "\n";
    return manifest;
}

inline dataio::DatasetManifest load_manifest(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw IoError("cannot open manifest: " + dir + "/manifest.json");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(dir + "/manifest.json: " + e.what());
    }
    dataio::DatasetManifest m;
    for (const auto& je : j.at("entries")) {
        dataio::DatasetEntry e;
        e.id = je.at("id").get<std::string>();
        e.split = je.at("split").get<std::string>();
        e.seed = je.at("seed").get<std::uint64_t>();
        e.ions_path = je.at("ions").get<std::string>();
        e.stain_path = je.at("stain").get<std::string>();
        e.labels_path = je.at("labels").get<std::string>();
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline PairedSample load_sample(const std::string& dir, const dataio::DatasetEntry& e) {
    PairedSample s;
    s.ions = dataio::tensor_read_image(dir + "/" + e.ions_path, 0.f, 64.f);
    s.stain = dataio::tensor_read_image(dir + "/" + e.stain_path, 0.f, 255.f);
    const LabelMap labels = read_labels(dir + "/" + e.labels_path);
    s.labels = labels;
    return s;
}

} // namespace vstain::phantom

#endif
