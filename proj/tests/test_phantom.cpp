#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <filesystem>
#include <set>

#include "vstain/phantom.hpp"
#include "vstain/quality.hpp"

using namespace vstain;
using namespace vstain::phantom;

namespace {

std::string tmp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

} // namespace

TEST_CASE("phantom generation is deterministic under the seed") {
    PhantomConfig cfg;
    cfg.height = cfg.width = 80;
    cfg.channels = 4;
    cfg.seed = 42;
    const PairedSample a = generate(cfg);
    const PairedSample b = generate(cfg);
    CHECK(a.ions.data == b.ions.data);
    CHECK(a.stain.data == b.stain.data);
    CHECK(a.labels.codes == b.labels.codes);

    cfg.seed = 43;
    const PairedSample c = generate(cfg);
    CHECK(a.ions.data != c.ions.data);
}

TEST_CASE("ten-fold geometry always holds") {
    for (int size : {80, 160}) {
        PhantomConfig cfg;
        cfg.height = cfg.width = size;
        cfg.channels = 3;
        cfg.seed = 7;
        const PairedSample s = generate(cfg);
        CHECK(s.ions.height * kScale == s.stain.height);
        CHECK(s.ions.width * kScale == s.stain.width);
        CHECK(s.labels.height == s.stain.height);
        CHECK(s.stain.channels == 3);
        CHECK(s.ions.channels == 3);
    }
}

TEST_CASE("zero densities produce a pure background sample") {
    PhantomConfig cfg;
    cfg.height = cfg.width = 80;
    cfg.channels = 2;
    cfg.glomerulus_density = cfg.proximal_density = cfg.distal_density = cfg.nucleus_density = 0.0;
    cfg.seed = 5;
    PhantomInternals internals;
    const PairedSample s = generate(cfg, &internals);
    for (std::uint8_t code : s.labels.codes) CHECK(code == kBackground);
    // noiseless ion map is the constant background signature per channel
    const size_t n = internals.noiseless_ions.plane();
    for (int c = 0; c < cfg.channels; ++c) {
        const float expect = static_cast<float>(internals.signatures[kBackground][c]);
        for (size_t i = 0; i < n; ++i)
            CHECK(internals.noiseless_ions.data[c * n + i] == Catch::Approx(expect).epsilon(1e-4));
    }
}

TEST_CASE("channel noise strictly lowers the SNR score on the same seed") {
    PhantomConfig clean;
    clean.height = clean.width = 80;
    clean.channels = 1;
    clean.noise_levels = {0.0};
    clean.seed = 11;
    PhantomConfig noisy = clean;
    noisy.noise_levels = {1.0};
    const auto snr_clean = dataio::channel_snr(generate(clean).ions);
    const auto snr_noisy = dataio::channel_snr(generate(noisy).ions);
    CHECK(snr_clean[0] > snr_noisy[0]);
}

TEST_CASE("regressing the noiseless ion map on blurred indicators recovers the signatures") {
    PhantomConfig cfg;
    cfg.height = cfg.width = 160;
    cfg.channels = 5;
    cfg.seed = 3;
    PhantomInternals internals;
    const PairedSample s = generate(cfg, &internals);

    // all six structure classes must be present for identifiability
    std::set<int> present(s.labels.codes.begin(), s.labels.codes.end());
    REQUIRE(present.size() == static_cast<size_t>(kLabelCount));

    // mean-pool the blurred masks to ion resolution; pooling commutes with the mixing
    const int hw = internals.noiseless_ions.height * internals.noiseless_ions.width;
    Eigen::MatrixXd design(hw, kLabelCount);
    for (int k = 0; k < kLabelCount; ++k) {
        ImageTensor m(1, cfg.height, cfg.width, 0.f, 1.f);
        m.data = internals.blurred_masks[k];
        const ImageTensor pooled = dataio::meanpool_downsample(m, kScale);
        for (int i = 0; i < hw; ++i) design(i, k) = pooled.data[i];
    }
    for (int c = 0; c < cfg.channels; ++c) {
        Eigen::VectorXd target(hw);
        for (int i = 0; i < hw; ++i)
            target[i] = internals.noiseless_ions.data[static_cast<size_t>(c) * hw + i];
        const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(target);
        for (int k = 0; k < kLabelCount; ++k)
            CHECK(std::abs(coef[k] - internals.signatures[k][c]) < 1e-4);
    }
}

TEST_CASE("pure-noise images score worse than held-out phantom stains (NIQE)") {
    PhantomConfig cfg;
    cfg.height = cfg.width = 160;
    cfg.channels = 1;

    std::vector<ImageTensor> patches;
    for (int i = 0; i < 10; ++i) {
        cfg.seed = 100 + i;
        ImageTensor gray = to_grayscale(generate(cfg).stain);
        for (float& v : gray.data) v /= 255.f;
        for (int y = 0; y + 48 <= gray.height; y += 48)
            for (int x = 0; x + 48 <= gray.width; x += 48)
                patches.push_back(dataio::crop(gray, x, y, 48, 48));
    }
    REQUIRE(patches.size() >= 50);
    const quality::MvgModel model = quality::niqe_fit(patches);

    cfg.seed = 999;  // held out from the fitting seeds
    ImageTensor held = to_grayscale(generate(cfg).stain);
    for (float& v : held.data) v /= 255.f;
    const double score_phantom = quality::niqe_score(held, model);

    ImageTensor noise(1, 160, 160, 0.f, 1.f);
    const Rng rng(4321);
    for (size_t i = 0; i < noise.data.size(); ++i)
        noise.data[i] = static_cast<float>(0.5 + 0.25 * rng.gaussian(i));
    const double score_noise = quality::niqe_score(noise, model);

    CHECK(score_noise > score_phantom);
}

TEST_CASE("invalid phantom configs are rejected") {
    PhantomConfig cfg;
    cfg.height = 77;  // not divisible by 10
    CHECK_THROWS_AS(generate(cfg), InvalidArgument);
    cfg.height = 80;
    cfg.width = 80;
    cfg.channels = 0;
    CHECK_THROWS_AS(generate(cfg), InvalidArgument);
    cfg.channels = 2;
    cfg.noise_levels = {-0.1};
    CHECK_THROWS_AS(generate(cfg), InvalidArgument);
    cfg.noise_levels = {0.1, 0.2, 0.3};
    CHECK_THROWS_AS(generate(cfg), InvalidArgument);
}

TEST_CASE("dataset generation writes a manifest with disjoint seed ranges") {
    const std::string dir = tmp_dir("vstain_phantom_ds");
    PhantomConfig cfg;
    cfg.height = cfg.width = 40;
    cfg.channels = 2;
    cfg.seed = 50;
    const auto manifest = generate_dataset(cfg, 3, 2, dir);
    CHECK(manifest.entries.size() == 5);

    std::set<std::uint64_t> train_seeds, test_seeds;
    for (const auto& e : manifest.entries) {
        if (e.split == "train")
            train_seeds.insert(e.seed);
        else if (e.split == "test")
            test_seeds.insert(e.seed);
        else
            FAIL("unknown split tag " + e.split);
    }
    CHECK(train_seeds.size() == 3);
    CHECK(test_seeds.size() == 2);
    for (std::uint64_t s : train_seeds) CHECK(s < cfg.seed + kTestSeedOffset);
    for (std::uint64_t s : test_seeds) CHECK(s >= cfg.seed + kTestSeedOffset);

    // reload round-trip: manifest and tensors
    const auto loaded = load_manifest(dir);
    REQUIRE(loaded.entries.size() == 5);
    const PairedSample s0 = load_sample(dir, loaded.entries[0]);
    PhantomConfig c0 = cfg;
    c0.seed = loaded.entries[0].seed;
    const PairedSample regen = generate(c0);
    CHECK(s0.ions.data == regen.ions.data);
    CHECK(s0.stain.data == regen.stain.data);
    CHECK(s0.labels.codes == regen.labels.codes);
}
