#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vstain/dataio.hpp"
#include "vstain/rng.hpp"

using namespace vstain;
using namespace vstain::dataio;

namespace {

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("VSTN round-trips are byte-identical for all dtypes") {
    struct Case {
        Dtype dtype;
        std::vector<std::uint32_t> shape;
    };
    const Case cases[] = {
        {Dtype::f32, {2, 3, 4}},
        {Dtype::u8, {5}},
        {Dtype::u16, {3, 7}},
        {Dtype::f32, {1, 1, 1}},
        {Dtype::u8, {1, 1, 1}},
        {Dtype::u16, {1, 1, 1}},
    };
    int k = 0;
    for (const Case& c : cases) {
        TensorBlob t;
        t.dtype = c.dtype;
        t.shape = c.shape;
        t.raw.resize(t.count() * dtype_size(c.dtype));
        for (size_t i = 0; i < t.raw.size(); ++i) t.raw[i] = static_cast<std::uint8_t>(i * 37 + k);
        const std::string p1 = tmp_path("vstn_a" + std::to_string(k));
        const std::string p2 = tmp_path("vstn_b" + std::to_string(k));
        tensor_write(p1, t);
        const TensorBlob back = tensor_read(p1);
        CHECK(back.dtype == t.dtype);
        CHECK(back.shape == t.shape);
        CHECK(back.raw == t.raw);
        tensor_write(p2, back);
        CHECK(slurp(p1) == slurp(p2));
        ++k;
    }
}

TEST_CASE("VSTN image wrapper preserves f32 bits") {
    ImageTensor img(2, 3, 3, -1.f, 1.f);
    for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = 0.1f * static_cast<float>(i) - 0.7f;
    img.data[4] = -0.0f;
    const std::string p = tmp_path("vstn_img");
    tensor_write(p, img);
    const ImageTensor back = tensor_read_image(p, -1.f, 1.f);
    REQUIRE(back.same_shape(img));
    for (size_t i = 0; i < img.data.size(); ++i) {
        std::uint32_t a, b;
        std::memcpy(&a, &img.data[i], 4);
        std::memcpy(&b, &back.data[i], 4);
        CHECK(a == b);
    }
}

TEST_CASE("VSTN malformed inputs carry byte offsets") {
    const std::string p = tmp_path("vstn_bad");
    {
        std::ofstream f(p, std::ios::binary);
        f << "XSTNxxxx";
    }
    try {
        tensor_read(p);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.offset == 0);
    }
    {
        std::ofstream f(p, std::ios::binary);
        f.write("VSTN", 4);
        const char rest[] = {1, 9, 1};  // bad dtype code 9
        f.write(rest, 3);
    }
    try {
        tensor_read(p);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.offset == 5);
    }
}

TEST_CASE("PPM round-trip and quantization rule") {
    ImageTensor img(3, 2, 2, -1.f, 1.f);
    // -1 -> 0, +1 -> 255, 0 -> 127.5 rounds half away to 128
    img.data = {-1.f, 1.f, 0.f, 0.5f, -1.f, 1.f, 0.f, 0.5f, -1.f, 1.f, 0.f, 0.5f};
    const std::string p1 = tmp_path("img1.ppm");
    const std::string p2 = tmp_path("img2.ppm");
    ppm_write(p1, img);
    const ImageTensor back = ppm_read(p1);
    CHECK(back.data[0] == 0.f);
    CHECK(back.data[1] == 255.f);
    CHECK(back.data[2] == 128.f);
    CHECK(back.data[3] == 191.f);  // 0.5 -> 191.25 rounds to 191
    ppm_write(p2, ImageTensor{back});
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("PPM malformed header reports a byte offset") {
    const std::string p = tmp_path("bad.ppm");
    {
        std::ofstream f(p, std::ios::binary);
        f << "P5\n2 2\n255\n";
    }
    CHECK_THROWS_AS(ppm_read(p), IoError);
    {
        std::ofstream f(p, std::ios::binary);
        f << "P6\n2 x\n255\n";
    }
    CHECK_THROWS_AS(ppm_read(p), IoError);
    {
        std::ofstream f(p, std::ios::binary);
        f << "P6\n2 2\n255\nxx";  // truncated pixels
    }
    CHECK_THROWS_AS(ppm_read(p), IoError);
}

TEST_CASE("channel SNR scoring") {
    ImageTensor ions(3, 1, 2, 0.f, 10.f);
    ions.data = {0.f, 0.f,   // all-zero channel
                 2.f, 2.f,   // constant positive channel
                 1.f, 3.f};  // mean 2, population std 1
    const auto scores = channel_snr(ions);
    CHECK(scores[0] == 0.0);
    CHECK(scores[1] == Catch::Approx(2.0 / 1e-12).epsilon(1e-6));
    CHECK(scores[2] == Catch::Approx(2.0).epsilon(1e-9));

    const auto manifest = rank_channels(scores);
    CHECK(manifest.ranked[0].first == 1);  // constant channel ranks top
    CHECK(manifest.ranked[1].first == 2);
    CHECK(manifest.ranked[2].first == 0);
}

TEST_CASE("SNR ties break by ascending channel index") {
    const std::vector<double> scores = {5.0, 7.0, 5.0, 7.0};
    const auto m = rank_channels(scores);
    CHECK(m.ranked[0].first == 1);
    CHECK(m.ranked[1].first == 3);
    CHECK(m.ranked[2].first == 0);
    CHECK(m.ranked[3].first == 2);
}

TEST_CASE("select_top_k reproduces the published channel counts") {
    std::vector<double> scores(1453);
    for (size_t i = 0; i < scores.size(); ++i) scores[i] = 1e6 - static_cast<double>(i);
    const auto manifest = rank_channels(scores);
    CHECK(select_top_k(manifest, 1).selected.size() == 1453);
    CHECK(select_top_k(manifest, 4).selected.size() == 363);
    CHECK(select_top_k(manifest, 16).selected.size() == 91);
    CHECK(select_top_k(manifest, 64).selected.size() == 23);
    // selection keeps ranking order
    const auto sub = select_top_k(manifest, 64);
    for (int i = 0; i < 23; ++i) CHECK(sub.selected[i] == i);
    CHECK_THROWS_AS(select_top_k(manifest, 4000), InvalidArgument);
    CHECK_THROWS_AS(select_top_k(manifest, 0), InvalidArgument);
}

TEST_CASE("TIC normalization") {
    SECTION("single channel becomes the mean-TIC constant wherever positive") {
        ImageTensor ions(1, 1, 4, 0.f, 10.f);
        ions.data = {1.f, 2.f, 0.f, 5.f};
        const auto out = tic_normalize(ions);
        const double mean_tic = (1 + 2 + 0 + 5) / 4.0;
        CHECK(out.data[0] == Catch::Approx(mean_tic));
        CHECK(out.data[1] == Catch::Approx(mean_tic));
        CHECK(out.data[2] == 0.f);
        CHECK(out.data[3] == Catch::Approx(mean_tic));
    }
    SECTION("2-channel pixel (1,3) with mean TIC 4 stays (1,3)") {
        ImageTensor ions(2, 1, 1, 0.f, 10.f);
        ions.data = {1.f, 3.f};
        const auto out = tic_normalize(ions);
        CHECK(out.data[0] == Catch::Approx(1.0));
        CHECK(out.data[1] == Catch::Approx(3.0));
    }
    SECTION("global doubling preserves per-pixel proportions") {
        ImageTensor ions(3, 2, 2, 0.f, 10.f);
        ions.data = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
        ImageTensor doubled = ions;
        for (float& v : doubled.data) v *= 2.f;
        const auto a = tic_normalize(ions);
        const auto b = tic_normalize(doubled);
        const size_t n = a.plane();
        for (size_t i = 0; i < n; ++i) {
            double ta = 0, tb = 0;
            for (int c = 0; c < 3; ++c) {
                ta += a.data[c * n + i];
                tb += b.data[c * n + i];
            }
            for (int c = 0; c < 3; ++c)
                CHECK(a.data[c * n + i] / ta == Catch::Approx(b.data[c * n + i] / tb).epsilon(1e-6));
        }
    }
    SECTION("negative input is rejected") {
        ImageTensor ions(1, 1, 1, 0.f, 1.f);
        ions.data = {-0.5f};
        CHECK_THROWS_AS(tic_normalize(ions), InvalidArgument);
    }
}

TEST_CASE("tiling follows the stride rule and pins stain offsets at 10x") {
    SECTION("stride from the paper's tile size and overlap") {
        ImageTensor ions(1, 300, 300, 0.f, 1.f);
        ImageTensor stain(3, 3000, 3000, 0.f, 255.f);
        const auto tiles = tile_pairs(ions, stain, 140, 0.10);
        // stride floor(140*0.9) = 126; offsets 0, 126, snapped 160
        std::vector<int> xs;
        for (const auto& t : tiles)
            if (t.ion_y == 0) xs.push_back(t.ion_x);
        CHECK(xs == std::vector<int>{0, 126, 160});
        for (const auto& t : tiles) {
            CHECK(t.stain.height == 1400);
            CHECK(t.stain.width == 1400);
        }
    }
    SECTION("exact-width image yields one column") {
        ImageTensor ions(1, 280, 140, 0.f, 1.f);
        ImageTensor stain(3, 2800, 1400, 0.f, 255.f);
        const auto tiles = tile_pairs(ions, stain, 140, 0.10);
        for (const auto& t : tiles) CHECK(t.ion_x == 0);
        CHECK(tiles.size() == 3);  // rows 0, 126, snapped 140
    }
    SECTION("coverage: every ion pixel falls in at least one tile") {
        ImageTensor ions(1, 37, 53, 0.f, 1.f);
        ImageTensor stain(3, 370, 530, 0.f, 255.f);
        const auto tiles = tile_pairs(ions, stain, 16, 0.25);
        std::vector<int> hit(37 * 53, 0);
        for (const auto& t : tiles) {
            CHECK(t.ion_x + 16 <= 53);
            CHECK(t.ion_y + 16 <= 37);
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) ++hit[(t.ion_y + y) * 53 + (t.ion_x + x)];
        }
        for (int v : hit) CHECK(v >= 1);
    }
    SECTION("tile larger than image is rejected") {
        ImageTensor ions(1, 8, 8, 0.f, 1.f);
        ImageTensor stain(3, 80, 80, 0.f, 255.f);
        CHECK_THROWS_AS(tile_pairs(ions, stain, 9, 0.1), InvalidArgument);
    }
}

TEST_CASE("dihedral augmentation group laws") {
    TilePair pair;
    pair.ions = ImageTensor(2, 4, 4, 0.f, 1.f);
    pair.stain = ImageTensor(3, 40, 40, 0.f, 255.f);
    Rng rng(5);
    for (size_t i = 0; i < pair.ions.data.size(); ++i)
        pair.ions.data[i] = static_cast<float>(rng.uniform(i));
    for (size_t i = 0; i < pair.stain.data.size(); ++i)
        pair.stain.data[i] = static_cast<float>(rng.uniform(1000 + i));

    SECTION("index 0 is the identity") {
        const auto out = augment(pair, 0);
        CHECK(out.ions.data == pair.ions.data);
        CHECK(out.stain.data == pair.stain.data);
    }
    SECTION("rot90 applied four times is the identity") {
        auto cur = pair;
        for (int i = 0; i < 4; ++i) cur = augment(cur, 1);
        CHECK(cur.ions.data == pair.ions.data);
        CHECK(cur.stain.data == pair.stain.data);
    }
    SECTION("horizontal flip twice is the identity") {
        const auto out = augment(augment(pair, 4), 4);
        CHECK(out.ions.data == pair.ions.data);
        CHECK(out.stain.data == pair.stain.data);
    }
    SECTION("all eight transforms are distinct on an asymmetric tile") {
        std::vector<std::vector<float>> seen;
        for (int i = 0; i < 8; ++i) seen.push_back(augment(pair, i).ions.data);
        for (int i = 0; i < 8; ++i)
            for (int j = i + 1; j < 8; ++j) CHECK(seen[i] != seen[j]);
    }
    SECTION("odd rotation of a non-square tile is rejected") {
        ImageTensor rect(1, 2, 4, 0.f, 1.f);
        CHECK_THROWS_AS(dihedral_transform(rect, 1), InvalidArgument);
        CHECK_NOTHROW(dihedral_transform(rect, 2));
        CHECK_NOTHROW(dihedral_transform(rect, 4));
    }
}

TEST_CASE("meanpool downsampling") {
    SECTION("factor 1 is the identity") {
        ImageTensor img(1, 2, 2, 0.f, 1.f);
        img.data = {1.f, 2.f, 3.f, 4.f};
        CHECK(meanpool_downsample(img, 1).data == img.data);
    }
    SECTION("2x2 block {0,0,2,2} pools to 1") {
        ImageTensor img(1, 2, 2, 0.f, 2.f);
        img.data = {0.f, 0.f, 2.f, 2.f};
        const auto out = meanpool_downsample(img, 2);
        REQUIRE(out.data.size() == 1);
        CHECK(out.data[0] == 1.f);
    }
    SECTION("indivisible dims are rejected") {
        ImageTensor img(1, 3, 4, 0.f, 1.f);
        CHECK_THROWS_AS(meanpool_downsample(img, 2), InvalidArgument);
    }
}
