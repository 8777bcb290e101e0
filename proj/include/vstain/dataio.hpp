#ifndef VSTAIN_DATAIO_HPP
#define VSTAIN_DATAIO_HPP

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "vstain/core.hpp"

namespace vstain::dataio {

/*---------------------------------- VSTN tensor format ----------------------------------*/
// magic "VSTN" | version u8 (1) | dtype u8 | ndim u8 | shape u32-le per dim | raw le data

enum class Dtype : std::uint8_t { f32 = 1, u8 = 2, u16 = 3 };

inline size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::f32: return 4;
        case Dtype::u8: return 1;
        case Dtype::u16: return 2;
    }
    throw InvalidArgument("unknown dtype code");
}

struct TensorBlob {
    Dtype dtype = Dtype::f32;
    std::vector<std::uint32_t> shape;
    std::vector<std::uint8_t> raw;  // little-endian, row-major

    size_t count() const {
        return std::accumulate(shape.begin(), shape.end(), size_t{1},
                               [](size_t a, std::uint32_t b) { return a * b; });
    }
};

namespace detail {

inline void store_u32le(std::uint8_t* p, std::uint32_t v) {
    p[0] = v & 0xff;
    p[1] = (v >> 8) & 0xff;
    p[2] = (v >> 16) & 0xff;
    p[3] = (v >> 24) & 0xff;
}

inline std::uint32_t load_u32le(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

} // namespace detail

inline void tensor_write(const std::string& path, const TensorBlob& t) {
    if (t.raw.size() != t.count() * dtype_size(t.dtype))
        throw InvalidArgument("tensor_write: payload length does not match shape");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    std::vector<std::uint8_t> head(7 + 4 * t.shape.size());
    std::memcpy(head.data(), "VSTN", 4);
    head[4] = 1;
    head[5] = static_cast<std::uint8_t>(t.dtype);
    head[6] = static_cast<std::uint8_t>(t.shape.size());
    for (size_t i = 0; i < t.shape.size(); ++i)
        detail::store_u32le(head.data() + 7 + 4 * i, t.shape[i]);
    f.write(reinterpret_cast<const char*>(head.data()), head.size());
    f.write(reinterpret_cast<const char*>(t.raw.data()), t.raw.size());
    if (!f) throw IoError("short write: " + path);
}

inline TensorBlob tensor_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::uint8_t head[7];
    if (!f.read(reinterpret_cast<char*>(head), 7)) throw IoError(path + ": truncated header", 0);
    if (std::memcmp(head, "VSTN", 4) != 0) throw IoError(path + ": bad magic", 0);
    if (head[4] != 1) throw IoError(path + ": unsupported version", 4);
    TensorBlob t;
    if (head[5] < 1 || head[5] > 3) throw IoError(path + ": bad dtype code", 5);
    t.dtype = static_cast<Dtype>(head[5]);
    const int ndim = head[6];
    t.shape.resize(ndim);
    for (int i = 0; i < ndim; ++i) {
        std::uint8_t dim[4];
        if (!f.read(reinterpret_cast<char*>(dim), 4))
            throw IoError(path + ": truncated shape", 7 + 4 * i);
        t.shape[i] = detail::load_u32le(dim);
        if (t.shape[i] == 0) throw IoError(path + ": zero dimension", 7 + 4 * i);
    }
    t.raw.resize(t.count() * dtype_size(t.dtype));
    if (!f.read(reinterpret_cast<char*>(t.raw.data()), t.raw.size()))
        throw IoError(path + ": truncated payload", 7 + 4ull * ndim);
    return t;
}

// f32 C x H x W image convenience wrappers (the common case)
inline void tensor_write(const std::string& path, const ImageTensor& img) {
    TensorBlob t;
    t.dtype = Dtype::f32;
    t.shape = {static_cast<std::uint32_t>(img.channels), static_cast<std::uint32_t>(img.height),
               static_cast<std::uint32_t>(img.width)};
    t.raw.resize(img.data.size() * 4);
    for (size_t i = 0; i < img.data.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &img.data[i], 4);
        detail::store_u32le(t.raw.data() + 4 * i, bits);
    }
    tensor_write(path, t);
}

inline ImageTensor tensor_read_image(const std::string& path, float lo = 0.f, float hi = 1.f) {
    const TensorBlob t = tensor_read(path);
    if (t.dtype != Dtype::f32 || t.shape.size() != 3)
        throw IoError(path + ": expected f32 tensor with 3 dims");
    ImageTensor img(t.shape[0], t.shape[1], t.shape[2], lo, hi);
    for (size_t i = 0; i < img.data.size(); ++i) {
        const std::uint32_t bits = detail::load_u32le(t.raw.data() + 4 * i);
        std::memcpy(&img.data[i], &bits, 4);
    }
    return img;
}

/*---------------------------------------- PPM P6 ----------------------------------------*/

// Maps the declared [range_min, range_max] onto 0..255 with
// round-half-away-from-zero, then writes binary P6.
inline void ppm_write(const std::string& path, const ImageTensor& img) {
    VSTAIN_REQUIRE(img.channels == 3, "ppm_write: expected 3 channels");
    VSTAIN_REQUIRE(img.range_max > img.range_min, "ppm_write: empty declared range");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    const double scale = 255.0 / (img.range_max - img.range_min);
    const size_t n = img.plane();
    std::vector<std::uint8_t> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = (img.data[c * n + static_cast<size_t>(y) * img.width + x] -
                                  img.range_min) * scale;
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<std::uint8_t>(clamp(round_half_away(v), 0.0, 255.0));
            }
        }
        f.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!f) throw IoError("short write: " + path);
}

// Returns a 3 x H x W tensor with byte values as reals, declared range [0,255].
inline ImageTensor ppm_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::uint64_t offset = 0;
    auto next_token = [&](const char* what) -> std::string {
        std::string tok;
        int ch;
        while ((ch = f.get()) != EOF) {
            ++offset;
            if (ch == '#') {  // comment to end of line
                while ((ch = f.get()) != EOF && ch != '\n') ++offset;
                if (ch != EOF) ++offset;
                continue;
            }
            if (std::isspace(ch)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(ch));
        }
        throw IoError(path + ": unexpected end of header reading " + what, offset);
    };
    const std::string magic = next_token("magic");
    if (magic != "P6") throw IoError(path + ": not a P6 file", 0);
    auto parse_int = [&](const std::string& tok, const char* what) {
        for (char c : tok)
            if (!std::isdigit(static_cast<unsigned char>(c)))
                throw IoError(path + ": malformed " + what, offset - tok.size());
        return std::stoi(tok);
    };
    const int w = parse_int(next_token("width"), "width");
    const int h = parse_int(next_token("height"), "height");
    const int maxval = parse_int(next_token("maxval"), "maxval");
    if (w <= 0 || h <= 0) throw IoError(path + ": bad dimensions", offset);
    if (maxval != 255) throw IoError(path + ": only maxval 255 supported", offset);
    // the single whitespace after maxval was consumed by the tokenizer
    ImageTensor img(3, h, w, 0.f, 255.f);
    std::vector<std::uint8_t> buf(static_cast<size_t>(w) * h * 3);
    if (!f.read(reinterpret_cast<char*>(buf.data()), buf.size()))
        throw IoError(path + ": truncated pixel data", offset);
    const size_t n = img.plane();
    for (size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) img.data[c * n + i] = static_cast<float>(buf[i * 3 + c]);
    return img;
}

/*------------------------------- channel ranking / selection ------------------------------*/

struct ChannelManifest {
    std::vector<std::pair<int, double>> ranked;  // (channel index, SNR), non-increasing
    std::vector<int> selected;
};

// score[c] = mean / (population std + 1e-12) over all pixels of channel c
inline std::vector<double> channel_snr(const ImageTensor& ions) {
    VSTAIN_REQUIRE(!ions.data.empty(), "channel_snr: empty tensor");
    std::vector<double> scores(ions.channels);
    const size_t n = ions.plane();
    for (int c = 0; c < ions.channels; ++c) {
        const float* p = ions.data.data() + c * n;
        double sum = 0, sum2 = 0;
        for (size_t i = 0; i < n; ++i) {
            sum += p[i];
            sum2 += double(p[i]) * p[i];
        }
        const double mean = sum / n;
        const double var = std::max(0.0, sum2 / n - mean * mean);
        scores[c] = mean / (std::sqrt(var) + 1e-12);
    }
    return scores;
}

// Ties broken by ascending channel index.
inline ChannelManifest rank_channels(const std::vector<double>& scores) {
    ChannelManifest m;
    m.ranked.resize(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) m.ranked[i] = {static_cast<int>(i), scores[i]};
    std::stable_sort(m.ranked.begin(), m.ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return m;
}

// k = round-half-away-from-zero(C_total / r); keeps the first k of the ranking.
inline ChannelManifest select_top_k(const ChannelManifest& manifest, int reduction_factor) {
    VSTAIN_REQUIRE(reduction_factor >= 1, "select_top_k: reduction factor must be >= 1");
    const int total = static_cast<int>(manifest.ranked.size());
    const int k = static_cast<int>(round_half_away(static_cast<double>(total) / reduction_factor));
    if (k < 1) throw InvalidArgument("select_top_k: reduction leaves no channels");
    ChannelManifest out = manifest;
    out.selected.clear();
    for (int i = 0; i < k; ++i) out.selected.push_back(manifest.ranked[i].first);
    return out;
}

inline ImageTensor take_channels(const ImageTensor& ions, const std::vector<int>& idx) {
    VSTAIN_REQUIRE(!idx.empty(), "take_channels: empty selection");
    ImageTensor out(static_cast<int>(idx.size()), ions.height, ions.width, ions.range_min,
                    ions.range_max);
    const size_t n = ions.plane();
    for (size_t j = 0; j < idx.size(); ++j) {
        VSTAIN_REQUIRE(idx[j] >= 0 && idx[j] < ions.channels, "take_channels: index out of range");
        std::copy_n(ions.data.data() + static_cast<size_t>(idx[j]) * n, n, out.data.data() + j * n);
    }
    return out;
}

/*------------------------------------ TIC normalization -----------------------------------*/

// Each pixel's channel vector is divided by its channel sum (the pixel TIC),
// then rescaled by the mean TIC over all pixels. Zero-TIC pixels stay zero.
inline ImageTensor tic_normalize(const ImageTensor& ions) {
    const size_t n = ions.plane();
    std::vector<double> tic(n, 0.0);
    for (int c = 0; c < ions.channels; ++c) {
        const float* p = ions.data.data() + c * n;
        for (size_t i = 0; i < n; ++i) {
            if (p[i] < 0.0f) throw InvalidArgument("tic_normalize: negative input");
            tic[i] += p[i];
        }
    }
    const double mean_tic = std::accumulate(tic.begin(), tic.end(), 0.0) / n;
    ImageTensor out = ions;
    for (int c = 0; c < ions.channels; ++c) {
        float* p = out.data.data() + c * n;
        for (size_t i = 0; i < n; ++i)
            p[i] = tic[i] > 0.0 ? static_cast<float>(p[i] / tic[i] * mean_tic) : 0.0f;
    }
    return out;
}

/*---------------------------------- tiling and augmentation --------------------------------*/

struct TilePair {
    ImageTensor ions;   // C x h x w
    ImageTensor stain;  // 3 x 10h x 10w
    int ion_x = 0;      // source offsets, ion-resolution units
    int ion_y = 0;
};

inline ImageTensor crop(const ImageTensor& img, int x0, int y0, int w, int h) {
    VSTAIN_REQUIRE(x0 >= 0 && y0 >= 0 && x0 + w <= img.width && y0 + h <= img.height,
                   "crop: window out of bounds");
    ImageTensor out(img.channels, h, w, img.range_min, img.range_max);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y) {
            const float* src =
                img.data.data() + (static_cast<size_t>(c) * img.height + y0 + y) * img.width + x0;
            std::copy_n(src, w, &out.at(c, y, 0));
        }
    return out;
}

inline std::vector<int> tile_offsets(int extent, int tile, int stride) {
    std::vector<int> offs;
    for (int x = 0; x + tile <= extent; x += stride) offs.push_back(x);
    if (offs.empty() || offs.back() + tile < extent) offs.push_back(extent - tile);  // snap to edge
    return offs;
}

inline std::vector<TilePair> tile_pairs(const ImageTensor& ions, const ImageTensor& stain,
                                        int ion_tile, double overlap_fraction) {
    constexpr int kScale = 10;
    VSTAIN_REQUIRE(stain.height == kScale * ions.height && stain.width == kScale * ions.width,
                   "tile_pairs: stain dims must be 10x the ion dims");
    VSTAIN_REQUIRE(overlap_fraction >= 0.0 && overlap_fraction < 1.0,
                   "tile_pairs: overlap fraction must be in [0,1)");
    VSTAIN_REQUIRE(ion_tile >= 1 && ion_tile <= ions.width && ion_tile <= ions.height,
                   "tile_pairs: tile larger than image");
    const int stride = std::max(1, static_cast<int>(std::floor(ion_tile * (1.0 - overlap_fraction))));
    std::vector<TilePair> tiles;
    for (int y : tile_offsets(ions.height, ion_tile, stride)) {
        for (int x : tile_offsets(ions.width, ion_tile, stride)) {
            TilePair tp;
            tp.ion_x = x;
            tp.ion_y = y;
            tp.ions = crop(ions, x, y, ion_tile, ion_tile);
            tp.stain = crop(stain, kScale * x, kScale * y, kScale * ion_tile, kScale * ion_tile);
            tiles.push_back(std::move(tp));
        }
    }
    return tiles;
}

// Dihedral group of the square, index 0..7: 0..3 rotate CCW by 90*index,
// 4..7 flip horizontally first and then rotate by 90*(index-4).
inline ImageTensor dihedral_transform(const ImageTensor& img, int index) {
    VSTAIN_REQUIRE(index >= 0 && index <= 7, "dihedral_transform: index must be in 0..7");
    const int rot = index & 3;
    const bool flip = index >= 4;
    if ((rot & 1) && img.height != img.width)
        throw InvalidArgument("dihedral_transform: odd rotation of a non-square tile");
    if (index == 0) return img;
    const int oh = (rot & 1) ? img.width : img.height;
    const int ow = (rot & 1) ? img.height : img.width;
    ImageTensor out(img.channels, oh, ow, img.range_min, img.range_max);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                int sx = flip ? img.width - 1 - x : x;
                int oy = y, ox = sx;
                switch (rot) {  // CCW rotation of the (possibly flipped) source
                    case 0: break;
                    case 1: oy = img.width - 1 - sx; ox = y; break;
                    case 2: oy = img.height - 1 - y; ox = img.width - 1 - sx; break;
                    case 3: oy = sx; ox = img.height - 1 - y; break;
                }
                out.at(c, oy, ox) = img.at(c, y, x);
            }
        }
    }
    return out;
}

inline TilePair augment(const TilePair& pair, int index) {
    TilePair out;
    out.ion_x = pair.ion_x;
    out.ion_y = pair.ion_y;
    out.ions = dihedral_transform(pair.ions, index);
    out.stain = dihedral_transform(pair.stain, index);
    return out;
}

/*----------------------------------- dataset manifest -------------------------------------*/

struct DatasetEntry {
    std::string id;
    std::string split;  // "train" | "test"
    std::uint64_t seed = 0;
    std::string ions_path;
    std::string stain_path;
    std::string labels_path;
};

struct DatasetManifest {
    std::vector<DatasetEntry> entries;

    std::vector<const DatasetEntry*> split(const std::string& tag) const {
        std::vector<const DatasetEntry*> out;
        for (const DatasetEntry& e : entries)
            if (e.split == tag) out.push_back(&e);
        return out;
    }
};

/*------------------------------------- resampling ----------------------------------------*/

inline ImageTensor meanpool_downsample(const ImageTensor& img, int factor) {
    VSTAIN_REQUIRE(factor >= 1, "meanpool_downsample: factor must be >= 1");
    if (factor == 1) return img;
    VSTAIN_REQUIRE(img.height % factor == 0 && img.width % factor == 0,
                   "meanpool_downsample: dims must be divisible by factor");
    ImageTensor out(img.channels, img.height / factor, img.width / factor, img.range_min,
                    img.range_max);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                double acc = 0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        acc += img.at(c, y * factor + dy, x * factor + dx);
                out.at(c, y, x) = static_cast<float>(acc * inv);
            }
    return out;
}

} // namespace vstain::dataio

#endif
