#ifndef VSTAIN_CORE_HPP
#define VSTAIN_CORE_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace vstain {

// Error categories. The CLI maps these onto exit codes
// (usage/invalid-argument -> 1, I/O -> 2, numeric -> 3).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InvalidState : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
    IoError(const std::string& msg, std::uint64_t byte_offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::uint64_t offset = 0;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define VSTAIN_REQUIRE(cond, msg) \
    do { if (!(cond)) throw ::vstain::InvalidArgument(msg); } while (0)

// C x H x W array of 32-bit reals, row-major, with a declared nominal range.
// The universal pixel-data carrier: ion stacks, stain images, label maps.
struct ImageTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;
    float range_min = 0.0f;
    float range_max = 1.0f;

    ImageTensor() = default;
    ImageTensor(int c, int h, int w, float lo = 0.0f, float hi = 1.0f)
        : channels(c), height(h), width(w),
          data(static_cast<size_t>(c) * h * w, 0.0f), range_min(lo), range_max(hi) {
        VSTAIN_REQUIRE(c >= 1 && h >= 1 && w >= 1, "ImageTensor: dims must be positive");
    }

    size_t size() const { return data.size(); }
    size_t plane() const { return static_cast<size_t>(height) * width; }

    float& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * height + y) * width + x]; }

    bool same_shape(const ImageTensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* where) {
    if (!a.same_shape(b))
        throw InvalidArgument(std::string(where) + ": shape mismatch (" +
                              std::to_string(a.channels) + "x" + std::to_string(a.height) + "x" +
                              std::to_string(a.width) + " vs " + std::to_string(b.channels) + "x" +
                              std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
}

template <typename T>
inline T clamp(T v, T lo, T hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

// round-half-away-from-zero, the rounding rule used for channel counts and
// the [-1,1] -> [0,255] quantization
inline double round_half_away(double v) {
    return v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5);
}

// grayscale luma weights, shared with the YCbCr Y channel
inline ImageTensor to_grayscale(const ImageTensor& rgb) {
    VSTAIN_REQUIRE(rgb.channels == 3, "to_grayscale: expected 3 channels");
    ImageTensor g(1, rgb.height, rgb.width, rgb.range_min, rgb.range_max);
    const size_t n = rgb.plane();
    for (size_t i = 0; i < n; ++i)
        g.data[i] = 0.299f * rgb.data[i] + 0.587f * rgb.data[n + i] + 0.114f * rgb.data[2 * n + i];
    return g;
}

} // namespace vstain

#endif
