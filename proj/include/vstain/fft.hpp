#ifndef VSTAIN_FFT_HPP
#define VSTAIN_FFT_HPP

#include <complex>
#include <vector>

#include "vstain/core.hpp"

namespace vstain::fft {

using cd = std::complex<double>;

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// iterative in-place Cooley-Tukey, n a power of two
inline void fft_pow2(std::vector<cd>& a, bool inverse) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * 3.14159265358979323846 / static_cast<double>(len);
        const cd wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            cd w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const cd u = a[i + k];
                const cd v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (cd& x : a) x /= static_cast<double>(n);
}

// Bluestein chirp-z for arbitrary n
inline void fft_bluestein(std::vector<cd>& a, bool inverse) {
    const size_t n = a.size();
    size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;
    std::vector<cd> chirp(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (size_t k = 0; k < n; ++k) {
        // pi * k^2 / n, with k^2 reduced mod 2n to keep the angle accurate
        const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % (2 * n);
        const double ang = sign * 3.14159265358979323846 * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = cd(std::cos(ang), std::sin(ang));
    }
    std::vector<cd> fa(m, cd(0, 0)), fb(m, cd(0, 0));
    for (size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
    fb[0] = std::conj(chirp[0]);
    for (size_t k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(chirp[k]);
    fft_pow2(fa, false);
    fft_pow2(fb, false);
    for (size_t k = 0; k < m; ++k) fa[k] *= fb[k];
    fft_pow2(fa, true);
    for (size_t k = 0; k < n; ++k) a[k] = fa[k] * chirp[k];
    if (inverse)
        for (cd& x : a) x /= static_cast<double>(n);
}

inline void fft(std::vector<cd>& a, bool inverse = false) {
    if (a.size() <= 1) return;
    if (is_pow2(a.size()))
        fft_pow2(a, inverse);
    else
        fft_bluestein(a, inverse);
}

// row-column 2-D transform of an H x W grid, row-major
inline void fft2d(std::vector<cd>& a, int h, int w, bool inverse = false) {
    VSTAIN_REQUIRE(a.size() == static_cast<size_t>(h) * w, "fft2d: size mismatch");
    std::vector<cd> line;
    for (int y = 0; y < h; ++y) {
        line.assign(a.begin() + static_cast<size_t>(y) * w, a.begin() + static_cast<size_t>(y + 1) * w);
        fft(line, inverse);
        std::copy(line.begin(), line.end(), a.begin() + static_cast<size_t>(y) * w);
    }
    line.resize(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) line[y] = a[static_cast<size_t>(y) * w + x];
        fft(line, inverse);
        for (int y = 0; y < h; ++y) a[static_cast<size_t>(y) * w + x] = line[y];
    }
}

} // namespace vstain::fft

#endif
