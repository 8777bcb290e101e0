#ifndef VSTAIN_QUALITY_HPP
#define VSTAIN_QUALITY_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "vstain/core.hpp"
#include "vstain/dataio.hpp"
#include "vstain/fft.hpp"
#include "vstain/rng.hpp"

namespace vstain::quality {

/*------------------------------------- contrast ------------------------------------------*/

// linear-interpolation percentile of the sorted values, q in [0,1]
inline double percentile(std::vector<float> values, double q) {
    VSTAIN_REQUIRE(!values.empty(), "percentile: empty input");
    std::sort(values.begin(), values.end());
    const double pos = q * (values.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - lo;
    return (1.0 - frac) * values[lo] + frac * values[hi];
}

// (A90 - A10) / (A90 + A10), 0 when the denominator vanishes
inline double contrast(const ImageTensor& gray) {
    VSTAIN_REQUIRE(gray.channels == 1, "contrast: expected grayscale");
    const double a90 = percentile(gray.data, 0.90);
    const double a10 = percentile(gray.data, 0.10);
    const double denom = a90 + a10;
    return denom == 0.0 ? 0.0 : (a90 - a10) / denom;
}

/*------------------------------------- MSE / PSNR ----------------------------------------*/

inline double mse(const ImageTensor& gt, const ImageTensor& pred) {
    require_same_shape(gt, pred, "mse");
    double acc = 0;
    for (size_t i = 0; i < gt.data.size(); ++i) {
        const double d = double(gt.data[i]) - pred.data[i];
        acc += d * d;
    }
    return acc / gt.data.size();
}

// 10*log10(max(gt)^2 / MSE), capped at 99 dB for near-zero MSE
inline double psnr(const ImageTensor& gt, const ImageTensor& pred) {
    const double err = mse(gt, pred);
    if (err < 1e-12) return 99.0;
    const double peak = *std::max_element(gt.data.begin(), gt.data.end());
    return 10.0 * std::log10(peak * peak / err);
}

/*--------------------------------------- YCbCr -------------------------------------------*/

// full-range transform; input RGB in [0,1]
inline ImageTensor rgb_to_ycbcr(const ImageTensor& rgb) {
    VSTAIN_REQUIRE(rgb.channels == 3, "rgb_to_ycbcr: expected 3 channels");
    ImageTensor out(3, rgb.height, rgb.width, 0.f, 1.f);
    const size_t n = rgb.plane();
    for (size_t i = 0; i < n; ++i) {
        const double r = rgb.data[i], g = rgb.data[n + i], b = rgb.data[2 * n + i];
        out.data[i] = static_cast<float>(0.299 * r + 0.587 * g + 0.114 * b);
        out.data[n + i] = static_cast<float>(-0.168736 * r - 0.331264 * g + 0.5 * b + 0.5);
        out.data[2 * n + i] = static_cast<float>(0.5 * r - 0.418688 * g - 0.081312 * b + 0.5);
    }
    return out;
}

// equal-width bins on [0,1]; counts over all images sum to the pixel count
inline std::array<std::vector<std::uint64_t>, 3> ycbcr_histograms(
    const std::vector<ImageTensor>& ycbcr_images, int bins) {
    VSTAIN_REQUIRE(bins >= 1, "ycbcr_histograms: bins must be >= 1");
    std::array<std::vector<std::uint64_t>, 3> hist;
    for (auto& h : hist) h.assign(bins, 0);
    for (const ImageTensor& img : ycbcr_images) {
        VSTAIN_REQUIRE(img.channels == 3, "ycbcr_histograms: expected 3 channels");
        const size_t n = img.plane();
        for (int c = 0; c < 3; ++c)
            for (size_t i = 0; i < n; ++i) {
                const double v = clamp(double(img.data[c * n + i]), 0.0, 1.0);
                const int bin = std::min(bins - 1, static_cast<int>(v * bins));
                ++hist[c][bin];
            }
    }
    return hist;
}

/*------------------------------------ CIE-94 color ---------------------------------------*/

namespace detail {

inline double srgb_linearize(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline std::array<double, 3> rgb_to_lab(const std::array<double, 3>& rgb) {
    const double r = srgb_linearize(rgb[0]);
    const double g = srgb_linearize(rgb[1]);
    const double b = srgb_linearize(rgb[2]);
    const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    const double xn = 0.95047, yn = 1.0, zn = 1.08883;  // D65 white
    auto f = [](double t) {
        const double d = 6.0 / 29.0;
        return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
    };
    const double fx = f(x / xn), fy = f(y / yn), fz = f(z / zn);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

} // namespace detail

// CIE-94 delta-E with kL=kC=kH=1, K1=0.045, K2=0.015. Asymmetric: the first
// argument is the reference (ground truth) whose chroma weights the terms.
inline double cie94_distance(const std::array<double, 3>& rgb_ref,
                             const std::array<double, 3>& rgb_test) {
    for (double v : rgb_ref) VSTAIN_REQUIRE(v >= 0.0 && v <= 1.0, "cie94: rgb out of [0,1]");
    for (double v : rgb_test) VSTAIN_REQUIRE(v >= 0.0 && v <= 1.0, "cie94: rgb out of [0,1]");
    const auto lab1 = detail::rgb_to_lab(rgb_ref);
    const auto lab2 = detail::rgb_to_lab(rgb_test);
    const double dL = lab1[0] - lab2[0];
    const double c1 = std::hypot(lab1[1], lab1[2]);
    const double c2 = std::hypot(lab2[1], lab2[2]);
    const double dC = c1 - c2;
    const double da = lab1[1] - lab2[1];
    const double db = lab1[2] - lab2[2];
    const double dH2 = std::max(0.0, da * da + db * db - dC * dC);
    const double sC = 1.0 + 0.045 * c1;
    const double sH = 1.0 + 0.015 * c1;
    return std::sqrt(dL * dL + (dC / sC) * (dC / sC) + dH2 / (sH * sH));
}

// averages each image's RGB over the FOV first, then CIE-94 between the means
inline double fov_color_distance(const ImageTensor& gt_rgb01, const ImageTensor& pred_rgb01) {
    require_same_shape(gt_rgb01, pred_rgb01, "fov_color_distance");
    VSTAIN_REQUIRE(gt_rgb01.channels == 3, "fov_color_distance: expected 3 channels");
    std::array<double, 3> a{}, b{};
    const size_t n = gt_rgb01.plane();
    for (int c = 0; c < 3; ++c) {
        double sa = 0, sb = 0;
        for (size_t i = 0; i < n; ++i) {
            sa += gt_rgb01.data[c * n + i];
            sb += pred_rgb01.data[c * n + i];
        }
        a[c] = clamp(sa / n, 0.0, 1.0);
        b[c] = clamp(sb / n, 0.0, 1.0);
    }
    return cie94_distance(a, b);
}

/*------------------------------ radial power spectrum -------------------------------------*/

// center-shifted |F|^2 averaged over integer-radius annuli r = 0..N/2-1,
// then normalized so the bins sum to 1
inline std::vector<double> radial_power_spectrum(const ImageTensor& gray) {
    VSTAIN_REQUIRE(gray.channels == 1, "radial_power_spectrum: expected grayscale");
    VSTAIN_REQUIRE(gray.height == gray.width, "radial_power_spectrum: image must be square");
    const int n = gray.height;
    VSTAIN_REQUIRE(n % 2 == 0, "radial_power_spectrum: size must be even");
    std::vector<fft::cd> f(gray.data.begin(), gray.data.end());
    fft::fft2d(f, n, n, false);
    const int bins = n / 2;
    std::vector<double> power(bins, 0.0);
    std::vector<std::uint64_t> count(bins, 0);
    for (int y = 0; y < n; ++y) {
        const int v = y < n / 2 ? y : y - n;  // centered frequency coordinate
        for (int x = 0; x < n; ++x) {
            const int u = x < n / 2 ? x : x - n;
            const int r = static_cast<int>(round_half_away(std::sqrt(double(u) * u + double(v) * v)));
            if (r >= bins) continue;
            power[r] += std::norm(f[static_cast<size_t>(y) * n + x]);
            ++count[r];
        }
    }
    double total = 0;
    for (int r = 0; r < bins; ++r) {
        if (count[r]) power[r] /= count[r];
        total += power[r];
    }
    if (total > 0)
        for (double& p : power) p /= total;
    return power;
}

// output center o maps to input coordinate (o + 0.5)/factor - 0.5, edge-clamped
inline ImageTensor bilinear_upsample(const ImageTensor& img, int factor) {
    VSTAIN_REQUIRE(factor >= 1, "bilinear_upsample: factor must be >= 1");
    if (factor == 1) return img;
    ImageTensor out(img.channels, img.height * factor, img.width * factor, img.range_min,
                    img.range_max);
    for (int c = 0; c < img.channels; ++c)
        for (int oy = 0; oy < out.height; ++oy) {
            const double sy = clamp((oy + 0.5) / factor - 0.5, 0.0, double(img.height - 1));
            const int y0 = static_cast<int>(sy);
            const int y1 = std::min(y0 + 1, img.height - 1);
            const double fy = sy - y0;
            for (int ox = 0; ox < out.width; ++ox) {
                const double sx = clamp((ox + 0.5) / factor - 0.5, 0.0, double(img.width - 1));
                const int x0 = static_cast<int>(sx);
                const int x1 = std::min(x0 + 1, img.width - 1);
                const double fx = sx - x0;
                const double v = (1 - fy) * ((1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1)) +
                                 fy * ((1 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1));
                out.at(c, oy, ox) = static_cast<float>(v);
            }
        }
    return out;
}

/*------------------------------ perceptual distance (proxy) -------------------------------*/

struct FeatureStack {
    std::vector<ImageTensor> layers;
    std::string extractor_id;
};

// Pluggable deterministic feature source. The default stands in for the
// pretrained perceptual backbone, which is out of scope; scores computed
// with it are proxy values, comparable only to each other.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string id() const = 0;
    virtual FeatureStack features(const ImageTensor& rgb01) const = 0;
};

// Fixed seeded stack of three stride-2 3x3 convolutions (16/32/64 channels),
// activation-free. Weights are fan-in-scaled normals keyed by the seed.
class ProxyConvExtractor : public FeatureExtractor {
public:
    explicit ProxyConvExtractor(std::uint64_t seed = 17) : seed_(seed) {
        const int chans[4] = {3, 16, 32, 64};
        const Rng rng(seed);
        for (int l = 0; l < 3; ++l) {
            const int cin = chans[l], cout = chans[l + 1];
            std::vector<float> w(static_cast<size_t>(cout) * cin * 9);
            const double scale = 1.0 / std::sqrt(9.0 * cin);
            const Rng layer = rng.fork(l);
            for (size_t i = 0; i < w.size(); ++i)
                w[i] = static_cast<float>(scale * layer.gaussian(i));
            weights_.push_back(std::move(w));
        }
    }

    std::string id() const override { return "proxy-conv16/32/64-seed" + std::to_string(seed_); }

    FeatureStack features(const ImageTensor& rgb01) const override {
        VSTAIN_REQUIRE(rgb01.channels == 3, "ProxyConvExtractor: expected 3 channels");
        FeatureStack fs;
        fs.extractor_id = id();
        const int chans[4] = {3, 16, 32, 64};
        ImageTensor cur = rgb01;
        for (int l = 0; l < 3; ++l) {
            cur = conv3x3_stride2(cur, weights_[l], chans[l], chans[l + 1]);
            fs.layers.push_back(cur);
        }
        return fs;
    }

    // 64-dim global-average-pooled deepest features, used for the FID proxy
    std::vector<double> fid_vector(const ImageTensor& rgb01) const {
        const FeatureStack fs = features(rgb01);
        const ImageTensor& top = fs.layers.back();
        std::vector<double> v(top.channels);
        const size_t n = top.plane();
        for (int c = 0; c < top.channels; ++c) {
            double s = 0;
            for (size_t i = 0; i < n; ++i) s += top.data[c * n + i];
            v[c] = s / n;
        }
        return v;
    }

private:
    static ImageTensor conv3x3_stride2(const ImageTensor& in, const std::vector<float>& w, int cin,
                                       int cout) {
        VSTAIN_REQUIRE(in.channels == cin, "ProxyConvExtractor: channel mismatch");
        const int oh = (in.height + 1) / 2, ow = (in.width + 1) / 2;
        ImageTensor out(cout, oh, ow, -1.f, 1.f);
        for (int oc = 0; oc < cout; ++oc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0;
                    for (int ic = 0; ic < cin; ++ic)
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = 2 * oy + ky - 1;
                            if (iy < 0 || iy >= in.height) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int ix = 2 * ox + kx - 1;
                                if (ix < 0 || ix >= in.width) continue;
                                acc += w[((static_cast<size_t>(oc) * cin + ic) * 3 + ky) * 3 + kx] *
                                       in.at(ic, iy, ix);
                            }
                        }
                    out.at(oc, oy, ox) = static_cast<float>(acc);
                }
        return out;
    }

    std::uint64_t seed_;
    std::vector<std::vector<float>> weights_;
};

// d(n, n0) = sum_l (1/(H_l W_l)) sum_{h,w} ||m^l_hw - m0^l_hw||^2
inline double perceptual_distance(const FeatureStack& a, const FeatureStack& b) {
    if (a.extractor_id != b.extractor_id)
        throw InvalidArgument("perceptual_distance: extractor mismatch (" + a.extractor_id +
                              " vs " + b.extractor_id + ")");
    VSTAIN_REQUIRE(a.layers.size() == b.layers.size(), "perceptual_distance: layer count mismatch");
    double d = 0;
    for (size_t l = 0; l < a.layers.size(); ++l) {
        require_same_shape(a.layers[l], b.layers[l], "perceptual_distance");
        double acc = 0;
        for (size_t i = 0; i < a.layers[l].data.size(); ++i) {
            const double diff = double(a.layers[l].data[i]) - b.layers[l].data[i];
            acc += diff * diff;
        }
        d += acc / a.layers[l].plane();
    }
    return d;
}

inline double perceptual_distance(const ImageTensor& a, const ImageTensor& b,
                                  const FeatureExtractor& extractor) {
    return perceptual_distance(extractor.features(a), extractor.features(b));
}

/*--------------------------------------- FID ---------------------------------------------*/

struct FeatureGaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    int count = 0;
};

inline FeatureGaussian fit_feature_gaussian(const std::vector<std::vector<double>>& features) {
    VSTAIN_REQUIRE(features.size() >= 2, "fit_feature_gaussian: need >= 2 samples");
    const int d = static_cast<int>(features[0].size());
    const int n = static_cast<int>(features.size());
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i) {
        VSTAIN_REQUIRE(static_cast<int>(features[i].size()) == d,
                       "fit_feature_gaussian: inconsistent dimensions");
        for (int j = 0; j < d; ++j) x(i, j) = features[i][j];
    }
    FeatureGaussian g;
    g.count = n;
    g.mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
    g.cov = centered.transpose() * centered / (n - 1);
    return g;
}

// ||mu - mu_w||^2 + tr(S + S_w - 2 (S S_w)^{1/2}), the square root taken via
// symmetric eigendecomposition of S^{1/2} S_w S^{1/2}
inline double fid(const FeatureGaussian& real, const FeatureGaussian& gen) {
    VSTAIN_REQUIRE(real.mean.size() == gen.mean.size(), "fid: dimension mismatch");
    VSTAIN_REQUIRE(real.count >= 2 && gen.count >= 2, "fid: need >= 2 samples per side");
    const Eigen::VectorXd dmu = real.mean - gen.mean;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(real.cov);
    if (es.info() != Eigen::Success) throw NumericError("fid: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-8) throw NumericError("fid: covariance not PSD");
        ev[i] = std::sqrt(std::max(0.0, ev[i]));
    }
    const Eigen::MatrixXd sqrt_real =
        es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();

    const Eigen::MatrixXd inner = sqrt_real * gen.cov * sqrt_real;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2((inner + inner.transpose()) / 2.0);
    if (es2.info() != Eigen::Success) throw NumericError("fid: eigendecomposition failed");
    double tr_sqrt = 0;
    for (int i = 0; i < es2.eigenvalues().size(); ++i) {
        const double lam = es2.eigenvalues()[i];
        if (lam < -1e-8) throw NumericError("fid: product matrix not PSD");
        tr_sqrt += std::sqrt(std::max(0.0, lam));
    }
    return dmu.squaredNorm() + real.cov.trace() + gen.cov.trace() - 2.0 * tr_sqrt;
}

/*------------------------------------ NIQE-style score ------------------------------------*/

struct MvgModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

namespace detail {

// ratio function of the generalized Gaussian shape parameter
inline double ggd_ratio(double alpha) {
    return std::tgamma(2.0 / alpha) * std::tgamma(2.0 / alpha) /
           (std::tgamma(1.0 / alpha) * std::tgamma(3.0 / alpha));
}

inline double ggd_alpha_lookup(double target) {
    // monotone decreasing grid search on alpha in [0.2, 10]
    static const std::vector<std::pair<double, double>>& table = [] {
        static std::vector<std::pair<double, double>> t;
        for (double a = 0.2; a <= 10.0 + 1e-9; a += 0.001) t.emplace_back(a, ggd_ratio(a));
        return t;
    }();
    double best_a = table[0].first, best_err = std::abs(table[0].second - target);
    for (const auto& [a, r] : table) {
        const double err = std::abs(r - target);
        if (err < best_err) {
            best_err = err;
            best_a = a;
        }
    }
    return best_a;
}

// Gaussian window 7x7, sigma = 7/6, normalized to unit sum
inline const std::array<double, 49>& mscn_window() {
    static const std::array<double, 49> w = [] {
        std::array<double, 49> k{};
        const double sigma = 7.0 / 6.0;
        double sum = 0;
        for (int y = -3; y <= 3; ++y)
            for (int x = -3; x <= 3; ++x) {
                const double v = std::exp(-(y * y + x * x) / (2.0 * sigma * sigma));
                k[(y + 3) * 7 + (x + 3)] = v;
                sum += v;
            }
        for (double& v : k) v /= sum;
        return k;
    }();
    return w;
}

// mean-subtracted contrast-normalized coefficients with edge clamping
inline std::vector<double> mscn(const ImageTensor& gray) {
    const auto& w = mscn_window();
    const int h = gray.height, wd = gray.width;
    std::vector<double> mu(static_cast<size_t>(h) * wd), mu2(mu.size()), out(mu.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wd; ++x) {
            double m = 0, m2 = 0;
            for (int ky = -3; ky <= 3; ++ky) {
                const int iy = clamp(y + ky, 0, h - 1);
                for (int kx = -3; kx <= 3; ++kx) {
                    const int ix = clamp(x + kx, 0, wd - 1);
                    const double wv = w[(ky + 3) * 7 + (kx + 3)];
                    const double p = gray.at(0, iy, ix);
                    m += wv * p;
                    m2 += wv * p * p;
                }
            }
            mu[static_cast<size_t>(y) * wd + x] = m;
            mu2[static_cast<size_t>(y) * wd + x] = m2;
        }
    for (size_t i = 0; i < out.size(); ++i) {
        const double sigma = std::sqrt(std::max(0.0, mu2[i] - mu[i] * mu[i]));
        out[i] = (gray.data[i] - mu[i]) / (sigma + 1.0);
    }
    return out;
}

inline void ggd_fit(const std::vector<double>& x, double& alpha, double& sigma2) {
    double m_abs = 0, m_sq = 0;
    for (double v : x) {
        m_abs += std::abs(v);
        m_sq += v * v;
    }
    m_abs /= x.size();
    m_sq /= x.size();
    sigma2 = m_sq;
    const double rho = m_sq > 0 ? m_abs * m_abs / m_sq : 1.0;
    alpha = ggd_alpha_lookup(rho);
}

// asymmetric GGD moment matching over pairwise products
inline void aggd_fit(const std::vector<double>& x, double& alpha, double& eta, double& sigma_l2,
                     double& sigma_r2) {
    double sl = 0, sr = 0, m_abs = 0, m_sq = 0;
    size_t nl = 0, nr = 0;
    for (double v : x) {
        if (v < 0) {
            sl += v * v;
            ++nl;
        } else {
            sr += v * v;
            ++nr;
        }
        m_abs += std::abs(v);
        m_sq += v * v;
    }
    m_abs /= x.size();
    m_sq /= x.size();
    sigma_l2 = nl ? sl / nl : 0.0;
    sigma_r2 = nr ? sr / nr : 0.0;
    const double sigma_l = std::sqrt(sigma_l2), sigma_r = std::sqrt(sigma_r2);
    const double gamma_hat = sigma_l > 0 ? sigma_r / sigma_l : 1.0;
    const double rho = m_sq > 0 ? m_abs * m_abs / m_sq : 1.0;
    const double rhat = rho * (gamma_hat * gamma_hat * gamma_hat + 1.0) * (gamma_hat + 1.0) /
                        ((gamma_hat * gamma_hat + 1.0) * (gamma_hat * gamma_hat + 1.0));
    alpha = ggd_alpha_lookup(rhat);
    eta = (sigma_r - sigma_l) * std::tgamma(2.0 / alpha) / std::tgamma(1.0 / alpha);
}

} // namespace detail

// 36-dim feature: at two scales, GGD (alpha, sigma^2) of the MSCN field plus
// AGGD (alpha, eta, sigma_l^2, sigma_r^2) of four orientation pairwise products
inline Eigen::VectorXd niqe_features(const ImageTensor& gray_patch) {
    VSTAIN_REQUIRE(gray_patch.channels == 1, "niqe_features: expected grayscale");
    VSTAIN_REQUIRE(gray_patch.height >= 8 && gray_patch.width >= 8,
                   "niqe_features: patch too small");
    Eigen::VectorXd feat(36);
    int idx = 0;
    ImageTensor cur = gray_patch;
    for (int scale = 0; scale < 2; ++scale) {
        const std::vector<double> f = detail::mscn(cur);
        const int h = cur.height, w = cur.width;
        double alpha, sigma2;
        detail::ggd_fit(f, alpha, sigma2);
        feat[idx++] = alpha;
        feat[idx++] = sigma2;
        // orientation shifts: horizontal, vertical, main diagonal, secondary diagonal
        const int shifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
        for (const auto& sh : shifts) {
            std::vector<double> prod;
            prod.reserve(static_cast<size_t>(h) * w);
            for (int y = 0; y + sh[0] < h; ++y)
                for (int x = std::max(0, -sh[1]); x + std::max(0, sh[1]) < w; ++x)
                    prod.push_back(f[static_cast<size_t>(y) * w + x] *
                                   f[static_cast<size_t>(y + sh[0]) * w + (x + sh[1])]);
            double a, eta, sl2, sr2;
            detail::aggd_fit(prod, a, eta, sl2, sr2);
            feat[idx++] = a;
            feat[idx++] = eta;
            feat[idx++] = sl2;
            feat[idx++] = sr2;
        }
        if (scale == 0) {
            // half-scale via 2x2 mean pooling (trim odd edges first)
            const int th = cur.height & ~1, tw = cur.width & ~1;
            cur = dataio::meanpool_downsample(dataio::crop(cur, 0, 0, tw, th), 2);
        }
    }
    return feat;
}

inline MvgModel niqe_fit(const std::vector<ImageTensor>& gray_patches) {
    VSTAIN_REQUIRE(gray_patches.size() >= 50, "niqe_fit: need >= 50 patches");
    std::vector<std::vector<double>> rows;
    rows.reserve(gray_patches.size());
    for (const ImageTensor& p : gray_patches) {
        const Eigen::VectorXd f = niqe_features(p);
        rows.emplace_back(f.data(), f.data() + f.size());
    }
    const FeatureGaussian g = fit_feature_gaussian(rows);
    return {g.mean, g.cov};
}

// D = sqrt((v1-v2)^T ((S1+S2)/2)^-1 (v1-v2)) with pseudo-inverse fallback
inline double mvg_distance(const MvgModel& a, const MvgModel& b) {
    VSTAIN_REQUIRE(a.mean.size() == b.mean.size(), "mvg_distance: dimension mismatch");
    const Eigen::MatrixXd pooled = (a.cov + b.cov) / 2.0;
    const Eigen::VectorXd d = a.mean - b.mean;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pooled);
    if (es.info() != Eigen::Success) throw NumericError("mvg_distance: eigendecomposition failed");
    const double tol = 1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Eigen::VectorXd inv = es.eigenvalues();
    for (int i = 0; i < inv.size(); ++i) inv[i] = inv[i] > tol ? 1.0 / inv[i] : 0.0;
    const Eigen::VectorXd proj = es.eigenvectors().transpose() * d;
    const double q = (proj.array().square() * inv.array()).sum();
    return std::sqrt(std::max(0.0, q));
}

// splits the image into a non-overlapping patch grid and fits its own MVG
inline double niqe_score(const ImageTensor& gray, const MvgModel& reference, int patch = 48) {
    VSTAIN_REQUIRE(gray.channels == 1, "niqe_score: expected grayscale");
    VSTAIN_REQUIRE(patch >= 8, "niqe_score: patch too small");
    std::vector<std::vector<double>> rows;
    for (int y = 0; y + patch <= gray.height; y += patch)
        for (int x = 0; x + patch <= gray.width; x += patch) {
            const Eigen::VectorXd f = niqe_features(dataio::crop(gray, x, y, patch, patch));
            rows.emplace_back(f.data(), f.data() + f.size());
        }
    VSTAIN_REQUIRE(rows.size() >= 2, "niqe_score: image yields too few patches");
    const FeatureGaussian g = fit_feature_gaussian(rows);
    return mvg_distance(reference, MvgModel{g.mean, g.cov});
}

/*------------------------------- coefficient of variation ---------------------------------*/

// per-pixel per-channel sampleStd/(mean + 1e-12) across R repeats (YCbCr inputs)
inline ImageTensor cv_map(const std::vector<ImageTensor>& repeats) {
    VSTAIN_REQUIRE(repeats.size() >= 2, "cv_map: need R >= 2 repeats");
    const ImageTensor& first = repeats[0];
    for (const ImageTensor& r : repeats) require_same_shape(first, r, "cv_map");
    const double R = static_cast<double>(repeats.size());
    ImageTensor out(first.channels, first.height, first.width, 0.f, 1.f);
    for (size_t i = 0; i < first.data.size(); ++i) {
        double s = 0, s2 = 0;
        for (const ImageTensor& r : repeats) {
            s += r.data[i];
            s2 += double(r.data[i]) * r.data[i];
        }
        const double mean = s / R;
        const double var = std::max(0.0, (s2 - R * mean * mean) / (R - 1.0));
        out.data[i] = static_cast<float>(std::sqrt(var) / (mean + 1e-12));
    }
    return out;
}

inline double mean_cv(const ImageTensor& map) {
    double s = 0;
    for (float v : map.data) s += v;
    return s / map.data.size();
}

inline std::array<double, 3> mean_cv_per_channel(const ImageTensor& map) {
    VSTAIN_REQUIRE(map.channels == 3, "mean_cv_per_channel: expected 3 channels");
    std::array<double, 3> out{};
    const size_t n = map.plane();
    for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (size_t i = 0; i < n; ++i) s += map.data[c * n + i];
        out[c] = s / n;
    }
    return out;
}

/*------------------------------------ paired t-test ---------------------------------------*/

namespace detail {

inline double betacf(double a, double b, double x) {
    // continued fraction for the regularized incomplete beta (modified Lentz)
    const int max_iter = 300;
    const double eps = 3e-14, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

inline double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log(1.0 - x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// P(T > t) for Student's t with nu degrees of freedom, t >= 0
inline double t_tail(double t, double nu) {
    return 0.5 * incbeta(nu / 2.0, 0.5, nu / (nu + t * t));
}

} // namespace detail

enum class Tails { one, two };
enum class Alternative { greater, less };

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
};

// d = x - y; t = mean(d) / (sampleStd(d)/sqrt(n)). Zero-variance conventions:
// mean 0 -> t=0 (p=1 two-tailed), mean != 0 -> p=0.
inline TTestResult paired_t_test(const std::vector<double>& x, const std::vector<double>& y,
                                 Tails tails, Alternative alt = Alternative::greater) {
    VSTAIN_REQUIRE(x.size() == y.size(), "paired_t_test: length mismatch");
    const size_t n = x.size();
    VSTAIN_REQUIRE(n >= 2, "paired_t_test: need n >= 2");
    double mean = 0;
    for (size_t i = 0; i < n; ++i) mean += x[i] - y[i];
    mean /= n;
    double var = 0;
    for (size_t i = 0; i < n; ++i) {
        const double d = x[i] - y[i] - mean;
        var += d * d;
    }
    var /= (n - 1);
    const double nu = static_cast<double>(n - 1);

    TTestResult r;
    if (var == 0.0) {
        if (mean == 0.0) {
            r.t = 0.0;
            r.p = tails == Tails::two ? 1.0 : 0.5;
        } else {
            r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();
            if (tails == Tails::two) {
                r.p = 0.0;
            } else {
                const bool matches = (alt == Alternative::greater) == (mean > 0);
                r.p = matches ? 0.0 : 1.0;
            }
        }
        return r;
    }
    r.t = mean / std::sqrt(var / n);
    const double tail_hi = r.t >= 0 ? detail::t_tail(r.t, nu) : 1.0 - detail::t_tail(-r.t, nu);
    if (tails == Tails::two)
        r.p = 2.0 * std::min(tail_hi, 1.0 - tail_hi);
    else
        r.p = alt == Alternative::greater ? tail_hi : 1.0 - tail_hi;
    return r;
}

} // namespace vstain::quality

#endif
