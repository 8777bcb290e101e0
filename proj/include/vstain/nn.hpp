#ifndef VSTAIN_NN_HPP
#define VSTAIN_NN_HPP

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "vstain/core.hpp"

namespace vstain::nn {

template <typename S>
struct Tensor3 {
    int c = 0, h = 0, w = 0;
    std::vector<S> v;

    Tensor3() = default;
    Tensor3(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, S(0)) {}

    size_t size() const { return v.size(); }
    size_t plane() const { return static_cast<size_t>(h) * w; }
    S& at(int ci, int y, int x) { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
    S at(int ci, int y, int x) const { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
    bool same_shape(const Tensor3& o) const { return c == o.c && h == o.h && w == o.w; }
};

template <typename S>
inline Tensor3<S> from_image(const ImageTensor& img) {
    Tensor3<S> t(img.channels, img.height, img.width);
    for (size_t i = 0; i < img.data.size(); ++i) t.v[i] = static_cast<S>(img.data[i]);
    return t;
}

template <typename S>
inline ImageTensor to_image(const Tensor3<S>& t, float lo, float hi) {
    ImageTensor img(t.c, t.h, t.w, lo, hi);
    for (size_t i = 0; i < t.v.size(); ++i) img.data[i] = static_cast<float>(t.v[i]);
    return img;
}

// Named parameter array. fan_in selects the initialization:
//   > 0  -> normal with std 1/sqrt(fan_in)
//   0    -> zeros (biases, the zero-initialized output layer)
//   -1   -> ones (normalization gains)
template <typename S>
struct Param {
    std::string name;
    std::vector<int> shape;
    int fan_in = 0;
    std::vector<S> w, g;

    Param() = default;
    Param(std::string n, std::vector<int> sh, int fan) : name(std::move(n)), shape(std::move(sh)), fan_in(fan) {
        size_t total = 1;
        for (int d : shape) total *= static_cast<size_t>(d);
        w.assign(total, S(0));
        g.assign(total, S(0));
    }
    size_t size() const { return w.size(); }
};

template <typename S>
using ParamList = std::vector<Param<S>*>;

namespace detail {

template <typename S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapM = Eigen::Map<MatR<S>>;
template <typename S>
using MapC = Eigen::Map<const MatR<S>>;

} // namespace detail

/*----------------------------------------- layers -----------------------------------------*/

// 3x3 or 1x1 convolution, stride 1, same padding, via im2col + GEMM.
template <typename S>
class Conv2d {
public:
    Conv2d(const std::string& name, int cin, int cout, int k)
        : cin_(cin), cout_(cout), k_(k),
          w(name + ".w", {cout, cin, k, k}, cin * k * k),
          b(name + ".b", {cout}, 0) {
        VSTAIN_REQUIRE(k == 1 || k == 3, "Conv2d: kernel must be 1 or 3");
    }

    void collect(ParamList<S>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }

    Tensor3<S> forward(const Tensor3<S>& x) {
        VSTAIN_REQUIRE(x.c == cin_, "Conv2d: channel mismatch");
        x_ = x;
        has_forward_ = true;
        const int hw = x.h * x.w;
        const int K = cin_ * k_ * k_;
        im2col(x, col_);
        Tensor3<S> out(cout_, x.h, x.w);
        // (cout x K) * (K x hw) lands directly in the channel-major output
        detail::MapM<S> om(out.v.data(), cout_, hw);
        detail::MapC<S> cm(col_.data(), K, hw);
        detail::MapC<S> wm(w.w.data(), cout_, K);
        om.noalias() = wm * cm;
        for (int c = 0; c < cout_; ++c) {
            const S bias = b.w[c];
            S* plane = out.v.data() + static_cast<size_t>(c) * hw;
            for (int i = 0; i < hw; ++i) plane[i] += bias;
        }
        return out;
    }

    Tensor3<S> backward(const Tensor3<S>& gout) {
        if (!has_forward_) throw InvalidState("Conv2d: backward without a recorded forward");
        VSTAIN_REQUIRE(gout.c == cout_ && gout.h == x_.h && gout.w == x_.w,
                       "Conv2d: gradient shape mismatch");
        const int hw = x_.h * x_.w;
        const int K = cin_ * k_ * k_;
        detail::MapC<S> gm(gout.v.data(), cout_, hw);
        detail::MapC<S> cm(col_.data(), K, hw);
        detail::MapM<S> gw(w.g.data(), cout_, K);
        gw.noalias() += gm * cm.transpose();
        for (int c = 0; c < cout_; ++c) {
            const S* plane = gout.v.data() + static_cast<size_t>(c) * hw;
            S acc = S(0);
            for (int i = 0; i < hw; ++i) acc += plane[i];
            b.g[c] += acc;
        }
        dcol_.resize(static_cast<size_t>(K) * hw);
        detail::MapM<S> dcm(dcol_.data(), K, hw);
        detail::MapC<S> wm(w.w.data(), cout_, K);
        dcm.noalias() = wm.transpose() * gm;
        Tensor3<S> gin(cin_, x_.h, x_.w);
        col2im(dcol_, gin);
        return gin;
    }

    Param<S> w, b;

private:
    // col is (K x hw) row-major: each kernel-offset row is a shifted copy of
    // an input plane, so rows assemble from contiguous memcpy spans
    void im2col(const Tensor3<S>& x, std::vector<S>& col) const {
        const int hw = x.h * x.w;
        const int K = cin_ * k_ * k_;
        col.assign(static_cast<size_t>(K) * hw, S(0));
        const int pad = k_ / 2;
        for (int ic = 0; ic < cin_; ++ic) {
            const S* src_plane = x.v.data() + static_cast<size_t>(ic) * hw;
            for (int ky = 0; ky < k_; ++ky) {
                const int dy = ky - pad;
                for (int kx = 0; kx < k_; ++kx) {
                    const int dx = kx - pad;
                    S* dst_row =
                        col.data() +
                        ((static_cast<size_t>(ic) * k_ + ky) * k_ + kx) * hw;
                    const int x0 = std::max(0, -dx);
                    const int x1 = x.w - std::max(0, dx);
                    if (x1 <= x0) continue;
                    for (int y = 0; y < x.h; ++y) {
                        const int sy = y + dy;
                        if (sy < 0 || sy >= x.h) continue;
                        std::copy_n(src_plane + static_cast<size_t>(sy) * x.w + x0 + dx,
                                    x1 - x0, dst_row + static_cast<size_t>(y) * x.w + x0);
                    }
                }
            }
        }
    }

    void col2im(const std::vector<S>& dcol, Tensor3<S>& gin) const {
        const int hw = gin.h * gin.w;
        const int pad = k_ / 2;
        for (int ic = 0; ic < cin_; ++ic) {
            S* dst_plane = gin.v.data() + static_cast<size_t>(ic) * hw;
            for (int ky = 0; ky < k_; ++ky) {
                const int dy = ky - pad;
                for (int kx = 0; kx < k_; ++kx) {
                    const int dx = kx - pad;
                    const S* src_row =
                        dcol.data() +
                        ((static_cast<size_t>(ic) * k_ + ky) * k_ + kx) * hw;
                    const int x0 = std::max(0, -dx);
                    const int x1 = gin.w - std::max(0, dx);
                    if (x1 <= x0) continue;
                    for (int y = 0; y < gin.h; ++y) {
                        const int sy = y + dy;
                        if (sy < 0 || sy >= gin.h) continue;
                        S* dst = dst_plane + static_cast<size_t>(sy) * gin.w + x0 + dx;
                        const S* src = src_row + static_cast<size_t>(y) * gin.w + x0;
                        for (int i = 0; i < x1 - x0; ++i) dst[i] += src[i];
                    }
                }
            }
        }
    }

    int cin_, cout_, k_;
    Tensor3<S> x_;
    std::vector<S> col_, dcol_;
    bool has_forward_ = false;
};

template <typename S>
class Linear {
public:
    Linear(const std::string& name, int in, int out)
        : in_(in), out_(out), w(name + ".w", {out, in}, in), b(name + ".b", {out}, 0) {}

    void collect(ParamList<S>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }

    std::vector<S> forward(const std::vector<S>& x) {
        VSTAIN_REQUIRE(static_cast<int>(x.size()) == in_, "Linear: input size mismatch");
        x_ = x;
        has_forward_ = true;
        std::vector<S> out(out_);
        for (int o = 0; o < out_; ++o) {
            S acc = b.w[o];
            const S* wr = w.w.data() + static_cast<size_t>(o) * in_;
            for (int i = 0; i < in_; ++i) acc += wr[i] * x[i];
            out[o] = acc;
        }
        return out;
    }

    std::vector<S> backward(const std::vector<S>& gout) {
        if (!has_forward_) throw InvalidState("Linear: backward without a recorded forward");
        std::vector<S> gin(in_, S(0));
        for (int o = 0; o < out_; ++o) {
            b.g[o] += gout[o];
            S* gw = w.g.data() + static_cast<size_t>(o) * in_;
            const S* wr = w.w.data() + static_cast<size_t>(o) * in_;
            for (int i = 0; i < in_; ++i) {
                gw[i] += gout[o] * x_[i];
                gin[i] += gout[o] * wr[i];
            }
        }
        return gin;
    }

    Param<S> w, b;

private:
    int in_, out_;
    std::vector<S> x_;
    bool has_forward_ = false;
};

template <typename S>
class GroupNorm {
public:
    GroupNorm(const std::string& name, int groups, int channels, S eps = S(1e-5))
        : groups_(groups), channels_(channels), eps_(eps),
          gamma(name + ".gamma", {channels}, -1), beta(name + ".beta", {channels}, 0) {
        VSTAIN_REQUIRE(groups >= 1 && channels % groups == 0,
                       "GroupNorm: channels must be divisible by groups");
    }

    void collect(ParamList<S>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }

    Tensor3<S> forward(const Tensor3<S>& x) {
        VSTAIN_REQUIRE(x.c == channels_, "GroupNorm: channel mismatch");
        const int cpg = channels_ / groups_;
        const size_t plane = x.plane();
        xhat_ = Tensor3<S>(x.c, x.h, x.w);
        invstd_.assign(groups_, S(0));
        Tensor3<S> out(x.c, x.h, x.w);
        for (int g = 0; g < groups_; ++g) {
            const size_t base = static_cast<size_t>(g) * cpg * plane;
            const size_t n = static_cast<size_t>(cpg) * plane;
            S mean = S(0);
            for (size_t i = 0; i < n; ++i) mean += x.v[base + i];
            mean /= static_cast<S>(n);
            S var = S(0);
            for (size_t i = 0; i < n; ++i) {
                const S d = x.v[base + i] - mean;
                var += d * d;
            }
            var /= static_cast<S>(n);
            const S inv = S(1) / std::sqrt(var + eps_);
            invstd_[g] = inv;
            for (int cc = 0; cc < cpg; ++cc) {
                const int ch = g * cpg + cc;
                const S gm = gamma.w[ch], bt = beta.w[ch];
                for (size_t i = 0; i < plane; ++i) {
                    const size_t idx = static_cast<size_t>(ch) * plane + i;
                    const S xh = (x.v[idx] - mean) * inv;
                    xhat_.v[idx] = xh;
                    out.v[idx] = gm * xh + bt;
                }
            }
        }
        has_forward_ = true;
        return out;
    }

    Tensor3<S> backward(const Tensor3<S>& gout) {
        if (!has_forward_) throw InvalidState("GroupNorm: backward without a recorded forward");
        const int cpg = channels_ / groups_;
        const size_t plane = xhat_.plane();
        Tensor3<S> gin(xhat_.c, xhat_.h, xhat_.w);
        for (int g = 0; g < groups_; ++g) {
            const size_t n = static_cast<size_t>(cpg) * plane;
            S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
            for (int cc = 0; cc < cpg; ++cc) {
                const int ch = g * cpg + cc;
                S dgamma = S(0), dbeta = S(0);
                for (size_t i = 0; i < plane; ++i) {
                    const size_t idx = static_cast<size_t>(ch) * plane + i;
                    const S dy = gout.v[idx];
                    dgamma += dy * xhat_.v[idx];
                    dbeta += dy;
                    const S dxhat = dy * gamma.w[ch];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat_.v[idx];
                }
                gamma.g[ch] += dgamma;
                beta.g[ch] += dbeta;
            }
            const S inv_n = S(1) / static_cast<S>(n);
            for (int cc = 0; cc < cpg; ++cc) {
                const int ch = g * cpg + cc;
                for (size_t i = 0; i < plane; ++i) {
                    const size_t idx = static_cast<size_t>(ch) * plane + i;
                    const S dxhat = gout.v[idx] * gamma.w[ch];
                    gin.v[idx] = invstd_[g] * (dxhat - inv_n * sum_dxhat -
                                               xhat_.v[idx] * inv_n * sum_dxhat_xhat);
                }
            }
        }
        return gin;
    }

    Param<S> gamma, beta;

private:
    int groups_, channels_;
    S eps_;
    Tensor3<S> xhat_;
    std::vector<S> invstd_;
    bool has_forward_ = false;
};

template <typename S>
class SiLU {
public:
    Tensor3<S> forward(const Tensor3<S>& x) {
        x_ = x;
        has_forward_ = true;
        Tensor3<S> out(x.c, x.h, x.w);
        for (size_t i = 0; i < x.v.size(); ++i) {
            const S s = S(1) / (S(1) + std::exp(-x.v[i]));
            out.v[i] = x.v[i] * s;
        }
        return out;
    }

    Tensor3<S> backward(const Tensor3<S>& gout) {
        if (!has_forward_) throw InvalidState("SiLU: backward without a recorded forward");
        Tensor3<S> gin(x_.c, x_.h, x_.w);
        for (size_t i = 0; i < x_.v.size(); ++i) {
            const S s = S(1) / (S(1) + std::exp(-x_.v[i]));
            gin.v[i] = gout.v[i] * (s + x_.v[i] * s * (S(1) - s));
        }
        return gin;
    }

private:
    Tensor3<S> x_;
    bool has_forward_ = false;
};

// SiLU on flat vectors (time-embedding path)
template <typename S>
class SiLUVec {
public:
    std::vector<S> forward(const std::vector<S>& x) {
        x_ = x;
        std::vector<S> out(x.size());
        for (size_t i = 0; i < x.size(); ++i) {
            const S s = S(1) / (S(1) + std::exp(-x[i]));
            out[i] = x[i] * s;
        }
        return out;
    }
    std::vector<S> backward(const std::vector<S>& gout) {
        std::vector<S> gin(x_.size());
        for (size_t i = 0; i < x_.size(); ++i) {
            const S s = S(1) / (S(1) + std::exp(-x_[i]));
            gin[i] = gout[i] * (s + x_[i] * s * (S(1) - s));
        }
        return gin;
    }

private:
    std::vector<S> x_;
};

// (C*r^2, H, W) -> (C, rH, rW); pure index permutation
template <typename S>
class PixelShuffle {
public:
    explicit PixelShuffle(int r) : r_(r) { VSTAIN_REQUIRE(r >= 1, "PixelShuffle: factor >= 1"); }

    Tensor3<S> forward(const Tensor3<S>& x) {
        VSTAIN_REQUIRE(x.c % (r_ * r_) == 0, "PixelShuffle: channels not divisible by r^2");
        in_c_ = x.c;
        in_h_ = x.h;
        in_w_ = x.w;
        const int oc = x.c / (r_ * r_);
        Tensor3<S> out(oc, x.h * r_, x.w * r_);
        for (int c = 0; c < oc; ++c)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx)
                    out.at(c, y, xx) =
                        x.at(c * r_ * r_ + (y % r_) * r_ + (xx % r_), y / r_, xx / r_);
        return out;
    }

    Tensor3<S> backward(const Tensor3<S>& gout) {
        Tensor3<S> gin(in_c_, in_h_, in_w_);
        const int oc = in_c_ / (r_ * r_);
        for (int c = 0; c < oc; ++c)
            for (int y = 0; y < gout.h; ++y)
                for (int xx = 0; xx < gout.w; ++xx)
                    gin.at(c * r_ * r_ + (y % r_) * r_ + (xx % r_), y / r_, xx / r_) =
                        gout.at(c, y, xx);
        return gin;
    }

private:
    int r_, in_c_ = 0, in_h_ = 0, in_w_ = 0;
};

template <typename S>
class AvgPool2 {
public:
    Tensor3<S> forward(const Tensor3<S>& x) {
        VSTAIN_REQUIRE(x.h % 2 == 0 && x.w % 2 == 0, "AvgPool2: dims must be even");
        in_h_ = x.h;
        in_w_ = x.w;
        Tensor3<S> out(x.c, x.h / 2, x.w / 2);
        for (int c = 0; c < x.c; ++c)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx)
                    out.at(c, y, xx) = (x.at(c, 2 * y, 2 * xx) + x.at(c, 2 * y, 2 * xx + 1) +
                                        x.at(c, 2 * y + 1, 2 * xx) + x.at(c, 2 * y + 1, 2 * xx + 1)) /
                                       S(4);
        return out;
    }

    Tensor3<S> backward(const Tensor3<S>& gout) {
        Tensor3<S> gin(gout.c, in_h_, in_w_);
        for (int c = 0; c < gout.c; ++c)
            for (int y = 0; y < gout.h; ++y)
                for (int xx = 0; xx < gout.w; ++xx) {
                    const S q = gout.at(c, y, xx) / S(4);
                    gin.at(c, 2 * y, 2 * xx) = q;
                    gin.at(c, 2 * y, 2 * xx + 1) = q;
                    gin.at(c, 2 * y + 1, 2 * xx) = q;
                    gin.at(c, 2 * y + 1, 2 * xx + 1) = q;
                }
        return gin;
    }

private:
    int in_h_ = 0, in_w_ = 0;
};

template <typename S>
class UpsampleNearest2 {
public:
    Tensor3<S> forward(const Tensor3<S>& x) {
        Tensor3<S> out(x.c, x.h * 2, x.w * 2);
        for (int c = 0; c < x.c; ++c)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx) out.at(c, y, xx) = x.at(c, y / 2, xx / 2);
        return out;
    }

    Tensor3<S> backward(const Tensor3<S>& gout) {
        Tensor3<S> gin(gout.c, gout.h / 2, gout.w / 2);
        for (int c = 0; c < gout.c; ++c)
            for (int y = 0; y < gout.h; ++y)
                for (int xx = 0; xx < gout.w; ++xx) gin.at(c, y / 2, xx / 2) += gout.at(c, y, xx);
        return gin;
    }
};

// Single-head self-attention over all spatial positions with a residual
// connection: softmax(Q K^T / sqrt(C)) V. No positional encoding, so the
// block is equivariant under any permutation of positions.
template <typename S>
class Attention {
public:
    Attention(const std::string& name, int channels, int groups)
        : channels_(channels), norm_(name + ".norm", groups, channels),
          wq_(name + ".q", channels), wk_(name + ".k", channels),
          wv_(name + ".v", channels), wo_(name + ".proj", channels) {}

    void collect(ParamList<S>& out) {
        norm_.collect(out);
        wq_.collect(out);
        wk_.collect(out);
        wv_.collect(out);
        wo_.collect(out);
    }

    Tensor3<S> forward(const Tensor3<S>& x) {
        VSTAIN_REQUIRE(x.c == channels_, "Attention: channel mismatch");
        x_shape_ = {x.c, x.h, x.w};
        const Tensor3<S> xn = norm_.forward(x);
        const int n = x.h * x.w;
        // (n x C) position-major view
        xn_.resize(static_cast<size_t>(n) * channels_);
        for (int c = 0; c < channels_; ++c)
            for (int i = 0; i < n; ++i)
                xn_[static_cast<size_t>(i) * channels_ + c] = xn.v[static_cast<size_t>(c) * n + i];

        q_ = project(xn_, wq_, n);
        k_ = project(xn_, wk_, n);
        v_ = project(xn_, wv_, n);

        const S scale = S(1) / std::sqrt(static_cast<S>(channels_));
        a_.resize(static_cast<size_t>(n) * n);
        detail::MapM<S> am(a_.data(), n, n);
        {
            detail::MapC<S> qm(q_.data(), n, channels_);
            detail::MapC<S> km(k_.data(), n, channels_);
            am.noalias() = qm * km.transpose() * scale;
        }
        for (int i = 0; i < n; ++i) {  // row-wise softmax
            S* row = a_.data() + static_cast<size_t>(i) * n;
            S mx = row[0];
            for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
            S sum = S(0);
            for (int j = 0; j < n; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            for (int j = 0; j < n; ++j) row[j] /= sum;
        }
        o_.resize(static_cast<size_t>(n) * channels_);
        {
            detail::MapM<S> om(o_.data(), n, channels_);
            detail::MapC<S> amc(a_.data(), n, n);
            detail::MapC<S> vm(v_.data(), n, channels_);
            om.noalias() = amc * vm;
        }
        proj_ = project(o_, wo_, n);
        Tensor3<S> out = x;  // residual
        for (int c = 0; c < channels_; ++c)
            for (int i = 0; i < n; ++i)
                out.v[static_cast<size_t>(c) * n + i] += proj_[static_cast<size_t>(i) * channels_ + c];
        has_forward_ = true;
        return out;
    }

    Tensor3<S> backward(const Tensor3<S>& gout) {
        if (!has_forward_) throw InvalidState("Attention: backward without a recorded forward");
        const int n = x_shape_[1] * x_shape_[2];
        // dproj in position-major layout
        std::vector<S> dproj(static_cast<size_t>(n) * channels_);
        for (int c = 0; c < channels_; ++c)
            for (int i = 0; i < n; ++i)
                dproj[static_cast<size_t>(i) * channels_ + c] = gout.v[static_cast<size_t>(c) * n + i];

        std::vector<S> dO = project_backward(dproj, o_, wo_, n);

        std::vector<S> dA(static_cast<size_t>(n) * n), dV(static_cast<size_t>(n) * channels_);
        {
            detail::MapM<S> dam(dA.data(), n, n);
            detail::MapC<S> dom(dO.data(), n, channels_);
            detail::MapC<S> vm(v_.data(), n, channels_);
            dam.noalias() = dom * vm.transpose();
            detail::MapM<S> dvm(dV.data(), n, channels_);
            detail::MapC<S> amc(a_.data(), n, n);
            dvm.noalias() = amc.transpose() * dom;
        }
        // softmax backward row-wise: dS = A .* (dA - rowsum(dA .* A))
        for (int i = 0; i < n; ++i) {
            S* da = dA.data() + static_cast<size_t>(i) * n;
            const S* a = a_.data() + static_cast<size_t>(i) * n;
            S dot = S(0);
            for (int j = 0; j < n; ++j) dot += da[j] * a[j];
            for (int j = 0; j < n; ++j) da[j] = a[j] * (da[j] - dot);
        }
        const S scale = S(1) / std::sqrt(static_cast<S>(channels_));
        std::vector<S> dQ(static_cast<size_t>(n) * channels_), dK(static_cast<size_t>(n) * channels_);
        {
            detail::MapM<S> dqm(dQ.data(), n, channels_);
            detail::MapM<S> dkm(dK.data(), n, channels_);
            detail::MapC<S> dsm(dA.data(), n, n);
            detail::MapC<S> km(k_.data(), n, channels_);
            detail::MapC<S> qm(q_.data(), n, channels_);
            dqm.noalias() = dsm * km * scale;
            dkm.noalias() = dsm.transpose() * qm * scale;
        }
        std::vector<S> dxn(static_cast<size_t>(n) * channels_, S(0));
        accumulate(dxn, project_backward(dQ, xn_, wq_, n));
        accumulate(dxn, project_backward(dK, xn_, wk_, n));
        accumulate(dxn, project_backward(dV, xn_, wv_, n));

        Tensor3<S> dxn_t(x_shape_[0], x_shape_[1], x_shape_[2]);
        for (int c = 0; c < channels_; ++c)
            for (int i = 0; i < n; ++i)
                dxn_t.v[static_cast<size_t>(c) * n + i] = dxn[static_cast<size_t>(i) * channels_ + c];
        Tensor3<S> gin = norm_.backward(dxn_t);
        for (size_t i = 0; i < gin.v.size(); ++i) gin.v[i] += gout.v[i];  // residual path
        return gin;
    }

private:
    // 1x1 projection over channels on a (n x C) matrix
    struct Proj {
        Proj(const std::string& name, int c) : w(name + ".w", {c, c}, c), b(name + ".b", {c}, 0) {}
        Param<S> w, b;
        void collect(ParamList<S>& out) {
            out.push_back(&w);
            out.push_back(&b);
        }
    };

    std::vector<S> project(const std::vector<S>& x, Proj& p, int n) {
        std::vector<S> out(static_cast<size_t>(n) * channels_);
        detail::MapM<S> om(out.data(), n, channels_);
        detail::MapC<S> xm(x.data(), n, channels_);
        detail::MapC<S> wm(p.w.w.data(), channels_, channels_);
        om.noalias() = xm * wm.transpose();
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < channels_; ++c) out[static_cast<size_t>(i) * channels_ + c] += p.b.w[c];
        return out;
    }

    // accumulates parameter grads; returns the input gradient
    std::vector<S> project_backward(const std::vector<S>& gout, const std::vector<S>& x, Proj& p,
                                    int n) {
        detail::MapC<S> gm(gout.data(), n, channels_);
        detail::MapC<S> xm(x.data(), n, channels_);
        detail::MapM<S> gw(p.w.g.data(), channels_, channels_);
        gw.noalias() += gm.transpose() * xm;
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < channels_; ++c) p.b.g[c] += gout[static_cast<size_t>(i) * channels_ + c];
        std::vector<S> gin(static_cast<size_t>(n) * channels_);
        detail::MapM<S> gim(gin.data(), n, channels_);
        detail::MapC<S> wm(p.w.w.data(), channels_, channels_);
        gim.noalias() = gm * wm;
        return gin;
    }

    static void accumulate(std::vector<S>& into, const std::vector<S>& from) {
        for (size_t i = 0; i < into.size(); ++i) into[i] += from[i];
    }

    int channels_;
    GroupNorm<S> norm_;
    Proj wq_, wk_, wv_, wo_;
    std::array<int, 3> x_shape_{};
    std::vector<S> xn_, q_, k_, v_, a_, o_, proj_;
    bool has_forward_ = false;
};

/*----------------------------------- time embedding ---------------------------------------*/

// sinusoidal embedding of u = t/T: [sin(u f_k), cos(u f_k)] with f_k
// log-spaced in [1, 1000]
template <typename S>
inline std::vector<S> sinusoid_embedding(double u, int dim) {
    VSTAIN_REQUIRE(dim >= 2 && dim % 2 == 0, "sinusoid_embedding: dim must be even and >= 2");
    const int half = dim / 2;
    std::vector<S> emb(dim);
    for (int k = 0; k < half; ++k) {
        const double f = half == 1 ? 1.0 : std::exp(std::log(1000.0) * k / (half - 1));
        emb[k] = static_cast<S>(std::sin(u * f));
        emb[half + k] = static_cast<S>(std::cos(u * f));
    }
    return emb;
}

/*------------------------------------ shape helpers ---------------------------------------*/

template <typename S>
inline Tensor3<S> concat_channels(const Tensor3<S>& a, const Tensor3<S>& b) {
    VSTAIN_REQUIRE(a.h == b.h && a.w == b.w, "concat_channels: spatial mismatch");
    Tensor3<S> out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

template <typename S>
inline void split_channels(const Tensor3<S>& joint, Tensor3<S>& a, Tensor3<S>& b, int ca) {
    a = Tensor3<S>(ca, joint.h, joint.w);
    b = Tensor3<S>(joint.c - ca, joint.h, joint.w);
    std::copy(joint.v.begin(), joint.v.begin() + a.v.size(), a.v.begin());
    std::copy(joint.v.begin() + a.v.size(), joint.v.end(), b.v.begin());
}

} // namespace vstain::nn

#endif
