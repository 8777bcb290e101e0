#ifndef VSTAIN_MODEL_HPP
#define VSTAIN_MODEL_HPP

#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "vstain/core.hpp"
#include "vstain/nn.hpp"
#include "vstain/rng.hpp"

namespace vstain::model {

struct ConditionerConfig {
    int in_channels = 16;
    int hidden_channels = 32;
    int upsample_factor = 10;
    int out_channels = 3;
    std::vector<int> shuffle_stages = {2, 5};

    void validate() const {
        VSTAIN_REQUIRE(in_channels >= 1 && hidden_channels >= 1 && out_channels >= 1,
                       "ConditionerConfig: widths must be positive");
        int prod = 1;
        for (int r : shuffle_stages) {
            VSTAIN_REQUIRE(r >= 2, "ConditionerConfig: shuffle stage must be >= 2");
            prod *= r;
        }
        VSTAIN_REQUIRE(prod == upsample_factor,
                       "ConditionerConfig: shuffle stages must factor the upsample factor");
    }
};

struct DenoiserConfig {
    int in_image_channels = 3;            // per image; the net sees x_t concat x_T
    int base_channels = 16;
    std::vector<int> channel_multipliers = {1, 2, 4, 8};
    std::vector<int> attention_levels = {3};  // indices into the level list
    int time_embed_dim = 64;
    int res_blocks_per_level = 1;
    int groups = 8;

    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    int channels_at(int level) const { return base_channels * channel_multipliers[level]; }
    bool attention_at(int level) const {
        for (int l : attention_levels)
            if (l == level) return true;
        return false;
    }

    void validate() const {
        VSTAIN_REQUIRE(base_channels >= 1 && time_embed_dim >= 2 && res_blocks_per_level >= 1,
                       "DenoiserConfig: widths must be positive");
        VSTAIN_REQUIRE(time_embed_dim % 2 == 0, "DenoiserConfig: time embedding width must be even");
        VSTAIN_REQUIRE(!channel_multipliers.empty(), "DenoiserConfig: need at least one level");
        for (int m : channel_multipliers)
            VSTAIN_REQUIRE(m >= 1, "DenoiserConfig: multipliers must be positive");
        for (int l : attention_levels)
            VSTAIN_REQUIRE(l >= 0 && l < levels(), "DenoiserConfig: attention level out of range");
        for (int l = 0; l < levels(); ++l)
            VSTAIN_REQUIRE(channels_at(l) % groups == 0,
                           "DenoiserConfig: channels must be divisible by the group count");
    }
};

/*--------------------------------------- conditioner --------------------------------------*/

// Shallow CNN embedding the C-channel ion stack into the bridge endpoint x_T
// at the stain resolution: conv + SiLU, then one sub-pixel stage per shuffle
// factor (conv to ch*r^2, shuffle).
template <typename S>
class ConditionerT {
public:
    explicit ConditionerT(const ConditionerConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        conv_in_ = std::make_unique<nn::Conv2d<S>>("cond.in", cfg.in_channels, cfg.hidden_channels, 3);
        const int n = static_cast<int>(cfg.shuffle_stages.size());
        for (int i = 0; i < n; ++i) {
            const int r = cfg.shuffle_stages[i];
            const int out_ch = (i == n - 1) ? cfg.out_channels : cfg.hidden_channels;
            stage_convs_.push_back(std::make_unique<nn::Conv2d<S>>(
                "cond.stage" + std::to_string(i), cfg.hidden_channels, out_ch * r * r, 3));
            shuffles_.emplace_back(r);
        }
        acts_.resize(1 + n);  // input activation + one per non-final stage
    }

    void collect(nn::ParamList<S>& out) {
        conv_in_->collect(out);
        for (auto& c : stage_convs_) c->collect(out);
    }

    nn::Tensor3<S> forward(const nn::Tensor3<S>& ions) {
        VSTAIN_REQUIRE(ions.c == cfg_.in_channels, "conditioner: channel mismatch");
        nn::Tensor3<S> x = acts_[0].forward(conv_in_->forward(ions));
        for (size_t i = 0; i < stage_convs_.size(); ++i) {
            x = shuffles_[i].forward(stage_convs_[i]->forward(x));
            if (i + 1 < stage_convs_.size()) x = acts_[i + 1].forward(x);
        }
        has_forward_ = true;
        return x;
    }

    nn::Tensor3<S> backward(const nn::Tensor3<S>& gout) {
        if (!has_forward_) throw InvalidState("conditioner: backward without a recorded forward");
        nn::Tensor3<S> g = gout;
        for (int i = static_cast<int>(stage_convs_.size()) - 1; i >= 0; --i) {
            if (i + 1 < static_cast<int>(stage_convs_.size())) g = acts_[i + 1].backward(g);
            g = stage_convs_[i]->backward(shuffles_[i].backward(g));
        }
        return conv_in_->backward(acts_[0].backward(g));
    }

    const ConditionerConfig& config() const { return cfg_; }

private:
    ConditionerConfig cfg_;
    std::unique_ptr<nn::Conv2d<S>> conv_in_;
    std::vector<std::unique_ptr<nn::Conv2d<S>>> stage_convs_;
    std::vector<nn::PixelShuffle<S>> shuffles_;
    std::vector<nn::SiLU<S>> acts_;
    bool has_forward_ = false;
};

/*---------------------------------------- denoiser ----------------------------------------*/

// GN -> SiLU -> conv -> (+ time bias) -> GN -> SiLU -> conv, with identity or
// 1x1 shortcut. The time embedding enters as a per-channel bias.
template <typename S>
class ResBlockT {
public:
    ResBlockT(const std::string& name, int cin, int cout, int time_dim, int groups)
        : cin_(cin), cout_(cout),
          gn1_(name + ".gn1", groups, cin), conv1_(name + ".conv1", cin, cout, 3),
          time_proj_(name + ".time", time_dim, cout), gn2_(name + ".gn2", groups, cout),
          conv2_(name + ".conv2", cout, cout, 3) {
        if (cin != cout) shortcut_ = std::make_unique<nn::Conv2d<S>>(name + ".skip", cin, cout, 1);
    }

    void collect(nn::ParamList<S>& out) {
        gn1_.collect(out);
        conv1_.collect(out);
        time_proj_.collect(out);
        gn2_.collect(out);
        conv2_.collect(out);
        if (shortcut_) shortcut_->collect(out);
    }

    nn::Tensor3<S> forward(const nn::Tensor3<S>& x, const std::vector<S>& emb) {
        nn::Tensor3<S> h = conv1_.forward(act1_.forward(gn1_.forward(x)));
        const std::vector<S> tb = time_proj_.forward(emb);
        for (int c = 0; c < cout_; ++c) {
            S* plane = h.v.data() + static_cast<size_t>(c) * h.plane();
            for (size_t i = 0; i < h.plane(); ++i) plane[i] += tb[c];
        }
        h = conv2_.forward(act2_.forward(gn2_.forward(h)));
        const nn::Tensor3<S> skip = shortcut_ ? shortcut_->forward(x) : x;
        for (size_t i = 0; i < h.v.size(); ++i) h.v[i] += skip.v[i];
        has_forward_ = true;
        return h;
    }

    // returns the input gradient; accumulates the time-embedding gradient
    nn::Tensor3<S> backward(const nn::Tensor3<S>& gout, std::vector<S>& demb) {
        if (!has_forward_) throw InvalidState("ResBlock: backward without a recorded forward");
        nn::Tensor3<S> gh = gn2_.backward(act2_.backward(conv2_.backward(gout)));
        std::vector<S> dtb(cout_, S(0));
        for (int c = 0; c < cout_; ++c) {
            const S* plane = gh.v.data() + static_cast<size_t>(c) * gh.plane();
            S acc = S(0);
            for (size_t i = 0; i < gh.plane(); ++i) acc += plane[i];
            dtb[c] = acc;
        }
        const std::vector<S> de = time_proj_.backward(dtb);
        for (size_t i = 0; i < demb.size(); ++i) demb[i] += de[i];
        nn::Tensor3<S> gin = gn1_.backward(act1_.backward(conv1_.backward(gh)));
        if (shortcut_) {
            const nn::Tensor3<S> gskip = shortcut_->backward(gout);
            for (size_t i = 0; i < gin.v.size(); ++i) gin.v[i] += gskip.v[i];
        } else {
            for (size_t i = 0; i < gin.v.size(); ++i) gin.v[i] += gout.v[i];
        }
        return gin;
    }

private:
    int cin_, cout_;
    nn::GroupNorm<S> gn1_;
    nn::SiLU<S> act1_;
    nn::Conv2d<S> conv1_;
    nn::Linear<S> time_proj_;
    nn::GroupNorm<S> gn2_;
    nn::SiLU<S> act2_;
    nn::Conv2d<S> conv2_;
    std::unique_ptr<nn::Conv2d<S>> shortcut_;
    bool has_forward_ = false;
};

// U-Net over the concatenation of x_t and x_T predicting D = x_t - x_0.
// Downsampling is 2x2 average pooling and upsampling nearest-neighbor, so the
// network is exactly equivariant under flips when its kernels are symmetric.
template <typename S>
class DenoiserT {
public:
    explicit DenoiserT(const DenoiserConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        const int L = cfg.levels();
        const int E = cfg.time_embed_dim;
        time_lin_ = std::make_unique<nn::Linear<S>>("den.time", E, E);
        stem_ = std::make_unique<nn::Conv2d<S>>("den.stem", 2 * cfg.in_image_channels,
                                                cfg.channels_at(0), 3);
        for (int l = 0; l < L; ++l) {
            const std::string base = "den.down" + std::to_string(l);
            if (l > 0)
                down_proj_.push_back(std::make_unique<nn::Conv2d<S>>(
                    base + ".proj", cfg.channels_at(l - 1), cfg.channels_at(l), 3));
            std::vector<std::unique_ptr<ResBlockT<S>>> blocks;
            for (int r = 0; r < cfg.res_blocks_per_level; ++r)
                blocks.push_back(std::make_unique<ResBlockT<S>>(base + ".res" + std::to_string(r),
                                                                cfg.channels_at(l), cfg.channels_at(l),
                                                                E, cfg.groups));
            down_blocks_.push_back(std::move(blocks));
            down_attn_.push_back(cfg.attention_at(l)
                                     ? std::make_unique<nn::Attention<S>>(base + ".attn",
                                                                          cfg.channels_at(l), cfg.groups)
                                     : nullptr);
        }
        const int cm = cfg.channels_at(L - 1);
        mid_res1_ = std::make_unique<ResBlockT<S>>("den.mid.res1", cm, cm, E, cfg.groups);
        mid_attn_ = cfg.attention_at(L - 1)
                        ? std::make_unique<nn::Attention<S>>("den.mid.attn", cm, cfg.groups)
                        : nullptr;
        mid_res2_ = std::make_unique<ResBlockT<S>>("den.mid.res2", cm, cm, E, cfg.groups);
        for (int l = L - 1; l >= 0; --l) {
            const std::string base = "den.up" + std::to_string(l);
            std::vector<std::unique_ptr<ResBlockT<S>>> blocks;
            for (int r = 0; r < cfg.res_blocks_per_level; ++r) {
                const int cin = r == 0 ? 2 * cfg.channels_at(l) : cfg.channels_at(l);
                blocks.push_back(std::make_unique<ResBlockT<S>>(base + ".res" + std::to_string(r),
                                                                cin, cfg.channels_at(l), E, cfg.groups));
            }
            up_blocks_.push_back(std::move(blocks));
            up_attn_.push_back(cfg.attention_at(l)
                                   ? std::make_unique<nn::Attention<S>>(base + ".attn",
                                                                        cfg.channels_at(l), cfg.groups)
                                   : nullptr);
            if (l > 0)
                up_proj_.push_back(std::make_unique<nn::Conv2d<S>>(
                    base + ".proj", cfg.channels_at(l), cfg.channels_at(l - 1), 3));
        }
        head_gn_ = std::make_unique<nn::GroupNorm<S>>("den.head.gn", cfg.groups, cfg.channels_at(0));
        head_conv_ = std::make_unique<nn::Conv2d<S>>("den.head.conv", cfg.channels_at(0),
                                                     cfg.in_image_channels, 3);
        pools_.resize(L - 1);
        ups_.resize(L - 1);
    }

    void collect(nn::ParamList<S>& out) {
        time_lin_->collect(out);
        stem_->collect(out);
        for (int l = 0; l < cfg_.levels(); ++l) {
            if (l > 0) down_proj_[l - 1]->collect(out);
            for (auto& b : down_blocks_[l]) b->collect(out);
            if (down_attn_[l]) down_attn_[l]->collect(out);
        }
        mid_res1_->collect(out);
        if (mid_attn_) mid_attn_->collect(out);
        mid_res2_->collect(out);
        for (size_t i = 0; i < up_blocks_.size(); ++i) {
            for (auto& b : up_blocks_[i]) b->collect(out);
            if (up_attn_[i]) up_attn_[i]->collect(out);
            if (i < up_proj_.size()) up_proj_[i]->collect(out);
        }
        head_gn_->collect(out);
        head_conv_->collect(out);
    }

    // the zero-initialized head belongs to this param
    const std::string head_param_name() const { return "den.head.conv.w"; }

    nn::Tensor3<S> forward(const nn::Tensor3<S>& x_t, const nn::Tensor3<S>& x_T, int t, int T) {
        VSTAIN_REQUIRE(x_t.same_shape(x_T), "denoiser: x_t and x_T shape mismatch");
        VSTAIN_REQUIRE(x_t.c == cfg_.in_image_channels, "denoiser: channel mismatch");
        VSTAIN_REQUIRE(t >= 0 && t <= T && T >= 1, "denoiser: t out of range");
        const int L = cfg_.levels();
        const int down_factor = 1 << (L - 1);
        VSTAIN_REQUIRE(x_t.h % down_factor == 0 && x_t.w % down_factor == 0,
                       "denoiser: spatial dims must be divisible by 2^(levels-1)");
        VSTAIN_REQUIRE(std::min(x_t.h, x_t.w) / down_factor >= 4,
                       "denoiser: deepest spatial size must be >= 4");

        emb_in_ = nn::sinusoid_embedding<S>(static_cast<double>(t) / T, cfg_.time_embed_dim);
        emb_ = emb_act_.forward(time_lin_->forward(emb_in_));

        nn::Tensor3<S> x = stem_->forward(nn::concat_channels(x_t, x_T));
        skips_.clear();
        for (int l = 0; l < L; ++l) {
            if (l > 0) x = down_proj_[l - 1]->forward(pools_[l - 1].forward(x));
            for (auto& b : down_blocks_[l]) x = b->forward(x, emb_);
            if (down_attn_[l]) x = down_attn_[l]->forward(x);
            skips_.push_back(x);
        }
        x = mid_res1_->forward(x, emb_);
        if (mid_attn_) x = mid_attn_->forward(x);
        x = mid_res2_->forward(x, emb_);
        for (int i = 0; i < L; ++i) {
            const int l = L - 1 - i;
            x = nn::concat_channels(x, skips_[l]);
            for (auto& b : up_blocks_[i]) x = b->forward(x, emb_);
            if (up_attn_[i]) x = up_attn_[i]->forward(x);
            if (l > 0) x = ups_[l - 1].forward(up_proj_[i]->forward(x));
        }
        x = head_conv_->forward(head_act_.forward(head_gn_->forward(x)));
        has_forward_ = true;
        return x;
    }

    // returns (dx_t, dx_T); parameter gradients accumulate into the params
    std::pair<nn::Tensor3<S>, nn::Tensor3<S>> backward(const nn::Tensor3<S>& gout) {
        if (!has_forward_) throw InvalidState("denoiser: backward without a recorded forward");
        const int L = cfg_.levels();
        std::vector<S> demb(cfg_.time_embed_dim, S(0));

        nn::Tensor3<S> g = head_gn_->backward(head_act_.backward(head_conv_->backward(gout)));
        std::vector<nn::Tensor3<S>> dskips(L);
        for (int i = L - 1; i >= 0; --i) {
            const int l = L - 1 - i;
            if (l > 0) g = up_proj_[i]->backward(ups_[l - 1].backward(g));
            if (up_attn_[i]) g = up_attn_[i]->backward(g);
            for (int r = static_cast<int>(up_blocks_[i].size()) - 1; r >= 0; --r)
                g = up_blocks_[i][r]->backward(g, demb);
            nn::Tensor3<S> gx, gskip;
            nn::split_channels(g, gx, gskip, cfg_.channels_at(l));
            dskips[l] = std::move(gskip);
            g = std::move(gx);
        }
        g = mid_res2_->backward(g, demb);
        if (mid_attn_) g = mid_attn_->backward(g);
        g = mid_res1_->backward(g, demb);
        for (int l = L - 1; l >= 0; --l) {
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += dskips[l].v[i];
            if (down_attn_[l]) g = down_attn_[l]->backward(g);
            for (int r = static_cast<int>(down_blocks_[l].size()) - 1; r >= 0; --r)
                g = down_blocks_[l][r]->backward(g, demb);
            if (l > 0) g = pools_[l - 1].backward(down_proj_[l - 1]->backward(g));
        }
        g = stem_->backward(g);
        time_lin_->backward(emb_act_.backward(demb));

        nn::Tensor3<S> dx_t, dx_T;
        nn::split_channels(g, dx_t, dx_T, cfg_.in_image_channels);
        return {std::move(dx_t), std::move(dx_T)};
    }

    const DenoiserConfig& config() const { return cfg_; }

private:
    DenoiserConfig cfg_;
    std::unique_ptr<nn::Linear<S>> time_lin_;
    nn::SiLUVec<S> emb_act_;
    std::unique_ptr<nn::Conv2d<S>> stem_;
    std::vector<std::unique_ptr<nn::Conv2d<S>>> down_proj_;
    std::vector<std::vector<std::unique_ptr<ResBlockT<S>>>> down_blocks_;
    std::vector<std::unique_ptr<nn::Attention<S>>> down_attn_;
    std::unique_ptr<ResBlockT<S>> mid_res1_, mid_res2_;
    std::unique_ptr<nn::Attention<S>> mid_attn_;
    std::vector<std::vector<std::unique_ptr<ResBlockT<S>>>> up_blocks_;  // deepest first
    std::vector<std::unique_ptr<nn::Attention<S>>> up_attn_;
    std::vector<std::unique_ptr<nn::Conv2d<S>>> up_proj_;
    std::unique_ptr<nn::GroupNorm<S>> head_gn_;
    nn::SiLU<S> head_act_;
    std::unique_ptr<nn::Conv2d<S>> head_conv_;
    std::vector<nn::AvgPool2<S>> pools_;
    std::vector<nn::UpsampleNearest2<S>> ups_;
    std::vector<nn::Tensor3<S>> skips_;
    std::vector<S> emb_in_, emb_;
    bool has_forward_ = false;
};

/*------------------------------------------ model -----------------------------------------*/

template <typename S>
struct ModelT {
    ConditionerConfig cond_cfg;
    DenoiserConfig den_cfg;
    ConditionerT<S> conditioner;
    DenoiserT<S> denoiser;

    ModelT(const ConditionerConfig& cc, const DenoiserConfig& dc)
        : cond_cfg(cc), den_cfg(dc), conditioner(cc), denoiser(dc) {}

    nn::ParamList<S> params() {
        nn::ParamList<S> list;
        conditioner.collect(list);
        denoiser.collect(list);
        return list;
    }

    size_t param_count() {
        size_t total = 0;
        for (const auto* p : params()) total += p->size();
        return total;
    }

    // fan-in-scaled normal initialization keyed by (seed, param index);
    // the denoiser's output layer starts at zero so D = 0 at initialization
    void init(std::uint64_t seed) {
        const Rng rng(seed);
        nn::ParamList<S> list = params();
        for (size_t pi = 0; pi < list.size(); ++pi) {
            nn::Param<S>& p = *list[pi];
            int fan = p.fan_in;
            if (p.name == denoiser.head_param_name()) fan = 0;
            if (fan > 0) {
                const double scale = 1.0 / std::sqrt(static_cast<double>(fan));
                const Rng stream = rng.fork(pi);
                for (size_t i = 0; i < p.w.size(); ++i)
                    p.w[i] = static_cast<S>(scale * stream.gaussian(i));
            } else if (fan == -1) {
                std::fill(p.w.begin(), p.w.end(), S(1));
            } else {
                std::fill(p.w.begin(), p.w.end(), S(0));
            }
            std::fill(p.g.begin(), p.g.end(), S(0));
        }
    }

    void zero_grads() {
        for (auto* p : params()) std::fill(p->g.begin(), p->g.end(), S(0));
    }
};

using Model = ModelT<float>;

/*--------------------------------- spec-facing operations ---------------------------------*/

inline ImageTensor conditioner_forward(Model& m, const ImageTensor& ions) {
    const auto out = m.conditioner.forward(nn::from_image<float>(ions));
    return nn::to_image(out, -1.f, 1.f);
}

inline ImageTensor denoiser_forward(Model& m, const ImageTensor& x_t, const ImageTensor& x_T, int t,
                                    int T) {
    require_same_shape(x_t, x_T, "denoiser_forward");
    const auto out =
        m.denoiser.forward(nn::from_image<float>(x_t), nn::from_image<float>(x_T), t, T);
    return nn::to_image(out, -1.f, 1.f);
}

// x0_hat = clamp(x_t - D, stain range [-1, 1])
inline ImageTensor predict_x0(const ImageTensor& x_t, const ImageTensor& D) {
    require_same_shape(x_t, D, "predict_x0");
    ImageTensor out(x_t.channels, x_t.height, x_t.width, -1.f, 1.f);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = clamp(x_t.data[i] - D.data[i], -1.0f, 1.0f);
    return out;
}

} // namespace vstain::model

#endif
