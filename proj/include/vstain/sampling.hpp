#ifndef VSTAIN_SAMPLING_HPP
#define VSTAIN_SAMPLING_HPP

#include <string>
#include <vector>

#include "vstain/core.hpp"
#include "vstain/model.hpp"
#include "vstain/schedule.hpp"

namespace vstain::sampling {

enum class Strategy { vanilla, mean, skip, average };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::vanilla: return "vanilla";
        case Strategy::mean: return "mean";
        case Strategy::skip: return "skip";
        case Strategy::average: return "average";
    }
    return "?";
}

inline Strategy strategy_from_name(const std::string& name) {
    if (name == "vanilla") return Strategy::vanilla;
    if (name == "mean") return Strategy::mean;
    if (name == "skip") return Strategy::skip;
    if (name == "average") return Strategy::average;
    throw InvalidArgument("unknown sampling strategy: " + name);
}

struct SamplingConfig {
    Strategy strategy = Strategy::vanilla;
    int t_e = 0;   // exit point on the diffusion-time axis 0..T
    int S = 50;    // inference step count
    int K = 5;     // run count for the averaging strategy
    Strategy inner = Strategy::vanilla;  // inner strategy when averaging
    std::uint64_t seed = 0;

    void validate(int T) const {
        VSTAIN_REQUIRE(t_e >= 0 && t_e <= T, "SamplingConfig: t_e must be in [0, T]");
        VSTAIN_REQUIRE(S >= 2 && S <= T + 1, "SamplingConfig: S out of range");
        VSTAIN_REQUIRE(K >= 1, "SamplingConfig: K must be >= 1");
        if (strategy == Strategy::average)
            VSTAIN_REQUIRE(inner != Strategy::average,
                           "SamplingConfig: averaging cannot nest averaging");
    }
};

// which (t_prev, element) noise draws a run consumed
struct SampleStats {
    std::vector<int> noisy_steps;  // t_prev values that drew noise, in step order
    std::uint64_t draws = 0;
    int denoiser_calls = 0;
};

namespace detail {
enum Stream : std::uint64_t { kRun = 401, kInner = 402, kNoise = 403 };
} // namespace detail

// One posterior step x_t -> x_{t_prev}. With add_noise the posterior variance
// is realized from the counter generator keyed by (stream, t_prev, element);
// the t_prev = 0 step is the degenerate point mass at x0_hat.
inline nn::Tensor3<float> reverse_step(model::Model& m, const bridge::BridgeSchedule& sched,
                                       const nn::Tensor3<float>& x_t, const nn::Tensor3<float>& x_T,
                                       int t, int t_prev, bool add_noise, const Rng& noise_stream,
                                       SampleStats* stats = nullptr) {
    VSTAIN_REQUIRE(x_t.same_shape(x_T), "reverse_step: shape mismatch");
    const nn::Tensor3<float> D = m.denoiser.forward(x_t, x_T, t, sched.T);
    if (stats) ++stats->denoiser_calls;
    nn::Tensor3<float> x0_hat(x_t.c, x_t.h, x_t.w);
    for (size_t i = 0; i < x0_hat.v.size(); ++i)
        x0_hat.v[i] = clamp(x_t.v[i] - D.v[i], -1.0f, 1.0f);

    if (t_prev == 0) return x0_hat;

    const bridge::PosteriorParams p = bridge::posterior_params(sched, t, t_prev);
    nn::Tensor3<float> out(x_t.c, x_t.h, x_t.w);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = static_cast<float>(p.coef_x * x_t.v[i] + p.coef_x0 * x0_hat.v[i] +
                                      p.coef_xT * x_T.v[i]);
    if (add_noise && p.var > 0) {
        const double sd = std::sqrt(p.var);
        const Rng stream = noise_stream.fork(detail::kNoise).fork(t_prev);
        for (size_t i = 0; i < out.v.size(); ++i)
            out.v[i] = static_cast<float>(out.v[i] + sd * stream.gaussian(i));
        if (stats) {
            stats->noisy_steps.push_back(t_prev);
            stats->draws += out.v.size();
        }
    }
    return out;
}

// spec-facing wrapper on the pixel-data carrier
inline ImageTensor reverse_step(model::Model& m, const bridge::BridgeSchedule& sched,
                                const ImageTensor& x_t, const ImageTensor& x_T, int t, int t_prev,
                                bool add_noise, const Rng& noise_stream) {
    require_same_shape(x_t, x_T, "reverse_step");
    const auto out = reverse_step(m, sched, nn::from_image<float>(x_t), nn::from_image<float>(x_T),
                                  t, t_prev, add_noise, noise_stream);
    return nn::to_image(out, -1.f, 1.f);
}

struct SampleResult {
    ImageTensor out;   // 3 x H x W stain estimate in [-1, 1]
    ImageTensor x_T;   // conditioner output (the bridge endpoint), same range
    SampleStats stats;
};

namespace detail {

inline nn::Tensor3<float> run_strategy(model::Model& m, const bridge::BridgeSchedule& sched,
                                       const nn::Tensor3<float>& x_T, Strategy strategy, int t_e,
                                       const bridge::StepPlan& plan, const Rng& run_stream,
                                       SampleStats* stats) {
    nn::Tensor3<float> x = x_T;
    for (size_t i = 0; i + 1 < plan.times.size(); ++i) {
        const int t = plan.times[i];
        const int t_prev = plan.times[i + 1];
        if (strategy == Strategy::skip && (t <= t_e || t_prev == 0)) {
            const nn::Tensor3<float> D = m.denoiser.forward(x, x_T, t, sched.T);
            if (stats) ++stats->denoiser_calls;
            nn::Tensor3<float> x0_hat(x.c, x.h, x.w);
            for (size_t j = 0; j < x0_hat.v.size(); ++j)
                x0_hat.v[j] = clamp(x.v[j] - D.v[j], -1.0f, 1.0f);
            return x0_hat;
        }
        const bool add_noise =
            strategy == Strategy::mean ? (t_prev > t_e) : (t_prev > 0);
        x = reverse_step(m, sched, x, x_T, t, t_prev, add_noise, run_stream, stats);
    }
    return x;
}

} // namespace detail

// Full reverse pass from the conditioner embedding. Strategy semantics:
//   vanilla - posterior noise on every step except the final one
//   mean    - noise suppressed once the target state reaches t_prev <= t_e
//   skip    - vanilla until the first step with source t <= t_e, then emit
//             the network's direct x0 estimate
//   average - pixel-wise mean of K independent inner-strategy runs
// run_index selects the derived seed stream (repeat_sample uses 0..R-1).
inline SampleResult sample(model::Model& m, const bridge::BridgeSchedule& sched,
                           const ImageTensor& prepared_ions, const SamplingConfig& cfg,
                           int run_index = 0) {
    cfg.validate(sched.T);
    const bridge::StepPlan plan = bridge::make_step_plan(sched.T, cfg.S);
    const nn::Tensor3<float> x_T = m.conditioner.forward(nn::from_image<float>(prepared_ions));

    SampleResult result;
    result.x_T = nn::to_image(x_T, -1.f, 1.f);
    const Rng run_stream = Rng(cfg.seed).fork(detail::kRun).fork(run_index);

    if (cfg.strategy == Strategy::average) {
        nn::Tensor3<float> acc(x_T.c, x_T.h, x_T.w);
        std::vector<double> sum(acc.v.size(), 0.0);
        for (int k = 0; k < cfg.K; ++k) {
            const Rng inner_stream = run_stream.fork(detail::kInner).fork(k);
            const nn::Tensor3<float> one = detail::run_strategy(m, sched, x_T, cfg.inner, cfg.t_e,
                                                                plan, inner_stream, &result.stats);
            for (size_t i = 0; i < sum.size(); ++i) sum[i] += one.v[i];
        }
        for (size_t i = 0; i < sum.size(); ++i)
            acc.v[i] = static_cast<float>(sum[i] / cfg.K);
        result.out = nn::to_image(acc, -1.f, 1.f);
        return result;
    }
    const nn::Tensor3<float> out =
        detail::run_strategy(m, sched, x_T, cfg.strategy, cfg.t_e, plan, run_stream, &result.stats);
    result.out = nn::to_image(out, -1.f, 1.f);
    return result;
}

// R runs with streams derived from (base seed, run index), returned in run order.
inline std::vector<SampleResult> repeat_sample(model::Model& m, const bridge::BridgeSchedule& sched,
                                               const ImageTensor& prepared_ions,
                                               const SamplingConfig& cfg, int R) {
    VSTAIN_REQUIRE(R >= 2, "repeat_sample: need R >= 2");
    std::vector<SampleResult> runs;
    runs.reserve(R);
    for (int r = 0; r < R; ++r) runs.push_back(sample(m, sched, prepared_ions, cfg, r));
    return runs;
}

} // namespace vstain::sampling

#endif
