#ifndef VSTAIN_SCHEDULE_HPP
#define VSTAIN_SCHEDULE_HPP

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "vstain/core.hpp"
#include "vstain/rng.hpp"

namespace vstain::bridge {

// Discrete Brownian bridge pinned at x0 (t=0) and xT (t=T).
// Mean coefficient m_t = t/T is linear in t; the marginal variance
// delta_t = 2*s*m_t*(1-m_t) is quadratic and vanishes at both ends.
struct BridgeSchedule {
    int T = 0;
    double s = 1.0;
    std::vector<double> m;      // T+1 entries, m[t] = t/T
    std::vector<double> delta;  // T+1 entries, marginal variance at t
};

// Strictly decreasing time list from T to 0 used for strided inference.
struct StepPlan {
    std::vector<int> times;
};

// x_t = a*x_{t'} + b*xT + sqrt(sigma)*eps for t' < t. sigma is a variance.
struct TransitionParams {
    double a = 0.0;
    double b = 0.0;
    double sigma = 0.0;
};

// Gaussian conditioning of the marginal at t' on the observed state at t:
// mean = coef_x*x_t + coef_x0*x0_hat + coef_xT*xT, variance var (delta-tilde).
struct PosteriorParams {
    double coef_x = 0.0;
    double coef_x0 = 0.0;
    double coef_xT = 0.0;
    double var = 0.0;
};

inline BridgeSchedule build_schedule(int T, double s) {
    VSTAIN_REQUIRE(T >= 2, "build_schedule: T must be >= 2");
    VSTAIN_REQUIRE(s > 0.0, "build_schedule: s must be positive");
    BridgeSchedule sched;
    sched.T = T;
    sched.s = s;
    sched.m.resize(T + 1);
    sched.delta.resize(T + 1);
    for (int t = 0; t <= T; ++t) {
        const double mt = static_cast<double>(t) / T;
        sched.m[t] = mt;
        sched.delta[t] = 2.0 * s * mt * (1.0 - mt);
    }
    return sched;
}

inline void check_pair(const BridgeSchedule& sched, int t, int t_prev, const char* where) {
    if (t_prev < 0 || t > sched.T || t_prev >= t)
        throw InvalidArgument(std::string(where) + ": need 0 <= t_prev < t <= T, got t=" +
                              std::to_string(t) + " t_prev=" + std::to_string(t_prev));
}

inline TransitionParams transition_params(const BridgeSchedule& sched, int t, int t_prev) {
    check_pair(sched, t, t_prev, "transition_params");
    TransitionParams p;
    if (t == sched.T) {
        // m_t = 1: the final state is xT deterministically
        p.a = 0.0;
        p.b = 1.0;
        p.sigma = 0.0;
        return p;
    }
    p.a = (1.0 - sched.m[t]) / (1.0 - sched.m[t_prev]);
    p.b = sched.m[t] - p.a * sched.m[t_prev];
    p.sigma = std::max(0.0, sched.delta[t] - p.a * p.a * sched.delta[t_prev]);
    return p;
}

inline PosteriorParams posterior_params(const BridgeSchedule& sched, int t, int t_prev) {
    check_pair(sched, t, t_prev, "posterior_params");
    PosteriorParams p;
    if (t == sched.T) {
        // conditioning on the deterministic endpoint is uninformative:
        // the posterior is the marginal at t_prev
        p.coef_x = 0.0;
        p.coef_x0 = 1.0 - sched.m[t_prev];
        p.coef_xT = sched.m[t_prev];
        p.var = sched.delta[t_prev];
        return p;
    }
    if (t_prev == 0) {
        // pinned start: point mass at x0_hat
        p.coef_x0 = 1.0;
        p.var = 0.0;
        return p;
    }
    const TransitionParams tr = transition_params(sched, t, t_prev);
    const double dt = sched.delta[t];
    const double dp = sched.delta[t_prev];
    p.coef_x = tr.a * dp / dt;
    p.var = tr.sigma * dp / dt;
    p.coef_xT = sched.m[t_prev] - p.coef_x * sched.m[t];
    p.coef_x0 = 1.0 - p.coef_x - p.coef_xT;
    return p;
}

// Forward draw x_t = (1-m_t)*x0 + m_t*xT + sqrt(delta_t)*eps with eps keyed
// by (seed, t, element index). The endpoints consume no draws and return the
// pinned image bit-exactly.
inline ImageTensor sample_forward(const BridgeSchedule& sched, const ImageTensor& x0,
                                  const ImageTensor& xT, int t, const Rng& rng) {
    require_same_shape(x0, xT, "sample_forward");
    VSTAIN_REQUIRE(t >= 0 && t <= sched.T, "sample_forward: t out of range");
    if (t == 0) return x0;
    if (t == sched.T) return xT;
    ImageTensor out = x0;
    const double m = sched.m[t];
    const double sd = std::sqrt(sched.delta[t]);
    const Rng stream = rng.fork(static_cast<std::uint64_t>(t));
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double v = (1.0 - m) * x0.data[i] + m * xT.data[i] + sd * stream.gaussian(i);
        out.data[i] = static_cast<float>(v);
    }
    return out;
}

inline ImageTensor sample_forward(const BridgeSchedule& sched, const ImageTensor& x0,
                                  const ImageTensor& xT, int t, std::uint64_t noise_seed) {
    return sample_forward(sched, x0, xT, t, Rng(noise_seed));
}

// times = unique(round(k*T/S) for k = S..0); always starts at T, ends at 0.
inline StepPlan make_step_plan(int T, int S) {
    VSTAIN_REQUIRE(S >= 2 && S <= T + 1, "make_step_plan: need 2 <= S <= T+1");
    StepPlan plan;
    int prev = -1;
    for (int k = S; k >= 0; --k) {
        const int t = static_cast<int>(round_half_away(static_cast<double>(k) * T / S));
        if (t != prev) plan.times.push_back(t);
        prev = t;
    }
    return plan;
}

struct VarianceRow {
    int t = 0;
    double delta_tilde = 0.0;
};

// One row per consecutive plan pair (t -> t_prev) reporting the posterior
// variance entering the state at t_prev.
inline std::vector<VarianceRow> variance_curve(const BridgeSchedule& sched, const StepPlan& plan) {
    VSTAIN_REQUIRE(plan.times.size() >= 2 && plan.times.front() == sched.T && plan.times.back() == 0,
                   "variance_curve: plan must run from T to 0");
    std::vector<VarianceRow> rows;
    for (size_t i = 0; i + 1 < plan.times.size(); ++i) {
        const int t = plan.times[i];
        const int t_prev = plan.times[i + 1];
        rows.push_back({t, posterior_params(sched, t, t_prev).var});
    }
    return rows;
}

// Tab-separated text, header `t<TAB>delta_tilde`, reals with 9 significant digits.
inline std::string export_variance_curve(const BridgeSchedule& sched, const StepPlan& plan) {
    std::string out = "t\tdelta_tilde\n";
    char buf[64];
    for (const VarianceRow& row : variance_curve(sched, plan)) {
        std::snprintf(buf, sizeof(buf), "%d\t%.9g\n", row.t, row.delta_tilde);
        out += buf;
    }
    return out;
}

} // namespace vstain::bridge

#endif
