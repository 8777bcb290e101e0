#ifndef VSTAIN_CONFIG_HPP
#define VSTAIN_CONFIG_HPP

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vstain/core.hpp"
#include "vstain/model.hpp"
#include "vstain/phantom.hpp"
#include "vstain/sampling.hpp"
#include "vstain/training.hpp"

namespace vstain::config {

// Every field has a default; unknown keys are rejected; the resolved tree is
// written next to every output so runs are self-describing.
inline nlohmann::json defaults() {
    return nlohmann::json{
        {"schedule", {{"T", 200}, {"s", 1.0}}},
        {"model",
         {{"conditioner",
           {{"hidden_channels", 32}, {"upsample_factor", 10}, {"shuffle_stages", {2, 5}}}},
          {"denoiser",
           {{"base_channels", 16},
            {"channel_multipliers", {1, 2, 4, 8}},
            {"attention_levels", {3}},
            {"time_embed_dim", 64},
            {"res_blocks_per_level", 1},
            {"groups", 8}}}}},
        {"training",
         {{"batch", 4},
          {"lr", 1e-4},
          {"weight_decay", 1e-2},
          {"beta1", 0.9},
          {"beta2", 0.999},
          {"eps", 1e-8},
          {"steps", 2000},
          {"crop", 160},
          {"checkpoint_interval", 1000},
          {"reduction_factor", 1},
          {"tic", false},
          {"augment", true}}},
        {"sampling",
         {{"strategy", "mean"},
          {"te_fraction", 0.1},
          {"S", 50},
          {"K", 5},
          {"inner", "vanilla"}}},
        {"data",
         {{"height", 160},
          {"width", 160},
          {"channels", 16},
          {"glomerulus_density", 0.5},
          {"proximal_density", 3.0},
          {"distal_density", 2.0},
          {"nucleus_density", 45.0},
          {"noise_levels", nlohmann::json::array()},
          {"blur_sigma", 3.0},
          {"n_train", 200},
          {"n_test", 36}}},
        {"evaluation",
         {{"extractor_seed", 17},
          {"niqe_patch", 48},
          {"niqe_fit_patches", 800},
          {"histogram_bins", 32},
          {"sweep_fractions", {0.0, 0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0}},
          {"reference_optimum_fraction", 0.1},
          {"cv_repeats", 5},
          {"cv_include_average", false},
          {"ablation_factors", {1, 4, 16, 64}},
          {"spectrum_channel", -1}}},
    };
}

namespace detail {

inline void merge_checked(nlohmann::json& base, const nlohmann::json& user,
                          const std::string& path) {
    for (const auto& [key, value] : user.items()) {
        if (!base.contains(key))
            throw InvalidArgument("config: unknown key '" + (path.empty() ? key : path + "." + key) +
                                  "'");
        nlohmann::json& slot = base[key];
        const std::string child = path.empty() ? key : path + "." + key;
        if (slot.is_object()) {
            if (!value.is_object())
                throw InvalidArgument("config: '" + child + "' must be an object");
            merge_checked(slot, value, child);
            continue;
        }
        if (slot.is_number() && !value.is_number())
            throw InvalidArgument("config: '" + child + "' must be a number");
        if (slot.is_boolean() && !value.is_boolean())
            throw InvalidArgument("config: '" + child + "' must be a boolean");
        if (slot.is_string() && !value.is_string())
            throw InvalidArgument("config: '" + child + "' must be a string");
        if (slot.is_array() && !value.is_array())
            throw InvalidArgument("config: '" + child + "' must be an array");
        slot = value;
    }
}

} // namespace detail

struct RunConfig {
    nlohmann::json resolved = defaults();

    static RunConfig from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot open config: " + path);
        nlohmann::json user;
        try {
            f >> user;
        } catch (const nlohmann::json::exception& e) {
            throw InvalidArgument(path + ": malformed JSON: " + e.what());
        }
        return from_json(user);
    }

    static RunConfig from_json(const nlohmann::json& user) {
        RunConfig cfg;
        if (!user.is_object()) throw InvalidArgument("config: top level must be an object");
        detail::merge_checked(cfg.resolved, user, "");
        return cfg;
    }

    void write_resolved(const std::string& dir) const {
        std::filesystem::create_directories(dir);
        std::ofstream f(dir + "/config.resolved.json", std::ios::trunc);
        if (!f) throw IoError("cannot write resolved config in " + dir);
        f << resolved.dump(2) << "\n";
    }

    int schedule_T() const { return resolved.at("schedule").at("T").get<int>(); }
    double schedule_s() const { return resolved.at("schedule").at("s").get<double>(); }

    phantom::PhantomConfig phantom_config(std::uint64_t seed) const {
        const auto& d = resolved.at("data");
        phantom::PhantomConfig cfg;
        cfg.height = d.at("height");
        cfg.width = d.at("width");
        cfg.channels = d.at("channels");
        cfg.glomerulus_density = d.at("glomerulus_density");
        cfg.proximal_density = d.at("proximal_density");
        cfg.distal_density = d.at("distal_density");
        cfg.nucleus_density = d.at("nucleus_density");
        cfg.noise_levels = d.at("noise_levels").get<std::vector<double>>();
        cfg.blur_sigma = d.at("blur_sigma");
        cfg.seed = seed;
        return cfg;
    }

    int n_train() const { return resolved.at("data").at("n_train").get<int>(); }
    int n_test() const { return resolved.at("data").at("n_test").get<int>(); }

    training::TrainConfig train_config(std::uint64_t seed) const {
        const auto& t = resolved.at("training");
        training::TrainConfig cfg;
        cfg.T = schedule_T();
        cfg.s = schedule_s();
        cfg.batch = t.at("batch");
        cfg.lr = t.at("lr");
        cfg.weight_decay = t.at("weight_decay");
        cfg.beta1 = t.at("beta1");
        cfg.beta2 = t.at("beta2");
        cfg.eps = t.at("eps");
        cfg.steps = t.at("steps");
        cfg.crop = t.at("crop");
        cfg.checkpoint_interval = t.at("checkpoint_interval");
        cfg.reduction_factor = t.at("reduction_factor");
        cfg.tic = t.at("tic");
        cfg.augment = t.at("augment");
        cfg.seed = seed;
        return cfg;
    }

    model::ConditionerConfig conditioner_template() const {
        const auto& c = resolved.at("model").at("conditioner");
        model::ConditionerConfig cfg;
        cfg.hidden_channels = c.at("hidden_channels");
        cfg.upsample_factor = c.at("upsample_factor");
        cfg.shuffle_stages = c.at("shuffle_stages").get<std::vector<int>>();
        return cfg;
    }

    model::DenoiserConfig denoiser_config() const {
        const auto& d = resolved.at("model").at("denoiser");
        model::DenoiserConfig cfg;
        cfg.base_channels = d.at("base_channels");
        cfg.channel_multipliers = d.at("channel_multipliers").get<std::vector<int>>();
        cfg.attention_levels = d.at("attention_levels").get<std::vector<int>>();
        cfg.time_embed_dim = d.at("time_embed_dim");
        cfg.res_blocks_per_level = d.at("res_blocks_per_level");
        cfg.groups = d.at("groups");
        return cfg;
    }

    // t_e is configured as a fraction of T so the same config works at any
    // desk-scale T; tables print the absolute t values
    sampling::SamplingConfig sampling_config(int T, std::uint64_t seed) const {
        const auto& s = resolved.at("sampling");
        sampling::SamplingConfig cfg;
        cfg.strategy = sampling::strategy_from_name(s.at("strategy"));
        const double frac = s.at("te_fraction");
        VSTAIN_REQUIRE(frac >= 0.0 && frac <= 1.0, "config: te_fraction must be in [0,1]");
        cfg.t_e = static_cast<int>(round_half_away(frac * T));
        cfg.S = s.at("S");
        cfg.K = s.at("K");
        cfg.inner = sampling::strategy_from_name(s.at("inner"));
        cfg.seed = seed;
        return cfg;
    }

    const nlohmann::json& evaluation() const { return resolved.at("evaluation"); }
};

} // namespace vstain::config

#endif
