// vstain: Brownian-bridge virtual staining on synthetic paired data.
// Verbs: synth, train, sample, eval, ablate-channels, sweep-exit, cv,
// spectrum, schedule. Exit codes: 0 ok, 1 usage, 2 I/O, 3 numeric.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "vstain/config.hpp"
#include "vstain/studies.hpp"

namespace {

using namespace vstain;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

config::RunConfig load_config(const CommonArgs& args) {
    if (args.config_path.empty()) return config::RunConfig{};
    return config::RunConfig::from_file(args.config_path);
}

void write_run_log(const std::string& out_dir, const std::string& line) {
    std::filesystem::create_directories(out_dir);
    std::ofstream f(out_dir + "/run.log", std::ios::trunc);
    if (!f) throw IoError("cannot write " + out_dir + "/run.log");
    f << line << "\n";
}

void require_seed(const CommonArgs& args, const char* verb) {
    if (!args.seed_set)
        throw InvalidArgument(std::string(verb) +
                              ": --seed is required (randomized commands have no implicit seed)");
}

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_out = true) {
    cmd->add_option("--config", args.config_path, "JSON run configuration");
    if (needs_out) cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--seed", args.seed, "base RNG seed")->each([&](const std::string&) {
        args.seed_set = true;
    });
}

int run(int argc, char** argv) {
    CLI::App app{"Brownian-bridge virtual staining engine"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string data_dir, checkpoint_dir, pred_dir, gt_dir, resume_dir;

    auto* synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
    add_common(synth, args);

    auto* train = app.add_subcommand("train", "train the bridge model");
    add_common(train, args);
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--resume", resume_dir, "checkpoint directory to resume from");

    auto* sample = app.add_subcommand("sample", "sample the test split from a checkpoint");
    add_common(sample, args);
    sample->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    sample->add_option("--data", data_dir, "dataset directory")->required();

    auto* eval = app.add_subcommand("eval", "full-reference metric report");
    add_common(eval, args);
    eval->add_option("--pred", pred_dir, "prediction directory")->required();
    eval->add_option("--gt", gt_dir, "ground-truth dataset directory")->required();

    auto* ablate = app.add_subcommand("ablate-channels", "train/evaluate SNR channel subsets");
    add_common(ablate, args);
    ablate->add_option("--data", data_dir, "dataset directory")->required();

    auto* sweep = app.add_subcommand("sweep-exit", "mean/skip exit-point sweep");
    add_common(sweep, args);
    sweep->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    sweep->add_option("--data", data_dir, "dataset directory")->required();

    auto* cv = app.add_subcommand("cv", "repeatability (coefficient of variation) study");
    add_common(cv, args);
    cv->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    cv->add_option("--data", data_dir, "dataset directory")->required();

    auto* spectrum = app.add_subcommand("spectrum", "radial power spectrum comparison");
    add_common(spectrum, args);
    spectrum->add_option("--pred", pred_dir, "sampled prediction directory")->required();
    spectrum->add_option("--data", data_dir, "dataset directory")->required();

    auto* schedule = app.add_subcommand("schedule", "export the posterior variance curve");
    add_common(schedule, args);

    app.parse(argc, argv);

    const config::RunConfig rc = load_config(args);

    if (synth->parsed()) {
        require_seed(args, "synth");
        rc.write_resolved(args.out_dir);
        phantom::generate_dataset(rc.phantom_config(args.seed), rc.n_train(), rc.n_test(),
                                  args.out_dir);
        write_run_log(args.out_dir, "synth ok n_train=" + std::to_string(rc.n_train()) +
                                        " n_test=" + std::to_string(rc.n_test()));
        return 0;
    }
    if (train->parsed()) {
        require_seed(args, "train");
        rc.write_resolved(args.out_dir);
        const training::TrainConfig tcfg = rc.train_config(args.seed);
        const model::ConditionerConfig cond = rc.conditioner_template();
        const model::DenoiserConfig den = rc.denoiser_config();
        const training::TrainResult result =
            training::train(tcfg, data_dir, args.out_dir, resume_dir, &cond, &den);
        write_run_log(args.out_dir, "train ok steps=" + std::to_string(tcfg.steps) +
                                        " final=" + result.final_dir);
        return 0;
    }
    if (sample->parsed()) {
        require_seed(args, "sample");
        rc.write_resolved(args.out_dir);
        training::Checkpoint ck = training::load_checkpoint(checkpoint_dir);
        const auto fovs = studies::load_test_split(data_dir, ck);
        const sampling::SamplingConfig scfg = rc.sampling_config(ck.train_cfg.T, args.seed);
        studies::sample_split(ck, fovs, scfg, args.out_dir);
        write_run_log(args.out_dir, std::string("sample ok strategy=") +
                                        sampling::strategy_name(scfg.strategy) +
                                        " t_e=" + std::to_string(scfg.t_e) +
                                        " fovs=" + std::to_string(fovs.size()));
        return 0;
    }
    if (eval->parsed()) {
        rc.write_resolved(args.out_dir);
        const auto report =
            studies::run_eval(pred_dir, gt_dir, args.out_dir + "/metrics.tsv",
                              rc.evaluation().at("extractor_seed").get<std::uint64_t>(),
                              rc.evaluation().at("histogram_bins").get<int>());
        write_run_log(args.out_dir, "eval ok fovs=" + std::to_string(report.rows.size()));
        return 0;
    }
    if (ablate->parsed()) {
        require_seed(args, "ablate-channels");
        rc.write_resolved(args.out_dir);
        const auto report = studies::run_ablation(rc, data_dir, args.out_dir, args.seed);
        write_run_log(args.out_dir, "ablate-channels ok models=" +
                                        std::to_string(report.rows.size()));
        return 0;
    }
    if (sweep->parsed()) {
        require_seed(args, "sweep-exit");
        rc.write_resolved(args.out_dir);
        training::Checkpoint ck = training::load_checkpoint(checkpoint_dir);
        const auto report = studies::run_sweep(rc, ck, data_dir, args.out_dir, args.seed);
        write_run_log(args.out_dir, "sweep-exit ok rows=" + std::to_string(report.rows.size()));
        return 0;
    }
    if (cv->parsed()) {
        require_seed(args, "cv");
        rc.write_resolved(args.out_dir);
        training::Checkpoint ck = training::load_checkpoint(checkpoint_dir);
        const auto report = studies::run_cv(rc, ck, data_dir, args.out_dir, args.seed);
        write_run_log(args.out_dir, "cv ok strategies=" + std::to_string(report.summary.size()));
        return 0;
    }
    if (spectrum->parsed()) {
        rc.write_resolved(args.out_dir);
        const int channel = rc.evaluation().at("spectrum_channel").get<int>();
        const auto report =
            studies::run_spectrum(data_dir, pred_dir, channel, args.out_dir + "/spectrum.tsv");
        write_run_log(args.out_dir, "spectrum ok channel=" + std::to_string(report.channel));
        return 0;
    }
    if (schedule->parsed()) {
        rc.write_resolved(args.out_dir);
        const auto sched = bridge::build_schedule(rc.schedule_T(), rc.schedule_s());
        const auto plan = bridge::make_step_plan(
            sched.T, rc.resolved.at("sampling").at("S").get<int>());
        std::ofstream f(args.out_dir + "/variance_curve.tsv", std::ios::trunc);
        if (!f) throw IoError("cannot write " + args.out_dir + "/variance_curve.tsv");
        f << bridge::export_variance_curve(sched, plan);
        write_run_log(args.out_dir, "schedule ok T=" + std::to_string(sched.T));
        return 0;
    }
    throw InvalidArgument("no subcommand selected");
}

} // namespace

int main(int argc, char** argv) {
    try {
        try {
            return run(argc, argv);
        } catch (const CLI::ParseError& e) {
            if (e.get_exit_code() == 0) return 0;  // --help
            std::cerr << "error[usage]: " << e.what() << "\n";
            return 1;
        }
    } catch (const vstain::InvalidArgument& e) {
        std::cerr << "error[usage]: " << e.what() << "\n";
        return 1;
    } catch (const vstain::IoError& e) {
        std::cerr << "error[io]: " << e.what() << "\n";
        return 2;
    } catch (const vstain::NumericError& e) {
        std::cerr << "error[numeric]: " << e.what() << "\n";
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error[io]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << "\n";
        return 3;
    }
}
