#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "vstain/config.hpp"
#include "vstain/dataio.hpp"

using namespace vstain;

namespace {

std::string cli() {
    const char* env = std::getenv("VSTAIN_CLI");
    REQUIRE(env != nullptr);
    return env;
}

std::string work_dir() {
    static const std::string dir = [] {
        const auto p = std::filesystem::temp_directory_path() / "vstain_cli_test";
        std::filesystem::remove_all(p);
        std::filesystem::create_directories(p);
        return p.string();
    }();
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = cli() + " " + args + " >" + work_dir() + "/stdout.txt 2>" +
                            work_dir() + "/stderr.txt";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string stderr_text() {
    std::ifstream f(work_dir() + "/stderr.txt");
    return std::string(std::istreambuf_iterator<char>(f), {});
}

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void write_config(const std::string& path) {
    std::ofstream f(path);
    f << R"({
  "schedule": {"T": 20},
  "model": {
    "conditioner": {"hidden_channels": 8},
    "denoiser": {"base_channels": 8, "channel_multipliers": [1, 2], "attention_levels": [1],
                 "time_embed_dim": 16, "groups": 4}
  },
  "training": {"steps": 6, "batch": 2, "crop": 40, "checkpoint_interval": 100},
  "sampling": {"strategy": "mean", "te_fraction": 1.0, "S": 5},
  "data": {"height": 40, "width": 40, "channels": 3, "n_train": 3, "n_test": 2},
  "evaluation": {"niqe_patch": 8, "niqe_fit_patches": 60, "sweep_fractions": [0, 1.0],
                 "ablation_factors": [1, 3], "cv_repeats": 2}
})";
}

} // namespace

TEST_CASE("CLI pipeline: synth, schedule, train, sample, eval, spectrum") {
    const std::string w = work_dir();
    write_config(w + "/cfg.json");
    const std::string cfg = " --config " + w + "/cfg.json";

    REQUIRE(run_cli("synth" + cfg + " --seed 11 --out " + w + "/ds") == 0);
    CHECK(std::filesystem::exists(w + "/ds/manifest.json"));
    CHECK(std::filesystem::exists(w + "/ds/config.resolved.json"));
    CHECK(std::filesystem::exists(w + "/ds/run.log"));

    SECTION("schedule exports the variance curve with the spec'd header") {
        REQUIRE(run_cli("schedule" + cfg + " --out " + w + "/sched") == 0);
        std::ifstream f(w + "/sched/variance_curve.tsv");
        std::string header;
        std::getline(f, header);
        CHECK(header == "t\tdelta_tilde");
    }

    REQUIRE(run_cli("train" + cfg + " --seed 7 --data " + w + "/ds --out " + w + "/run") == 0);
    CHECK(std::filesystem::exists(w + "/run/final/manifest.json"));
    CHECK(std::filesystem::exists(w + "/run/loss.tsv"));

    SECTION("sample twice with identical seed is byte-identical; mean t_e=T ignores the seed") {
        REQUIRE(run_cli("sample" + cfg + " --seed 3 --checkpoint " + w + "/run/final --data " +
                        w + "/ds --out " + w + "/p1") == 0);
        REQUIRE(run_cli("sample" + cfg + " --seed 3 --checkpoint " + w + "/run/final --data " +
                        w + "/ds --out " + w + "/p2") == 0);
        CHECK(slurp(w + "/p1/test_0000.raw.vstn") == slurp(w + "/p2/test_0000.raw.vstn"));
        CHECK(slurp(w + "/p1/test_0000.ppm") == slurp(w + "/p2/test_0000.ppm"));
        // strategy mean with te_fraction 1.0 suppresses all noise
        REQUIRE(run_cli("sample" + cfg + " --seed 99 --checkpoint " + w + "/run/final --data " +
                        w + "/ds --out " + w + "/p3") == 0);
        CHECK(slurp(w + "/p1/test_0000.raw.vstn") == slurp(w + "/p3/test_0000.raw.vstn"));
    }

    SECTION("eval on identical pred/gt dirs caps PSNR and zeroes CIE-94") {
        REQUIRE(run_cli("eval" + cfg + " --pred " + w + "/ds --gt " + w + "/ds --out " + w +
                        "/evalself") == 0);
        std::ifstream f(w + "/evalself/metrics.tsv");
        std::string line, header;
        std::getline(f, header);
        CHECK(header.rfind("id\t", 0) == 0);
        int rows = 0;
        while (std::getline(f, line)) {
            if (line.rfind("#", 0) == 0) continue;
            ++rows;
            // columns: id contrast_gt contrast_pred mse psnr cie94 lpips
            std::vector<std::string> cols;
            size_t pos = 0;
            while (pos != std::string::npos) {
                const size_t tab = line.find('\t', pos);
                cols.push_back(line.substr(pos, tab - pos));
                pos = tab == std::string::npos ? tab : tab + 1;
            }
            REQUIRE(cols.size() == 7);
            CHECK(std::stod(cols[4]) == 99.0);
            CHECK(std::stod(cols[5]) == 0.0);
        }
        CHECK(rows == 2);  // n_test
    }

    SECTION("sample then eval emits one row per test FOV") {
        REQUIRE(run_cli("sample" + cfg + " --seed 3 --checkpoint " + w + "/run/final --data " +
                        w + "/ds --out " + w + "/preds") == 0);
        REQUIRE(run_cli("eval" + cfg + " --pred " + w + "/preds --gt " + w + "/ds --out " + w +
                        "/evalout") == 0);
        std::ifstream f(w + "/evalout/metrics.tsv");
        std::string line;
        int rows = 0, aggregates = 0;
        std::getline(f, line);  // header
        while (std::getline(f, line)) {
            if (line.rfind("#", 0) == 0)
                ++aggregates;
            else
                ++rows;
        }
        CHECK(rows == 2);
        CHECK(aggregates == 3);  // mean, std, t-test

        REQUIRE(run_cli("spectrum" + cfg + " --pred " + w + "/preds --data " + w + "/ds --out " +
                        w + "/spec") == 0);
        std::ifstream sf(w + "/spec/spectrum.tsv");
        std::getline(sf, line);
        CHECK(line.rfind("#channel", 0) == 0);
        std::getline(sf, line);
        CHECK(line == "r\tinput_upsampled\tprediction\tground_truth");
    }
}

TEST_CASE("CLI error contract: distinct exit codes with one-line messages") {
    const std::string w = work_dir();
    write_config(w + "/cfg.json");
    const std::string cfg = " --config " + w + "/cfg.json";

    SECTION("missing --seed on a randomized command is a usage error") {
        CHECK(run_cli("synth" + cfg + " --out " + w + "/nope") == 1);
        CHECK(stderr_text().rfind("error[usage]:", 0) == 0);
    }
    SECTION("unknown config key is a usage error") {
        std::ofstream f(w + "/bad.json");
        f << R"({"schedule": {"T": 20, "bogus": 1}})";
        f.close();
        CHECK(run_cli("schedule --config " + w + "/bad.json --out " + w + "/nope") == 1);
        const std::string err = stderr_text();
        CHECK(err.rfind("error[usage]:", 0) == 0);
        CHECK(err.find("bogus") != std::string::npos);
        CHECK(std::count(err.begin(), err.end(), '\n') == 1);
    }
    SECTION("missing input files are I/O errors") {
        CHECK(run_cli("train" + cfg + " --seed 1 --data " + w + "/does_not_exist --out " + w +
                      "/nope") == 2);
        CHECK(stderr_text().rfind("error[io]:", 0) == 0);
    }
    SECTION("training divergence is a numeric error") {
        REQUIRE(run_cli("synth" + cfg + " --seed 11 --out " + w + "/ds2") == 0);
        std::ofstream f(w + "/diverge.json");
        f << R"({
  "schedule": {"T": 20},
  "model": {"conditioner": {"hidden_channels": 8},
            "denoiser": {"base_channels": 8, "channel_multipliers": [1, 2],
                         "attention_levels": [], "time_embed_dim": 16, "groups": 4}},
  "training": {"steps": 30, "batch": 2, "crop": 40, "checkpoint_interval": 100, "lr": 1e30},
  "data": {"height": 40, "width": 40, "channels": 3, "n_train": 3, "n_test": 2}
})";
        f.close();
        CHECK(run_cli("train --config " + w + "/diverge.json --seed 1 --data " + w +
                      "/ds2 --out " + w + "/dv") == 3);
        const std::string err = stderr_text();
        CHECK(err.rfind("error[numeric]:", 0) == 0);
        CHECK(err.find("step") != std::string::npos);
    }
}

TEST_CASE("RunConfig round-trips and rejects bad shapes") {
    const auto base = config::defaults();
    const config::RunConfig rc = config::RunConfig::from_json(nlohmann::json::object());
    CHECK(rc.resolved == base);

    const config::RunConfig override_t =
        config::RunConfig::from_json(nlohmann::json{{"schedule", {{"T", 77}}}});
    CHECK(override_t.schedule_T() == 77);
    CHECK(override_t.schedule_s() == 1.0);

    CHECK_THROWS_AS(config::RunConfig::from_json(nlohmann::json{{"nope", 1}}), InvalidArgument);
    CHECK_THROWS_AS(config::RunConfig::from_json(nlohmann::json{{"schedule", {{"T", "abc"}}}}),
                    InvalidArgument);
    CHECK_THROWS_AS(config::RunConfig::from_json(nlohmann::json{{"schedule", 5}}), InvalidArgument);

    SECTION("te_fraction maps onto the diffusion-time axis") {
        config::RunConfig rc2 = config::RunConfig::from_json(
            nlohmann::json{{"sampling", {{"te_fraction", 0.1}}}, {"schedule", {{"T", 200}}}});
        const auto scfg = rc2.sampling_config(rc2.schedule_T(), 1);
        CHECK(scfg.t_e == 20);
    }
}
