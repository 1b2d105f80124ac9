// End-to-end runs of the sosmc executable.

#include "sosmc/io.hpp"
#include "sosmc/pretrain.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace sosmc;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("sosmc_test_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

/// Exit status of `sosmc <args>`, output discarded.
int run(const std::string& args) {
    const std::string cmd = std::string(SOSMC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

/// Small blobs dataset and a briefly pretrained width-8 model.
fs::path tiny_model(const fs::path& dir) {
    const fs::path data = dir / "data.csv";
    EXPECT_EQ(run("datagen --kind blobs --n 1000 --seed 3 --out " + dir.string() + " --output " + data.string()), 0);
    EXPECT_EQ(run("pretrain --data " + data.string() + " --width 8 --layers 2 --steps 10 --batch 64 --buffer 300 " +
                  "--k-steps 5 --out " + dir.string()),
              0);
    return dir / "model.json";
}

}  // namespace

TEST(CliDatagen, RowCountAndByteIdenticalRepeat) {
    const fs::path d = scratch("datagen");
    ASSERT_EQ(run("datagen --kind two_moons --n 20000 --seed 7 --out " + (d / "a").string()), 0);
    ASSERT_EQ(run("datagen --kind two_moons --n 20000 --seed 7 --out " + (d / "b").string()), 0);
    const std::string a = read_text(d / "a" / "dataset_two_moons_7.csv");
    EXPECT_EQ(count_lines(a), 20001u);
    EXPECT_EQ(a, read_text(d / "b" / "dataset_two_moons_7.csv"));
    const json m = json::parse(read_text(d / "a" / "manifest_datagen.json"));
    EXPECT_EQ(m.at("command"), "datagen");
    EXPECT_EQ(m.at("seeds"), json::array({7}));
    for (const auto& o : m.at("outputs")) EXPECT_TRUE(fs::exists(o.get<std::string>()));
}

TEST(CliDatagen, ZeroRowsIsAnArgumentError) {
    const fs::path d = scratch("datagen_zero");
    EXPECT_NE(run("datagen --n 0 --out " + d.string()), 0);
    EXPECT_FALSE(fs::exists(d / "manifest_datagen.json"));
}

TEST(CliPretrain, ZeroEpochsReturnsInitialisation) {
    const fs::path d = scratch("pretrain_zero");
    const fs::path data = d / "data.csv";
    ASSERT_EQ(run("datagen --kind circles --n 500 --seed 1 --output " + data.string() + " --out " + d.string()), 0);
    ASSERT_EQ(run("pretrain --data " + data.string() + " --epochs 0 --seed 5 --out " + d.string()), 0);
    const MlpEnergy saved = std::get<MlpEnergy>(load_model(d / "model.json"));
    Rng init = make_stream(5, "mlp_init");
    const MlpEnergy expected = MlpEnergy::initialised(MlpArchitecture{2, 32, 4}, init, 0.02);
    EXPECT_EQ(saved.params(), expected.params());
    EXPECT_EQ(count_lines(read_text(d / "model_loss.csv")), 1u);  // header only
}

TEST(CliPretrain, FullScaleConfigEcho) {
    const fs::path d = scratch("pretrain_full");
    const fs::path data = d / "data.csv";
    ASSERT_EQ(run("datagen --kind blobs --n 20000 --seed 2 --output " + data.string() + " --out " + d.string()), 0);
    ASSERT_EQ(run("pretrain --data " + data.string() + " --paper-scale --epochs 0 --out " + d.string()), 0);
    const json c = json::parse(read_text(d / "manifest_pretrain.json")).at("config");
    EXPECT_EQ(c.at("architecture").at("hidden_width"), 128);
    EXPECT_EQ(c.at("buffer_size"), 20000);
    EXPECT_EQ(c.at("reinject"), 0.05);
    EXPECT_EQ(c.at("k_steps"), 80);
    EXPECT_EQ(c.at("clamp_min"), -6.0);
    EXPECT_EQ(c.at("clamp_max"), 6.0);
    EXPECT_EQ(c.at("lambda_e"), 1e-3);
    EXPECT_EQ(c.at("lambda_gp"), 0.2);
    EXPECT_EQ(c.at("optimizer").at("method"), "adam");
    EXPECT_EQ(c.at("optimizer").at("learning_rate"), 2e-4);
    EXPECT_EQ(c.at("optimizer").at("grad_clip_norm"), 10.0);
    EXPECT_EQ(c.at("paper_scale"), true);
}

TEST(CliPretrain, MissingDatasetFails) {
    const fs::path d = scratch("pretrain_missing");
    EXPECT_NE(run("pretrain --data " + (d / "nope.csv").string() + " --out " + d.string()), 0);
}

TEST(CliTune, ReverseKlOnPretrainedModelRecordsCheckpoints) {
    const fs::path d = scratch("tune_ebm");
    const fs::path model = tiny_model(d);
    ASSERT_EQ(run("tune --method sosmc --objective reverse_kl --beta 0.25 --model " + model.string() +
                  " --n 100 --k 10 --eval-every 5 --m-eval 5 --b-eval 20 --t-eval 20 --grid 32 --out " +
                  (d / "tune").string()),
              0);
    std::istringstream trace(read_text(d / "tune" / "trace_seed0.csv"));
    std::string line;
    std::getline(trace, line);
    int rows = 0, checkpoints = 0;
    while (std::getline(trace, line)) {
        ++rows;
        const auto last_comma = line.rfind(',');
        const auto prev_comma = line.rfind(',', last_comma - 1);
        if (last_comma - prev_comma > 1) ++checkpoints;  // fresh_reward filled
    }
    EXPECT_EQ(rows, 10);
    EXPECT_EQ(checkpoints, 2);
    const json s = json::parse(read_text(d / "tune" / "summary_seed0.json"));
    EXPECT_EQ(s.at("status"), "ok");
    EXPECT_TRUE(s.at("terminal").contains("fresh_reward"));
    EXPECT_TRUE(s.at("diagnostics").contains("tilted_optimum"));
}

TEST(CliTune, SoulWithOddChainLengthIsConfigError) {
    const fs::path d = scratch("tune_soul_odd");
    EXPECT_EQ(run("tune --method soul --objective reverse_kl --model builtin:gaussian --n 7 --k 3 --out " + d.string()), 2);
}

TEST(CliTune, GenericObjectiveIsConfigError) {
    const fs::path d = scratch("tune_generic");
    EXPECT_EQ(run("tune --objective generic --out " + d.string()), 2);
}

TEST(CliTune, ThreeSeedsThreeTraces) {
    const fs::path d = scratch("tune_seeds");
    ASSERT_EQ(run("tune --method impdiff --objective forward_kl --model builtin:mixture_dual --n 50 --k 5 --seeds 1,2,3 "
                  "--out " +
                  d.string()),
              0);
    const json m = json::parse(read_text(d / "manifest_tune.json"));
    EXPECT_EQ(m.at("seeds"), json::array({1, 2, 3}));
    for (int s = 1; s <= 3; ++s) {
        const fs::path t = d / ("trace_seed" + std::to_string(s) + ".csv");
        EXPECT_TRUE(fs::exists(t));
        EXPECT_NE(std::find(m.at("outputs").begin(), m.at("outputs").end(), t.string()), m.at("outputs").end());
    }
}

TEST(CliTune, ConfigFileWithFlagOverride) {
    const fs::path d = scratch("tune_config");
    write_text(d / "run.toml", "[tune]\nmethod = \"soul\"\nmodel = \"builtin:gaussian\"\nn = 20\nk = 5\n");
    ASSERT_EQ(run("--config " + (d / "run.toml").string() + " tune --k 3 --out " + d.string()), 0);
    const json m = json::parse(read_text(d / "manifest_tune.json"));
    EXPECT_EQ(m.at("config").at("method"), "soul");
    EXPECT_EQ(m.at("config").at("tuning").at("n_particles"), 20);
    EXPECT_EQ(m.at("config").at("tuning").at("k_outer"), 3);
    EXPECT_EQ(count_lines(read_text(d / "trace_seed0.csv")), 4u);
}

TEST(CliEvaluate, ReportsFreshRewardAndKl) {
    const fs::path d = scratch("evaluate");
    const fs::path model = tiny_model(d);
    ASSERT_EQ(run("evaluate --model " + model.string() + " --reference " + model.string() +
                  " --m-eval 4 --b-eval 10 --t-eval 10 --grid 32 --out " + (d / "ev").string()),
              0);
    const json r = json::parse(read_text(d / "ev" / "evaluate.json")).at("results").at(0);
    EXPECT_EQ(r.at("kl_quadrature"), 0.0);
    EXPECT_GE(r.at("fresh_reward").get<double>(), 0.0);
    EXPECT_LE(r.at("fresh_reward").get<double>(), 1.0);
}

TEST(CliCheck, SingleCheckReportAndStableSchema) {
    const fs::path d = scratch("check");
    ASSERT_EQ(run("check --only weight_identity --report " + (d / "a.json").string()), 0);
    ASSERT_EQ(run("check --only weight_identity --report " + (d / "b.json").string()), 0);
    const json a = json::parse(read_text(d / "a.json"));
    const json b = json::parse(read_text(d / "b.json"));
    ASSERT_EQ(a.at("checks").size(), 1u);
    EXPECT_EQ(a.at("checks").at(0).at("name"), "weight_identity");
    EXPECT_EQ(a.at("schema"), b.at("schema"));
    for (auto it = a.at("checks").at(0).begin(); it != a.at("checks").at(0).end(); ++it)
        EXPECT_TRUE(b.at("checks").at(0).contains(it.key())) << it.key();
    EXPECT_EQ(run("check --only no_such_check"), 2);
}
