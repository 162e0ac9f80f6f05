#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "tearth/run.hpp"

using namespace tearth;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("tearth_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// Runs the CLI and returns its exit status; stdout+stderr go to `log`.
int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(TEARTH_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string l; std::getline(in, l);) ++n;
    return n;
}

}  // namespace

TEST(RunConfig, JsonRoundTripAndOverrides) {
    RunConfig c;
    c.steps = 17;
    c.seed = 4;
    c.sampler.seed = 4;
    c.model.seed = 4;
    const auto back = nlohmann::json(c).get<RunConfig>();
    EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));

    const auto j = nlohmann::json::parse(R"({"seed": 9, "model": {"preset": "micro", "n_latents": 4}, "steps": 3})");
    const auto r = j.get<RunConfig>();
    EXPECT_EQ(r.model.n_latents, 4u);
    EXPECT_EQ(r.model.channel_width, 32u);
    EXPECT_EQ(r.model.seed, 9u);
    EXPECT_EQ(r.sampler.seed, 9u);
    EXPECT_THROW(nlohmann::json::parse(R"({"aggregation": "sum"})").get<RunConfig>(), ConfigError);
    EXPECT_THROW(nlohmann::json::parse(R"({"model": "giant"})").get<RunConfig>(), ConfigError);
}

TEST(RunTraining, LogsEveryStepAndCheckpoints) {
    const auto dir = fresh_dir("run");
    RunConfig c;
    c.synthetic_points = 200;
    c.steps = 6;
    c.checkpoint_every = 4;
    std::size_t seen = 0;
    run_training(c, dir.string(), [&](const TrainRecord&) { ++seen; });
    EXPECT_EQ(seen, 6u);
    const RunPaths p{dir};
    EXPECT_EQ(line_count(p.log()), 6u);
    EXPECT_TRUE(fs::exists(p.checkpoint_at(4)));
    EXPECT_TRUE(fs::exists(p.checkpoint_at(6)));
    EXPECT_EQ(read_file(p.checkpoint_at(6)), read_file(p.checkpoint()));
    const auto ck = load_checkpoint(p.checkpoint().string());
    EXPECT_EQ(ck.adam_step, 6u);
    EXPECT_EQ(ck.extras.run["step"], 6);
    const auto splits = load_splits((p.split()).string(), synthetic_registry());
    EXPECT_EQ(splits.train[0].size(), 190u);
    EXPECT_EQ(splits.test[0].size(), 10u);
}

TEST(RunTraining, ZeroStepsWritesInitialCheckpoint) {
    const auto dir = fresh_dir("zero");
    RunConfig c;
    c.synthetic_points = 100;
    c.steps = 0;
    run_training(c, dir.string());
    const RunPaths p{dir};
    EXPECT_EQ(line_count(p.log()), 0u);
    EXPECT_EQ(load_checkpoint(p.checkpoint().string()).adam_step, 0u);
}

TEST(Cli, GenDataIsDeterministic) {
    const auto dir = fresh_dir("gen");
    ASSERT_EQ(run_cli("gen-data --out " + (dir / "a").string() + " --seed 3 --points 50", dir / "log"), 0);
    ASSERT_EQ(run_cli("gen-data --out " + (dir / "b").string() + " --seed 3 --points 50", dir / "log"), 0);
    std::size_t csvs = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        if (e.path().extension() == ".csv") {
            ++csvs;
            EXPECT_EQ(line_count(e.path()), 51u);
            EXPECT_EQ(read_file(e.path()), read_file(dir / "b" / e.path().filename()));
        }
    }
    EXPECT_EQ(csvs, 4u);
    EXPECT_TRUE(fs::exists(dir / "a" / "registry.json"));
}

TEST(Cli, ExitCodes) {
    const auto dir = fresh_dir("codes");
    EXPECT_EQ(run_cli("", dir / "log"), 2);
    EXPECT_EQ(run_cli("bogus", dir / "log"), 2);
    EXPECT_EQ(run_cli("info", dir / "log"), 2);
    std::ofstream(dir / "junk.ckpt") << "junk";
    EXPECT_EQ(run_cli("info --checkpoint " + (dir / "junk.ckpt").string(), dir / "log"), 3);
    EXPECT_EQ(run_cli("info --checkpoint " + (dir / "missing.ckpt").string(), dir / "log"), 3);
    std::ofstream(dir / "bad.json") << R"({"aggregation": "sum"})";
    EXPECT_EQ(run_cli("train --config " + (dir / "bad.json").string() + " --out " + (dir / "r").string(), dir / "log"), 2);
}

TEST(Cli, TrainInfoEvalReconstruct) {
    const auto dir = fresh_dir("pipeline");
    std::ofstream(dir / "cfg.json") << R"({"synthetic_points": 300, "checkpoint_every": 0})";
    ASSERT_EQ(run_cli("train --config " + (dir / "cfg.json").string() + " --steps 3 --out " + (dir / "run").string(), dir / "log"), 0)
        << read_file(dir / "log");
    const auto ck = (dir / "run" / "checkpoint.ckpt").string();
    ASSERT_EQ(run_cli("info --checkpoint " + ck, dir / "info1"), 0);
    ASSERT_EQ(run_cli("info --checkpoint " + ck, dir / "info2"), 0);
    EXPECT_EQ(read_file(dir / "info1"), read_file(dir / "info2"));
    EXPECT_NE(read_file(dir / "info1").find("parameters 104352"), std::string::npos) << read_file(dir / "info1");

    ASSERT_EQ(run_cli("eval --checkpoint " + ck + " --protocol heldout", dir / "log"), 0) << read_file(dir / "log");
    EXPECT_TRUE(fs::exists(dir / "run" / "eval" / "heldout.csv"));
    EXPECT_TRUE(fs::exists(dir / "run" / "eval" / "heldout_summary.txt"));
    EXPECT_EQ(run_cli("eval --checkpoint " + ck + " --protocol sideways", dir / "log"), 2);

    const auto out = (dir / "field.csv").string();
    ASSERT_EQ(run_cli("reconstruct --checkpoint " + ck + " --modality synthetic_angle --resolution 10 --out " + out, dir / "log"), 0)
        << read_file(dir / "log");
    EXPECT_EQ(line_count(out), 1u + 18u * 36u);
    EXPECT_TRUE(fs::exists(dir / "field.pgm"));
    EXPECT_TRUE(fs::exists(dir / "field.pgm.json"));
    EXPECT_EQ(run_cli("reconstruct --checkpoint " + ck + " --modality nope --out " + out, dir / "log"), 2);
}
