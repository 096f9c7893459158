#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "json.hpp"

#include "isem/digest.hpp"
#include "isem/episode_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
};

Run run_cli(const std::string& args) {
    const std::string cmd = std::string(ISEM_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

double field(const std::string& out, const std::string& key) {
    std::istringstream in(out);
    std::string k;
    double v;
    while (in >> k >> v)
        if (k == key) return v;
    ADD_FAILURE() << "no " << key << " in output:\n" << out;
    return NAN;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("isem_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string p(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run_cli("").code, 2);
    EXPECT_EQ(run_cli("frobnicate").code, 2);
    EXPECT_EQ(run_cli("gen-data --mini --no-such-flag -o " + p("g")).code, 2);
    EXPECT_EQ(run_cli("train --algo isem").code, 2);
    EXPECT_EQ(run_cli("train --algo sgd --train x -o y").code, 2);
    EXPECT_EQ(run_cli("evaluate --data " + p("missing.jsonl") + " --behavior").code, 3);
    EXPECT_EQ(run_cli("evaluate --data x").code, 2);
    EXPECT_EQ(run_cli("gen-data --mini --rho 100 -o " + p("g")).code, 3);
    EXPECT_EQ(run_cli("--help").code, 0);

    isem::write_file(p("bad.jsonl"), "{\"episode_id\": 0\n");
    EXPECT_EQ(run_cli("evaluate --behavior --data " + p("bad.jsonl")).code, 3);
}

TEST_F(Cli, ScenarioMismatchIsAValidationError) {
    ASSERT_EQ(run_cli("gen-data --mini -K 5 -o " + p("g")).code, 0);
    EXPECT_EQ(run_cli("train --algo poem --train " + p("g/episodes.jsonl") + " -o " + p("t")).code, 3);
}

TEST_F(Cli, GenDataWritesDatasetAndManifest) {
    const auto r = run_cli("gen-data --mini -K 20 --rho 75 --seed 4 -o " + p("g"));
    ASSERT_EQ(r.code, 0);
    const auto m = nlohmann::json::parse(isem::read_file(p("g/manifest.json")));
    EXPECT_EQ(m["command"], "gen-data");
    EXPECT_EQ(m["master_seed"], 4);
    EXPECT_DOUBLE_EQ(m["config"]["rho"].get<double>(), 0.75);
    EXPECT_EQ(m["outputs"]["episodes.jsonl"], isem::file_digest(p("g/episodes.jsonl")));
    EXPECT_TRUE(m.contains("version") && m.contains("duration_seconds") && m.contains("argv"));
    EXPECT_EQ(isem::read_episodes(p("g/episodes.jsonl")).size(), 20u);

    ASSERT_EQ(run_cli("gen-data --mini -K 20 --rho 75 --seed 4 -o " + p("h")).code, 0);
    EXPECT_EQ(isem::read_file(p("g/episodes.jsonl")), isem::read_file(p("h/episodes.jsonl")));
}

TEST_F(Cli, BehaviorEvaluationIsTheMeanDiscountedReturn) {
    ASSERT_EQ(run_cli("gen-data --mini -K 60 --rho 50 --seed 9 -o " + p("g")).code, 0);
    const auto data = isem::read_episodes(p("g/episodes.jsonl"));
    double total = 0.0;
    for (const auto& ep : data)
        for (const auto& r : ep.rewards) total += r.value * std::pow(0.999, double(r.step));
    const auto r = run_cli("evaluate --behavior --data " + p("g/episodes.jsonl"));
    ASSERT_EQ(r.code, 0);
    EXPECT_NEAR(field(r.out, "value"), total / double(data.size()), 1e-9);
}

TEST_F(Cli, SingleThreadIsemEqualsPoem) {
    ASSERT_EQ(run_cli("gen-data --mini -K 40 --seed 2 -o " + p("g")).code, 0);
    ASSERT_EQ(run_cli("gen-data --mini -K 20 --seed 102 -o " + p("e")).code, 0);
    const std::string common =
        " --mini --train " + p("g/episodes.jsonl") + " --eval " + p("e/episodes.jsonl") + " -Q 2 --seed 6 -o ";
    ASSERT_EQ(run_cli("train --algo poem" + common + p("poem")).code, 0);
    ASSERT_EQ(run_cli("train --algo isem -M 1 --max-outer 1" + common + p("isem")).code, 0);
    EXPECT_EQ(isem::read_file(p("poem/policy.json")), isem::read_file(p("isem/policy.json")));
    ASSERT_EQ(run_cli("train --algo isem -M 1" + common + p("isem20")).code, 0);
    EXPECT_EQ(isem::read_file(p("poem/policy.json")), isem::read_file(p("isem20/policy.json")));
}

TEST_F(Cli, TrainedPolicyEvaluatesAndRollsOut) {
    ASSERT_EQ(run_cli("gen-data --mini -K 40 --seed 1 -o " + p("g")).code, 0);
    const auto t = run_cli("train --mini --train " + p("g/episodes.jsonl") + " -M 2 --max-outer 2 -o " + p("t"));
    ASSERT_EQ(t.code, 0);
    EXPECT_TRUE(fs::exists(p("t/stats.csv")) && fs::exists(p("t/summary.json")));
    const auto e = run_cli("evaluate --policy " + p("t/policy.json") + " --data " + p("g/episodes.jsonl") + " -o " + p("ev"));
    ASSERT_EQ(e.code, 0);
    EXPECT_TRUE(std::isfinite(field(e.out, "value")));
    EXPECT_TRUE(fs::exists(p("ev/manifest.json")));
    const auto r = run_cli("rollout --mini --policy " + p("t/policy.json") + " -N 20");
    ASSERT_EQ(r.code, 0);
    EXPECT_LE(std::abs(field(r.out, "mean_undiscounted")), 3.0);
    EXPECT_EQ(run_cli("rollout --policy " + p("t/policy.json") + " -N 2").code, 3) << "alphabet mismatch";
}

TEST_F(Cli, BenchMSweepIncludesEightThreads) {
    const auto r = run_cli("bench --sweep m --mini --seeds 2 -K 30 -Q 2 --test-episodes 50 --max-outer 2 -o " + p("b"));
    ASSERT_EQ(r.code, 0);
    const auto csv = isem::read_file(p("b/bench.csv"));
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "sweep_var,sweep_value,algo,seed,value_mean,value_stddev,seed_count");
    std::size_t rows = 0, aggregates = 0;
    bool saw8 = false;
    while (std::getline(in, line)) {
        ++rows;
        if (line.find(",all,") != std::string::npos) ++aggregates;
        if (line.rfind("m,8,isem,", 0) == 0) saw8 = true;
    }
    EXPECT_TRUE(saw8);
    EXPECT_EQ(rows, 4u * 2u * 2u + 4u * 2u); // per-seed rows plus one aggregate per (value, algo)
    EXPECT_EQ(aggregates, 8u);
}
