// isem: data generation, training, evaluation, rollouts and benchmark sweeps
// for FSC policies learned from batch SAR data.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "isem/bench.hpp"
#include "isem/behavior.hpp"
#include "isem/digest.hpp"
#include "isem/episode_io.hpp"
#include "isem/isem.hpp"
#include "isem/parallel.hpp"
#include "isem/poem.hpp"
#include "isem/policy_io.hpp"
#include "isem/sar/episode.hpp"
#include "isem/sar/scenario.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace isem;

namespace {

constexpr const char* kVersion = "0.3.0";

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct ScenarioArgs {
    std::string path;
    bool mini = false;

    void add(CLI::App* app) {
        app->add_option("--scenario", path, "scenario JSON (default: built-in 20x10 map)");
        app->add_flag("--mini", mini, "built-in desk-scale scenario");
    }

    sar::ScenarioConfig load(std::map<std::string, std::string>& inputs) const {
        if (!path.empty() && mini) throw UsageError("--scenario and --mini are exclusive");
        if (mini) return sar::mini_scenario();
        if (path.empty()) return sar::default_scenario();
        inputs[path] = file_digest(path);
        return sar::read_scenario(path);
    }
};

struct LearnArgs {
    double gamma = 0.999;
    std::string time_base = "primitive";

    void add(CLI::App* app) {
        app->add_option("--gamma", gamma, "discount factor")->capture_default_str();
        app->add_option("--time-base", time_base, "discount by primitive steps or decision epochs")
            ->check(CLI::IsMember({"primitive", "epoch"}))
            ->capture_default_str();
    }

    LearnConfig config() const {
        LearnConfig c;
        c.gamma = gamma;
        c.time_base = time_base == "epoch" ? TimeBase::Epoch : TimeBase::Primitive;
        c.validate();
        return c;
    }

    json to_json() const { return {{"gamma", gamma}, {"time_base", time_base}}; }
};

/// Percentage form (50, 75, 85) on the command line.
double rho_from_percent(double pct) {
    if (!(pct >= 0.0 && pct < 100.0)) throw DomainError("--rho is a percentage in [0, 100)");
    return pct / 100.0;
}

void check_digest(const Dataset& data, const sar::ScenarioConfig& sc, const std::string& path) {
    const auto want = sar::scenario_digest(sc);
    for (const auto& ep : data)
        if (!ep.scenario_digest.empty() && ep.scenario_digest != want)
            throw MismatchError(path + ": episode " + std::to_string(ep.episode_id) +
                                " was generated on a different scenario");
}

/// Writes manifest.json next to a command's outputs.
struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    json config = json::object();
    std::uint64_t seed = 0;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void output(const fs::path& dir, const std::string& name, const std::string& bytes) {
        write_file((dir / name).string(), bytes);
        outputs[name] = content_digest(bytes);
    }

    void write(const fs::path& dir) const {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        json j;
        j["command"] = command;
        j["argv"] = argv;
        j["config"] = config;
        j["master_seed"] = seed;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["version"] = kVersion;
        j["duration_seconds"] = secs;
        write_file((dir / "manifest.json").string(), j.dump(2) + "\n");
    }
};

fs::path prepare_out(const std::string& out) {
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------

struct GenData {
    ScenarioArgs scenario;
    double rho = 85;
    std::size_t episodes = 100;
    std::uint64_t seed = 0;
    double gamma = 0.999;
    std::size_t workers = 0;
    std::string out;

    void add(CLI::App* app) {
        scenario.add(app);
        app->add_option("--rho", rho, "expert percentage")->capture_default_str();
        app->add_option("-K,--episodes", episodes, "episode count")->capture_default_str();
        app->add_option("--seed", seed, "master seed")->capture_default_str();
        app->add_option("--gamma", gamma, "discount used for the reported return")->capture_default_str();
        app->add_option("--workers", workers, "worker threads (0: ISEM_THREADS or hardware)");
        app->add_option("-o,--out", out, "output directory")->required();
    }

    int run(Manifest& m) {
        const auto sc = scenario.load(m.inputs);
        BehaviorConfig cfg{rho_from_percent(rho), episodes, seed, workers};
        const auto data = generate_dataset(sc, cfg, gamma);
        const auto dir = prepare_out(out);
        m.output(dir, "episodes.jsonl", episodes_to_string(data));
        m.output(dir, "scenario.json", sar::scenario_to_string(sc));
        m.seed = seed;
        m.config = {{"scenario", sar::scenario_to_json(sc)}, {"rho", cfg.rho}, {"episodes", episodes}, {"gamma", gamma}};

        double total = 0.0;
        for (const auto& ep : data)
            for (const auto& r : ep.rewards) total += r.value * std::pow(gamma, double(r.step));
        std::cout << "episodes " << data.size() << "\nmean_discounted_return "
                  << fmt(data.empty() ? 0.0 : total / double(data.size())) << '\n';
        return kOk;
    }
};

struct Train {
    std::string algo = "isem";
    std::string train_path, eval_path;
    ScenarioArgs scenario;
    LearnArgs learn;
    std::size_t nodes = 3;
    std::size_t threads = 8;
    std::size_t max_outer = 20;
    double epsilon = 0.1;
    bool relative_epsilon = false;
    double eval_fraction = 0.25;
    double tolerance = 1e-3;
    std::size_t max_inner = 200;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
    std::string out;

    void add(CLI::App* app) {
        app->add_option("--algo", algo, "poem or isem")->check(CLI::IsMember({"poem", "isem"}))->capture_default_str();
        app->add_option("--train", train_path, "training episodes (JSON lines)")->required();
        app->add_option("--eval", eval_path, "held-out episodes for iSEM selection");
        scenario.add(app);
        learn.add(app);
        app->add_option("-Q,--nodes", nodes, "controller nodes per agent")->capture_default_str();
        app->add_option("-M,--threads", threads, "iSEM restart threads")->capture_default_str();
        app->add_option("--max-outer", max_outer, "iSEM outer iterations")->capture_default_str();
        app->add_option("--epsilon", epsilon, "iSEM retention threshold")->capture_default_str();
        app->add_flag("--relative-epsilon", relative_epsilon, "scale epsilon by |best value|");
        app->add_option("--eval-fraction", eval_fraction, "split used when --eval is absent")->capture_default_str();
        app->add_option("--tolerance", tolerance, "PoEM relative lower-bound tolerance")->capture_default_str();
        app->add_option("--max-inner", max_inner, "PoEM iteration cap")->capture_default_str();
        app->add_option("--seed", seed, "master seed")->capture_default_str();
        app->add_option("--workers", workers, "worker threads (0: ISEM_THREADS or hardware)");
        app->add_option("-o,--out", out, "output directory")->required();
    }

    int run(Manifest& m) {
        const auto sc = scenario.load(m.inputs);
        const auto lc = learn.config();
        if (nodes == 0) throw InvalidSpec("--nodes must be positive");
        m.inputs[train_path] = file_digest(train_path);
        Dataset train = read_episodes(train_path);
        check_digest(train, sc, train_path);
        Dataset eval;
        if (!eval_path.empty()) {
            m.inputs[eval_path] = file_digest(eval_path);
            eval = read_episodes(eval_path);
            check_digest(eval, sc, eval_path);
        } else if (algo == "isem") {
            Rng rng = make_stream({seed, 0, 2});
            auto split = split_dataset(train, eval_fraction, rng);
            train = std::move(split.train);
            eval = std::move(split.eval);
        }
        const auto specs = sc.agent_specs(nodes);
        PoemOptions po{tolerance, max_inner};
        const auto dir = prepare_out(out);
        m.seed = seed;
        m.config = {{"algo", algo},
                    {"scenario", sar::scenario_to_json(sc)},
                    {"learn", learn.to_json()},
                    {"nodes", nodes},
                    {"tolerance", tolerance},
                    {"max_inner", max_inner}};

        JointPolicy theta;
        json summary;
        summary["algo"] = algo;
        if (algo == "poem") {
            auto res = poem_train(thread_initial_policy(specs, seed, 0, 1), train, lc, po);
            std::ostringstream csv;
            write_trace_csv(res.stats, csv);
            m.output(dir, "stats.csv", csv.str());
            summary["iterations"] = res.stats.iterations_run;
            summary["converged"] = res.stats.converged;
            theta = std::move(res.theta);
        } else {
            IsemConfig ic;
            ic.threads = threads;
            ic.max_outer = max_outer;
            ic.epsilon = epsilon;
            ic.relative_epsilon = relative_epsilon;
            ic.master_seed = seed;
            ic.poem = po;
            ic.learn = lc;
            ic.workers = workers;
            auto res = isem_train(specs, train, eval, ic);
            std::ostringstream csv;
            write_isem_csv(res.state, csv);
            m.output(dir, "stats.csv", csv.str());
            summary["outer_iterations"] = res.state.outer_iterations;
            summary["best_value_trace"] = res.state.best_value_trace;
            m.config["threads"] = threads;
            m.config["max_outer"] = max_outer;
            m.config["epsilon"] = epsilon;
            m.config["relative_epsilon"] = relative_epsilon;
            if (eval_path.empty()) m.config["eval_fraction"] = eval_fraction;
            theta = std::move(res.theta);
        }
        summary["train_value"] = empirical_value(train, theta, lc);
        if (!eval.empty()) summary["eval_value"] = empirical_value(eval, theta, lc);
        m.output(dir, "policy.json", policy_to_string(theta));
        m.output(dir, "summary.json", summary.dump(2) + "\n");
        std::cout << "train_value " << fmt(summary["train_value"].get<double>()) << '\n';
        if (summary.contains("eval_value")) std::cout << "eval_value " << fmt(summary["eval_value"].get<double>()) << '\n';
        return kOk;
    }
};

struct Evaluate {
    std::string policy_path, data_path;
    bool behavior = false;
    LearnArgs learn;
    std::string out;

    void add(CLI::App* app) {
        auto* p = app->add_option("--policy", policy_path, "policy JSON");
        auto* b = app->add_flag("--behavior", behavior, "evaluate the logged behavior policy itself");
        p->excludes(b);
        app->add_option("--data", data_path, "episodes to evaluate on")->required();
        learn.add(app);
        app->add_option("-o,--out", out, "output directory (optional)");
    }

    int run(Manifest& m) {
        if (policy_path.empty() == !behavior) throw UsageError("give exactly one of --policy or --behavior");
        const auto lc = learn.config();
        m.inputs[data_path] = file_digest(data_path);
        const auto data = read_episodes(data_path);
        double v;
        if (behavior) {
            v = behavior_value(prepare(data, lc.time_base), lc);
        } else {
            m.inputs[policy_path] = file_digest(policy_path);
            v = empirical_value(data, read_policy(policy_path), lc);
        }
        m.config = {{"target", behavior ? "behavior" : "policy"}, {"learn", learn.to_json()}};
        std::cout << "value " << fmt(v) << '\n';
        if (!out.empty()) {
            const auto dir = prepare_out(out);
            json r{{"episodes", data.size()}, {"value", v}};
            m.output(dir, "evaluation.json", r.dump(2) + "\n");
        }
        return kOk;
    }

    bool writes() const { return !out.empty(); }
};

struct Rollout {
    std::string policy_path;
    double rho = -1;
    ScenarioArgs scenario;
    std::size_t episodes = 1000;
    double gamma = 0.999;
    std::uint64_t seed = 0;
    std::string out;

    void add(CLI::App* app) {
        auto* p = app->add_option("--policy", policy_path, "policy JSON");
        auto* r = app->add_option("--rho", rho, "roll out the behavior mixture with this expert percentage");
        p->excludes(r);
        scenario.add(app);
        app->add_option("-N,--episodes", episodes, "episode count")->capture_default_str();
        app->add_option("--gamma", gamma, "discount factor")->capture_default_str();
        app->add_option("--seed", seed, "master seed")->capture_default_str();
        app->add_option("-o,--out", out, "output directory (optional)");
    }

    int run(Manifest& m) {
        if (policy_path.empty() == (rho < 0)) throw UsageError("give exactly one of --policy or --rho");
        const auto sc = scenario.load(m.inputs);
        sar::RolloutStats st;
        if (!policy_path.empty()) {
            m.inputs[policy_path] = file_digest(policy_path);
            st = sar::rollout_evaluate(read_policy(policy_path), sc, episodes, gamma, seed);
        } else {
            MixturePolicy mix{rho_from_percent(rho)};
            st = sar::rollout_with(sc, mix, episodes, gamma, seed);
        }
        const auto d = moments(st.discounted), u = moments(st.undiscounted);
        json r{{"episodes", episodes},
               {"mean_discounted", d.mean},
               {"stddev_discounted", d.stddev()},
               {"mean_undiscounted", u.mean},
               {"stddev_undiscounted", u.stddev()}};
        m.seed = seed;
        m.config = {{"scenario", sar::scenario_to_json(sc)}, {"gamma", gamma}, {"episodes", episodes}};
        if (rho >= 0) m.config["rho"] = rho / 100.0;
        for (const auto& [k, v] : r.items())
            if (k != "episodes") std::cout << k << ' ' << fmt(v.get<double>()) << '\n';
        if (!out.empty()) m.output(prepare_out(out), "rollout.json", r.dump(2) + "\n");
        return kOk;
    }

    bool writes() const { return !out.empty(); }
};

struct Bench {
    std::string sweep;
    bool mini = false;
    std::string scenario_path;
    std::size_t seeds = 10;
    std::uint64_t seed = 0;
    std::optional<double> rho;
    std::optional<std::size_t> episodes, nodes, threads;
    std::vector<double> values;
    std::size_t test_episodes = 2000;
    std::size_t max_outer = 20;
    double epsilon = 0.1;
    LearnArgs learn;
    std::size_t workers = 0;
    std::string out;

    void add(CLI::App* app) {
        app->add_option("--sweep", sweep, "k (training episodes), m (threads) or q (nodes)")
            ->check(CLI::IsMember({"k", "m", "q"}))
            ->required();
        app->add_flag("--mini", mini, "desk-scale scenario");
        app->add_option("--scenario", scenario_path, "scenario JSON");
        app->add_option("--seeds", seeds, "seeds per sweep value")->capture_default_str();
        app->add_option("--seed", seed, "first seed")->capture_default_str();
        app->add_option("--rho", rho, "expert percentage (preset 85)");
        app->add_option("-K,--episodes", episodes, "fixed K for the m and q sweeps");
        app->add_option("-Q,--nodes", nodes, "fixed nodes for the k and m sweeps");
        app->add_option("-M,--threads", threads, "fixed threads for the k and q sweeps");
        app->add_option("--values", values, "override the swept values");
        app->add_option("--test-episodes", test_episodes, "held-out test episodes per seed")->capture_default_str();
        app->add_option("--max-outer", max_outer, "iSEM outer iterations")->capture_default_str();
        app->add_option("--epsilon", epsilon, "iSEM retention threshold")->capture_default_str();
        learn.add(app);
        app->add_option("--workers", workers, "parallel runs (0: ISEM_THREADS or hardware)");
        app->add_option("-o,--out", out, "output directory")->required();
    }

    int run(Manifest& m) {
        if (!scenario_path.empty() && mini) throw UsageError("--scenario and --mini are exclusive");
        if (seeds == 0) throw UsageError("--seeds must be positive");
        BenchSetup base;
        base.scenario = mini ? sar::mini_scenario() : sar::default_scenario();
        if (!scenario_path.empty()) {
            m.inputs[scenario_path] = file_digest(scenario_path);
            base.scenario = sar::read_scenario(scenario_path);
        }
        base.rho = rho_from_percent(rho.value_or(85));
        base.test_episodes = test_episodes;
        base.max_outer = max_outer;
        base.epsilon = epsilon;
        base.learn = learn.config();

        // Presets: K sweep at Q=10, M sweep at Q=10 and K=500, Q sweep at M=8
        // and K=100.
        std::vector<double> preset;
        if (sweep == "k") {
            preset = {50, 100, 200, 500};
            base.nodes = nodes.value_or(10);
            base.threads = threads.value_or(8);
        } else if (sweep == "m") {
            preset = {1, 2, 4, 8};
            base.nodes = nodes.value_or(10);
            base.episodes = episodes.value_or(500);
        } else {
            preset = {1, 3, 10};
            base.threads = threads.value_or(8);
            base.episodes = episodes.value_or(100);
        }
        if (values.empty()) values = preset;
        for (double v : values)
            if (!(v >= 1 && v == std::floor(v))) throw UsageError("--values must be positive integers");

        std::vector<PreparedData> tests(seeds);
        parallel_for(seeds, resolve_workers(workers), [&](std::size_t i) {
            tests[i] = prepare(bench_test_set(base, seed + i), base.learn.time_base);
        });

        struct Job {
            std::size_t value, seed_index;
            BenchOutcome result;
        };
        std::vector<Job> jobs;
        for (std::size_t vi = 0; vi < values.size(); ++vi)
            for (std::size_t i = 0; i < seeds; ++i) jobs.push_back({vi, i, {}});
        parallel_for(jobs.size(), resolve_workers(workers), [&](std::size_t j) {
            BenchSetup s = base;
            const auto v = std::size_t(values[jobs[j].value]);
            if (sweep == "k") s.episodes = v;
            else if (sweep == "m") s.threads = v;
            else s.nodes = v;
            jobs[j].result = run_bench_cell(s, seed + jobs[j].seed_index, tests[jobs[j].seed_index]);
        });

        std::ostringstream csv;
        csv << "sweep_var,sweep_value,algo,seed,value_mean,value_stddev,seed_count\n";
        for (std::size_t vi = 0; vi < values.size(); ++vi) {
            std::vector<double> pv, iv;
            for (const auto& j : jobs) {
                if (j.value != vi) continue;
                const auto sd = std::to_string(seed + j.seed_index);
                const auto v = std::to_string(std::size_t(values[vi]));
                csv << sweep << ',' << v << ",poem," << sd << ',' << fmt(j.result.poem_test) << ",0,1\n";
                csv << sweep << ',' << v << ",isem," << sd << ',' << fmt(j.result.isem_test) << ",0,1\n";
                pv.push_back(j.result.poem_test);
                iv.push_back(j.result.isem_test);
            }
            for (auto [name, xs] : {std::pair{"poem", &pv}, std::pair{"isem", &iv}}) {
                const auto mo = moments(*xs);
                csv << sweep << ',' << std::size_t(values[vi]) << ',' << name << ",all," << fmt(mo.mean) << ','
                    << fmt(mo.stddev()) << ',' << xs->size() << '\n';
            }
        }
        const auto dir = prepare_out(out);
        m.output(dir, "bench.csv", csv.str());
        m.seed = seed;
        m.config = {{"sweep", sweep},
                    {"values", values},
                    {"seeds", seeds},
                    {"scenario", sar::scenario_to_json(base.scenario)},
                    {"rho", base.rho},
                    {"episodes", base.episodes},
                    {"nodes", base.nodes},
                    {"threads", base.threads},
                    {"test_episodes", test_episodes},
                    {"eval_fraction", base.eval_fraction},
                    {"max_outer", max_outer},
                    {"epsilon", epsilon},
                    {"learn", learn.to_json()}};
        std::cout << csv.str();
        return kOk;
    }
};

int classify(const std::exception& e) {
    std::cerr << "isem: " << e.what() << '\n';
    if (dynamic_cast<const UsageError*>(&e)) return kUsage;
    if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
    if (dynamic_cast<const Error*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kData;
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Policy learning for macro-action Dec-POMDPs from batch data"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    GenData gen;
    Train train;
    Evaluate evaluate;
    Rollout rollout;
    Bench bench;
    auto* c_gen = app.add_subcommand("gen-data", "simulate episodes under the expert/random mixture");
    auto* c_train = app.add_subcommand("train", "learn a joint FSC policy with PoEM or iSEM");
    auto* c_eval = app.add_subcommand("evaluate", "importance-sampled value of a policy on episodes");
    auto* c_roll = app.add_subcommand("rollout", "simulate a policy and report return statistics");
    auto* c_bench = app.add_subcommand("bench", "PoEM vs iSEM sweep over K, M or Q");
    gen.add(c_gen);
    train.add(c_train);
    evaluate.add(c_eval);
    rollout.add(c_roll);
    bench.add(c_bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    Manifest m;
    m.argv.assign(argv, argv + argc);
    try {
        int rc = kOk;
        if (c_gen->parsed()) {
            m.command = "gen-data";
            rc = gen.run(m);
            m.write(gen.out);
        } else if (c_train->parsed()) {
            m.command = "train";
            rc = train.run(m);
            m.write(train.out);
        } else if (c_eval->parsed()) {
            m.command = "evaluate";
            rc = evaluate.run(m);
            if (evaluate.writes()) m.write(evaluate.out);
        } else if (c_roll->parsed()) {
            m.command = "rollout";
            rc = rollout.run(m);
            if (rollout.writes()) m.write(rollout.out);
        } else {
            m.command = "bench";
            rc = bench.run(m);
            m.write(bench.out);
        }
        return rc;
    } catch (const std::exception& e) {
        return classify(e);
    }
}
