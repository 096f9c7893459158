#pragma once

// One benchmark cell: generate matched train/eval/test data for a seed, train
// PoEM from the thread-0 initial controller and iSEM around it, and score both
// on the held-out test set.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "isem/behavior.hpp"
#include "isem/dataset.hpp"
#include "isem/isem.hpp"
#include "isem/poem.hpp"
#include "isem/sar/scenario.hpp"

namespace isem {

/// Salt separating test-set streams from training streams of the same seed.
inline constexpr std::uint64_t kTestSalt = 999;

struct BenchSetup {
    sar::ScenarioConfig scenario = sar::mini_scenario();
    std::size_t episodes = 200; ///< K, split into train and eval
    std::size_t nodes = 3;
    std::size_t threads = 8;
    double rho = 0.75;
    double eval_fraction = 0.25;
    std::size_t test_episodes = 2000;
    std::size_t max_outer = 20;
    double epsilon = 0.1;
    PoemOptions poem;
    LearnConfig learn;
};

struct BenchOutcome {
    double poem_eval = 0.0;
    double poem_test = 0.0;
    double isem_eval = 0.0;
    double isem_test = 0.0;
    std::size_t outer_iterations = 0;
    std::vector<double> isem_trace; ///< best eval value per outer iteration
    JointPolicy poem_theta;
    JointPolicy isem_theta;
};

inline Dataset bench_test_set(const BenchSetup& s, std::uint64_t seed) {
    BehaviorConfig cfg{s.rho, s.test_episodes, derive_seed({seed, kTestSalt})};
    return generate_dataset(s.scenario, cfg, s.learn.gamma);
}

inline BenchOutcome run_bench_cell(const BenchSetup& s, std::uint64_t seed, const PreparedData& test) {
    BehaviorConfig bc{s.rho, s.episodes, seed};
    const Dataset data = generate_dataset(s.scenario, bc, s.learn.gamma);
    Rng split_rng = make_stream({seed, 0, 2});
    const auto split = split_dataset(data, s.eval_fraction, split_rng);
    const auto specs = s.scenario.agent_specs(s.nodes);

    BenchOutcome out;
    auto poem = poem_train(thread_initial_policy(specs, seed, 0, 1), split.train, s.learn, s.poem);
    out.poem_eval = empirical_value(split.eval, poem.theta, s.learn);
    out.poem_test = empirical_value(test, poem.theta, s.learn);
    out.poem_theta = std::move(poem.theta);

    IsemConfig ic;
    ic.threads = s.threads;
    ic.max_outer = s.max_outer;
    ic.epsilon = s.epsilon;
    ic.master_seed = seed;
    ic.poem = s.poem;
    ic.learn = s.learn;
    ic.workers = 1;
    auto isem = isem_train(specs, split.train, split.eval, ic);
    out.isem_eval = isem.state.best_value;
    out.isem_test = empirical_value(test, isem.theta, s.learn);
    out.outer_iterations = isem.state.outer_iterations;
    out.isem_trace = std::move(isem.state.best_value_trace);
    out.isem_theta = std::move(isem.theta);
    return out;
}

struct Moments {
    double mean = 0.0;
    double variance = 0.0; ///< unbiased; 0 for fewer than two samples
    double stddev() const { return std::sqrt(variance); }
};

inline Moments moments(const std::vector<double>& xs) {
    Moments m;
    if (xs.empty()) return m;
    m.mean = pairwise_sum(xs) / double(xs.size());
    if (xs.size() < 2) return m;
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.variance = ss / double(xs.size() - 1);
    return m;
}

} // namespace isem
