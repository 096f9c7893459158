#pragma once

// Random-restart EM: M independent PoEM runs per outer iteration. Threads whose
// held-out value is within epsilon of the best are retained; the rest are
// re-initialized from fresh flat-Dirichlet draws. Theta* is the best controller
// seen in any outer iteration.

#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "isem/dataset.hpp"
#include "isem/error.hpp"
#include "isem/fsc.hpp"
#include "isem/parallel.hpp"
#include "isem/poem.hpp"
#include "isem/rng.hpp"

namespace isem {

struct IsemConfig {
    std::size_t threads = 8;   ///< M
    std::size_t max_outer = 20; ///< T_max
    double epsilon = 0.1;
    bool relative_epsilon = false; ///< retain when best - v < epsilon * |best|
    std::uint64_t master_seed = 0;
    PoemOptions poem;
    LearnConfig learn;
    /// Worker count for the restart pool; 0 reads ISEM_THREADS, falling back
    /// to the hardware concurrency.
    std::size_t workers = 0;

    void validate() const {
        if (threads == 0) throw DomainError("iSEM needs at least one thread");
        if (max_outer == 0) throw DomainError("iSEM needs at least one outer iteration");
        if (!(epsilon >= 0.0)) throw DomainError("epsilon must be nonnegative");
        learn.validate();
    }
};

struct ThreadRecord {
    std::size_t iteration = 0; ///< 1-based outer iteration
    std::size_t thread = 0;
    double eval_value = 0.0;
    bool retained = false;
    double best_value = 0.0;
};

struct IsemState {
    std::vector<std::size_t> retained;  ///< J after the last outer iteration
    std::vector<std::size_t> resampled; ///< I after the last outer iteration
    std::vector<JointPolicy> thread_policies;
    std::vector<double> thread_values;
    std::vector<TrainStats> thread_stats;
    JointPolicy best;
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<double> best_value_trace; ///< one entry per outer iteration
    std::vector<ThreadRecord> records;
    std::size_t outer_iterations = 0;
};

struct IsemResult {
    JointPolicy theta;
    IsemState state;
};

/// The Dirichlet initial controller of thread i at outer iteration t (1-based).
inline JointPolicy thread_initial_policy(const std::vector<AgentSpec>& specs, std::uint64_t master_seed,
                                         std::size_t thread, std::size_t iteration) {
    Rng rng = make_stream({master_seed, thread, iteration});
    JointPolicy out;
    out.reserve(specs.size());
    for (const auto& s : specs) out.push_back(init_dirichlet(s, rng));
    return out;
}

inline IsemResult isem_train(const std::vector<AgentSpec>& specs, const Dataset& train, const Dataset& eval,
                             const IsemConfig& cfg) {
    cfg.validate();
    if (train.empty() || eval.empty()) throw InsufficientData("iSEM needs nonempty training and evaluation sets");
    const PreparedData ptrain = prepare(train, cfg.learn.time_base);
    const PreparedData peval = prepare(eval, cfg.learn.time_base);
    const std::size_t M = cfg.threads;
    const std::size_t workers = resolve_workers(cfg.workers);

    IsemResult res;
    IsemState& st = res.state;
    st.thread_policies.resize(M);
    st.thread_values.assign(M, -std::numeric_limits<double>::infinity());
    st.thread_stats.resize(M);
    std::vector<bool> in_j(M, false);

    for (std::size_t iter = 1; iter <= cfg.max_outer; ++iter) {
        std::vector<std::size_t> todo;
        for (std::size_t i = 0; i < M; ++i)
            if (!in_j[i]) todo.push_back(i);
        if (todo.empty()) break;

        parallel_for(todo.size(), workers, [&](std::size_t slot) {
            const std::size_t i = todo[slot];
            try {
                auto init = thread_initial_policy(specs, cfg.master_seed, i, iter);
                auto run = poem_train(init, ptrain, cfg.learn, cfg.poem);
                st.thread_values[i] = empirical_value(peval, run.theta, cfg.learn);
                st.thread_policies[i] = std::move(run.theta);
                st.thread_stats[i] = std::move(run.stats);
            } catch (const Error& e) {
                throw Error("thread " + std::to_string(i) + " (seed " + std::to_string(cfg.master_seed) +
                            ", iteration " + std::to_string(iter) + "): " + e.what());
            }
        });

        std::size_t arg = 0;
        for (std::size_t i = 1; i < M; ++i)
            if (st.thread_values[i] > st.thread_values[arg]) arg = i;
        if (st.best.empty() || st.thread_values[arg] > st.best_value) {
            st.best = st.thread_policies[arg];
            st.best_value = st.thread_values[arg];
        }
        const double tol = cfg.relative_epsilon ? cfg.epsilon * std::abs(st.best_value) : cfg.epsilon;
        st.retained.clear();
        st.resampled.clear();
        for (std::size_t i = 0; i < M; ++i) {
            in_j[i] = st.best_value - st.thread_values[i] < tol;
            (in_j[i] ? st.retained : st.resampled).push_back(i);
        }
        st.best_value_trace.push_back(st.best_value);
        for (std::size_t i = 0; i < M; ++i)
            st.records.push_back({iter, i, st.thread_values[i], static_cast<bool>(in_j[i]), st.best_value});
        st.outer_iterations = iter;
    }
    res.theta = st.best;
    return res;
}

/// CSV: iteration,thread,eval_value,retained_flag,best_value.
inline void write_isem_csv(const IsemState& st, std::ostream& out) {
    out << "iteration,thread,eval_value,retained_flag,best_value\n";
    char a[64], b[64];
    for (const auto& r : st.records) {
        std::snprintf(a, sizeof a, "%.17g", r.eval_value);
        std::snprintf(b, sizeof b, "%.17g", r.best_value);
        out << r.iteration << ',' << r.thread << ',' << a << ',' << (r.retained ? 1 : 0) << ',' << b << '\n';
    }
}

} // namespace isem
