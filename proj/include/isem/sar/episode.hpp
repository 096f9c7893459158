#pragma once

// Episode runner: agents choose macros at their own decision points through a
// caller-supplied policy; the runner logs decisions and rewards in the
// dataset format.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "isem/dataset.hpp"
#include "isem/error.hpp"
#include "isem/fsc.hpp"
#include "isem/rng.hpp"
#include "isem/sar/macros.hpp"
#include "isem/sar/observation.hpp"
#include "isem/sar/scenario.hpp"
#include "isem/sar/world.hpp"

namespace isem::sar {

struct DecisionContext {
    const ScenarioConfig& scenario;
    const World& world;
    std::size_t agent;
    bool first; ///< no observation yet
    ObservationVector obs;
    std::size_t obs_code;
    std::vector<std::size_t> initiable;
};

struct Decision {
    std::size_t macro = 0;
    double probability = 1.0;
};

template <typename P>
concept MacroPolicy = requires(P p, const DecisionContext& ctx, Rng& rng) {
    { p.begin_episode() };
    { p.decide(ctx, rng) } -> std::convertible_to<Decision>;
};

struct EpisodeResult {
    Episode log;
    double discounted_return = 0.0;
    double undiscounted_return = 0.0;
    std::size_t rescued = 0;
    std::size_t dead = 0;
};

/// Runs one episode. `world_rng` drives victims, sensing noise, link failures
/// and navigation perturbations; `policy_rng` drives the policy only.
template <MacroPolicy P>
EpisodeResult run_episode(const ScenarioConfig& sc, P& policy, Rng& world_rng, Rng& policy_rng, double gamma,
                          std::uint64_t episode_id = 0, const std::string& digest = "") {
    World w = initial_world(sc, world_rng);
    const std::size_t n = w.agents.size();
    std::vector<MacroState> macros(n);
    std::vector<std::int64_t> last_decision(n, -1);
    EpisodeResult res;
    res.log.episode_id = episode_id;
    res.log.scenario_digest = digest;
    for (std::size_t a = 0; a < n; ++a) res.log.agents.push_back({a, {}});
    policy.begin_episode();

    auto decide = [&](std::size_t a) {
        const bool first = last_decision[a] < 0;
        DecisionContext ctx{sc, w, a, first, {}, 0, initiable_macros(sc, w.agents[a])};
        if (!first) {
            ctx.obs = build_observation(sc, w, a, last_decision[a]);
            ctx.obs_code = encode_observation(ctx.obs, sc.site_count());
        }
        const Decision d = policy.decide(ctx, policy_rng);
        if (std::find(ctx.initiable.begin(), ctx.initiable.end(), d.macro) == ctx.initiable.end())
            throw ContractError("policy chose a macro outside the initiation set");
        res.log.agents[a].decisions.push_back(
            {w.clock, first ? kNoObservation : std::int64_t(ctx.obs_code), d.macro, d.probability});
        last_decision[a] = w.clock;
        macros[a] = start_macro(sc, w, a, d.macro);
    };

    std::vector<PrimitiveAction> actions(n);
    while (w.clock < sc.max_steps && !w.all_resolved()) {
        for (std::size_t a = 0; a < n; ++a) {
            actions[a] = PrimitiveAction::nothing();
            bool decided_now = false;
            if (!macros[a].active) {
                decide(a);
                decided_now = true;
            }
            auto step = run_macro_decision(sc, w, a, macros[a], world_rng);
            if (step.terminated && !decided_now) {
                decide(a);
                step = run_macro_decision(sc, w, a, macros[a], world_rng);
            }
            actions[a] = step.action;
        }
        for (const auto& ev : simulate_primitive_step(sc, w, actions)) res.log.rewards.push_back(ev);
        observe_and_communicate(sc, w, world_rng);
    }
    res.log.length_steps = w.clock;
    for (const auto& ev : res.log.rewards) {
        res.undiscounted_return += ev.value;
        res.discounted_return += ev.value * std::pow(gamma, double(ev.step));
    }
    res.rescued = w.rescued();
    res.dead = w.dead();
    return res;
}

/// Joint FSC policy driving one controller per agent.
class FscPolicy {
public:
    FscPolicy(const ScenarioConfig& sc, const JointPolicy& theta) : theta_(&theta) {
        if (theta.size() != sc.agents.size()) throw ContractError("policy has one controller per agent");
        const auto specs = sc.agent_specs(1);
        for (std::size_t a = 0; a < theta.size(); ++a) {
            const auto& s = theta[a].spec();
            if (s.num_actions != specs[a].num_actions || s.num_observations != specs[a].num_observations ||
                s.blocked != specs[a].blocked || s.agent_id != a)
                throw ContractError("controller alphabet does not match the scenario for agent " + std::to_string(a));
        }
        state_.resize(theta.size());
    }

    void begin_episode() { std::fill(state_.begin(), state_.end(), FscRuntimeState{}); }

    Decision decide(const DecisionContext& ctx, Rng& rng) {
        auto step = fsc_step((*theta_)[ctx.agent], state_[ctx.agent], ctx.obs_code, rng);
        state_[ctx.agent] = step.state;
        return {step.action, step.probability};
    }

private:
    const JointPolicy* theta_;
    std::vector<FscRuntimeState> state_;
};

/// Uniform over initiable macros.
struct RandomPolicy {
    void begin_episode() {}
    Decision decide(const DecisionContext& ctx, Rng& rng) {
        const auto i = uniform_index(rng, ctx.initiable.size());
        return {ctx.initiable[i], 1.0 / double(ctx.initiable.size())};
    }
};

struct RolloutStats {
    double mean_discounted = 0.0;
    double mean_undiscounted = 0.0;
    std::vector<double> discounted;
    std::vector<double> undiscounted;
};

/// Episode e uses streams (seed, e, 0) for the world and (seed, e, 1) for the
/// policy.
template <MacroPolicy P>
RolloutStats rollout_with(const ScenarioConfig& sc, P& policy, std::size_t episodes, double gamma, std::uint64_t seed) {
    RolloutStats st;
    for (std::size_t e = 0; e < episodes; ++e) {
        Rng wr = make_stream({seed, e, 0}), pr = make_stream({seed, e, 1});
        const auto r = run_episode(sc, policy, wr, pr, gamma, e);
        st.discounted.push_back(r.discounted_return);
        st.undiscounted.push_back(r.undiscounted_return);
    }
    if (episodes > 0) {
        st.mean_discounted = pairwise_sum(st.discounted) / double(episodes);
        st.mean_undiscounted = pairwise_sum(st.undiscounted) / double(episodes);
    }
    return st;
}

inline RolloutStats rollout_evaluate(const JointPolicy& theta, const ScenarioConfig& sc, std::size_t episodes,
                                     double gamma, std::uint64_t seed) {
    FscPolicy policy(sc, theta);
    return rollout_with(sc, policy, episodes, gamma, seed);
}

} // namespace isem::sar
