#pragma once

// Behavior policies for data collection: a hand-coded expert, its mixture
// with uniform random choice, and batch dataset generation.

#include <cstddef>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "isem/dataset.hpp"
#include "isem/error.hpp"
#include "isem/parallel.hpp"
#include "isem/rng.hpp"
#include "isem/sar/episode.hpp"

namespace isem {

struct BehaviorConfig {
    double rho = 0.85; ///< expert share in [0, 1)
    std::size_t episodes = 100;
    std::uint64_t master_seed = 0;
    std::size_t workers = 1; ///< 0 reads ISEM_THREADS

    void validate() const {
        if (!(rho >= 0.0 && rho < 1.0)) throw DomainError("rho must lie in [0, 1)");
    }
};

/// Expert macro from the agent's own knowledge. UGV: carry to muster, pick up
/// at a site believed to hold victims, else head for the most urgent other
/// site (then the stalest, then lowest id). UAV: unvisited-then-stalest site.
inline std::size_t expert_action(const sar::ScenarioConfig& sc, const sar::World& w, std::size_t agent) {
    const auto& ag = w.agents[agent];
    const auto& know = w.knowledge[agent];
    const std::size_t here = sar::current_site(sc, ag);
    if (ag.kind == sar::AgentKind::Ugv) {
        if (ag.carrying >= 0) return 0;
        if (here != 1 && sc.site_of(ag.pos) == here && know[here - 1].state >= 1) return sc.pickup_macro();
    }
    std::size_t best = 0;
    for (std::size_t s = 2; s <= sc.site_count(); ++s) {
        if (s == here) continue;
        if (best == 0) {
            best = s;
            continue;
        }
        const auto& k = know[s - 1];
        const auto& b = know[best - 1];
        const bool better = ag.kind == sar::AgentKind::Ugv
                                ? (k.state > b.state || (k.state == b.state && k.timestamp < b.timestamp))
                                : k.timestamp < b.timestamp;
        if (better) best = s;
    }
    if (best == 0) best = 1;
    return best - 1;
}

/// Expert macro with probability rho, else uniform over the initiable set.
/// Returns the macro and its exact mixture probability.
inline sar::Decision mixture_decision(std::size_t expert, const std::vector<std::size_t>& initiable, double rho,
                                      Rng& rng) {
    if (initiable.empty()) throw ContractError("empty initiation set");
    if (!(rho >= 0.0 && rho < 1.0)) throw DomainError("rho must lie in [0, 1)");
    const double uniform = (1.0 - rho) / double(initiable.size());
    const bool expert_ok = std::find(initiable.begin(), initiable.end(), expert) != initiable.end();
    std::size_t m;
    if (expert_ok && bernoulli(rng, rho)) m = expert;
    else m = initiable[uniform_index(rng, initiable.size())];
    // A non-initiable expert choice leaves its share on the uniform part.
    const double p = expert_ok ? (m == expert ? rho : 0.0) + uniform : 1.0 / double(initiable.size());
    return {m, p};
}

struct MixturePolicy {
    double rho = 0.85;
    void begin_episode() {}
    sar::Decision decide(const sar::DecisionContext& ctx, Rng& rng) const {
        return mixture_decision(expert_action(ctx.scenario, ctx.world, ctx.agent), ctx.initiable, rho, rng);
    }
};

/// Ground-truth scripted policy: UGVs fetch the nearest waiting victim and
/// return it; the UAV parks. Used to probe the reachable return ceiling.
struct OmniscientGreedyPolicy {
    void begin_episode() {}
    sar::Decision decide(const sar::DecisionContext& ctx, Rng&) const {
        const auto& sc = ctx.scenario;
        const auto& w = ctx.world;
        const auto& ag = w.agents[ctx.agent];
        if (ag.kind == sar::AgentKind::Uav) return {0, 1.0};
        if (ag.carrying >= 0) return {0, 1.0};
        const std::size_t here = sc.site_of(ag.pos);
        if (here > 1 && sar::pickup_target(sc, w, here) >= 0) return {sc.pickup_macro(), 1.0};
        std::size_t best = 0;
        int best_d = std::numeric_limits<int>::max();
        for (const auto& v : w.victims) {
            if (!v.needs_help() || v.carried) continue;
            const int d = sar::manhattan(ag.pos, v.pos);
            if (d < best_d) {
                best_d = d;
                best = sc.site_of(v.pos);
            }
        }
        return {best == 0 ? 0 : best - 1, 1.0};
    }
};

/// K episodes under the rho-mixture; episode k uses streams
/// (master_seed, k, 0) for the world and (master_seed, k, 1) for choices.
inline Dataset generate_dataset(const sar::ScenarioConfig& sc, const BehaviorConfig& cfg, double gamma = 0.999) {
    cfg.validate();
    sc.validate();
    const auto digest = sar::scenario_digest(sc);
    Dataset out(cfg.episodes);
    parallel_for(cfg.episodes, resolve_workers(cfg.workers), [&](std::size_t k) {
        MixturePolicy policy{cfg.rho};
        Rng wr = make_stream({cfg.master_seed, k, 0}), pr = make_stream({cfg.master_seed, k, 1});
        out[k] = sar::run_episode(sc, policy, wr, pr, gamma, k, digest).log;
    });
    return out;
}

} // namespace isem
