#pragma once

// World state and primitive dynamics: movement, pick-up and drop-off,
// linear health decay, noisy site sensing and lossy range-limited sharing.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "isem/dataset.hpp"
#include "isem/error.hpp"
#include "isem/rng.hpp"
#include "isem/sar/observation.hpp"
#include "isem/sar/scenario.hpp"

namespace isem::sar {

struct Victim {
    Cell pos;
    double health = 1.0;
    bool alive = true;
    bool carried = false;
    bool rescued = false;

    bool needs_help() const { return alive && !rescued; }
    bool resolved() const { return !alive || rescued; }
};

/// Navigation memory of the active macro.
struct NavState {
    bool following = false;
    int heading = 0;
    int hit_distance = 0;
    int stuck = 0;
    Cell last_pos{-1, -1};
    bool last_was_move = false;
};

struct AgentState {
    AgentKind kind = AgentKind::Ugv;
    Cell pos;
    int carrying = -1;        ///< victim index or -1
    std::size_t last_site = 1; ///< last site the agent stood in
    NavState nav;
};

struct SiteKnowledge {
    int state = 0;
    std::int64_t timestamp = -1;   ///< clock of the underlying observation
    std::int64_t received_at = -1; ///< clock at which this agent learned it
};

struct World {
    std::int64_t clock = 0;
    std::vector<AgentState> agents;
    std::vector<Victim> victims;
    std::vector<std::vector<SiteKnowledge>> knowledge; ///< [agent][site id - 1]

    bool all_resolved() const {
        return std::all_of(victims.begin(), victims.end(), [](const Victim& v) { return v.resolved(); });
    }
    std::size_t rescued() const {
        return std::size_t(std::count_if(victims.begin(), victims.end(), [](const Victim& v) { return v.rescued; }));
    }
    std::size_t dead() const {
        return std::size_t(std::count_if(victims.begin(), victims.end(), [](const Victim& v) { return !v.alive; }));
    }
};

/// Cardinal directions in clockwise order: N(+y), E, S, W.
inline constexpr int kDx[4] = {0, 1, 0, -1};
inline constexpr int kDy[4] = {1, 0, -1, 0};

struct PrimitiveAction {
    enum class Kind { Nothing, Move, Fly, PickUp, DropOff };
    Kind kind = Kind::Nothing;
    int dir = 0;              ///< Move: index into kDx/kDy
    Cell target;              ///< Fly: destination cell
    std::size_t stop_site = 0; ///< Fly: stop on entering this site

    static PrimitiveAction nothing() { return {}; }
    static PrimitiveAction move(int d) { return {Kind::Move, d, {}, 0}; }
    static PrimitiveAction fly(Cell c, std::size_t site) { return {Kind::Fly, 0, c, site}; }
    static PrimitiveAction pick_up() { return {Kind::PickUp, 0, {}, 0}; }
    static PrimitiveAction drop_off() { return {Kind::DropOff, 0, {}, 0}; }
};

/// Uniform weak composition of n items over k bins (stars and bars).
inline std::vector<std::size_t> random_composition(Rng& rng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> slots(n + k - 1);
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    shuffle(rng, slots);
    std::vector<std::size_t> bars(slots.begin(), slots.begin() + std::ptrdiff_t(k - 1));
    std::sort(bars.begin(), bars.end());
    std::vector<std::size_t> out(k);
    std::size_t prev = 0;
    for (std::size_t i = 0; i < k - 1; ++i) {
        out[i] = bars[i] - prev;
        prev = bars[i] + 1;
    }
    out[k - 1] = n + k - 1 - prev;
    return out;
}

/// Fresh episode: victims spread over the victim sites, UGVs on distinct
/// muster cells, UAVs on the first muster cell.
inline World initial_world(const ScenarioConfig& sc, Rng& rng) {
    sc.validate();
    World w;
    const std::size_t s = sc.site_count();
    std::vector<std::size_t> counts;
    for (;;) {
        counts = random_composition(rng, sc.victims, s - 1);
        bool ok = true;
        for (std::size_t i = 0; i < counts.size(); ++i) ok = ok && counts[i] <= sc.free_cells(i + 2).size();
        if (ok) break;
    }
    for (std::size_t i = 0; i < counts.size(); ++i) {
        auto cells = sc.free_cells(i + 2);
        shuffle(rng, cells);
        for (std::size_t v = 0; v < counts[i]; ++v) {
            Victim vic;
            vic.pos = cells[v];
            vic.health = sc.health_min + (sc.health_max - sc.health_min) * uniform01(rng);
            w.victims.push_back(vic);
        }
    }
    const auto muster = sc.free_cells(1);
    std::size_t next_cell = 0;
    for (auto kind : sc.agents) {
        AgentState a;
        a.kind = kind;
        a.pos = kind == AgentKind::Ugv ? muster[next_cell++] : muster[0];
        w.agents.push_back(a);
    }
    w.knowledge.assign(sc.agents.size(), std::vector<SiteKnowledge>(s));
    return w;
}

inline bool ugv_at(const World& w, Cell c, std::size_t except) {
    for (std::size_t i = 0; i < w.agents.size(); ++i)
        if (i != except && w.agents[i].kind == AgentKind::Ugv && w.agents[i].pos == c) return true;
    return false;
}

inline int sgn(int v) { return (v > 0) - (v < 0); }

/// Applies one joint primitive action, decays health, and advances the clock.
/// Reward events carry the new clock value.
inline std::vector<RewardEvent> simulate_primitive_step(const ScenarioConfig& sc, World& w,
                                                        const std::vector<PrimitiveAction>& actions) {
    using K = PrimitiveAction::Kind;
    if (actions.size() != w.agents.size()) throw ContractError("one primitive action per agent required");
    std::vector<double> rewards_now;
    for (std::size_t i = 0; i < w.agents.size(); ++i) {
        auto& ag = w.agents[i];
        const auto& act = actions[i];
        const bool ugv = ag.kind == AgentKind::Ugv;
        switch (act.kind) {
        case K::Nothing:
            break;
        case K::Move: {
            if (!ugv) throw ContractError("UAVs fly; grid moves are UGV-only");
            if (act.dir < 0 || act.dir > 3) throw ContractError("bad move direction");
            for (int k = 0; k < sc.ugv_speed; ++k) {
                const Cell next{ag.pos.x + kDx[act.dir], ag.pos.y + kDy[act.dir]};
                if (!sc.in_grid(next) || sc.is_obstacle(next) || ugv_at(w, next, i)) break;
                ag.pos = next;
            }
            break;
        }
        case K::Fly: {
            if (ugv) throw ContractError("only UAVs fly");
            for (int k = 0; k < sc.uav_speed && !(ag.pos == act.target); ++k) {
                ag.pos = {ag.pos.x + sgn(act.target.x - ag.pos.x), ag.pos.y + sgn(act.target.y - ag.pos.y)};
                if (act.stop_site != 0 && sc.site_of(ag.pos) == act.stop_site) break;
            }
            break;
        }
        case K::PickUp: {
            if (!ugv) throw ContractError("pick-up is UGV-only");
            if (ag.carrying >= 0) break;
            for (std::size_t v = 0; v < w.victims.size(); ++v) {
                auto& vic = w.victims[v];
                if (vic.needs_help() && !vic.carried && vic.pos == ag.pos) {
                    vic.carried = true;
                    ag.carrying = int(v);
                    break;
                }
            }
            break;
        }
        case K::DropOff: {
            if (!ugv) throw ContractError("drop-off is UGV-only");
            if (ag.carrying < 0) break;
            auto& vic = w.victims[std::size_t(ag.carrying)];
            vic.carried = false;
            vic.pos = ag.pos;
            ag.carrying = -1;
            if (sc.site_of(ag.pos) == 1) {
                vic.rescued = true;
                vic.health = 1.0;
                rewards_now.push_back(1.0);
            }
            break;
        }
        }
        if (ag.carrying >= 0) w.victims[std::size_t(ag.carrying)].pos = ag.pos;
        if (const auto site = sc.site_of(ag.pos)) ag.last_site = site;
    }

    for (std::size_t v = 0; v < w.victims.size(); ++v) {
        auto& vic = w.victims[v];
        if (!vic.needs_help()) continue;
        vic.health -= sc.degradation_rate;
        if (vic.health <= 1e-12) {
            vic.health = 0.0;
            vic.alive = false;
            rewards_now.push_back(-1.0);
            if (vic.carried) {
                vic.carried = false;
                for (auto& ag : w.agents)
                    if (ag.carrying == int(v)) ag.carrying = -1;
            }
        }
    }
    ++w.clock;
    std::vector<RewardEvent> out;
    for (double r : rewards_now) out.push_back({w.clock, r});
    return out;
}

/// Ground-truth site report for a sensor class: UGVs distinguish
/// none / non-critical / critical, UAVs only presence.
inline int true_site_state(const ScenarioConfig& sc, const World& w, std::size_t site, AgentKind kind) {
    bool any = false, critical = false;
    for (const auto& v : w.victims) {
        if (!v.needs_help() || v.carried || sc.site_of(v.pos) != site) continue;
        any = true;
        critical = critical || v.health < sc.critical_threshold;
    }
    if (!any) return 0;
    if (kind == AgentKind::Uav) return 1;
    return critical ? 2 : 1;
}

/// Replaces `value` by a uniformly chosen different legal value with
/// probability p. Legal values are 0..levels-1.
inline int corrupt(Rng& rng, int value, int levels, double p) {
    if (!bernoulli(rng, p)) return value;
    const int shift = 1 + int(uniform_index(rng, std::uint64_t(levels - 1)));
    return (value + shift) % levels;
}

/// Every agent standing in a site senses it; then in-range agents exchange
/// their pre-exchange knowledge, each direction failing independently.
inline void observe_and_communicate(const ScenarioConfig& sc, World& w, Rng& rng) {
    const std::int64_t now = w.clock;
    for (std::size_t i = 0; i < w.agents.size(); ++i) {
        const auto& ag = w.agents[i];
        const auto site = sc.site_of(ag.pos);
        if (site == 0) continue;
        const int levels = ag.kind == AgentKind::Ugv ? 3 : 2;
        const int seen = corrupt(rng, true_site_state(sc, w, site, ag.kind), levels, sc.obs_noise_prob);
        w.knowledge[i][site - 1] = {seen, now, now};
    }
    const auto snapshot = w.knowledge;
    auto send = [&](std::size_t from, std::size_t to) {
        if (bernoulli(rng, sc.comm_fail_prob)) return;
        for (std::size_t s = 0; s < snapshot[from].size(); ++s) {
            const auto& src = snapshot[from][s];
            auto& dst = w.knowledge[to][s];
            if (src.timestamp > dst.timestamp) dst = {src.state, src.timestamp, now};
        }
    };
    for (std::size_t i = 0; i < w.agents.size(); ++i)
        for (std::size_t j = i + 1; j < w.agents.size(); ++j) {
            const bool both_ugv = w.agents[i].kind == AgentKind::Ugv && w.agents[j].kind == AgentKind::Ugv;
            const int range = both_ugv ? sc.ugv_comm_range : sc.uav_comm_range;
            if (chebyshev(w.agents[i].pos, w.agents[j].pos) > range) continue;
            send(i, j);
            send(j, i);
        }
}

inline std::size_t current_site(const ScenarioConfig& sc, const AgentState& ag) {
    const auto s = sc.site_of(ag.pos);
    return s != 0 ? s : ag.last_site;
}

/// Observation at a decision point. The second location is the most urgent
/// site learned about since the previous decision (newest, then lowest id on
/// ties), or a copy of the self fields when nothing new arrived.
inline ObservationVector build_observation(const ScenarioConfig& sc, const World& w, std::size_t agent,
                                           std::int64_t last_decision_clock) {
    const auto& ag = w.agents[agent];
    const auto& know = w.knowledge[agent];
    ObservationVector v;
    v.self_state = ag.carrying >= 0 ? 1 : 0;
    v.self_location = current_site(sc, ag);
    v.location_state = std::size_t(know[v.self_location - 1].state);
    v.second_location = v.self_location;
    v.second_state = v.location_state;
    int best_state = -1;
    std::int64_t best_ts = 0;
    for (std::size_t s = 1; s <= sc.site_count(); ++s) {
        if (s == v.self_location) continue;
        const auto& k = know[s - 1];
        if (k.received_at <= last_decision_clock) continue;
        if (k.state > best_state || (k.state == best_state && k.timestamp > best_ts)) {
            best_state = k.state;
            best_ts = k.timestamp;
            v.second_location = s;
            v.second_state = std::size_t(k.state);
        }
    }
    return v;
}

} // namespace isem::sar
