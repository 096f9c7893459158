#pragma once

// Macro-action controllers. Macro ids 0..s-1 are Go-to-Site(id + 1); id s is
// Pick-up (UGVs only). Go-to-Site(muster) also drops a carried victim.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "isem/error.hpp"
#include "isem/rng.hpp"
#include "isem/sar/scenario.hpp"
#include "isem/sar/world.hpp"

namespace isem::sar {

struct MacroState {
    bool active = false;
    std::size_t macro = 0;
    std::size_t site = 0;          ///< Pick-up: site whose victims are served
    std::int64_t started_at = 0;
    std::int64_t steps = 0;
};

inline bool is_pickup(const ScenarioConfig& sc, std::size_t macro) { return macro == sc.pickup_macro(); }

/// Macros an agent may start given its carried state.
inline std::vector<std::size_t> initiable_macros(const ScenarioConfig& sc, const AgentState& ag) {
    std::vector<std::size_t> out;
    for (std::size_t m = 0; m < sc.macro_count(ag.kind); ++m)
        if (!(is_pickup(sc, m) && ag.carrying >= 0)) out.push_back(m);
    return out;
}

/// Closest cell of a site under the agent's motion metric, then by Manhattan
/// distance, then lowest (y, x).
inline Cell nearest_site_cell(const ScenarioConfig& sc, std::size_t site, const AgentState& ag) {
    const auto cells = sc.free_cells(site);
    Cell best = cells.front();
    int best_d = std::numeric_limits<int>::max(), best_m = best_d;
    for (const auto& c : cells) {
        const int m = manhattan(ag.pos, c);
        const int d = ag.kind == AgentKind::Ugv ? m : chebyshev(ag.pos, c);
        if (d < best_d || (d == best_d && m < best_m)) {
            best_d = d;
            best_m = m;
            best = c;
        }
    }
    return best;
}

/// Victim a Pick-up macro serves at `site`: lowest health, then lowest id.
inline int pickup_target(const ScenarioConfig& sc, const World& w, std::size_t site) {
    int best = -1;
    for (std::size_t v = 0; v < w.victims.size(); ++v) {
        const auto& vic = w.victims[v];
        if (!vic.needs_help() || vic.carried || sc.site_of(vic.pos) != site) continue;
        if (best < 0 || vic.health < w.victims[std::size_t(best)].health) best = int(v);
    }
    return best;
}

namespace detail {

inline bool passable(const ScenarioConfig& sc, Cell c) { return sc.in_grid(c) && !sc.is_obstacle(c); }

inline Cell step_cell(Cell c, int d) { return {c.x + kDx[d], c.y + kDy[d]}; }

inline int dir_of(int dx, int dy) {
    if (dy > 0) return 0;
    if (dx > 0) return 1;
    if (dy < 0) return 2;
    return 3;
}

} // namespace detail

/// One UGV grid step toward `target`: greedy descent on Manhattan distance,
/// right-hand wall following around obstacles, and a random step after
/// `stuck_limit` steps without progress.
inline PrimitiveAction ugv_navigate(const ScenarioConfig& sc, AgentState& ag, Cell target, Rng& rng) {
    using detail::passable;
    using detail::step_cell;
    auto& nav = ag.nav;
    if (nav.last_was_move && ag.pos == nav.last_pos) ++nav.stuck;
    else nav.stuck = 0;
    nav.last_pos = ag.pos;
    nav.last_was_move = false;

    const int dist = manhattan(ag.pos, target);
    if (dist == 0) return PrimitiveAction::nothing();

    auto issue = [&](int d) {
        nav.last_was_move = true;
        return PrimitiveAction::move(d);
    };

    if (nav.stuck >= sc.stuck_limit) {
        nav.stuck = 0;
        nav.following = false;
        return issue(int(uniform_index(rng, 4)));
    }

    const int dx = target.x - ag.pos.x, dy = target.y - ag.pos.y;
    int desired[2];
    int n_desired = 0;
    if (std::abs(dx) >= std::abs(dy)) {
        desired[n_desired++] = detail::dir_of(dx, 0);
        if (dy != 0) desired[n_desired++] = detail::dir_of(0, dy);
    } else {
        desired[n_desired++] = detail::dir_of(0, dy);
        if (dx != 0) desired[n_desired++] = detail::dir_of(dx, 0);
    }

    if (!nav.following || dist < nav.hit_distance) {
        for (int i = 0; i < n_desired; ++i)
            if (passable(sc, step_cell(ag.pos, desired[i]))) {
                nav.following = false;
                return issue(desired[i]);
            }
        if (!nav.following) {
            nav.following = true;
            nav.hit_distance = dist;
            nav.heading = (desired[0] + 3) % 4;
        }
    }
    for (int turn : {1, 0, 3, 2}) {
        const int d = (nav.heading + turn) % 4;
        if (passable(sc, step_cell(ag.pos, d))) {
            nav.heading = d;
            return issue(d);
        }
    }
    return PrimitiveAction::nothing();
}

/// Termination predicate of the active macro.
inline bool macro_terminated(const ScenarioConfig& sc, const World& w, std::size_t agent, const MacroState& ms) {
    if (ms.steps >= sc.macro_timeout) return true;
    const auto& ag = w.agents[agent];
    if (is_pickup(sc, ms.macro)) return ag.carrying >= 0 || pickup_target(sc, w, ms.site) < 0;
    const std::size_t site = ms.macro + 1;
    return sc.site_of(ag.pos) == site && !(site == 1 && ag.carrying >= 0);
}

/// Starts macro `macro` for an agent at a decision point.
inline MacroState start_macro(const ScenarioConfig& sc, World& w, std::size_t agent, std::size_t macro) {
    auto& ag = w.agents[agent];
    if (macro >= sc.macro_count(ag.kind)) throw ContractError("macro id outside the agent's alphabet");
    if (is_pickup(sc, macro) && ag.carrying >= 0) throw ContractError("pick-up is not initiable while carrying");
    ag.nav = NavState{};
    MacroState ms;
    ms.active = true;
    ms.macro = macro;
    ms.site = current_site(sc, ag);
    ms.started_at = w.clock;
    return ms;
}

struct MacroStep {
    PrimitiveAction action;
    bool terminated = false;
};

/// Primitive action of the active macro for this step, or termination (with
/// a do-nothing action) if its predicate already holds.
inline MacroStep run_macro_decision(const ScenarioConfig& sc, World& w, std::size_t agent, MacroState& ms,
                                    Rng& rng) {
    if (!ms.active) throw ContractError("no active macro");
    if (macro_terminated(sc, w, agent, ms)) {
        ms.active = false;
        return {PrimitiveAction::nothing(), true};
    }
    auto& ag = w.agents[agent];
    ++ms.steps;
    if (is_pickup(sc, ms.macro)) {
        const auto& vic = w.victims[std::size_t(pickup_target(sc, w, ms.site))];
        if (vic.pos == ag.pos) return {PrimitiveAction::pick_up(), false};
        return {ugv_navigate(sc, ag, vic.pos, rng), false};
    }
    const std::size_t site = ms.macro + 1;
    if (site == 1 && ag.carrying >= 0 && sc.site_of(ag.pos) == 1) return {PrimitiveAction::drop_off(), false};
    const Cell target = nearest_site_cell(sc, site, ag);
    if (ag.kind == AgentKind::Uav) return {PrimitiveAction::fly(target, site), false};
    return {ugv_navigate(sc, ag, target, rng), false};
}

} // namespace isem::sar
