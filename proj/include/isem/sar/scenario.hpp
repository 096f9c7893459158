#pragma once

// Search-and-rescue scenario description: grid, sites, obstacles, victims,
// agent roster and sensing/communication parameters.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "isem/digest.hpp"
#include "isem/error.hpp"
#include "isem/fsc.hpp"

namespace isem::sar {

struct Cell {
    int x = 0;
    int y = 0;
    bool operator==(const Cell&) const = default;
};

inline int chebyshev(Cell a, Cell b) { return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)); }
inline int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

/// Inclusive rectangle [x0, x1] x [y0, y1].
struct Rect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    bool contains(Cell c) const { return c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1; }
    int area() const { return (x1 - x0 + 1) * (y1 - y0 + 1); }
    bool overlaps(const Rect& o) const { return !(o.x1 < x0 || x1 < o.x0 || o.y1 < y0 || y1 < o.y0); }
    bool operator==(const Rect&) const = default;
};

enum class AgentKind { Ugv, Uav };

inline const char* kind_name(AgentKind k) { return k == AgentKind::Ugv ? "ugv" : "uav"; }

struct ScenarioConfig {
    std::string name = "default";
    int width = 20;
    int height = 10;
    std::vector<Rect> sites; ///< sites[0] is the muster (site id 1)
    std::vector<Cell> obstacles;
    std::size_t victims = 6;
    double health_min = 0.3;
    double health_max = 1.0;
    double degradation_rate = 0.002;
    double critical_threshold = 1.0 / 3.0;
    std::vector<AgentKind> agents; ///< roster in agent-id order
    int ugv_speed = 1;
    int uav_speed = 5;
    int ugv_comm_range = 3;
    int uav_comm_range = 6;
    double obs_noise_prob = 0.05;
    double comm_fail_prob = 0.05;
    std::int64_t max_steps = 600;
    std::int64_t macro_timeout = 60;
    int stuck_limit = 8;

    std::size_t site_count() const { return sites.size(); }
    std::size_t observation_count() const { return 18 * site_count() * site_count(); }
    std::size_t macro_count(AgentKind k) const { return site_count() + (k == AgentKind::Ugv ? 1 : 0); }
    std::size_t pickup_macro() const { return site_count(); }

    bool in_grid(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
    bool is_obstacle(Cell c) const { return std::find(obstacles.begin(), obstacles.end(), c) != obstacles.end(); }

    /// 1-based site id containing c, or 0.
    std::size_t site_of(Cell c) const {
        for (std::size_t i = 0; i < sites.size(); ++i)
            if (sites[i].contains(c)) return i + 1;
        return 0;
    }

    std::vector<Cell> free_cells(std::size_t site_id) const {
        std::vector<Cell> out;
        const auto& r = sites.at(site_id - 1);
        for (int y = r.y0; y <= r.y1; ++y)
            for (int x = r.x0; x <= r.x1; ++x)
                if (!is_obstacle({x, y})) out.push_back({x, y});
        return out;
    }

    void validate() const {
        if (width <= 0 || height <= 0) throw InvalidSpec("grid dimensions must be positive");
        if (sites.size() < 2) throw InvalidSpec("need a muster and at least one victim site");
        for (std::size_t i = 0; i < sites.size(); ++i) {
            const auto& r = sites[i];
            if (r.x0 > r.x1 || r.y0 > r.y1 || !in_grid({r.x0, r.y0}) || !in_grid({r.x1, r.y1}))
                throw InvalidSpec("site " + std::to_string(i + 1) + " is empty or outside the grid");
            for (std::size_t j = 0; j < i; ++j)
                if (r.overlaps(sites[j]))
                    throw InvalidSpec("sites " + std::to_string(j + 1) + " and " + std::to_string(i + 1) + " overlap");
        }
        for (const auto& o : obstacles)
            if (!in_grid(o)) throw InvalidSpec("obstacle outside the grid");
        if (free_cells(1).empty()) throw InvalidSpec("muster has no free cell");
        std::size_t capacity = 0;
        for (std::size_t s = 2; s <= sites.size(); ++s) capacity += free_cells(s).size();
        if (victims > capacity) throw InvalidSpec("victim count exceeds site capacity");
        if (!(health_min > 0.0 && health_min <= health_max && health_max <= 1.0))
            throw InvalidSpec("initial health range must satisfy 0 < min <= max <= 1");
        if (!(degradation_rate >= 0.0)) throw InvalidSpec("degradation rate must be nonnegative");
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!prob(obs_noise_prob) || !prob(comm_fail_prob)) throw InvalidSpec("probabilities must lie in [0, 1]");
        if (agents.empty()) throw InvalidSpec("empty agent roster");
        const auto ugvs = std::count(agents.begin(), agents.end(), AgentKind::Ugv);
        if (std::size_t(ugvs) > free_cells(1).size()) throw InvalidSpec("muster too small for the UGV roster");
        if (ugv_speed < 1 || uav_speed < 1) throw InvalidSpec("speeds must be >= 1");
        if (max_steps < 1 || macro_timeout < 1 || stuck_limit < 1) throw InvalidSpec("step limits must be >= 1");
    }

    /// Controller alphabets for each agent. UGVs cannot start Pick-up while
    /// carrying (self_state = 1).
    std::vector<AgentSpec> agent_specs(std::size_t nodes) const {
        std::vector<AgentSpec> out;
        const std::size_t O = observation_count();
        for (std::size_t a = 0; a < agents.size(); ++a) {
            AgentSpec s;
            s.agent_id = a;
            s.num_actions = macro_count(agents[a]);
            s.num_observations = O;
            s.num_nodes = nodes;
            if (agents[a] == AgentKind::Ugv) {
                s.blocked.assign(O * s.num_actions, 0);
                // self_state is the most significant radix digit.
                for (std::size_t o = O / 2; o < O; ++o) s.blocked[o * s.num_actions + pickup_macro()] = 1;
            }
            out.push_back(std::move(s));
        }
        return out;
    }
};

/// 20 x 10 grid, muster plus five victim sites, scattered single-cell
/// obstacles, one UAV and three UGVs.
inline ScenarioConfig default_scenario() {
    ScenarioConfig c;
    c.sites = {
        {0, 4, 2, 6},    // 1: muster
        {6, 0, 8, 1},    // 2
        {16, 0, 17, 1},  // 3
        {10, 7, 12, 9},  // 4
        {17, 6, 18, 8},  // 5
        {8, 4, 9, 5},    // 6
    };
    c.obstacles = {{4, 5}, {5, 2}, {11, 4}, {13, 1}, {14, 5}, {15, 8}, {5, 8}, {12, 3}};
    c.agents = {AgentKind::Uav, AgentKind::Ugv, AgentKind::Ugv, AgentKind::Ugv};
    return c;
}

/// Desk-scale variant: 10 x 6 grid, three sites, three victims, two UGVs and
/// faster degradation.
inline ScenarioConfig mini_scenario() {
    ScenarioConfig c;
    c.name = "mini";
    c.width = 10;
    c.height = 6;
    c.sites = {
        {0, 2, 1, 3}, // 1: muster
        {7, 0, 9, 1}, // 2
        {6, 4, 8, 5}, // 3
    };
    c.obstacles = {{4, 1}, {4, 4}};
    c.victims = 3;
    c.degradation_rate = 0.01;
    c.agents = {AgentKind::Ugv, AgentKind::Ugv};
    c.max_steps = 200;
    c.macro_timeout = 30;
    return c;
}

inline nlohmann::ordered_json scenario_to_json(const ScenarioConfig& c) {
    using J = nlohmann::ordered_json;
    J j;
    j["name"] = c.name;
    j["width"] = c.width;
    j["height"] = c.height;
    J sites = J::array();
    for (const auto& r : c.sites) sites.push_back({r.x0, r.y0, r.x1, r.y1});
    j["sites"] = std::move(sites);
    J obs = J::array();
    for (const auto& o : c.obstacles) obs.push_back({o.x, o.y});
    j["obstacles"] = std::move(obs);
    j["victims"] = c.victims;
    j["health_min"] = c.health_min;
    j["health_max"] = c.health_max;
    j["degradation_rate"] = c.degradation_rate;
    j["critical_threshold"] = c.critical_threshold;
    J roster = J::array();
    for (auto k : c.agents) roster.push_back(kind_name(k));
    j["agents"] = std::move(roster);
    j["ugv_speed"] = c.ugv_speed;
    j["uav_speed"] = c.uav_speed;
    j["ugv_comm_range"] = c.ugv_comm_range;
    j["uav_comm_range"] = c.uav_comm_range;
    j["obs_noise_prob"] = c.obs_noise_prob;
    j["comm_fail_prob"] = c.comm_fail_prob;
    j["max_steps"] = c.max_steps;
    j["macro_timeout"] = c.macro_timeout;
    j["stuck_limit"] = c.stuck_limit;
    return j;
}

/// Missing keys keep the default-scenario values.
inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    ScenarioConfig c = default_scenario();
    try {
        auto get = [&](const char* key, auto& dst) {
            if (j.contains(key)) dst = j.at(key).get<std::remove_reference_t<decltype(dst)>>();
        };
        get("name", c.name);
        get("width", c.width);
        get("height", c.height);
        if (j.contains("sites")) {
            c.sites.clear();
            for (const auto& r : j.at("sites"))
                c.sites.push_back({r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(), r.at(3).get<int>()});
        }
        if (j.contains("obstacles")) {
            c.obstacles.clear();
            for (const auto& o : j.at("obstacles")) c.obstacles.push_back({o.at(0).get<int>(), o.at(1).get<int>()});
        }
        get("victims", c.victims);
        get("health_min", c.health_min);
        get("health_max", c.health_max);
        get("degradation_rate", c.degradation_rate);
        get("critical_threshold", c.critical_threshold);
        if (j.contains("agents")) {
            c.agents.clear();
            for (const auto& k : j.at("agents")) {
                const auto s = k.get<std::string>();
                if (s == "ugv") c.agents.push_back(AgentKind::Ugv);
                else if (s == "uav") c.agents.push_back(AgentKind::Uav);
                else throw InvalidSpec("unknown agent kind '" + s + "'");
            }
        }
        get("ugv_speed", c.ugv_speed);
        get("uav_speed", c.uav_speed);
        get("ugv_comm_range", c.ugv_comm_range);
        get("uav_comm_range", c.uav_comm_range);
        get("obs_noise_prob", c.obs_noise_prob);
        get("comm_fail_prob", c.comm_fail_prob);
        get("max_steps", c.max_steps);
        get("macro_timeout", c.macro_timeout);
        get("stuck_limit", c.stuck_limit);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpec(std::string("scenario: ") + e.what());
    }
    c.validate();
    return c;
}

inline std::string scenario_to_string(const ScenarioConfig& c) { return scenario_to_json(c).dump(2) + "\n"; }

/// Digest of the canonical serialization.
inline std::string scenario_digest(const ScenarioConfig& c) { return content_digest(scenario_to_json(c).dump()); }

inline ScenarioConfig read_scenario(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(1, e.what());
    }
    return scenario_from_json(j);
}

} // namespace isem::sar
