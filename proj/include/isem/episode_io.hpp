#pragma once

// Line-delimited episode files: one JSON object per line, UTF-8.
//
//   {"episode_id":0,"scenario_digest":"...","length_steps":312,
//    "agents":[{"agent_id":0,"decisions":[{"t":0,"obs":-1,"ma":3,"p_behavior":0.8714285714285714}, ...]}],
//    "rewards":[{"t":57,"r":1}, ...]}
//
// The first decision of every agent carries obs = -1.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "isem/dataset.hpp"
#include "isem/digest.hpp"

namespace isem {

inline nlohmann::ordered_json episode_to_json(const Episode& ep) {
    nlohmann::ordered_json j;
    j["episode_id"] = ep.episode_id;
    j["scenario_digest"] = ep.scenario_digest;
    j["length_steps"] = ep.length_steps;
    auto agents = nlohmann::ordered_json::array();
    for (const auto& a : ep.agents) {
        nlohmann::ordered_json ja;
        ja["agent_id"] = a.agent_id;
        auto ds = nlohmann::ordered_json::array();
        for (const auto& d : a.decisions) {
            nlohmann::ordered_json jd;
            jd["t"] = d.start_step;
            jd["obs"] = d.obs;
            jd["ma"] = d.action;
            jd["p_behavior"] = d.behavior_prob;
            ds.push_back(std::move(jd));
        }
        ja["decisions"] = std::move(ds);
        agents.push_back(std::move(ja));
    }
    j["agents"] = std::move(agents);
    auto rewards = nlohmann::ordered_json::array();
    for (const auto& r : ep.rewards) {
        nlohmann::ordered_json jr;
        jr["t"] = r.step;
        jr["r"] = static_cast<int>(r.value);
        rewards.push_back(std::move(jr));
    }
    j["rewards"] = std::move(rewards);
    return j;
}

namespace detail {

template <typename T>
T field(const nlohmann::json& j, const char* key, std::size_t line) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(line, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(line, std::string("field '") + key + "': " + e.what());
    }
}

} // namespace detail

inline Episode episode_from_json(const nlohmann::json& j, std::size_t line) {
    using detail::field;
    Episode ep;
    ep.episode_id = field<std::uint64_t>(j, "episode_id", line);
    ep.scenario_digest = field<std::string>(j, "scenario_digest", line);
    ep.length_steps = field<std::int64_t>(j, "length_steps", line);
    const auto agents = field<nlohmann::json>(j, "agents", line);
    if (!agents.is_array()) throw ParseError(line, "'agents' must be an array");
    for (const auto& ja : agents) {
        AgentTrajectory a;
        a.agent_id = field<std::size_t>(ja, "agent_id", line);
        const auto ds = field<nlohmann::json>(ja, "decisions", line);
        if (!ds.is_array()) throw ParseError(line, "'decisions' must be an array");
        for (const auto& jd : ds) {
            AgentDecision d;
            d.start_step = field<std::int64_t>(jd, "t", line);
            d.obs = field<std::int64_t>(jd, "obs", line);
            d.action = field<std::size_t>(jd, "ma", line);
            d.behavior_prob = field<double>(jd, "p_behavior", line);
            a.decisions.push_back(d);
        }
        ep.agents.push_back(std::move(a));
    }
    const auto rs = field<nlohmann::json>(j, "rewards", line);
    if (!rs.is_array()) throw ParseError(line, "'rewards' must be an array");
    for (const auto& jr : rs) ep.rewards.push_back({field<std::int64_t>(jr, "t", line), field<double>(jr, "r", line)});
    return ep;
}

inline void write_episodes(const Dataset& data, std::ostream& out) {
    for (const auto& ep : data) out << episode_to_json(ep).dump() << '\n';
}

inline std::string episodes_to_string(const Dataset& data) {
    std::ostringstream os;
    write_episodes(data, os);
    return os.str();
}

inline void write_episodes(const Dataset& data, const std::string& path) { write_file(path, episodes_to_string(data)); }

/// Parses and validates every line; blank lines are skipped.
inline Dataset read_episodes(std::istream& in) {
    Dataset out;
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(in, text)) {
        ++line_no;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, e.what());
        }
        Episode ep = episode_from_json(j, line_no);
        try {
            validate_episode(ep);
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(std::move(ep));
    }
    return out;
}

inline Dataset read_episodes(const std::string& path) {
    std::istringstream in(read_file(path));
    return read_episodes(in);
}

} // namespace isem
