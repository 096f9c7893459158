#pragma once

// Policy files: one JSON document holding a controller per agent.
//
//   {"format":"isem-fsc-policy","version":1,"agents":[
//     {"spec":{"agent_id":0,"num_actions":7,"num_observations":648,"num_nodes":3,
//              "blocked":[[o,m], ...]},
//      "mu":[...], "lambda0":[[...]], "lambda":[[[...]]], "delta":[[[...]]]}]}
//
// lambda is indexed [node][observation][macro], delta [node][observation][node].
// "blocked" lists the (observation, macro) pairs outside the initiation set.

#include <sstream>
#include <string>

#include "json.hpp"

#include "isem/digest.hpp"
#include "isem/fsc.hpp"

namespace isem {

inline constexpr const char* kPolicyFormat = "isem-fsc-policy";

inline nlohmann::ordered_json policy_to_json(const JointPolicy& theta) {
    using J = nlohmann::ordered_json;
    J doc;
    doc["format"] = kPolicyFormat;
    doc["version"] = 1;
    J agents = J::array();
    for (const auto& p : theta) {
        const auto& s = p.spec();
        J js;
        js["agent_id"] = s.agent_id;
        js["num_actions"] = s.num_actions;
        js["num_observations"] = s.num_observations;
        js["num_nodes"] = s.num_nodes;
        J blocked = J::array();
        for (std::size_t o = 0; o < s.num_observations; ++o)
            for (std::size_t m = 0; m < s.num_actions; ++m)
                if (!s.initiable(o, m)) blocked.push_back(J::array({o, m}));
        js["blocked"] = std::move(blocked);

        J ja;
        ja["spec"] = std::move(js);
        ja["mu"] = p.mu_data();
        J l0 = J::array(), l = J::array(), d = J::array();
        for (std::size_t q = 0; q < p.nodes(); ++q) {
            l0.push_back(std::vector<double>(p.lambda0(q).begin(), p.lambda0(q).end()));
            J lq = J::array(), dq = J::array();
            for (std::size_t o = 0; o < p.observations(); ++o) {
                lq.push_back(std::vector<double>(p.lambda(q, o).begin(), p.lambda(q, o).end()));
                dq.push_back(std::vector<double>(p.delta(q, o).begin(), p.delta(q, o).end()));
            }
            l.push_back(std::move(lq));
            d.push_back(std::move(dq));
        }
        ja["lambda0"] = std::move(l0);
        ja["lambda"] = std::move(l);
        ja["delta"] = std::move(d);
        agents.push_back(std::move(ja));
    }
    doc["agents"] = std::move(agents);
    return doc;
}

inline std::string policy_to_string(const JointPolicy& theta) { return policy_to_json(theta).dump() + "\n"; }

inline void write_policy(const JointPolicy& theta, const std::string& path) {
    write_file(path, policy_to_string(theta));
}

namespace detail {

inline void copy_row(const nlohmann::json& src, std::span<double> dst, const char* what) {
    if (!src.is_array() || src.size() != dst.size())
        throw ValidationError(std::string("policy field '") + what + "' has the wrong shape");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (!src[i].is_number()) throw ValidationError(std::string("policy field '") + what + "' holds a non-number");
        dst[i] = src[i].get<double>();
    }
}

inline const nlohmann::json& member(const nlohmann::json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("policy is missing '") + key + "'");
    return j.at(key);
}

} // namespace detail

/// Parses a policy document. Rows off the simplex by more than 1e-6 are an error.
inline JointPolicy policy_from_json(const nlohmann::json& doc) {
    using detail::member;
    if (member(doc, "format") != kPolicyFormat) throw ValidationError("not an isem policy document");
    JointPolicy out;
    for (const auto& ja : member(doc, "agents")) {
        const auto& js = member(ja, "spec");
        AgentSpec s;
        try {
            s.agent_id = member(js, "agent_id").get<std::size_t>();
            s.num_actions = member(js, "num_actions").get<std::size_t>();
            s.num_observations = member(js, "num_observations").get<std::size_t>();
            s.num_nodes = member(js, "num_nodes").get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("policy spec: ") + e.what());
        }
        if (js.contains("blocked") && !js.at("blocked").empty()) {
            s.blocked.assign(s.num_actions * s.num_observations, 0);
            for (const auto& pair : js.at("blocked")) {
                const auto o = pair.at(0).get<std::size_t>(), m = pair.at(1).get<std::size_t>();
                if (o >= s.num_observations || m >= s.num_actions)
                    throw ValidationError("policy spec: blocked pair out of range");
                s.blocked[o * s.num_actions + m] = 1;
            }
        }
        FscParams p(s);
        detail::copy_row(member(ja, "mu"), p.mu(), "mu");
        const auto& l0 = member(ja, "lambda0");
        const auto& l = member(ja, "lambda");
        const auto& d = member(ja, "delta");
        if (!l0.is_array() || l0.size() != p.nodes() || !l.is_array() || l.size() != p.nodes() || !d.is_array() ||
            d.size() != p.nodes())
            throw ValidationError("policy tensors do not match num_nodes");
        for (std::size_t q = 0; q < p.nodes(); ++q) {
            detail::copy_row(l0[q], p.lambda0(q), "lambda0");
            if (!l[q].is_array() || l[q].size() != p.observations() || !d[q].is_array() ||
                d[q].size() != p.observations())
                throw ValidationError("policy tensors do not match num_observations");
            for (std::size_t o = 0; o < p.observations(); ++o) {
                detail::copy_row(l[q][o], p.lambda(q, o), "lambda");
                detail::copy_row(d[q][o], p.delta(q, o), "delta");
            }
        }
        p.validate(1e-6);
        out.push_back(std::move(p));
    }
    return out;
}

inline JointPolicy read_policy(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(1, e.what());
    }
    return policy_from_json(doc);
}

} // namespace isem
