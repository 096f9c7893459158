#pragma once

// Batch episode data and the importance-weighted empirical value.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "isem/error.hpp"
#include "isem/fsc.hpp"
#include "isem/rng.hpp"

namespace isem {

/// Observation index logged for an agent's first decision, which is taken
/// before any observation arrives.
inline constexpr std::int64_t kNoObservation = -1;

struct AgentDecision {
    std::int64_t start_step = 0;
    std::int64_t obs = kNoObservation;
    std::size_t action = 0;
    double behavior_prob = 1.0;

    bool operator==(const AgentDecision&) const = default;
};

struct AgentTrajectory {
    std::size_t agent_id = 0;
    std::vector<AgentDecision> decisions;

    bool operator==(const AgentTrajectory&) const = default;
};

struct RewardEvent {
    std::int64_t step = 0;
    double value = 0.0;

    bool operator==(const RewardEvent&) const = default;
};

struct Episode {
    std::uint64_t episode_id = 0;
    std::string scenario_digest;
    std::int64_t length_steps = 0;
    std::vector<AgentTrajectory> agents;
    std::vector<RewardEvent> rewards;

    bool operator==(const Episode&) const = default;
};

using Dataset = std::vector<Episode>;

/// Throws ValidationError on any broken episode invariant.
inline void validate_episode(const Episode& ep) {
    const std::string where = "episode " + std::to_string(ep.episode_id) + ": ";
    if (ep.agents.empty()) throw ValidationError(where + "no agents");
    for (const auto& a : ep.agents) {
        if (a.decisions.empty()) throw ValidationError(where + "agent " + std::to_string(a.agent_id) + " has no decisions");
        if (a.decisions.front().start_step != 0)
            throw ValidationError(where + "first decision of agent " + std::to_string(a.agent_id) + " must start at step 0");
        for (std::size_t i = 0; i < a.decisions.size(); ++i) {
            const auto& d = a.decisions[i];
            if (!(d.behavior_prob > 0.0) || d.behavior_prob > 1.0)
                throw ValidationError(where + "behavior probability must lie in (0, 1]");
            if (i == 0 && d.obs != kNoObservation)
                throw ValidationError(where + "first decision must carry the no-observation sentinel");
            if (i > 0 && d.obs < 0) throw ValidationError(where + "missing observation on a later decision");
            if (i > 0 && d.start_step < a.decisions[i - 1].start_step)
                throw ValidationError(where + "decision start steps must be nondecreasing");
        }
    }
    for (std::size_t i = 0; i < ep.rewards.size(); ++i) {
        const auto& r = ep.rewards[i];
        if (r.value != 1.0 && r.value != -1.0) throw ValidationError(where + "reward values must be +1 or -1");
        if (i > 0 && r.step < ep.rewards[i - 1].step) throw ValidationError(where + "reward events must be sorted");
        if (r.step < 0) throw ValidationError(where + "negative reward step");
    }
}

enum class TimeBase {
    Primitive, ///< discount by simulator steps
    Epoch,     ///< discount by joint decision epochs
};

struct LearnConfig {
    double gamma = 0.999;
    TimeBase time_base = TimeBase::Primitive;
    /// Explicit r_min; when unset it is min(0, smallest reward in the data).
    std::optional<double> r_min;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in [0, 1)");
    }
};

// ---------------------------------------------------------------------------
// Prepared (index-resolved) form used by the estimator and the trainer.
// ---------------------------------------------------------------------------

struct PreparedAgent {
    std::size_t agent_id = 0;
    std::vector<std::size_t> actions;       ///< m_0..m_T
    std::vector<std::size_t> observations;  ///< o_1..o_T
    std::vector<std::int64_t> start_steps;
    std::vector<double> log_behavior;       ///< prefix sums of log behavior probabilities
};

struct PreparedEvent {
    double reward = 0.0;
    std::int64_t step = 0;
    double discount_exponent = 0.0;
    /// Per agent (episode order): index of the last decision started at or
    /// before the event.
    std::vector<std::size_t> last_decision;
};

struct PreparedEpisode {
    std::vector<PreparedAgent> agents;
    std::vector<PreparedEvent> events;
};

struct PreparedData {
    std::vector<PreparedEpisode> episodes;
    double min_reward = 0.0; ///< min(0, smallest logged reward)

    std::size_t size() const { return episodes.size(); }
};

inline PreparedData prepare(const Dataset& data, TimeBase time_base = TimeBase::Primitive) {
    PreparedData out;
    out.episodes.reserve(data.size());
    for (const auto& ep : data) {
        validate_episode(ep);
        PreparedEpisode pe;
        std::vector<std::int64_t> epochs;
        for (const auto& a : ep.agents) {
            PreparedAgent pa;
            pa.agent_id = a.agent_id;
            double acc = 0.0;
            for (std::size_t i = 0; i < a.decisions.size(); ++i) {
                const auto& d = a.decisions[i];
                pa.actions.push_back(d.action);
                if (i > 0) pa.observations.push_back(static_cast<std::size_t>(d.obs));
                pa.start_steps.push_back(d.start_step);
                acc += std::log(d.behavior_prob);
                pa.log_behavior.push_back(acc);
                epochs.push_back(d.start_step);
            }
            pe.agents.push_back(std::move(pa));
        }
        std::sort(epochs.begin(), epochs.end());
        epochs.erase(std::unique(epochs.begin(), epochs.end()), epochs.end());

        for (const auto& r : ep.rewards) {
            PreparedEvent ev;
            ev.reward = r.value;
            ev.step = r.step;
            if (time_base == TimeBase::Primitive) {
                ev.discount_exponent = double(r.step);
            } else {
                const auto n = std::upper_bound(epochs.begin(), epochs.end(), r.step) - epochs.begin();
                ev.discount_exponent = double(std::max<std::ptrdiff_t>(n - 1, 0));
            }
            for (const auto& pa : pe.agents) {
                const auto it = std::upper_bound(pa.start_steps.begin(), pa.start_steps.end(), r.step);
                ev.last_decision.push_back(static_cast<std::size_t>(it - pa.start_steps.begin()) - 1);
            }
            out.min_reward = std::min(out.min_reward, r.value);
            pe.events.push_back(std::move(ev));
        }
        out.episodes.push_back(std::move(pe));
    }
    return out;
}

/// Finds the controller for each agent of an episode; throws MismatchError
/// when an agent has none or the alphabets cannot hold its data.
inline std::vector<const FscParams*> resolve_policies(const PreparedEpisode& ep, const JointPolicy& theta,
                                                      std::size_t episode_index = 0) {
    std::vector<const FscParams*> out;
    out.reserve(ep.agents.size());
    for (const auto& a : ep.agents) {
        const FscParams* found = nullptr;
        for (const auto& p : theta)
            if (p.spec().agent_id == a.agent_id) found = &p;
        if (!found)
            throw MismatchError("episode " + std::to_string(episode_index) + ": agent " + std::to_string(a.agent_id) +
                                " has no controller");
        for (auto m : a.actions)
            if (m >= found->actions())
                throw MismatchError("agent " + std::to_string(a.agent_id) + ": logged macro outside controller alphabet");
        for (auto o : a.observations)
            if (o >= found->observations())
                throw MismatchError("agent " + std::to_string(a.agent_id) +
                                    ": logged observation outside controller alphabet");
        out.push_back(found);
    }
    return out;
}

/// Pairwise (tree) summation; the reduction order depends only on the size.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

/// Empirical value with caller-supplied per-agent log prefix likelihoods of
/// the target policy: `target(k, a)` returns log p(m_{0:t} | o_{1:t}) for
/// every t of agent a in episode k.
template <typename TargetLogPrefix>
double empirical_value_with(const PreparedData& data, const LearnConfig& cfg, TargetLogPrefix&& target) {
    cfg.validate();
    if (data.episodes.empty()) return 0.0;
    const double log_gamma = cfg.gamma > 0.0 ? std::log(cfg.gamma) : -INFINITY;
    std::vector<double> per_episode(data.episodes.size(), 0.0);
    for (std::size_t k = 0; k < data.episodes.size(); ++k) {
        const auto& ep = data.episodes[k];
        if (ep.events.empty()) continue;
        std::vector<std::vector<double>> log_target(ep.agents.size());
        for (std::size_t a = 0; a < ep.agents.size(); ++a) log_target[a] = target(k, a);
        double v = 0.0;
        for (const auto& ev : ep.events) {
            double log_w = ev.discount_exponent == 0.0 ? 0.0 : ev.discount_exponent * log_gamma;
            for (std::size_t a = 0; a < ep.agents.size(); ++a) {
                const std::size_t j = ev.last_decision[a];
                log_w += log_target[a][j] - ep.agents[a].log_behavior[j];
            }
            v += ev.reward * std::exp(log_w);
        }
        per_episode[k] = v;
    }
    return pairwise_sum(per_episode) / double(data.episodes.size());
}

/// Off-policy estimate of the value of `theta` from behavior data.
inline double empirical_value(const PreparedData& data, const JointPolicy& theta, const LearnConfig& cfg) {
    std::size_t cached_k = data.size();
    std::vector<const FscParams*> policies;
    return empirical_value_with(data, cfg, [&](std::size_t k, std::size_t a) {
        const auto& ep = data.episodes[k];
        if (k != cached_k) {
            policies = resolve_policies(ep, theta, k);
            cached_k = k;
        }
        const auto& ag = ep.agents[a];
        return sequence_likelihood(*policies[a], ag.actions, ag.observations).log_values;
    });
}

inline double empirical_value(const Dataset& data, const JointPolicy& theta, const LearnConfig& cfg) {
    return empirical_value(prepare(data, cfg.time_base), theta, cfg);
}

/// The estimator with the behavior policy itself as target: every ratio is
/// one and the result is the mean discounted return of the data.
inline double behavior_value(const PreparedData& data, const LearnConfig& cfg) {
    return empirical_value_with(data, cfg, [&](std::size_t k, std::size_t a) {
        return data.episodes[k].agents[a].log_behavior;
    });
}

struct DatasetSplit {
    Dataset train;
    Dataset eval;
};

/// Random partition with |eval| = round-half-up(eval_fraction * |D|), clamped
/// so that both parts are nonempty. Episodes keep their relative order.
inline DatasetSplit split_dataset(const Dataset& data, double eval_fraction, Rng& rng) {
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw DomainError("eval fraction must lie in (0, 1)");
    if (data.size() < 2) throw InsufficientData("need at least two episodes to split");
    const std::size_t n = data.size();
    auto n_eval = static_cast<std::size_t>(std::floor(eval_fraction * double(n) + 0.5));
    n_eval = std::clamp<std::size_t>(n_eval, 1, n - 1);

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(rng, idx);
    std::vector<bool> is_eval(n, false);
    for (std::size_t i = 0; i < n_eval; ++i) is_eval[idx[i]] = true;

    DatasetSplit out;
    for (std::size_t i = 0; i < n; ++i) (is_eval[i] ? out.eval : out.train).push_back(data[i]);
    return out;
}

} // namespace isem
