#pragma once

// Policy-based EM for macro-action controllers learned from batch data.
//
// Each reward event e of episode k contributes a reweighted reward
//
//   r~_e = gamma^tau_e (r_e - r_min) / prod_n prod_{d <= j_n(e)} p_behavior(d)
//
// where j_n(e) is the last decision of agent n started at or before the event,
// and a weight sigma_e = r~_e * prod_n p(m_{n,0:j} | o_{n,1:j}, Theta~). The
// E-step computes, per (episode, agent), the posterior over controller nodes
// for every event prefix; the M-step renormalizes the sigma-weighted expected
// counts. Sum_e sigma_e / K is the objective the iterations increase, and the
// lower bound reported at Theta = Theta~ equals K ln(sum_e sigma_e / K).
//
// Per-event prefix posteriors are folded into one backward sweep per
// (episode, agent):  B_t(u) = W_t + sum_v delta(u,o_{t+1},v) lambda(v,o_{t+1},m_{t+1}) B_{t+1}(v) / c_{t+1},
// with W_t the normalized sigma of events whose prefix ends at decision t.
// Then alpha_t(u) B_t(u) is the sigma-mass times the mixture node marginal.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "isem/dataset.hpp"
#include "isem/error.hpp"
#include "isem/fsc.hpp"

namespace isem {

/// Node posteriors for one (episode, agent) pair.
struct AgentPosterior {
    std::size_t nodes = 0;
    std::vector<double> alpha;    ///< (T+1) x Q scaled forward messages
    std::vector<double> log_norm; ///< T+1 forward normalizers (log)
    std::vector<double> backward; ///< (T+1) x Q sigma-weighted backward messages B
    std::vector<double> mass;     ///< T+1: normalized sigma of events whose prefix reaches t
    std::vector<double> phi;      ///< (T+1) x Q node marginals, each row sums to 1

    std::size_t length() const { return log_norm.size(); }
    std::span<const double> alpha_row(std::size_t t) const { return {alpha.data() + t * nodes, nodes}; }
    std::span<const double> backward_row(std::size_t t) const { return {backward.data() + t * nodes, nodes}; }
    std::span<const double> phi_row(std::size_t t) const { return {phi.data() + t * nodes, nodes}; }
};

struct EventWeight {
    double log_reweighted_reward = -INFINITY; ///< log r~ (-inf when r == r_min)
    double log_sigma = -INFINITY;
    double weight = 0.0; ///< sigma / sum of all sigma
};

struct EStepBuffers {
    std::vector<std::vector<AgentPosterior>> posteriors; ///< [episode][agent]
    std::vector<std::vector<EventWeight>> events;        ///< [episode][event]
    double log_total_sigma = -INFINITY;
    double r_min = 0.0;
    std::size_t episode_count = 0;

    bool zero_mass() const { return !std::isfinite(log_total_sigma); }
};

struct EStepResult {
    EStepBuffers buffers;
    double lower_bound = 0.0;
};

namespace detail {

inline double log_sum_exp(std::span<const double> xs) {
    double mx = -INFINITY;
    for (double x : xs) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    std::vector<double> terms(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) terms[i] = std::exp(xs[i] - mx);
    return mx + std::log(pairwise_sum(terms));
}

inline double resolve_r_min(const PreparedData& data, const LearnConfig& cfg) {
    const double r_min = cfg.r_min.value_or(data.min_reward);
    if (r_min > data.min_reward) throw ValidationError("r_min exceeds a logged reward");
    return r_min;
}

} // namespace detail

/// Lower bound at Theta = Theta~: K ln(sum sigma / K), or 0 when every sigma
/// vanishes.
inline double lower_bound_at_estimate(const EStepBuffers& buf) {
    if (buf.zero_mass()) return 0.0;
    const double K = double(buf.episode_count);
    return K * (buf.log_total_sigma - std::log(K));
}

inline EStepResult e_step(const JointPolicy& theta, const PreparedData& data, const LearnConfig& cfg) {
    cfg.validate();
    const double r_min = detail::resolve_r_min(data, cfg);
    const double log_gamma = cfg.gamma > 0.0 ? std::log(cfg.gamma) : -INFINITY;

    EStepResult res;
    EStepBuffers& buf = res.buffers;
    buf.r_min = r_min;
    buf.episode_count = data.size();
    buf.posteriors.resize(data.size());
    buf.events.resize(data.size());

    // Forward pass and event weights.
    std::vector<double> all_log_sigma;
    for (std::size_t k = 0; k < data.size(); ++k) {
        const auto& ep = data.episodes[k];
        const auto policies = resolve_policies(ep, theta, k);
        auto& posts = buf.posteriors[k];
        posts.resize(ep.agents.size());
        std::vector<PrefixLikelihood> prefix(ep.agents.size());
        for (std::size_t a = 0; a < ep.agents.size(); ++a) {
            const auto& ag = ep.agents[a];
            auto fm = forward_messages(*policies[a], ag.actions, ag.observations);
            for (std::size_t t = 0; t < fm.log_norm.size(); ++t)
                if (!std::isfinite(fm.log_norm[t]))
                    throw NumericError(k, a, t, "logged macro has zero probability under the current controller");
            prefix[a] = prefix_likelihood(fm);
            auto& post = posts[a];
            post.nodes = fm.nodes;
            post.alpha = std::move(fm.alpha);
            post.log_norm = std::move(fm.log_norm);
        }
        auto& evs = buf.events[k];
        evs.resize(ep.events.size());
        for (std::size_t e = 0; e < ep.events.size(); ++e) {
            const auto& ev = ep.events[e];
            const double shifted = ev.reward - r_min;
            if (!(shifted > 0.0)) continue;
            double log_rr = std::log(shifted) + (ev.discount_exponent == 0.0 ? 0.0 : ev.discount_exponent * log_gamma);
            double log_sigma = log_rr;
            for (std::size_t a = 0; a < ep.agents.size(); ++a) {
                const std::size_t j = ev.last_decision[a];
                log_rr -= ep.agents[a].log_behavior[j];
                log_sigma += prefix[a].log_value(j) - ep.agents[a].log_behavior[j];
            }
            if (std::isnan(log_sigma) || log_sigma == INFINITY)
                throw NumericError(k, 0, static_cast<std::size_t>(ev.step), "non-finite event weight");
            evs[e].log_reweighted_reward = log_rr;
            evs[e].log_sigma = log_sigma;
            all_log_sigma.push_back(log_sigma);
        }
    }
    buf.log_total_sigma = detail::log_sum_exp(all_log_sigma);
    res.lower_bound = lower_bound_at_estimate(buf);

    // Weighted backward sweep per (episode, agent).
    for (std::size_t k = 0; k < data.size(); ++k) {
        const auto& ep = data.episodes[k];
        const auto policies = resolve_policies(ep, theta, k);
        auto& evs = buf.events[k];
        for (auto& ew : evs)
            ew.weight = buf.zero_mass() || !std::isfinite(ew.log_sigma) ? 0.0 : std::exp(ew.log_sigma - buf.log_total_sigma);

        for (std::size_t a = 0; a < ep.agents.size(); ++a) {
            const auto& ag = ep.agents[a];
            const auto& p = *policies[a];
            auto& post = buf.posteriors[k][a];
            const std::size_t Q = post.nodes;
            const std::size_t len = post.length();

            std::vector<double> w(len, 0.0);
            for (std::size_t e = 0; e < evs.size(); ++e) w[ep.events[e].last_decision[a]] += evs[e].weight;

            post.backward.assign(len * Q, 0.0);
            post.mass.assign(len, 0.0);
            post.phi.assign(len * Q, 0.0);
            std::vector<double> emit(Q);
            for (std::size_t t = len; t-- > 0;) {
                double* B = post.backward.data() + t * Q;
                for (std::size_t u = 0; u < Q; ++u) B[u] = w[t];
                if (t + 1 < len) {
                    const std::size_t o = ag.observations[t];
                    const std::size_t m = ag.actions[t + 1];
                    const double c = std::exp(post.log_norm[t + 1]);
                    const double* Bn = post.backward.data() + (t + 1) * Q;
                    for (std::size_t v = 0; v < Q; ++v) emit[v] = p.output_prob(v, o, m) * Bn[v] / c;
                    for (std::size_t u = 0; u < Q; ++u) {
                        const auto d = p.delta(u, o);
                        double acc = 0.0;
                        for (std::size_t v = 0; v < Q; ++v) acc += d[v] * emit[v];
                        B[u] += acc;
                    }
                }
                const double* al = post.alpha.data() + t * Q;
                double* ph = post.phi.data() + t * Q;
                double s = 0.0;
                for (std::size_t u = 0; u < Q; ++u) {
                    ph[u] = al[u] * B[u];
                    if (!std::isfinite(ph[u])) throw NumericError(k, a, t, "non-finite node posterior");
                    s += ph[u];
                }
                post.mass[t] = s;
                if (s > 0.0) {
                    for (std::size_t u = 0; u < Q; ++u) ph[u] /= s;
                } else {
                    // No weighted prefix reaches t: report the filtering marginal.
                    for (std::size_t u = 0; u < Q; ++u) ph[u] = al[u];
                }
            }
        }
    }
    return res;
}

inline EStepResult e_step(const JointPolicy& theta, const Dataset& data, const LearnConfig& cfg) {
    return e_step(theta, prepare(data, cfg.time_base), cfg);
}

/// Pairwise node posterior p(q_{t-1} = u, q_t = v | ...) for decision t >= 1,
/// mixed over event prefixes with the same weights as phi. Q x Q, row-major in u.
inline std::vector<double> pairwise_posterior(const EStepBuffers& buf, const JointPolicy& theta_tilde,
                                              const PreparedData& data, std::size_t k, std::size_t a, std::size_t t) {
    const auto& ep = data.episodes.at(k);
    const auto& post = buf.posteriors.at(k).at(a);
    if (t == 0 || t >= post.length()) throw DomainError("pairwise posterior needs 1 <= t <= T");
    const auto& p = *resolve_policies(ep, theta_tilde, k)[a];
    const auto& ag = ep.agents[a];
    const std::size_t Q = post.nodes;
    const std::size_t o = ag.observations[t - 1];
    const std::size_t m = ag.actions[t];
    const double c = std::exp(post.log_norm[t]);
    const bool weighted = post.mass[t] > 0.0;
    std::vector<double> xi(Q * Q, 0.0);
    double s = 0.0;
    for (std::size_t u = 0; u < Q; ++u) {
        const auto d = p.delta(u, o);
        for (std::size_t v = 0; v < Q; ++v) {
            const double tail = weighted ? post.backward[t * Q + v] : 1.0;
            xi[u * Q + v] = post.alpha[(t - 1) * Q + u] * d[v] * p.output_prob(v, o, m) * tail / c;
            s += xi[u * Q + v];
        }
    }
    if (s > 0.0)
        for (double& x : xi) x /= s;
    return xi;
}

/// Sigma-weighted expected counts, shaped like the controller parameters.
struct ExpectedCounts {
    std::vector<double> mu;
    std::vector<double> lambda0;
    std::vector<double> lambda;
    std::vector<double> delta;
};

inline std::vector<ExpectedCounts> expected_counts(const EStepBuffers& buf, const JointPolicy& theta_tilde,
                                                   const PreparedData& data) {
    if (buf.posteriors.size() != data.size()) throw ContractError("E-step buffers were built on different data");
    std::vector<ExpectedCounts> counts(theta_tilde.size());
    for (std::size_t i = 0; i < theta_tilde.size(); ++i) {
        const auto& p = theta_tilde[i];
        counts[i].mu.assign(p.mu_data().size(), 0.0);
        counts[i].lambda0.assign(p.lambda0_data().size(), 0.0);
        counts[i].lambda.assign(p.lambda_data().size(), 0.0);
        counts[i].delta.assign(p.delta_data().size(), 0.0);
    }
    if (buf.zero_mass()) return counts;

    for (std::size_t k = 0; k < data.size(); ++k) {
        const auto& ep = data.episodes[k];
        const auto policies = resolve_policies(ep, theta_tilde, k);
        if (buf.posteriors[k].size() != ep.agents.size())
            throw ContractError("E-step buffers were built on different data");
        for (std::size_t a = 0; a < ep.agents.size(); ++a) {
            const auto& p = *policies[a];
            const auto idx = static_cast<std::size_t>(policies[a] - theta_tilde.data());
            auto& cnt = counts[idx];
            const auto& post = buf.posteriors[k][a];
            const auto& ag = ep.agents[a];
            const std::size_t Q = p.nodes(), O = p.observations(), M = p.actions();
            if (post.nodes != Q || post.length() != ag.actions.size())
                throw ContractError("controller shape does not match the E-step buffers");

            for (std::size_t u = 0; u < Q; ++u) {
                const double g = post.alpha[u] * post.backward[u];
                cnt.mu[u] += g;
                cnt.lambda0[u * M + ag.actions[0]] += g;
            }
            for (std::size_t t = 1; t < post.length(); ++t) {
                if (post.mass[t] == 0.0) continue;
                const std::size_t o = ag.observations[t - 1];
                const std::size_t m = ag.actions[t];
                const double c = std::exp(post.log_norm[t]);
                for (std::size_t v = 0; v < Q; ++v) {
                    const double g = post.alpha[t * Q + v] * post.backward[t * Q + v];
                    cnt.lambda[(v * O + o) * M + m] += g;
                }
                for (std::size_t u = 0; u < Q; ++u) {
                    const double au = post.alpha[(t - 1) * Q + u];
                    if (au == 0.0) continue;
                    const auto d = p.delta(u, o);
                    for (std::size_t v = 0; v < Q; ++v)
                        cnt.delta[(u * O + o) * Q + v] +=
                            au * d[v] * p.output_prob(v, o, m) * post.backward[t * Q + v] / c;
                }
            }
        }
    }
    return counts;
}

/// lb(Theta | Theta~) for any Theta with the same shapes as Theta~, from the
/// buffers of an E-step at Theta~.
inline double lower_bound(const JointPolicy& theta, const EStepBuffers& buf, const JointPolicy& theta_tilde,
                          const PreparedData& data) {
    if (theta.size() != theta_tilde.size()) throw ContractError("policy shapes differ");
    const double base = lower_bound_at_estimate(buf);
    if (buf.zero_mass()) return base;
    const auto counts = expected_counts(buf, theta_tilde, data);
    double delta_sum = 0.0;
    auto add = [&](const std::vector<double>& c, auto&& log_new, auto&& log_old) {
        for (std::size_t i = 0; i < c.size(); ++i)
            if (c[i] != 0.0) delta_sum += c[i] * (log_new(i) - log_old(i));
    };
    for (std::size_t n = 0; n < theta.size(); ++n) {
        const auto& pn = theta[n];
        const auto& po = theta_tilde[n];
        if (!(pn.spec() == po.spec())) throw ContractError("policy shapes differ");
        const std::size_t O = pn.observations(), M = pn.actions();
        add(counts[n].mu, [&](std::size_t i) { return std::log(pn.mu_data()[i]); },
            [&](std::size_t i) { return std::log(po.mu_data()[i]); });
        add(counts[n].lambda0, [&](std::size_t i) { return std::log(pn.lambda0_data()[i]); },
            [&](std::size_t i) { return std::log(po.lambda0_data()[i]); });
        add(counts[n].delta, [&](std::size_t i) { return std::log(pn.delta_data()[i]); },
            [&](std::size_t i) { return std::log(po.delta_data()[i]); });
        auto out_log = [&](const FscParams& p, std::size_t i) {
            const std::size_t m = i % M, o = (i / M) % O, q = i / (M * O);
            return std::log(p.output_prob(q, o, m));
        };
        add(counts[n].lambda, [&](std::size_t i) { return out_log(pn, i); },
            [&](std::size_t i) { return out_log(po, i); });
    }
    return base + double(buf.episode_count) * delta_sum;
}

/// Probability floor added to every entry of a re-estimated row (relative to
/// the normalized row), keeping learned controllers strictly positive.
inline constexpr double kProbabilityFloor = 1e-12;

namespace detail {

inline void reestimate_row(std::span<const double> counts, std::span<const double> old_row, std::span<double> out) {
    double s = 0.0;
    for (double c : counts) s += c;
    if (!(s > 0.0)) {
        std::copy(old_row.begin(), old_row.end(), out.begin());
        return;
    }
    const double z = 1.0 + kProbabilityFloor * double(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = (counts[i] / s + kProbabilityFloor) / z;
}

} // namespace detail

/// Closed-form maximizer of the lower bound: normalized expected counts.
/// Rows that receive no mass are copied from Theta~.
inline JointPolicy m_step(const EStepBuffers& buf, const JointPolicy& theta_tilde, const PreparedData& data) {
    const auto counts = expected_counts(buf, theta_tilde, data);
    JointPolicy out = theta_tilde;
    for (std::size_t n = 0; n < out.size(); ++n) {
        auto& p = out[n];
        const auto& old = theta_tilde[n];
        const std::size_t Q = p.nodes(), O = p.observations(), M = p.actions();
        const auto& c = counts[n];
        detail::reestimate_row(c.mu, old.mu(), p.mu());
        for (std::size_t q = 0; q < Q; ++q) {
            detail::reestimate_row({c.lambda0.data() + q * M, M}, old.lambda0(q), p.lambda0(q));
            for (std::size_t o = 0; o < O; ++o) {
                detail::reestimate_row({c.lambda.data() + (q * O + o) * M, M}, old.lambda(q, o), p.lambda(q, o));
                detail::reestimate_row({c.delta.data() + (q * O + o) * Q, Q}, old.delta(q, o), p.delta(q, o));
            }
        }
    }
    return out;
}

struct PoemOptions {
    double tolerance = 1e-3; ///< relative lower-bound improvement that counts as converged
    std::size_t max_inner = 200;
};

struct TrainStats {
    std::vector<double> lower_bound_trace;
    std::size_t iterations_run = 0;
    bool converged = false;
    double r_min_used = 0.0;
};

struct PoemResult {
    JointPolicy theta;
    TrainStats stats;
};

/// Alternates E- and M-steps until the relative lower-bound improvement drops
/// below the tolerance or the iteration cap is hit.
inline PoemResult poem_train(const JointPolicy& theta_init, const PreparedData& data, const LearnConfig& cfg,
                             const PoemOptions& opt = {}) {
    if (data.size() == 0) throw InsufficientData("PoEM needs at least one training episode");
    cfg.validate();
    PoemResult res{theta_init, {}};
    res.stats.r_min_used = detail::resolve_r_min(data, cfg);
    for (std::size_t it = 0; it < opt.max_inner; ++it) {
        auto es = e_step(res.theta, data, cfg);
        auto& trace = res.stats.lower_bound_trace;
        trace.push_back(es.lower_bound);
        res.stats.iterations_run = trace.size();
        if (es.buffers.zero_mass()) {
            // Every reweighted reward vanishes: the current estimate is a fixed point.
            res.stats.converged = true;
            break;
        }
        if (trace.size() >= 2) {
            const double prev = trace[trace.size() - 2];
            const double rel = (es.lower_bound - prev) / std::max(std::abs(prev), 1e-12);
            if (rel < opt.tolerance) {
                res.stats.converged = true;
                break;
            }
        }
        res.theta = m_step(es.buffers, res.theta, data);
    }
    return res;
}

inline PoemResult poem_train(const JointPolicy& theta_init, const Dataset& data, const LearnConfig& cfg,
                             const PoemOptions& opt = {}) {
    if (data.empty()) throw InsufficientData("PoEM needs at least one training episode");
    return poem_train(theta_init, prepare(data, cfg.time_base), cfg, opt);
}

/// CSV trace: iteration,lower_bound (iterations counted from 1).
inline void write_trace_csv(const TrainStats& stats, std::ostream& out) {
    out << "iteration,lower_bound\n";
    char buf[64];
    for (std::size_t i = 0; i < stats.lower_bound_trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", stats.lower_bound_trace[i]);
        out << (i + 1) << ',' << buf << '\n';
    }
}

} // namespace isem
