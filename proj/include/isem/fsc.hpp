#pragma once

// Stochastic Mealy finite-state controllers.
//
// Generative model for one agent over decisions 0..T:
//
//   q_0 ~ mu,                    m_0 ~ lambda0(q_0, .)
//   q_t ~ delta(q_{t-1}, o_t, .), m_t ~ lambda(q_t, o_t, .)   for t >= 1
//
// The first decision is taken before any observation arrives. Output rows can
// be restricted by an initiation mask (macro m not available after
// observation o); the output law is then the row renormalized over the
// initiable macros.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "isem/error.hpp"
#include "isem/rng.hpp"

namespace isem {

struct AgentSpec {
    std::size_t agent_id = 0;
    std::size_t num_actions = 1;
    std::size_t num_observations = 1;
    std::size_t num_nodes = 1;
    /// blocked[o * num_actions + m] != 0 marks macro m as not initiable after
    /// observation o. Empty means every macro is always initiable.
    std::vector<std::uint8_t> blocked;

    void validate() const {
        if (num_actions == 0 || num_observations == 0 || num_nodes == 0)
            throw InvalidSpec("agent " + std::to_string(agent_id) + ": alphabet and node counts must be >= 1");
        if (!blocked.empty()) {
            if (blocked.size() != num_actions * num_observations)
                throw InvalidSpec("agent " + std::to_string(agent_id) + ": initiation mask has wrong size");
            for (std::size_t o = 0; o < num_observations; ++o) {
                std::size_t open = 0;
                for (std::size_t m = 0; m < num_actions; ++m) open += initiable(o, m) ? 1 : 0;
                if (open == 0)
                    throw InvalidSpec("agent " + std::to_string(agent_id) + ": observation " + std::to_string(o) +
                                      " leaves no initiable macro");
            }
        }
    }

    bool initiable(std::size_t o, std::size_t m) const {
        return blocked.empty() || blocked[o * num_actions + m] == 0;
    }

    bool operator==(const AgentSpec&) const = default;
};

struct FscRuntimeState {
    std::size_t current_node = 0;
    std::size_t steps_taken = 0;
};

class FscParams {
public:
    FscParams() = default;

    /// Uniform rows everywhere.
    explicit FscParams(AgentSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        const auto q = spec_.num_nodes, o = spec_.num_observations, m = spec_.num_actions;
        mu_.assign(q, 1.0 / double(q));
        lambda0_.assign(q * m, 1.0 / double(m));
        lambda_.assign(q * o * m, 1.0 / double(m));
        delta_.assign(q * o * q, 1.0 / double(q));
    }

    const AgentSpec& spec() const { return spec_; }
    std::size_t nodes() const { return spec_.num_nodes; }
    std::size_t actions() const { return spec_.num_actions; }
    std::size_t observations() const { return spec_.num_observations; }

    std::span<double> mu() { return mu_; }
    std::span<const double> mu() const { return mu_; }

    std::span<double> lambda0(std::size_t q) { return {lambda0_.data() + q * actions(), actions()}; }
    std::span<const double> lambda0(std::size_t q) const { return {lambda0_.data() + q * actions(), actions()}; }

    std::span<double> lambda(std::size_t q, std::size_t o) {
        return {lambda_.data() + (q * observations() + o) * actions(), actions()};
    }
    std::span<const double> lambda(std::size_t q, std::size_t o) const {
        return {lambda_.data() + (q * observations() + o) * actions(), actions()};
    }

    std::span<double> delta(std::size_t q, std::size_t o) {
        return {delta_.data() + (q * observations() + o) * nodes(), nodes()};
    }
    std::span<const double> delta(std::size_t q, std::size_t o) const {
        return {delta_.data() + (q * observations() + o) * nodes(), nodes()};
    }

    /// Output probability after observation o, renormalized over the
    /// initiable macros. Zero for a blocked macro.
    double output_prob(std::size_t q, std::size_t o, std::size_t m) const {
        const auto row = lambda(q, o);
        if (spec_.blocked.empty()) return row[m];
        if (!spec_.initiable(o, m)) return 0.0;
        double open = 0.0;
        for (std::size_t a = 0; a < row.size(); ++a)
            if (spec_.initiable(o, a)) open += row[a];
        return row[m] / open;
    }

    /// Throws ValidationError if any row is negative or off the simplex by
    /// more than `tol`.
    void validate(double tol = 1e-9) const {
        auto check = [&](std::span<const double> row, const char* what) {
            double s = 0.0;
            for (double x : row) {
                if (!(x >= 0.0) || !std::isfinite(x))
                    throw ValidationError(std::string(what) + " has a negative or non-finite entry (agent " +
                                          std::to_string(spec_.agent_id) + ")");
                s += x;
            }
            if (std::abs(s - 1.0) > tol)
                throw ValidationError(std::string(what) + " row sums to " + std::to_string(s) + " (agent " +
                                      std::to_string(spec_.agent_id) + ")");
        };
        check(mu(), "mu");
        for (std::size_t q = 0; q < nodes(); ++q) {
            check(lambda0(q), "lambda0");
            for (std::size_t o = 0; o < observations(); ++o) {
                check(lambda(q, o), "lambda");
                check(delta(q, o), "delta");
            }
        }
    }

    /// Raw storage, row-major: mu[q], lambda0[q][m], lambda[q][o][m], delta[q][o][q'].
    std::vector<double>& mu_data() { return mu_; }
    std::vector<double>& lambda0_data() { return lambda0_; }
    std::vector<double>& lambda_data() { return lambda_; }
    std::vector<double>& delta_data() { return delta_; }
    const std::vector<double>& mu_data() const { return mu_; }
    const std::vector<double>& lambda0_data() const { return lambda0_; }
    const std::vector<double>& lambda_data() const { return lambda_; }
    const std::vector<double>& delta_data() const { return delta_; }

    bool operator==(const FscParams&) const = default;

private:
    AgentSpec spec_;
    std::vector<double> mu_;
    std::vector<double> lambda0_;
    std::vector<double> lambda_;
    std::vector<double> delta_;
};

/// One controller per agent, in agent order.
using JointPolicy = std::vector<FscParams>;

/// Draws every row from the flat Dirichlet, in the order mu, lambda0 rows,
/// lambda rows, delta rows.
inline FscParams init_dirichlet(const AgentSpec& spec, Rng& rng) {
    FscParams p(spec);
    sample_flat_dirichlet(rng, p.mu());
    for (std::size_t q = 0; q < p.nodes(); ++q) sample_flat_dirichlet(rng, p.lambda0(q));
    for (std::size_t q = 0; q < p.nodes(); ++q)
        for (std::size_t o = 0; o < p.observations(); ++o) sample_flat_dirichlet(rng, p.lambda(q, o));
    for (std::size_t q = 0; q < p.nodes(); ++q)
        for (std::size_t o = 0; o < p.observations(); ++o) sample_flat_dirichlet(rng, p.delta(q, o));
    return p;
}

struct FscStep {
    std::size_t action = 0;
    FscRuntimeState state;
    double probability = 0.0;
};

/// Advances the controller by one decision. On the first decision the node is
/// drawn from mu and the action from lambda0 (obs is ignored); afterwards the
/// node moves through delta on obs and the action is drawn from the
/// (initiation-masked) lambda row of the new node.
inline FscStep fsc_step(const FscParams& params, FscRuntimeState state, std::size_t obs, Rng& rng) {
    FscStep out;
    if (state.steps_taken == 0) {
        const std::size_t q = sample_categorical(rng, params.mu());
        const auto row = params.lambda0(q);
        out.action = sample_categorical(rng, row);
        out.probability = row[out.action];
        out.state = {q, 1};
        return out;
    }
    if (obs >= params.observations())
        throw DomainError("observation " + std::to_string(obs) + " outside alphabet of size " +
                          std::to_string(params.observations()));
    if (state.current_node >= params.nodes()) throw DomainError("controller node out of range");
    const std::size_t q = sample_categorical(rng, params.delta(state.current_node, obs));
    std::vector<double> row(params.actions());
    for (std::size_t m = 0; m < row.size(); ++m) row[m] = params.output_prob(q, obs, m);
    out.action = sample_categorical(rng, row);
    out.probability = row[out.action];
    out.state = {q, state.steps_taken + 1};
    return out;
}

/// Scaled forward messages for one action/observation sequence.
/// alpha is (T+1) x Q with every row normalized; log_norm[t] is the log of
/// the t-th normalizer, so that log p(m_{0:t} | o_{1:t}) = sum_{s<=t} log_norm[s].
struct ForwardMessages {
    std::size_t nodes = 0;
    std::vector<double> alpha;
    std::vector<double> log_norm;

    std::span<const double> row(std::size_t t) const { return {alpha.data() + t * nodes, nodes}; }
    std::size_t length() const { return log_norm.size(); }
};

/// `actions` has T+1 entries; `observations` has T entries (o_1..o_T).
inline ForwardMessages forward_messages(const FscParams& params, std::span<const std::size_t> actions,
                                        std::span<const std::size_t> observations) {
    if (actions.empty()) throw DomainError("empty action sequence");
    if (observations.size() + 1 != actions.size())
        throw DomainError("expected one observation per action after the first");
    const std::size_t Q = params.nodes();
    const std::size_t T = observations.size();
    ForwardMessages fm;
    fm.nodes = Q;
    fm.alpha.assign((T + 1) * Q, 0.0);
    fm.log_norm.assign(T + 1, 0.0);

    for (std::size_t m : actions)
        if (m >= params.actions()) throw DomainError("action " + std::to_string(m) + " outside alphabet");
    for (std::size_t o : observations)
        if (o >= params.observations()) throw DomainError("observation " + std::to_string(o) + " outside alphabet");

    double c = 0.0;
    for (std::size_t q = 0; q < Q; ++q) {
        fm.alpha[q] = params.mu()[q] * params.lambda0(q)[actions[0]];
        c += fm.alpha[q];
    }
    if (!(c > 0.0)) {
        fm.log_norm[0] = -INFINITY;
        return fm;
    }
    for (std::size_t q = 0; q < Q; ++q) fm.alpha[q] /= c;
    fm.log_norm[0] = std::log(c);

    std::vector<double> emit(Q);
    for (std::size_t t = 1; t <= T; ++t) {
        const std::size_t o = observations[t - 1];
        const std::size_t m = actions[t];
        for (std::size_t v = 0; v < Q; ++v) emit[v] = params.output_prob(v, o, m);
        const double* prev = fm.alpha.data() + (t - 1) * Q;
        double* cur = fm.alpha.data() + t * Q;
        for (std::size_t u = 0; u < Q; ++u) {
            if (prev[u] == 0.0) continue;
            const auto d = params.delta(u, o);
            for (std::size_t v = 0; v < Q; ++v) cur[v] += prev[u] * d[v];
        }
        c = 0.0;
        for (std::size_t v = 0; v < Q; ++v) {
            cur[v] *= emit[v];
            c += cur[v];
        }
        if (!(c > 0.0)) {
            for (std::size_t s = t; s <= T; ++s) fm.log_norm[s] = -INFINITY;
            return fm;
        }
        for (std::size_t v = 0; v < Q; ++v) cur[v] /= c;
        fm.log_norm[t] = std::log(c);
    }
    return fm;
}

/// Prefix likelihoods p(m_{0:t} | o_{1:t}) for t = 0..T, stored as logs.
struct PrefixLikelihood {
    std::vector<double> log_values;

    std::size_t size() const { return log_values.size(); }
    double log_value(std::size_t t) const { return log_values[t]; }
    double value(std::size_t t) const { return std::exp(log_values[t]); }
    std::vector<double> values() const {
        std::vector<double> v(log_values.size());
        for (std::size_t t = 0; t < v.size(); ++t) v[t] = std::exp(log_values[t]);
        return v;
    }
};

inline PrefixLikelihood prefix_likelihood(const ForwardMessages& fm) {
    PrefixLikelihood out;
    out.log_values.resize(fm.log_norm.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < fm.log_norm.size(); ++t) {
        acc += fm.log_norm[t];
        out.log_values[t] = acc;
    }
    return out;
}

inline PrefixLikelihood sequence_likelihood(const FscParams& params, std::span<const std::size_t> actions,
                                            std::span<const std::size_t> observations) {
    return prefix_likelihood(forward_messages(params, actions, observations));
}

} // namespace isem
