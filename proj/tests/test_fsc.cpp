#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "isem/fsc.hpp"
#include "isem/rng.hpp"
#include "oracles.hpp"

using namespace isem;

namespace {

AgentSpec spec(std::size_t m, std::size_t o, std::size_t q, std::size_t id = 0) {
    AgentSpec s;
    s.agent_id = id;
    s.num_actions = m;
    s.num_observations = o;
    s.num_nodes = q;
    return s;
}

} // namespace

TEST(Fsc, SpecRejectsEmptyAlphabets) {
    EXPECT_THROW(FscParams(spec(0, 2, 2)), InvalidSpec);
    EXPECT_THROW(FscParams(spec(2, 0, 2)), InvalidSpec);
    EXPECT_THROW(FscParams(spec(2, 2, 0)), InvalidSpec);
}

TEST(Fsc, MaskMustLeaveAnInitiableMacro) {
    auto s = spec(2, 2, 1);
    s.blocked = {1, 1, 0, 0};
    EXPECT_THROW(FscParams{s}, InvalidSpec);
    s.blocked = {1, 0, 0};
    EXPECT_THROW(FscParams{s}, InvalidSpec);
}

TEST(Fsc, DirichletInitIsRowStochasticAndSeeded) {
    Rng a = make_stream({7, 0, 1}), b = make_stream({7, 0, 1}), c = make_stream({7, 1, 1});
    const auto p = init_dirichlet(spec(4, 5, 3), a);
    EXPECT_NO_THROW(p.validate(1e-12));
    EXPECT_EQ(p, init_dirichlet(spec(4, 5, 3), b));
    EXPECT_NE(p, init_dirichlet(spec(4, 5, 3), c));
    for (double x : p.delta_data()) EXPECT_GT(x, 0.0);
}

TEST(Fsc, SingleNodeMaskedStepIsDeterministic) {
    auto s = spec(3, 2, 1);
    s.blocked = {0, 1, 1, 0, 0, 0}; // after obs 0 only macro 0 is available
    FscParams p(s);
    Rng rng(1);
    FscRuntimeState st;
    auto first = fsc_step(p, st, 0, rng);
    EXPECT_EQ(first.state.steps_taken, 1u);
    for (int i = 0; i < 50; ++i) {
        auto next = fsc_step(p, first.state, 0, rng);
        EXPECT_EQ(next.action, 0u);
        EXPECT_DOUBLE_EQ(next.probability, 1.0);
        EXPECT_EQ(next.state.current_node, 0u);
    }
    EXPECT_THROW(fsc_step(p, first.state, 2, rng), DomainError);
}

TEST(Fsc, StepFrequenciesMatchLaw) {
    Rng init(3);
    const auto p = init_dirichlet(spec(3, 2, 2), init);
    Rng rng(11);
    const int n = 200000;
    std::map<std::size_t, int> counts;
    for (int i = 0; i < n; ++i) {
        auto s0 = fsc_step(p, {}, 0, rng);
        auto s1 = fsc_step(p, s0.state, 1, rng);
        if (s0.action == 0) ++counts[s1.action];
    }
    // P(m1 = a, m0 = 0) summed over node paths.
    for (std::size_t a = 0; a < 3; ++a) {
        const double want = oracle::prefix_likelihood(p, {0, a}, {1}, 1);
        EXPECT_NEAR(double(counts[a]) / n, want, 4e-3);
    }
}

TEST(Fsc, ForwardLikelihoodMatchesEnumeration) {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        auto s = spec(3, 4, 1 + trial % 3);
        if (trial % 2) {
            s.blocked.assign(12, 0);
            s.blocked[1 * 3 + 2] = 1;
            s.blocked[3 * 3 + 0] = 1;
        }
        const auto p = init_dirichlet(s, rng);
        std::vector<std::size_t> m(5), o(4);
        for (auto& x : m) x = uniform_index(rng, 3);
        for (auto& x : o) x = uniform_index(rng, 4);
        const auto pl = sequence_likelihood(p, m, o);
        for (std::size_t j = 0; j < m.size(); ++j) {
            const double want = oracle::prefix_likelihood(p, m, o, j);
            if (want == 0.0)
                EXPECT_EQ(pl.log_value(j), -INFINITY);
            else
                EXPECT_NEAR(pl.log_value(j), std::log(want), 1e-10);
        }
    }
}

TEST(Fsc, ForwardRejectsBadInput) {
    FscParams p(spec(2, 2, 2));
    std::vector<std::size_t> none;
    EXPECT_THROW(forward_messages(p, none, none), DomainError);
    std::vector<std::size_t> m{0, 1}, o{0, 1};
    EXPECT_THROW(forward_messages(p, m, o), DomainError);
    std::vector<std::size_t> bad_o{5};
    EXPECT_THROW(forward_messages(p, m, bad_o), DomainError);
}

TEST(Fsc, UniformSingleNodeLikelihood) {
    FscParams p(spec(4, 3, 1));
    std::vector<std::size_t> m{0, 1, 2}, o{0, 2};
    EXPECT_NEAR(sequence_likelihood(p, m, o).value(2), 1.0 / 64.0, 1e-15);
}
