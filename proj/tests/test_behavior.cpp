#include <gtest/gtest.h>

#include <algorithm>

#include "isem/behavior.hpp"
#include "isem/episode_io.hpp"

using namespace isem;
using namespace isem::sar;

namespace {

World world_at(const ScenarioConfig& sc, std::vector<Cell> cells) {
    World w;
    for (std::size_t i = 0; i < sc.agents.size(); ++i) {
        AgentState a;
        a.kind = sc.agents[i];
        a.pos = cells[i];
        if (const auto s = sc.site_of(a.pos)) a.last_site = s;
        w.agents.push_back(a);
    }
    w.knowledge.assign(sc.agents.size(), std::vector<SiteKnowledge>(sc.site_count()));
    return w;
}

/// Mixture policy that checks every logged probability against the closed
/// form as it goes.
struct CheckedMixture {
    double rho;
    std::size_t decisions = 0;
    void begin_episode() {}
    Decision decide(const DecisionContext& ctx, Rng& rng) {
        const auto expert = expert_action(ctx.scenario, ctx.world, ctx.agent);
        const auto d = mixture_decision(expert, ctx.initiable, rho, rng);
        const double n = double(ctx.initiable.size());
        EXPECT_EQ(d.probability, (d.macro == expert ? rho : 0.0) + (1.0 - rho) / n);
        EXPECT_GE(d.probability, (1.0 - rho) / n);
        EXPECT_LT(d.probability, 1.0);
        ++decisions;
        return d;
    }
};

} // namespace

TEST(Expert, CarryingUgvHeadsForMuster) {
    const auto sc = default_scenario();
    auto w = world_at(sc, {{1, 5}, {7, 1}, {1, 4}, {2, 4}});
    w.agents[1].carrying = 0;
    EXPECT_EQ(expert_action(sc, w, 1), 0u);
}

TEST(Expert, UgvAtSiteWithKnownCriticalVictimPicksUp) {
    const auto sc = default_scenario();
    auto w = world_at(sc, {{1, 5}, {7, 1}, {1, 4}, {2, 4}});
    w.knowledge[1][1] = {2, 0, 0};
    EXPECT_EQ(expert_action(sc, w, 1), sc.pickup_macro());
    w.knowledge[1][1] = {0, 0, 0};
    EXPECT_NE(expert_action(sc, w, 1), sc.pickup_macro());
}

TEST(Expert, UgvPrefersUrgencyThenStalenessThenLowestId) {
    const auto sc = default_scenario();
    auto w = world_at(sc, {{1, 5}, {1, 4}, {1, 3}, {2, 4}});
    auto& k = w.knowledge[1];
    for (auto& e : k) e = {0, 5, 5};
    EXPECT_EQ(expert_action(sc, w, 1), 1u); // all equal: site 2
    k[3] = {0, 2, 2};
    EXPECT_EQ(expert_action(sc, w, 1), 3u); // stalest: site 4
    k[4] = {1, 9, 9};
    EXPECT_EQ(expert_action(sc, w, 1), 4u); // urgent: site 5
    k[5] = {2, 9, 9};
    EXPECT_EQ(expert_action(sc, w, 1), 5u); // critical beats urgent
}

TEST(Expert, UavWithEquallyStaleSitesPicksSiteTwo) {
    const auto sc = default_scenario();
    auto w = world_at(sc, {{1, 5}, {1, 4}, {1, 3}, {2, 4}});
    EXPECT_EQ(expert_action(sc, w, 0), 1u);
    for (auto& e : w.knowledge[0]) e = {1, 7, 7};
    EXPECT_EQ(expert_action(sc, w, 0), 1u);
    w.knowledge[0][1].timestamp = 8;
    EXPECT_EQ(expert_action(sc, w, 0), 2u);
}

TEST(Expert, UavSkipsTheSiteItIsIn) {
    const auto sc = default_scenario();
    auto w = world_at(sc, {{7, 0}, {1, 4}, {1, 3}, {2, 4}});
    w.agents[0].last_site = 2;
    EXPECT_EQ(expert_action(sc, w, 0), 2u);
}

TEST(Mixture, PureRandomIsUniform) {
    Rng rng = make_stream({1});
    const std::vector<std::size_t> init{0, 1, 2, 3};
    for (int i = 0; i < 50; ++i) EXPECT_DOUBLE_EQ(mixture_decision(2, init, 0.0, rng).probability, 0.25);
}

TEST(Mixture, ExpertMassArithmetic) {
    Rng rng = make_stream({2});
    const std::vector<std::size_t> init{0, 1, 2, 3, 4, 5, 6};
    bool seen_expert = false, seen_other = false;
    for (int i = 0; i < 200; ++i) {
        const auto d = mixture_decision(3, init, 0.85, rng);
        if (d.macro == 3) {
            seen_expert = true;
            EXPECT_NEAR(d.probability, 0.87143, 1e-5);
            EXPECT_DOUBLE_EQ(d.probability, 0.85 + 0.15 / 7.0);
        } else {
            seen_other = true;
            EXPECT_DOUBLE_EQ(d.probability, 0.15 / 7.0);
        }
    }
    EXPECT_TRUE(seen_expert && seen_other);
}

TEST(Mixture, ExpertFrequency) {
    Rng rng = make_stream({3});
    const std::vector<std::size_t> init{0, 1, 2, 3, 4};
    const int n = 100000;
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += mixture_decision(1, init, 0.75, rng).macro == 1;
    EXPECT_NEAR(double(hits) / n, 0.75 + 0.25 / 5.0, 0.01);
}

TEST(Mixture, ProbabilitiesSumToOne) {
    Rng rng = make_stream({4});
    const std::vector<std::size_t> init{0, 2, 5};
    const double rho = 0.6;
    double total = 0.0;
    for (std::size_t m : init) total += (m == 2 ? rho : 0.0) + (1.0 - rho) / 3.0;
    EXPECT_DOUBLE_EQ(total, 1.0);
    // A non-initiable expert falls back to the uniform draw.
    for (int i = 0; i < 20; ++i) EXPECT_DOUBLE_EQ(mixture_decision(4, init, rho, rng).probability, 1.0 / 3.0);
}

TEST(Mixture, Errors) {
    Rng rng = make_stream({5});
    EXPECT_THROW(mixture_decision(0, {}, 0.5, rng), ContractError);
    EXPECT_THROW(mixture_decision(0, {0, 1}, 1.0, rng), DomainError);
    EXPECT_THROW(mixture_decision(0, {0, 1}, -0.1, rng), DomainError);
    BehaviorConfig cfg;
    cfg.rho = 1.0;
    EXPECT_THROW(generate_dataset(mini_scenario(), cfg), DomainError);
}

TEST(Generate, ZeroEpisodesIsEmpty) {
    BehaviorConfig cfg;
    cfg.episodes = 0;
    EXPECT_TRUE(generate_dataset(mini_scenario(), cfg).empty());
}

TEST(Generate, SameSeedIsByteIdentical) {
    BehaviorConfig cfg;
    cfg.episodes = 40;
    cfg.master_seed = 17;
    const auto a = episodes_to_string(generate_dataset(mini_scenario(), cfg));
    cfg.workers = 3;
    const auto b = episodes_to_string(generate_dataset(mini_scenario(), cfg));
    EXPECT_EQ(a, b);
    cfg.master_seed = 18;
    EXPECT_NE(a, episodes_to_string(generate_dataset(mini_scenario(), cfg)));
}

TEST(Generate, LoggedProbabilitiesAreTheMixtureMass) {
    const auto sc = mini_scenario();
    BehaviorConfig cfg;
    cfg.rho = 0.75;
    cfg.episodes = 30;
    cfg.master_seed = 5;
    const auto data = generate_dataset(sc, cfg);
    const auto digest = scenario_digest(sc);
    CheckedMixture checked{cfg.rho};
    for (std::size_t k = 0; k < data.size(); ++k) {
        Rng wr = make_stream({cfg.master_seed, k, 0}), pr = make_stream({cfg.master_seed, k, 1});
        const auto replay = run_episode(sc, checked, wr, pr, 0.999, k, digest).log;
        EXPECT_EQ(replay, data[k]);
        EXPECT_NO_THROW(validate_episode(data[k]));
        EXPECT_EQ(data[k].scenario_digest, digest);
    }
    EXPECT_GT(checked.decisions, 100u);
}

TEST(Generate, ReturnGrowsWithExpertShare) {
    const auto sc = mini_scenario();
    double prev = -1e300;
    for (double rho : {0.5, 0.75, 0.85}) {
        BehaviorConfig cfg;
        cfg.rho = rho;
        cfg.episodes = 300;
        cfg.master_seed = 11;
        double total = 0.0;
        for (const auto& ep : generate_dataset(sc, cfg))
            for (const auto& r : ep.rewards) total += r.value;
        const double mean = total / double(cfg.episodes);
        EXPECT_GE(mean, prev) << "rho " << rho;
        prev = mean;
    }
}
