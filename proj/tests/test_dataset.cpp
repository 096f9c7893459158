#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "isem/dataset.hpp"
#include "isem/episode_io.hpp"
#include "isem/policy_io.hpp"
#include "oracles.hpp"

using namespace isem;

namespace {

Episode tiny_episode() {
    Episode ep;
    ep.episode_id = 3;
    ep.scenario_digest = "abc";
    ep.length_steps = 10;
    ep.agents = {{0, {{0, -1, 1, 0.5}, {4, 2, 0, 0.25}}}, {1, {{0, -1, 0, 1.0}, {2, 0, 1, 0.5}, {7, 1, 1, 0.5}}}};
    ep.rewards = {{1, 1.0}, {5, -1.0}, {9, 1.0}};
    return ep;
}

std::vector<AgentSpec> specs_for(std::size_t agents, std::size_t m, std::size_t o, std::size_t q) {
    std::vector<AgentSpec> out;
    for (std::size_t a = 0; a < agents; ++a) out.push_back({a, m, o, q, {}});
    return out;
}

} // namespace

TEST(Dataset, ValidationCatchesBrokenEpisodes) {
    auto ep = tiny_episode();
    EXPECT_NO_THROW(validate_episode(ep));
    auto bad = ep;
    bad.agents[0].decisions[1].behavior_prob = 0.0;
    EXPECT_THROW(validate_episode(bad), ValidationError);
    bad = ep;
    bad.agents[0].decisions[0].obs = 0;
    EXPECT_THROW(validate_episode(bad), ValidationError);
    bad = ep;
    bad.agents[1].decisions[2].start_step = 1;
    EXPECT_THROW(validate_episode(bad), ValidationError);
    bad = ep;
    bad.rewards[0].value = 0.5;
    EXPECT_THROW(validate_episode(bad), ValidationError);
    bad = ep;
    std::swap(bad.rewards[0], bad.rewards[2]);
    EXPECT_THROW(validate_episode(bad), ValidationError);
}

TEST(Dataset, PrepareFindsLastDecisionAndDiscount) {
    const auto pd = prepare({tiny_episode()});
    ASSERT_EQ(pd.episodes[0].events.size(), 3u);
    const auto& e = pd.episodes[0].events;
    EXPECT_EQ(e[0].last_decision, (std::vector<std::size_t>{0, 0}));
    EXPECT_EQ(e[1].last_decision, (std::vector<std::size_t>{1, 1}));
    EXPECT_EQ(e[2].last_decision, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(e[2].discount_exponent, 9.0);
    EXPECT_EQ(pd.min_reward, -1.0);

    // Distinct decision starts are {0, 2, 4, 7}.
    const auto pe = prepare({tiny_episode()}, TimeBase::Epoch);
    EXPECT_EQ(pe.episodes[0].events[0].discount_exponent, 0.0);
    EXPECT_EQ(pe.episodes[0].events[1].discount_exponent, 2.0);
    EXPECT_EQ(pe.episodes[0].events[2].discount_exponent, 3.0);
}

TEST(Dataset, BehaviorAsTargetGivesDiscountedReturn) {
    LearnConfig cfg;
    cfg.gamma = 0.9;
    const auto pd = prepare({tiny_episode()});
    EXPECT_NEAR(behavior_value(pd, cfg), 0.9 - std::pow(0.9, 5) + std::pow(0.9, 9), 1e-14);
}

TEST(Dataset, EmpiricalValueMatchesDirectFormula) {
    Rng rng(17);
    Dataset data;
    for (std::size_t k = 0; k < 6; ++k) data.push_back(oracle::random_episode(rng, 2, 4, 3, 3, k));
    JointPolicy theta;
    for (const auto& s : specs_for(2, 3, 3, 2)) theta.push_back(init_dirichlet(s, rng));
    LearnConfig cfg;
    cfg.gamma = 0.95;
    const auto pd = prepare(data);

    double want = 0.0;
    for (std::size_t k = 0; k < pd.size(); ++k)
        for (const auto& ev : pd.episodes[k].events) {
            double w = std::pow(0.95, ev.discount_exponent);
            for (std::size_t a = 0; a < 2; ++a) {
                const auto& ag = pd.episodes[k].agents[a];
                const std::size_t j = ev.last_decision[a];
                w *= oracle::prefix_likelihood(theta[a], ag.actions, ag.observations, j) / std::exp(ag.log_behavior[j]);
            }
            want += ev.reward * w;
        }
    want /= double(pd.size());
    EXPECT_NEAR(empirical_value(pd, theta, cfg), want, 1e-12 * std::max(1.0, std::abs(want)));
}

TEST(Dataset, EmptyDataHasZeroValue) {
    JointPolicy theta{FscParams({0, 2, 2, 1, {}})};
    EXPECT_EQ(empirical_value(Dataset{}, theta, LearnConfig{}), 0.0);
}

TEST(Dataset, MissingControllerIsAMismatch) {
    JointPolicy theta{FscParams({0, 2, 3, 1, {}})};
    EXPECT_THROW(empirical_value(Dataset{tiny_episode()}, theta, LearnConfig{}), MismatchError);
    JointPolicy small{FscParams({0, 2, 1, 1, {}}), FscParams({1, 2, 1, 1, {}})};
    EXPECT_THROW(empirical_value(Dataset{tiny_episode()}, small, LearnConfig{}), MismatchError);
}

TEST(Dataset, BadGammaRejected) {
    LearnConfig cfg;
    cfg.gamma = 1.0;
    EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Dataset, SplitSizesAndDeterminism) {
    Dataset data(10);
    for (std::size_t i = 0; i < data.size(); ++i) data[i].episode_id = i;
    Rng a(4), b(4);
    const auto s1 = split_dataset(data, 0.25, a);
    const auto s2 = split_dataset(data, 0.25, b);
    EXPECT_EQ(s1.eval.size(), 3u);
    EXPECT_EQ(s1.train.size(), 7u);
    EXPECT_EQ(s1.eval, s2.eval);
    for (std::size_t i = 1; i < s1.train.size(); ++i) EXPECT_LT(s1.train[i - 1].episode_id, s1.train[i].episode_id);

    Rng c(0);
    EXPECT_EQ(split_dataset(Dataset(2), 0.01, c).eval.size(), 1u);
    EXPECT_EQ(split_dataset(Dataset(2), 0.99, c).train.size(), 1u);
    EXPECT_THROW(split_dataset(Dataset(1), 0.5, c), InsufficientData);
    EXPECT_THROW(split_dataset(data, 1.0, c), DomainError);
}

TEST(EpisodeIo, RoundTrip) {
    Rng rng(2);
    Dataset data{tiny_episode()};
    for (std::size_t k = 0; k < 5; ++k) data.push_back(oracle::random_episode(rng, 3, 5, 4, 6, k + 10));
    const auto text = episodes_to_string(data);
    std::istringstream in(text + "\n\n");
    const auto back = read_episodes(in);
    EXPECT_EQ(back, data);
    EXPECT_EQ(episodes_to_string(back), text);
}

TEST(EpisodeIo, ErrorsCarryLineNumbers) {
    const auto good = episodes_to_string({tiny_episode()});
    std::istringstream bad_json(good + "{not json\n");
    try {
        read_episodes(bad_json);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    std::istringstream missing(good + good + "{\"episode_id\":1}\n");
    try {
        read_episodes(missing);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    auto ep = tiny_episode();
    ep.agents[0].decisions[1].behavior_prob = 2.0;
    std::istringstream invalid(episodes_to_string({ep}));
    EXPECT_THROW(read_episodes(invalid), ValidationError);
}

TEST(PolicyIo, RoundTripIsExact) {
    Rng rng(9);
    AgentSpec s{4, 3, 5, 2, std::vector<std::uint8_t>(15, 0)};
    s.blocked[2 * 3 + 1] = 1;
    JointPolicy theta{init_dirichlet(s, rng), init_dirichlet({7, 2, 1, 3, {}}, rng)};
    const auto text = policy_to_string(theta);
    const auto back = policy_from_json(nlohmann::json::parse(text));
    EXPECT_EQ(back, theta);
    EXPECT_EQ(policy_to_string(back), text);
}

TEST(PolicyIo, RejectsOffSimplexRows) {
    JointPolicy theta{FscParams({0, 2, 2, 2, {}})};
    auto j = policy_to_json(theta);
    j["agents"][0]["mu"][0] = 0.7;
    EXPECT_THROW(policy_from_json(nlohmann::json::parse(j.dump())), ValidationError);
    auto k = policy_to_json(theta);
    k["agents"][0]["delta"][0].erase(0);
    EXPECT_THROW(policy_from_json(nlohmann::json::parse(k.dump())), ValidationError);
}

TEST(Digest, KnownFnvValues) {
    EXPECT_EQ(content_digest(""), "cbf29ce484222325");
    EXPECT_EQ(content_digest("a"), "af63dc4c8601ec8c");
}
