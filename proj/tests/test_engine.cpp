#include <cmath>

#include <gtest/gtest.h>

#include "oltr/engine.hpp"

using namespace oltr;

namespace {

Dataset small_dataset(std::size_t queries = 30, double noise = 0.0, std::uint64_t seed = 1) {
    SyntheticSpec spec;
    spec.num_queries = queries;
    spec.docs_per_query = 20;
    spec.dimensionality = 5;
    spec.noise_level = noise;
    spec.seed = seed;
    spec.split = {0.7, 0.0};
    return normalize_per_query(generate_synthetic(spec));
}

EngineConfig team_draft_config() {
    EngineConfig cfg;
    cfg.comparison = ComparisonMethod::team_draft;
    return cfg;
}

Vector unit(std::size_t dim, std::size_t axis) {
    Vector v(dim, 0.0);
    v[axis] = 1.0;
    return v;
}

ClickModelParams never_clicks() { return ClickModelParams{}; }

}  // namespace

TEST(SampleUnitVector, UnitNorm) {
    Rng rng(1);
    for (std::size_t dim = 1; dim < 30; ++dim) EXPECT_NEAR(norm(sample_unit_vector(dim, rng)), 1.0, 1e-9);
    EXPECT_THROW(sample_unit_vector(0, rng), ValidationError);
}

TEST(SampleUnitVector, OneDimensionalSignsBalanced) {
    Rng rng(2);
    int plus = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        auto u = sample_unit_vector(1, rng);
        ASSERT_TRUE(u[0] == 1.0 || u[0] == -1.0);
        plus += u[0] > 0;
    }
    EXPECT_NEAR(plus / double(draws), 0.5, 0.02);
}

TEST(SampleUnitVector, IsotropicMean) {
    Rng rng(3);
    Vector sum(3, 0.0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) axpy(1.0, sample_unit_vector(3, rng), sum);
    for (auto& v : sum) v /= draws;
    EXPECT_LT(norm(sum), 0.02);
}

TEST(ApplyUpdate, EmptyWinnersLeaveWeightsUntouched) {
    Vector w{0.1, -0.2, 0.3};
    const Vector before = w;
    std::vector<Vector> dirs{{1, 0, 0}, {0, 1, 0}};
    apply_update(w, dirs, {}, 0.01);
    EXPECT_EQ(w, before);
}

TEST(ApplyUpdate, SingleWinnerMovesEtaAlongDirection) {
    Vector w{0.0, 0.0};
    std::vector<Vector> dirs{{0.6, 0.8}, {1.0, 0.0}};
    apply_update(w, dirs, {1}, 0.01);
    EXPECT_EQ(w, (Vector{0.01 * 0.6, 0.01 * 0.8}));
    Vector w2{0.0, 0.0};
    apply_update(w2, dirs, {1, 2}, 0.01);
    EXPECT_NEAR(w2[0], 0.005 * 1.6, 1e-18);
    EXPECT_NEAR(w2[1], 0.005 * 0.8, 1e-18);
}

TEST(MgdStep, CandidatesLieOnTheSphereAndUpdateIsBounded) {
    auto ds = small_dataset();
    auto inputs = RunInputs::from_fold(ds, 0);
    auto space = ModelSpace::linear(ds.dimensionality);
    auto queries = space.project(inputs.train, 10);
    auto cfg = team_draft_config();
    cfg.delta = 0.7;
    auto state = EngineState::starting_at(space.model({0.3, -0.1, 0.2, 0.0, 0.5}));
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        const Vector before = weights_of(state.current_best);
        auto step = mgd_step(state, queries[i % queries.size()], cfg, ClickModelParams::informational(), rng);
        ASSERT_EQ(step.directions.size(), cfg.n);
        for (const auto& u : step.directions) EXPECT_NEAR(norm(scaled(u, cfg.delta)), cfg.delta, 1e-9);
        Vector diff = weights_of(state.current_best);
        axpy(-1.0, before, diff);
        EXPECT_LE(norm(diff), cfg.eta + 1e-12);
        if (step.winners.empty()) EXPECT_EQ(weights_of(state.current_best), before);
        if (step.winners.size() == 1) EXPECT_NEAR(norm(diff), cfg.eta, 1e-12);
        EXPECT_LE(state.history.size(), cfg.h + 1);
        EXPECT_EQ(state.t, static_cast<std::size_t>(i + 1));
    }
}

TEST(MgdStep, ReplayIsDeterministic) {
    auto ds = small_dataset(3);
    auto inputs = RunInputs::from_fold(ds, 0);
    auto space = ModelSpace::linear(ds.dimensionality);
    auto queries = space.project(inputs.train, 10);
    auto trajectory = [&](std::uint64_t seed) {
        std::vector<Vector> out;
        auto state = EngineState::starting_at(space.model(Vector(5, 0.0)));
        Rng rng(seed);
        for (int i = 0; i < 10; ++i) {
            mgd_step(state, queries[i % queries.size()], team_draft_config(), ClickModelParams::perfect(), rng);
            out.push_back(weights_of(state.current_best));
        }
        return out;
    };
    EXPECT_EQ(trajectory(11), trajectory(11));
}

TEST(RunMgd, SingleImpression) {
    auto ds = small_dataset();
    Rng rng(5);
    auto trace = run_mgd(ds, 0, team_draft_config(), ClickModelParams::perfect(), 1, rng);
    ASSERT_EQ(trace.records.size(), 1u);
    EXPECT_EQ(trace.online_performance, trace.records[0].displayed_ndcg);
    EXPECT_TRUE(trace.records[0].offline_ndcg.has_value());
}

TEST(RunMgd, NoClicksKeepZeroWeights) {
    auto ds = small_dataset();
    Rng rng(6);
    auto trace = run_mgd(ds, 0, team_draft_config(), never_clicks(), 300, rng);
    EXPECT_EQ(weights_of(trace.final_model), Vector(5, 0.0));
    for (const auto& r : trace.records) EXPECT_EQ(r.winners_count, 0u);
}

TEST(RunMgd, DeterministicTrace) {
    auto ds = small_dataset(30, 0.2);
    Rng a(7), b(7);
    EXPECT_EQ(run_mgd(ds, 0, team_draft_config(), ClickModelParams::navigational(), 300, a),
              run_mgd(ds, 0, team_draft_config(), ClickModelParams::navigational(), 300, b));
}

TEST(RunMgd, OnlinePerformanceMatchesRecords) {
    auto ds = small_dataset(30, 0.2);
    Rng rng(8);
    auto trace = run_mgd(ds, 0, team_draft_config(), ClickModelParams::informational(), 500, rng);
    double total = 0.0;
    for (std::size_t i = 0; i < trace.records.size(); ++i)
        total += trace.records[i].displayed_ndcg * std::pow(0.9995, static_cast<double>(i));
    EXPECT_NEAR(trace.online_performance, total, 1e-9);
    for (const auto& r : trace.records) EXPECT_EQ(r.offline_ndcg.has_value(), r.t % 10 == 0 || r.t == 500);
}

TEST(RunMgd, LearnsNoiselessSignalWithPerfectClicks) {
    SyntheticSpec spec;
    spec.num_queries = 60;
    spec.docs_per_query = 30;
    spec.dimensionality = 5;
    spec.split = {0.7, 0.0};
    auto ds = normalize_per_query(generate_synthetic(spec));
    double total = 0.0;
    const int seeds = 25;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(s);
        total += run_mgd(ds, 0, team_draft_config(), ClickModelParams::perfect(), 1000, rng).final_offline_ndcg;
    }
    EXPECT_GE(total / seeds, 0.95);
}

TEST(RunSimMgd, SingleReferenceRanksByFirstFeature) {
    auto ds = small_dataset(30, 0.3);
    ReferenceConfig refs{1, ReferenceSelection::fixed, {unit(5, 0)}};
    Rng rng(9);
    auto trace = run_sim_mgd(ds, 0, team_draft_config(), refs, ClickModelParams::informational(), 200, rng);
    const double w = weights_of(trace.final_model)[0];
    ASSERT_NE(w, 0.0);
    for (const auto& q : ds.queries) {
        Vector f1;
        for (const auto& d : q.documents) f1.push_back((w > 0 ? 1.0 : -1.0) * d.features[0]);
        EXPECT_EQ(rank(trace.final_model, q), rank_by_scores(f1));
    }
}

TEST(RunSimMgd, DeterministicTrace) {
    auto ds = small_dataset(30, 0.2);
    ReferenceConfig refs{5, ReferenceSelection::uniform, {}};
    Rng a(10), b(10);
    EXPECT_EQ(run_sim_mgd(ds, 0, team_draft_config(), refs, ClickModelParams::informational(), 200, a),
              run_sim_mgd(ds, 0, team_draft_config(), refs, ClickModelParams::informational(), 200, b));
}

TEST(RunSimMgd, InexpressibleOptimumCapsQuality) {
    SyntheticSpec spec;
    spec.num_queries = 60;
    spec.docs_per_query = 30;
    spec.dimensionality = 5;
    spec.split = {0.7, 0.0};
    auto ds = normalize_per_query(generate_synthetic(spec));
    ReferenceConfig refs{2, ReferenceSelection::fixed, {unit(5, 1), unit(5, 2)}};
    double mgd = 0.0, sim = 0.0;
    const int seeds = 25;
    for (int s = 0; s < seeds; ++s) {
        Rng a(s), b(s);
        mgd += run_mgd(ds, 0, team_draft_config(), ClickModelParams::perfect(), 1000, a).final_offline_ndcg;
        sim += run_sim_mgd(ds, 0, team_draft_config(), refs, ClickModelParams::perfect(), 1000, b).final_offline_ndcg;
    }
    EXPECT_GE((mgd - sim) / seeds, 0.05);
}

TEST(DetectConvergence, IdentityEndpoints) {
    EngineState s = EngineState::starting_at(LinearModel{{1.0, 2.0}});
    for (int i = 0; i < 3; ++i) s.history.push_back({1.0, 2.0});
    s.t = 3;
    EXPECT_TRUE(detect_convergence(s, 3, 1e-12));
    EXPECT_FALSE(detect_convergence(s, 4, 0.5));
}

TEST(DetectConvergence, OrthogonalEndpoints) {
    EngineState s = EngineState::starting_at(LinearModel{{1.0, 0.0}});
    s.history.push_back({0.0, 1.0});
    s.t = 1;
    EXPECT_FALSE(detect_convergence(s, 1, 0.5));
}

TEST(DetectConvergence, SmallRotation) {
    EngineState s = EngineState::starting_at(LinearModel{{1.0, 0.0}});
    s.history.push_back({1.0, 0.1});
    s.t = 1;
    EXPECT_NEAR(1.0 - 1.0 / std::sqrt(1.01), 0.00496, 1e-5);
    EXPECT_TRUE(detect_convergence(s, 1, 0.01));
    EXPECT_FALSE(detect_convergence(s, 1, 0.004));
}

TEST(DetectConvergence, ZeroEndpointAndComplexPhase) {
    EngineState s = EngineState::starting_at(LinearModel{{0.0, 0.0}});
    s.history.push_back({1.0, 0.0});
    s.t = 1;
    EXPECT_FALSE(detect_convergence(s, 1, 0.99));
    s.history.front() = {1.0, 0.0};
    EXPECT_TRUE(detect_convergence(s, 1, 0.01));
    s.phase = Phase::complex;
    EXPECT_FALSE(detect_convergence(s, 1, 0.01));
}

TEST(CascadeSwitch, PerfectSquareRatio) {
    std::vector<Vector> refs;
    for (std::size_t m = 0; m < 4; ++m) refs.push_back(unit(16, m));
    auto set = std::make_shared<const ReferenceSet>(refs, ReferenceSelection::fixed);
    auto s = EngineState::starting_at(SimilarityModel{{2.0, 0.0, 0.0, 0.0}, set});
    cascade_switch(s, 4, 16);
    EXPECT_EQ(norm(weights_of(s.current_best)), 1.0);
    EXPECT_EQ(s.phase, Phase::complex);
    EXPECT_TRUE(s.history.empty());
    EXPECT_THROW(cascade_switch(s, 4, 16), ValidationError);
}

TEST(CascadeSwitch, FullOrthonormalBasisKeepsNormAndRanking) {
    std::vector<Vector> refs{{0.6, 0.8, 0.0}, {-0.8, 0.6, 0.0}, {0.0, 0.0, 1.0}};
    auto set = std::make_shared<const ReferenceSet>(refs, ReferenceSelection::fixed);
    SimilarityModel sm{{0.5, -1.0, 0.25}, set};
    auto ds = small_dataset(10);
    auto s = EngineState::starting_at(sm);
    cascade_switch(s, 3, 3);
    EXPECT_NEAR(norm(weights_of(s.current_best)), norm(sm.weights), 1e-12);
    QueryGroup q{"q", {}};
    Rng rng(12);
    for (int i = 0; i < 30; ++i) q.documents.push_back({{uniform01(rng), uniform01(rng), uniform01(rng)}, 0, ""});
    EXPECT_EQ(rank(s.current_best, q), rank(RankerModel{sm}, q));
}

TEST(CascadeSwitch, ZeroConversionCarriesOver) {
    auto set = std::make_shared<const ReferenceSet>(std::vector<Vector>{{1.0, 0.0}, {-1.0, 0.0}},
                                                    ReferenceSelection::fixed);
    auto s = EngineState::starting_at(SimilarityModel{{1.0, 1.0}, set});
    cascade_switch(s, 2, 2);
    EXPECT_EQ(weights_of(s.current_best), (Vector{0.0, 0.0}));
}

TEST(CascadeSwitch, RequiresSimilarityModel) {
    auto s = EngineState::starting_at(LinearModel{{1.0}});
    EXPECT_THROW(cascade_switch(s, 1, 1), ValidationError);
}

TEST(RunCmgd, ZeroEpsilonEqualsSimMgd) {
    auto ds = small_dataset(30, 0.2);
    auto cfg = team_draft_config();
    cfg.epsilon = 0.0;
    cfg.h = 20;
    ReferenceConfig refs{5, ReferenceSelection::uniform, {}};
    Rng a(13), b(13);
    auto c = run_cmgd(ds, 0, cfg, refs, ClickModelParams::informational(), 400, a);
    auto s = run_sim_mgd(ds, 0, cfg, refs, ClickModelParams::informational(), 400, b);
    EXPECT_FALSE(c.switch_impression.has_value());
    EXPECT_EQ(c, s);
}

TEST(RunCmgd, LooseThresholdSwitchesAtWindowLength) {
    auto ds = small_dataset(30, 0.2);
    auto cfg = team_draft_config();
    cfg.h = 50;
    cfg.epsilon = 0.999;
    auto inputs = RunInputs::from_fold(ds, 0);
    Rng rng(14);
    auto simple = ModelSpace::similarity(make_references({5, ReferenceSelection::uniform, {}}, inputs.train, rng));
    auto complex = ModelSpace::linear(ds.dimensionality);
    auto start = EngineState::starting_at(simple.model(Vector(5, 1.0)));
    auto trace = run_learning(inputs, start, simple, &complex, cfg, ClickModelParams::informational(), 200, rng);
    ASSERT_TRUE(trace.switch_impression.has_value());
    EXPECT_EQ(*trace.switch_impression, cfg.h);
    EXPECT_TRUE(std::holds_alternative<LinearModel>(trace.final_model));
    for (std::size_t i = 0; i < trace.records.size(); ++i)
        EXPECT_EQ(trace.records[i].phase, trace.records[i].t <= cfg.h ? Phase::simple : Phase::complex);
}

TEST(RunCmgd, PhaseChangesAtMostOnce) {
    auto ds = small_dataset(30, 0.2);
    auto cfg = team_draft_config();
    cfg.h = 30;
    cfg.epsilon = 0.05;
    Rng rng(15);
    auto trace = run_cmgd(ds, 0, cfg, {5, ReferenceSelection::uniform, {}}, ClickModelParams::perfect(), 800, rng);
    int changes = 0;
    for (std::size_t i = 1; i < trace.records.size(); ++i) {
        EXPECT_LE(static_cast<int>(trace.records[i - 1].phase), static_cast<int>(trace.records[i].phase));
        changes += trace.records[i - 1].phase != trace.records[i].phase;
    }
    EXPECT_LE(changes, 1);
}

TEST(EngineConfig, ValidationNamesField) {
    EngineConfig cfg;
    cfg.eta = 0.0;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.epsilon = 1.0;
    EXPECT_THROW(cfg.validate(), ValidationError);
}
