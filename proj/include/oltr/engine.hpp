#pragma once

#include <cmath>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "click_simulation.hpp"
#include "common.hpp"
#include "evaluation.hpp"
#include "letor_data.hpp"
#include "multileaving.hpp"
#include "ranking_models.hpp"

namespace oltr {

enum class ComparisonMethod { team_draft, probabilistic };

inline std::string to_string(ComparisonMethod m) {
    return m == ComparisonMethod::team_draft ? "team_draft" : "probabilistic";
}

inline ComparisonMethod comparison_method_from_string(const std::string& s) {
    if (s == "team_draft") return ComparisonMethod::team_draft;
    if (s == "probabilistic") return ComparisonMethod::probabilistic;
    throw ValidationError("unknown comparison method '" + s + "'");
}

enum class Phase { simple, complex };

inline std::string to_string(Phase p) { return p == Phase::simple ? "simple" : "complex"; }

struct EngineConfig {
    std::size_t n = 19;        // candidates per impression
    double delta = 1.0;        // candidate sphere radius
    double eta = 0.01;         // step size
    std::size_t kappa = 10;    // display depth
    std::size_t h = 200;       // convergence window, impressions
    double epsilon = 0.01;     // convergence threshold on 1 - cos; 0 disables switching
    std::size_t inference_samples = 10000;
    ComparisonMethod comparison = ComparisonMethod::probabilistic;
    std::size_t record_every = 10;  // offline evaluation period
    double gamma = 0.9995;
    double tau = 3.0;

    bool operator==(const EngineConfig&) const = default;

    void validate() const {
        if (n < 1) throw ValidationError("n must be >= 1");
        if (!(delta > 0.0)) throw ValidationError("delta must be > 0");
        if (!(eta > 0.0)) throw ValidationError("eta must be > 0");
        if (kappa < 1) throw ValidationError("kappa must be >= 1");
        if (h < 1) throw ValidationError("h must be >= 1");
        if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must lie in [0, 1)");
        if (inference_samples < 1) throw ValidationError("inference_samples must be >= 1");
        if (record_every < 1) throw ValidationError("record_every must be >= 1");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
        if (!(tau > 0.0)) throw ValidationError("tau must be > 0");
    }
};

/// A query's documents expressed in the feature space of one model family, so
/// that every ranker of that family scores a document as a plain dot product.
struct ProjectedQuery {
    std::size_t dim = 0;
    Vector features;  // row-major, documents x dim
    std::vector<int> grades;
    double ideal_dcg = 0.0;

    std::size_t size() const noexcept { return grades.size(); }

    std::span<const double> row(std::size_t i) const { return std::span<const double>(features).subspan(i * dim, dim); }

    Vector scores(std::span<const double> w) const {
        Vector s(size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = dot(row(i), w);
        return s;
    }

    double ndcg_of(std::span<const std::size_t> order, std::size_t kappa) const {
        if (ideal_dcg <= 0.0) return 0.0;
        std::vector<int> g;
        g.reserve(std::min(kappa, order.size()));
        for (std::size_t i = 0; i < order.size() && i < kappa; ++i) g.push_back(grades[order[i]]);
        return dcg_at_k(g, kappa) / ideal_dcg;
    }
};

/// Model family: direct linear over D features, or similarity over a reference set.
class ModelSpace {
public:
    static ModelSpace linear(std::size_t dimensionality) {
        ModelSpace s;
        s.feature_dim_ = dimensionality;
        return s;
    }

    static ModelSpace similarity(std::shared_ptr<const ReferenceSet> refs) {
        ModelSpace s;
        s.feature_dim_ = refs->dimensionality();
        s.refs_ = std::move(refs);
        return s;
    }

    bool is_similarity() const noexcept { return refs_ != nullptr; }
    std::size_t dimensionality() const noexcept { return refs_ ? refs_->size() : feature_dim_; }
    std::size_t feature_dimensionality() const noexcept { return feature_dim_; }
    const std::shared_ptr<const ReferenceSet>& references() const noexcept { return refs_; }

    ProjectedQuery project(const QueryGroup& q, std::size_t kappa) const {
        ProjectedQuery p;
        p.dim = dimensionality();
        p.features.reserve(q.documents.size() * p.dim);
        p.grades.reserve(q.documents.size());
        for (const auto& d : q.documents) {
            if (d.features.size() != feature_dim_) throw ValidationError("document dimensionality does not match model");
            if (refs_) {
                for (std::size_t m = 0; m < refs_->size(); ++m) {
                    const double n = refs_->doc_norm(m);
                    p.features.push_back(n == 0.0 ? 0.0 : dot(d.features, refs_->doc(m)) / n);
                }
            } else {
                p.features.insert(p.features.end(), d.features.begin(), d.features.end());
            }
            p.grades.push_back(d.relevance);
        }
        p.ideal_dcg = ideal_dcg_at_k(p.grades, kappa);
        return p;
    }

    std::vector<ProjectedQuery> project(std::span<const QueryGroup* const> qs, std::size_t kappa) const {
        std::vector<ProjectedQuery> out;
        out.reserve(qs.size());
        for (const auto* q : qs) out.push_back(project(*q, kappa));
        return out;
    }

    RankerModel model(Vector weights) const {
        if (weights.size() != dimensionality()) throw ValidationError("weight vector has wrong length");
        if (refs_) return SimilarityModel{std::move(weights), refs_};
        return LinearModel{std::move(weights)};
    }

private:
    std::size_t feature_dim_ = 0;
    std::shared_ptr<const ReferenceSet> refs_;
};

struct EngineState {
    RankerModel current_best;
    std::size_t t = 0;
    /// Current-best weights after impressions t-h..t (oldest first); holds at most h+1 entries.
    std::deque<Vector> history;
    Phase phase = Phase::simple;

    static EngineState starting_at(RankerModel model) {
        EngineState s{std::move(model), 0, {}, Phase::simple};
        s.history.push_back(weights_of(s.current_best));
        return s;
    }
};

struct ImpressionRecord {
    std::size_t t = 0;
    double displayed_ndcg = 0.0;
    std::optional<double> offline_ndcg;
    std::size_t winners_count = 0;
    Phase phase = Phase::simple;

    bool operator==(const ImpressionRecord&) const = default;
};

struct RunTrace {
    std::vector<ImpressionRecord> records;
    double online_performance = 0.0;
    double final_offline_ndcg = 0.0;
    std::optional<std::size_t> switch_impression;
    /// Held-out queries without any relevant document; they score NDCG 0.
    std::size_t zero_ideal_test_queries = 0;
    /// Displayed grades outside the click model's 0..4 range that were clamped.
    std::size_t clamped_grades = 0;
    RankerModel final_model;

    bool operator==(const RunTrace&) const = default;
};

/// Isotropic direction: independent standard normals scaled to unit L2 norm.
inline Vector sample_unit_vector(std::size_t dim, Rng& rng) {
    if (dim < 1) throw ValidationError("unit vector dimensionality must be >= 1");
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector u(dim);
    double n = 0.0;
    do {
        for (auto& v : u) v = gauss(rng);
        n = norm(u);
    } while (n == 0.0);
    for (auto& v : u) v /= n;
    return u;
}

/// w += eta * mean of the winning directions; untouched when nobody won.
inline void apply_update(Vector& weights, std::span<const Vector> directions, const WinnerSet& winners, double eta) {
    if (winners.empty()) return;
    const double step = eta / static_cast<double>(winners.size());
    for (auto j : winners) axpy(step, directions[j - 1], weights);
}

struct StepResult {
    ImpressionRecord record;
    /// directions[i-1] is the unit perturbation of candidate i.
    std::vector<Vector> directions;
    RankingSlate slate;
    MultileaveOutcome outcome;
    ClickVector clicks;
    WinnerSet winners;
};

/// One impression of multileave gradient descent on `query`, mutating `state`.
inline StepResult mgd_step(EngineState& state, const ProjectedQuery& query, const EngineConfig& cfg,
                           const ClickModelParams& click_model, Rng& rng, std::size_t* clamped = nullptr) {
    const Vector& w0 = weights_of(state.current_best);
    if (w0.size() != query.dim) throw ValidationError("model dimensionality does not match projected query");

    StepResult res;
    res.slate.lists.reserve(cfg.n + 1);
    res.slate.lists.push_back(rank_by_scores(query.scores(w0)));
    res.directions.reserve(cfg.n);
    Vector candidate(w0.size());
    for (std::size_t i = 0; i < cfg.n; ++i) {
        res.directions.push_back(sample_unit_vector(w0.size(), rng));
        for (std::size_t k = 0; k < w0.size(); ++k) candidate[k] = w0[k] + cfg.delta * res.directions.back()[k];
        res.slate.lists.push_back(rank_by_scores(query.scores(candidate)));
    }

    if (cfg.comparison == ComparisonMethod::team_draft)
        res.outcome = team_draft_multileave(res.slate, cfg.kappa, rng);
    else
        res.outcome = probabilistic_multileave(res.slate, cfg.kappa, rng, {cfg.tau});

    std::vector<int> shown_grades;
    shown_grades.reserve(res.outcome.displayed.size());
    for (auto d : res.outcome.displayed) shown_grades.push_back(query.grades[d]);
    res.clicks = simulate_clicks(click_model, shown_grades, rng, clamped);

    if (cfg.comparison == ComparisonMethod::team_draft)
        res.winners = team_draft_infer(res.outcome, res.clicks);
    else
        res.winners = probabilistic_infer(res.outcome, res.clicks, cfg.inference_samples, rng);

    ++state.t;
    res.record.t = state.t;
    res.record.displayed_ndcg = query.ideal_dcg > 0.0 ? dcg_at_k(shown_grades, cfg.kappa) / query.ideal_dcg : 0.0;
    res.record.winners_count = res.winners.size();

    if (!res.winners.empty()) {
        Vector w = w0;
        apply_update(w, res.directions, res.winners, cfg.eta);
        state.current_best = with_weights(state.current_best, std::move(w));
    }
    if (state.phase == Phase::simple) {
        state.history.push_back(weights_of(state.current_best));
        while (state.history.size() > cfg.h + 1) state.history.pop_front();
    }
    res.record.phase = state.phase;
    return res;
}

/// True when the weights after impression t and after impression t-h point in
/// nearly the same direction: 1 - cos < epsilon. Never true before t = h, with a
/// zero endpoint, or once the complex phase is active.
inline bool detect_convergence(const EngineState& state, std::size_t h, double epsilon) {
    if (state.phase != Phase::simple || state.t < h || state.history.size() < h + 1) return false;
    const auto& now = state.history.back();
    const auto& then = state.history[state.history.size() - 1 - h];
    const double na = norm(now);
    const double nb = norm(then);
    if (na == 0.0 || nb == 0.0) return false;
    return 1.0 - dot(now, then) / (na * nb) < epsilon;
}

/// Moves a converged similarity model into linear space. The converted weights
/// are rescaled to |w_simple| * sqrt(D_simple) / sqrt(D_complex); a zero
/// conversion carries over unscaled.
inline void cascade_switch(EngineState& state, std::size_t simple_dim, std::size_t complex_dim) {
    if (state.phase != Phase::simple) throw ValidationError("cascade switch requested in the complex phase");
    const auto* sm = std::get_if<SimilarityModel>(&state.current_best);
    if (!sm) throw ValidationError("cascade switch requires a similarity model");
    auto converted = convert_sim_to_linear(*sm);
    const double converted_norm = norm(converted.weights);
    if (converted_norm > 0.0) {
        const double factor = norm(sm->weights) / converted_norm *
                              (std::sqrt(static_cast<double>(simple_dim)) / std::sqrt(static_cast<double>(complex_dim)));
        for (auto& v : converted.weights) v *= factor;
    }
    state.current_best = std::move(converted);
    state.phase = Phase::complex;
    state.history.clear();
}

inline double mean_offline_ndcg(std::span<const ProjectedQuery> queries, std::span<const double> weights,
                                std::size_t kappa) {
    if (queries.empty()) return 0.0;
    double total = 0.0;
    for (const auto& q : queries) total += q.ndcg_of(rank_by_scores(q.scores(weights)), kappa);
    return total / static_cast<double>(queries.size());
}

/// Train/test query sets of one run.
struct RunInputs {
    std::vector<const QueryGroup*> train;
    std::vector<const QueryGroup*> test;

    static RunInputs from_fold(const Dataset& ds, std::size_t fold) {
        auto view = ds.fold_view(fold);
        if (view.train.empty()) throw ValidationError("fold " + std::to_string(fold + 1) + " has no training queries");
        return {std::move(view.train), std::move(view.test)};
    }
};

/// The shared impression loop. With `cascade_to` set the run starts in the
/// state's (similarity) space and switches to `cascade_to` on convergence.
inline RunTrace run_learning(const RunInputs& inputs, EngineState state, const ModelSpace& start_space,
                             const ModelSpace* cascade_to, const EngineConfig& cfg, const ClickModelParams& click_model,
                             std::size_t impressions, Rng& rng) {
    cfg.validate();
    click_model.validate();
    if (impressions < 1) throw ValidationError("impressions must be >= 1");
    if (inputs.train.empty()) throw ValidationError("no training queries");
    if (cascade_to && !start_space.is_similarity()) throw ValidationError("cascade must start in a similarity space");

    const ModelSpace* space = state.phase == Phase::simple || !cascade_to ? &start_space : cascade_to;
    auto train = space->project(inputs.train, cfg.kappa);
    auto test = space->project(inputs.test, cfg.kappa);

    RunTrace trace;
    for (const auto& q : test)
        if (q.ideal_dcg <= 0.0) ++trace.zero_ideal_test_queries;
    trace.records.reserve(impressions);
    std::uniform_int_distribution<std::size_t> pick_query(0, train.size() - 1);
    std::vector<double> displayed;
    displayed.reserve(impressions);

    for (std::size_t i = 0; i < impressions; ++i) {
        const auto& q = train[pick_query(rng)];
        auto step = mgd_step(state, q, cfg, click_model, rng, &trace.clamped_grades);

        if (cascade_to && detect_convergence(state, cfg.h, cfg.epsilon)) {
            cascade_switch(state, start_space.dimensionality(), cascade_to->feature_dimensionality());
            trace.switch_impression = state.t;
            space = cascade_to;
            train = space->project(inputs.train, cfg.kappa);
            test = space->project(inputs.test, cfg.kappa);
        }

        auto& rec = step.record;
        if (state.t % cfg.record_every == 0 || i + 1 == impressions)
            rec.offline_ndcg = mean_offline_ndcg(test, weights_of(state.current_best), cfg.kappa);
        displayed.push_back(rec.displayed_ndcg);
        trace.records.push_back(rec);
    }
    trace.online_performance = online_performance(displayed, cfg.gamma);
    trace.final_offline_ndcg = *trace.records.back().offline_ndcg;
    trace.final_model = state.current_best;
    return trace;
}

/// Linear model learned from w = 0 (plain MGD).
inline RunTrace run_mgd(const Dataset& ds, std::size_t fold, const EngineConfig& cfg,
                        const ClickModelParams& click_model, std::size_t impressions, Rng& rng) {
    auto inputs = RunInputs::from_fold(ds, fold);
    auto space = ModelSpace::linear(ds.dimensionality);
    return run_learning(inputs, EngineState::starting_at(space.model(Vector(space.dimensionality(), 0.0))), space,
                        nullptr, cfg, click_model, impressions, rng);
}

/// How a similarity run obtains its reference documents.
struct ReferenceConfig {
    std::size_t M = 50;
    ReferenceSelection selection = ReferenceSelection::uniform;
    /// Used verbatim (after normalization) when selection == fixed.
    std::vector<Vector> fixed;

    bool operator==(const ReferenceConfig&) const = default;
};

inline std::shared_ptr<const ReferenceSet> make_references(const ReferenceConfig& rc,
                                                           std::span<const QueryGroup* const> train, Rng& rng) {
    switch (rc.selection) {
        case ReferenceSelection::uniform:
            return std::make_shared<const ReferenceSet>(select_references_uniform(train, rc.M, rng));
        case ReferenceSelection::kmeans:
            return std::make_shared<const ReferenceSet>(select_references_kmeans(train, rc.M, rng));
        case ReferenceSelection::fixed:
            return std::make_shared<const ReferenceSet>(rc.fixed, ReferenceSelection::fixed);
    }
    throw ValidationError("unknown reference selection");
}

/// Similarity model over references sampled once from the training queries.
inline RunTrace run_sim_mgd(const Dataset& ds, std::size_t fold, const EngineConfig& cfg, const ReferenceConfig& refs,
                            const ClickModelParams& click_model, std::size_t impressions, Rng& rng) {
    auto inputs = RunInputs::from_fold(ds, fold);
    auto space = ModelSpace::similarity(make_references(refs, inputs.train, rng));
    return run_learning(inputs, EngineState::starting_at(space.model(Vector(space.dimensionality(), 0.0))), space,
                        nullptr, cfg, click_model, impressions, rng);
}

/// Sim-MGD until convergence is detected, then MGD in the linear space.
inline RunTrace run_cmgd(const Dataset& ds, std::size_t fold, const EngineConfig& cfg, const ReferenceConfig& refs,
                         const ClickModelParams& click_model, std::size_t impressions, Rng& rng) {
    auto inputs = RunInputs::from_fold(ds, fold);
    auto simple = ModelSpace::similarity(make_references(refs, inputs.train, rng));
    auto complex = ModelSpace::linear(ds.dimensionality);
    return run_learning(inputs, EngineState::starting_at(simple.model(Vector(simple.dimensionality(), 0.0))), simple,
                        &complex, cfg, click_model, impressions, rng);
}

}  // namespace oltr
