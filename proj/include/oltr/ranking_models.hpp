#pragma once

#include <algorithm>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "letor_data.hpp"

namespace oltr {

/// Direct linear scorer: score(d) = w . d
struct LinearModel {
    Vector weights;

    bool operator==(const LinearModel&) const = default;
};

enum class ReferenceSelection { uniform, kmeans, fixed };

inline std::string to_string(ReferenceSelection s) {
    switch (s) {
        case ReferenceSelection::uniform: return "uniform";
        case ReferenceSelection::kmeans: return "kmeans";
        case ReferenceSelection::fixed: return "fixed";
    }
    return "?";
}

inline ReferenceSelection reference_selection_from_string(const std::string& s) {
    if (s == "uniform") return ReferenceSelection::uniform;
    if (s == "kmeans" || s == "k-means") return ReferenceSelection::kmeans;
    if (s == "fixed") return ReferenceSelection::fixed;
    throw ValidationError("unknown reference selection '" + s + "'");
}

/// M unit-norm reference documents anchoring a similarity model.
class ReferenceSet {
public:
    ReferenceSet() = default;

    /// Normalizes every vector to unit L2 norm. Zero vectors are rejected.
    ReferenceSet(std::vector<Vector> docs, ReferenceSelection selection) : selection_(selection) {
        if (docs.empty()) throw ValidationError("reference set must contain at least one document");
        const auto dim = docs.front().size();
        for (auto& d : docs) {
            if (d.size() != dim) throw ValidationError("reference documents differ in dimensionality");
            const double n = norm(d);
            if (n == 0.0) throw ValidationError("zero vector cannot be a reference document");
            for (auto& v : d) v /= n;
            norms_.push_back(norm(d));
        }
        docs_ = std::move(docs);
    }

    std::size_t size() const noexcept { return docs_.size(); }
    std::size_t dimensionality() const noexcept { return docs_.empty() ? 0 : docs_.front().size(); }
    const std::vector<Vector>& docs() const noexcept { return docs_; }
    const Vector& doc(std::size_t m) const { return docs_[m]; }
    /// Stored L2 norm of reference m (1 up to rounding).
    double doc_norm(std::size_t m) const { return norms_[m]; }
    ReferenceSelection selection() const noexcept { return selection_; }

    bool operator==(const ReferenceSet& o) const { return docs_ == o.docs_ && selection_ == o.selection_; }

private:
    std::vector<Vector> docs_;
    Vector norms_;
    ReferenceSelection selection_ = ReferenceSelection::uniform;
};

/// Scores a document by its weighted similarity to each reference:
/// score(d) = sum_m (w_m / |d_m|) d . d_m
struct SimilarityModel {
    Vector weights;
    std::shared_ptr<const ReferenceSet> refs;

    bool operator==(const SimilarityModel& o) const {
        return weights == o.weights && (refs == o.refs || (refs && o.refs && *refs == *o.refs));
    }
};

using RankerModel = std::variant<LinearModel, SimilarityModel>;

/// Number of learnable weights: D for linear, M for similarity.
inline std::size_t dimensionality(const RankerModel& model) {
    return std::visit([](const auto& m) { return m.weights.size(); }, model);
}

/// Length of the document vectors the model scores.
inline std::size_t feature_dimensionality(const RankerModel& model) {
    if (auto* lin = std::get_if<LinearModel>(&model)) return lin->weights.size();
    return std::get<SimilarityModel>(model).refs->dimensionality();
}

inline const Vector& weights_of(const RankerModel& model) {
    return std::visit([](const auto& m) -> const Vector& { return m.weights; }, model);
}

/// Same model family and references, new weights.
inline RankerModel with_weights(const RankerModel& model, Vector weights) {
    if (weights.size() != dimensionality(model)) throw ValidationError("weight vector has wrong length");
    if (std::holds_alternative<LinearModel>(model)) return LinearModel{std::move(weights)};
    return SimilarityModel{std::move(weights), std::get<SimilarityModel>(model).refs};
}

inline double score(const LinearModel& model, std::span<const double> doc) {
    if (doc.size() != model.weights.size()) throw ValidationError("document dimensionality does not match model");
    return dot(model.weights, doc);
}

inline double score(const SimilarityModel& model, std::span<const double> doc) {
    const auto& refs = *model.refs;
    if (doc.size() != refs.dimensionality()) throw ValidationError("document dimensionality does not match model");
    double s = 0.0;
    for (std::size_t m = 0; m < refs.size(); ++m) {
        const double n = refs.doc_norm(m);
        if (n == 0.0) continue;
        s += model.weights[m] / n * dot(doc, refs.doc(m));
    }
    return s;
}

inline double score(const RankerModel& model, std::span<const double> doc) {
    return std::visit([&](const auto& m) { return score(m, doc); }, model);
}

inline double score(const RankerModel& model, const Document& doc) { return score(model, std::span<const double>(doc.features)); }

/// Indices sorted by descending score; equal scores keep ascending index order.
inline std::vector<std::size_t> rank_by_scores(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

inline std::vector<std::size_t> rank(const RankerModel& model, const QueryGroup& qg) {
    Vector scores;
    scores.reserve(qg.documents.size());
    for (const auto& d : qg.documents) scores.push_back(score(model, d));
    return rank_by_scores(scores);
}

/// w_lin = sum_m (w_m / |d_m|) d_m, so that w_lin . d equals the similarity score.
inline LinearModel convert_sim_to_linear(const SimilarityModel& sm) {
    const auto& refs = *sm.refs;
    Vector w(refs.dimensionality(), 0.0);
    for (std::size_t m = 0; m < refs.size(); ++m) {
        const double n = refs.doc_norm(m);
        if (n == 0.0) continue;
        axpy(sm.weights[m] / n, refs.doc(m), w);
    }
    return LinearModel{std::move(w)};
}

namespace detail {

inline std::vector<const Vector*> nonzero_documents(std::span<const QueryGroup* const> queries) {
    std::vector<const Vector*> out;
    for (const auto* q : queries)
        for (const auto& d : q->documents)
            if (!is_zero(d.features)) out.push_back(&d.features);
    return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace detail

/// M distinct query-document pairs drawn uniformly without replacement from the
/// nonzero training documents, then L2-normalized.
inline ReferenceSet select_references_uniform(std::span<const QueryGroup* const> train, std::size_t M, Rng& rng) {
    if (M == 0) throw ValidationError("reference set size M must be >= 1");
    auto pool = detail::nonzero_documents(train);
    if (pool.size() < M)
        throw ValidationError("only " + std::to_string(pool.size()) + " nonzero training documents for M=" +
                              std::to_string(M));
    // Partial Fisher-Yates: the first M slots become a uniform sample without replacement.
    std::vector<Vector> chosen;
    chosen.reserve(M);
    for (std::size_t i = 0; i < M; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        chosen.push_back(*pool[i]);
    }
    return ReferenceSet(std::move(chosen), ReferenceSelection::uniform);
}

struct KMeansOptions {
    std::size_t max_iterations = 300;
};

/// Result of Lloyd's algorithm; exposed so tests can inspect the clustering.
struct KMeansResult {
    std::vector<Vector> centroids;
    std::vector<std::size_t> assignment;
    std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding and Euclidean distance. An empty
/// cluster is re-seeded with the point farthest from its current centroid.
inline KMeansResult kmeans(std::span<const Vector> points, std::size_t k, Rng& rng, KMeansOptions opts = {}) {
    const std::size_t n = points.size();
    if (k == 0) throw ValidationError("k must be >= 1");
    {
        std::vector<const Vector*> sorted;
        for (const auto& p : points) sorted.push_back(&p);
        std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return *a < *b; });
        auto last = std::unique(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return *a == *b; });
        if (static_cast<std::size_t>(last - sorted.begin()) < k)
            throw ValidationError("fewer distinct points than clusters (k=" + std::to_string(k) + ")");
    }

    KMeansResult res;
    // k-means++ seeding
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    res.centroids.push_back(points[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    while (res.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], detail::squared_distance(points[i], res.centroids.back()));
            total += d2[i];
        }
        double target = uniform01(rng) * total;
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (d2[i] <= 0.0) continue;
            pick = i;
            target -= d2[i];
            if (target < 0.0) break;
        }
        res.centroids.push_back(points[pick]);
    }

    res.assignment.assign(n, k);
    const auto dim = points.front().size();
    for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = detail::squared_distance(points[i], res.centroids[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = detail::squared_distance(points[i], res.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (res.assignment[i] != best) {
                res.assignment[i] = best;
                changed = true;
            }
        }
        if (!changed) break;

        std::vector<Vector> sums(k, Vector(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            axpy(1.0, points[i], sums[res.assignment[i]]);
            ++counts[res.assignment[i]];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c] > 0) res.centroids[c] = scaled(sums[c], 1.0 / static_cast<double>(counts[c]));
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = detail::squared_distance(points[i], res.centroids[res.assignment[i]]);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            --counts[res.assignment[far]];
            res.assignment[far] = c;
            counts[c] = 1;
            res.centroids[c] = points[far];
        }
    }
    return res;
}

/// Clusters the L2-normalized nonzero training documents into M groups and uses
/// the re-normalized centroids as references.
inline ReferenceSet select_references_kmeans(std::span<const QueryGroup* const> train, std::size_t M, Rng& rng,
                                             KMeansOptions opts = {}) {
    if (M == 0) throw ValidationError("reference set size M must be >= 1");
    std::vector<Vector> points;
    for (const auto* doc : detail::nonzero_documents(train)) points.push_back(scaled(*doc, 1.0 / norm(*doc)));
    if (points.size() < M)
        throw ValidationError("only " + std::to_string(points.size()) + " nonzero training documents for M=" +
                              std::to_string(M));
    auto res = kmeans(points, M, rng, opts);
    for (std::size_t c = 0; c < M; ++c) {
        if (!is_zero(res.centroids[c])) continue;
        // Members cancelled out; fall back to the first member point.
        for (std::size_t i = 0; i < points.size(); ++i)
            if (res.assignment[i] == c) {
                res.centroids[c] = points[i];
                break;
            }
    }
    return ReferenceSet(std::move(res.centroids), ReferenceSelection::kmeans);
}

inline nlohmann::json to_json(const RankerModel& model) {
    nlohmann::json j;
    if (auto* lin = std::get_if<LinearModel>(&model)) {
        j["kind"] = "linear";
        j["weights"] = lin->weights;
    } else {
        const auto& sm = std::get<SimilarityModel>(model);
        j["kind"] = "similarity";
        j["weights"] = sm.weights;
        j["refs"] = {{"selection", to_string(sm.refs->selection())}, {"docs", sm.refs->docs()}};
    }
    return j;
}

inline RankerModel model_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    auto weights = j.at("weights").get<Vector>();
    if (kind == "linear") return LinearModel{std::move(weights)};
    if (kind != "similarity") throw ValidationError("unknown model kind '" + kind + "'");
    const auto& r = j.at("refs");
    auto refs = std::make_shared<const ReferenceSet>(r.at("docs").get<std::vector<Vector>>(),
                                                     reference_selection_from_string(r.at("selection").get<std::string>()));
    if (refs->size() != weights.size()) throw ValidationError("similarity weights and references differ in length");
    return SimilarityModel{std::move(weights), std::move(refs)};
}

}  // namespace oltr
