#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "common.hpp"

namespace oltr {

struct Document {
    Vector features;
    int relevance = 0;
    std::string doc_id;

    bool operator==(const Document&) const = default;
};

struct QueryGroup {
    std::string query_id;
    std::vector<Document> documents;

    bool operator==(const QueryGroup&) const = default;
};

struct FoldSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;

    bool operator==(const FoldSplit&) const = default;
};

/// Queries resolved from a fold's id lists.
struct FoldView {
    std::vector<const QueryGroup*> train;
    std::vector<const QueryGroup*> validation;
    std::vector<const QueryGroup*> test;
};

struct Dataset {
    std::size_t dimensionality = 0;
    std::vector<QueryGroup> queries;
    std::vector<FoldSplit> folds;
    int max_grade = 0;

    bool operator==(const Dataset&) const = default;

    std::size_t num_folds() const noexcept { return folds.size(); }

    FoldView fold_view(std::size_t fold) const {
        if (fold >= folds.size()) throw ValidationError("fold index out of range: " + std::to_string(fold));
        std::unordered_map<std::string_view, const QueryGroup*> by_id;
        for (const auto& q : queries) by_id.emplace(q.query_id, &q);
        auto resolve = [&](const std::vector<std::string>& ids) {
            std::vector<const QueryGroup*> out;
            out.reserve(ids.size());
            for (const auto& id : ids) {
                auto it = by_id.find(id);
                if (it == by_id.end()) throw ValidationError("split references unknown query id '" + id + "'");
                out.push_back(it->second);
            }
            return out;
        };
        const auto& f = folds[fold];
        return {resolve(f.train), resolve(f.validation), resolve(f.test)};
    }

    /// Throws ValidationError when any dataset invariant is broken.
    void validate() const {
        if (dimensionality == 0) throw ValidationError("dataset dimensionality must be positive");
        std::unordered_map<std::string_view, int> seen;
        for (const auto& q : queries) {
            if (q.documents.empty()) throw ValidationError("query '" + q.query_id + "' has no documents");
            if (!seen.emplace(q.query_id, 0).second)
                throw ValidationError("duplicate query id '" + q.query_id + "'");
            for (const auto& d : q.documents) {
                if (d.features.size() != dimensionality)
                    throw ValidationError("document in query '" + q.query_id + "' has wrong dimensionality");
                if (d.relevance < 0 || d.relevance > max_grade)
                    throw ValidationError("relevance out of range in query '" + q.query_id + "'");
            }
        }
        for (std::size_t f = 0; f < folds.size(); ++f) {
            std::unordered_map<std::string_view, int> owner;
            int part = 0;
            for (const auto* ids : {&folds[f].train, &folds[f].validation, &folds[f].test}) {
                for (const auto& id : *ids) {
                    if (!seen.contains(id))
                        throw ValidationError("fold " + std::to_string(f + 1) + " references unknown query '" + id + "'");
                    if (!owner.emplace(id, part).second)
                        throw ValidationError("fold " + std::to_string(f + 1) + " places query '" + id +
                                              "' in more than one partition");
                }
                ++part;
            }
        }
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::optional<std::string> docid_from_comment(std::string_view comment) {
    auto pos = comment.find("docid");
    if (pos == std::string_view::npos) return std::nullopt;
    auto rest = trim(comment.substr(pos + 5));
    if (rest.empty() || rest.front() != '=') return std::nullopt;
    rest = trim(rest.substr(1));
    auto end = rest.find_first_of(" \t");
    auto id = rest.substr(0, end);
    if (id.empty()) return std::nullopt;
    return std::string(id);
}

struct SparseDoc {
    std::vector<std::pair<std::size_t, double>> entries;
    int relevance = 0;
    std::string doc_id;
};

struct SparseQuery {
    std::string query_id;
    std::vector<SparseDoc> documents;
};

}  // namespace detail

/// Incremental LETOR/SVMLight reader. Several streams (e.g. the train/vali/test
/// files of every fold) can be fed before the dense Dataset is materialized.
///
/// A query id seen in an earlier stream is not duplicated; its second occurrence
/// must carry the same number of documents. Within one stream, lines of the same
/// query are grouped even when not contiguous.
class LetorParser {
public:
    /// Parses one stream; returns the query ids it contained, in first-appearance order.
    std::vector<std::string> feed(std::istream& in, std::string_view source = "<input>") {
        std::vector<std::string> order;
        std::unordered_map<std::string, detail::SparseQuery> local;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view view(line);
            std::string_view comment;
            if (auto hash = view.find('#'); hash != std::string_view::npos) {
                comment = view.substr(hash + 1);
                view = view.substr(0, hash);
            }
            view = detail::trim(view);
            if (view.empty()) continue;
            auto fail = [&](const std::string& what) -> ParseError {
                return ParseError(std::string(source) + ": " + what, line_no);
            };

            std::vector<std::string_view> tokens;
            for (std::size_t pos = 0; pos < view.size();) {
                auto b = view.find_first_not_of(" \t", pos);
                if (b == std::string_view::npos) break;
                auto e = view.find_first_of(" \t", b);
                if (e == std::string_view::npos) e = view.size();
                tokens.push_back(view.substr(b, e - b));
                pos = e;
            }
            if (tokens.size() < 2) throw fail("expected '<label> qid:<id> ...'");

            detail::SparseDoc doc;
            {
                auto tok = tokens[0];
                auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), doc.relevance);
                if (ec != std::errc{} || p != tok.data() + tok.size() || doc.relevance < 0)
                    throw fail("malformed relevance label '" + std::string(tok) + "'");
            }
            if (!tokens[1].starts_with("qid:") || tokens[1].size() == 4)
                throw fail("malformed qid token '" + std::string(tokens[1]) + "'");
            std::string qid(tokens[1].substr(4));

            std::size_t last_fid = 0;
            for (std::size_t i = 2; i < tokens.size(); ++i) {
                auto tok = tokens[i];
                auto colon = tok.find(':');
                if (colon == std::string_view::npos || colon == 0 || colon + 1 == tok.size())
                    throw fail("malformed feature pair '" + std::string(tok) + "'");
                std::size_t fid = 0;
                auto [fp, fec] = std::from_chars(tok.data(), tok.data() + colon, fid);
                if (fec != std::errc{} || fp != tok.data() + colon || fid == 0)
                    throw fail("malformed feature id in '" + std::string(tok) + "'");
                if (fid <= last_fid) throw fail("feature ids must be strictly increasing");
                double value = 0.0;
                auto vb = tok.data() + colon + 1;
                auto [vp, vec] = std::from_chars(vb, tok.data() + tok.size(), value);
                if (vec != std::errc{} || vp != tok.data() + tok.size())
                    throw fail("malformed feature value in '" + std::string(tok) + "'");
                last_fid = fid;
                doc.entries.emplace_back(fid, value);
            }
            max_fid_ = std::max(max_fid_, last_fid);
            max_grade_ = std::max(max_grade_, doc.relevance);
            if (auto id = detail::docid_from_comment(comment)) doc.doc_id = std::move(*id);

            auto [it, inserted] = local.try_emplace(qid);
            if (inserted) {
                it->second.query_id = qid;
                order.push_back(qid);
            }
            it->second.documents.push_back(std::move(doc));
        }
        if (in.bad()) throw Error(std::string(source) + ": read failure");

        for (const auto& qid : order) {
            auto& q = local.at(qid);
            if (auto existing = index_.find(qid); existing != index_.end()) {
                if (queries_[existing->second].documents.size() != q.documents.size())
                    throw ValidationError(std::string(source) + ": query '" + qid +
                                          "' repeats with a different document count");
                continue;
            }
            index_.emplace(qid, queries_.size());
            queries_.push_back(std::move(q));
        }
        return order;
    }

    /// Densifies everything fed so far. A dimensionality hint must agree with
    /// the largest feature id observed.
    Dataset finish(std::optional<std::size_t> dimensionality_hint = std::nullopt) const {
        if (dimensionality_hint && *dimensionality_hint != max_fid_)
            throw ValidationError("dimensionality hint " + std::to_string(*dimensionality_hint) +
                                  " disagrees with max feature id " + std::to_string(max_fid_));
        if (max_fid_ == 0) throw ValidationError("no feature values found");
        Dataset ds;
        ds.dimensionality = max_fid_;
        ds.max_grade = max_grade_;
        ds.queries.reserve(queries_.size());
        for (const auto& sq : queries_) {
            QueryGroup q{sq.query_id, {}};
            q.documents.reserve(sq.documents.size());
            for (std::size_t k = 0; k < sq.documents.size(); ++k) {
                const auto& sd = sq.documents[k];
                Document d;
                d.features.assign(max_fid_, 0.0);
                for (auto [fid, v] : sd.entries) d.features[fid - 1] = v;
                d.relevance = sd.relevance;
                d.doc_id = sd.doc_id.empty() ? "d" + std::to_string(k) : sd.doc_id;
                q.documents.push_back(std::move(d));
            }
            ds.queries.push_back(std::move(q));
        }
        return ds;
    }

private:
    std::vector<detail::SparseQuery> queries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t max_fid_ = 0;
    int max_grade_ = 0;
};

/// Parses a single LETOR text stream. The result has no fold splits.
inline Dataset parse_letor(std::istream& in, std::optional<std::size_t> dimensionality_hint = std::nullopt) {
    LetorParser parser;
    parser.feed(in);
    return parser.finish(dimensionality_hint);
}

/// Canonical dense writer: `<label> qid:<qid> 1:<v1> ... D:<vD> # docid = <id>`.
inline void write_letor(std::ostream& out, const Dataset& ds) {
    for (const auto& q : ds.queries) {
        for (const auto& d : q.documents) {
            out << d.relevance << " qid:" << q.query_id;
            for (std::size_t i = 0; i < d.features.size(); ++i) out << ' ' << (i + 1) << ':' << format_double(d.features[i]);
            if (!d.doc_id.empty()) out << " # docid = " << d.doc_id;
            out << '\n';
        }
    }
}

struct SplitRatio {
    double train = 0.6;
    double validation = 0.2;

    bool operator==(const SplitRatio&) const = default;
};

/// Assigns one fold by cutting the query list, in dataset order, at the given fractions.
inline void assign_single_fold(Dataset& ds, SplitRatio ratio) {
    if (ratio.train <= 0.0 || ratio.validation < 0.0 || ratio.train + ratio.validation > 1.0)
        throw ValidationError("split ratio must satisfy 0 < train, 0 <= validation, train + validation <= 1");
    const auto n = ds.queries.size();
    auto n_train = static_cast<std::size_t>(std::llround(ratio.train * static_cast<double>(n)));
    auto n_vali = static_cast<std::size_t>(std::llround(ratio.validation * static_cast<double>(n)));
    n_train = std::min(std::max<std::size_t>(n_train, 1), n);
    n_vali = std::min(n_vali, n - n_train);
    FoldSplit f;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& id = ds.queries[i].query_id;
        if (i < n_train)
            f.train.push_back(id);
        else if (i < n_train + n_vali)
            f.validation.push_back(id);
        else
            f.test.push_back(id);
    }
    ds.folds = {std::move(f)};
}

inline Dataset load_letor_file(const std::filesystem::path& path, SplitRatio ratio = {}) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset file " + path.string());
    LetorParser parser;
    parser.feed(in, path.string());
    auto ds = parser.finish();
    assign_single_fold(ds, ratio);
    return ds;
}

/// Reads the `Fold1..FoldK/{train,vali,test}.txt` layout.
inline Dataset load_letor_folds(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::map<int, fs::path> fold_dirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        auto name = entry.path().filename().string();
        if (!name.starts_with("Fold")) continue;
        int k = 0;
        auto [p, ec] = std::from_chars(name.data() + 4, name.data() + name.size(), k);
        if (ec == std::errc{} && p == name.data() + name.size() && k > 0) fold_dirs.emplace(k, entry.path());
    }
    if (fold_dirs.empty()) throw Error("no Fold<k> directories under " + dir.string());
    LetorParser parser;
    std::vector<FoldSplit> folds;
    for (const auto& [k, fold_dir] : fold_dirs) {
        FoldSplit split;
        for (auto [file, target] : {std::pair{"train.txt", &split.train}, std::pair{"vali.txt", &split.validation},
                                    std::pair{"test.txt", &split.test}}) {
            auto path = fold_dir / file;
            std::ifstream in(path);
            if (!in) throw Error("cannot open " + path.string());
            *target = parser.feed(in, path.string());
        }
        folds.push_back(std::move(split));
    }
    auto ds = parser.finish();
    ds.folds = std::move(folds);
    ds.validate();
    return ds;
}

/// Directory → fold layout; regular file → single fold cut by `ratio`.
inline Dataset load_dataset(const std::filesystem::path& path, SplitRatio ratio = {}) {
    if (std::filesystem::is_directory(path)) return load_letor_folds(path);
    return load_letor_file(path, ratio);
}

/// Per-query min-max scaling of every feature column to [0,1]; constant columns become 0.
inline Dataset normalize_per_query(Dataset ds) {
    for (auto& q : ds.queries) {
        for (std::size_t j = 0; j < ds.dimensionality; ++j) {
            double lo = q.documents.front().features[j];
            double hi = lo;
            for (const auto& d : q.documents) {
                lo = std::min(lo, d.features[j]);
                hi = std::max(hi, d.features[j]);
            }
            const double range = hi - lo;
            for (auto& d : q.documents) d.features[j] = range > 0.0 ? (d.features[j] - lo) / range : 0.0;
        }
    }
    return ds;
}

struct SyntheticSpec {
    std::size_t num_queries = 100;
    std::size_t docs_per_query = 50;
    std::size_t dimensionality = 10;
    double relevant_fraction = 0.2;
    double noise_level = 0.0;
    std::uint64_t seed = 0;
    int max_grade = 4;
    SplitRatio split{};

    bool operator==(const SyntheticSpec&) const = default;
};

/// Synthetic corpus: feature 1 is the relevance grade scaled to [0,1] plus
/// Gaussian noise of standard deviation `noise_level`; every other feature is
/// uniform noise on [0,1). A document is relevant with probability
/// `relevant_fraction`, with its grade then uniform on 1..max_grade.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.dimensionality < 2) throw ValidationError("synthetic dimensionality must be >= 2");
    if (spec.docs_per_query < 2) throw ValidationError("synthetic docs_per_query must be >= 2");
    if (spec.num_queries < 1) throw ValidationError("synthetic num_queries must be >= 1");
    if (!(spec.relevant_fraction >= 0.0 && spec.relevant_fraction <= 1.0))
        throw ValidationError("synthetic relevant_fraction must lie in [0,1]");
    if (!(spec.noise_level >= 0.0)) throw ValidationError("synthetic noise_level must be >= 0");
    if (spec.max_grade < 1) throw ValidationError("synthetic max_grade must be >= 1");

    Rng rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Dataset ds;
    ds.dimensionality = spec.dimensionality;
    ds.max_grade = spec.max_grade;
    ds.queries.reserve(spec.num_queries);
    for (std::size_t qi = 0; qi < spec.num_queries; ++qi) {
        QueryGroup q{"q" + std::to_string(qi + 1), {}};
        q.documents.reserve(spec.docs_per_query);
        for (std::size_t k = 0; k < spec.docs_per_query; ++k) {
            Document d;
            d.doc_id = q.query_id + "-" + std::to_string(k);
            if (uniform01(rng) < spec.relevant_fraction)
                d.relevance = 1 + static_cast<int>(uniform01(rng) * spec.max_grade);
            d.features.resize(spec.dimensionality);
            d.features[0] = static_cast<double>(d.relevance) / spec.max_grade;
            if (spec.noise_level > 0.0) d.features[0] += spec.noise_level * gauss(rng);
            for (std::size_t j = 1; j < spec.dimensionality; ++j) d.features[j] = uniform01(rng);
            q.documents.push_back(std::move(d));
        }
        ds.queries.push_back(std::move(q));
    }
    assign_single_fold(ds, spec.split);
    return ds;
}

}  // namespace oltr
