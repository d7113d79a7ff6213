#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oltr/evaluation.hpp"
#include "oltr/letor_data.hpp"
#include "oltr/ranking_models.hpp"

using namespace oltr;

namespace {

Dataset parse_text(const std::string& text, std::optional<std::size_t> hint = std::nullopt) {
    std::istringstream in(text);
    return parse_letor(in, hint);
}

// Hand parse used as the oracle: whitespace split, then split every pair on ':'.
struct OracleDoc {
    std::string qid;
    int label = 0;
    std::map<std::size_t, double> values;
    std::string docid;
};

std::vector<OracleDoc> oracle_parse(const std::string& text) {
    std::vector<OracleDoc> docs;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::string comment;
        if (auto h = line.find('#'); h != std::string::npos) {
            comment = line.substr(h + 1);
            line.resize(h);
        }
        std::istringstream tok(line);
        std::vector<std::string> parts;
        for (std::string p; tok >> p;) parts.push_back(p);
        if (parts.empty()) continue;
        OracleDoc d;
        d.label = std::stoi(parts[0]);
        d.qid = parts[1].substr(4);
        for (std::size_t i = 2; i < parts.size(); ++i) {
            auto c = parts[i].find(':');
            d.values[std::stoul(parts[i].substr(0, c))] = std::stod(parts[i].substr(c + 1));
        }
        std::istringstream ct(comment);
        std::string a, b, c;
        if (ct >> a >> b >> c && a == "docid" && b == "=") d.docid = c;
        docs.push_back(d);
    }
    return docs;
}

const char* kTenLines =
    "2 qid:10 1:0.1 2:0.2 3:0.3 # docid = A1\n"
    "0 qid:10 1:1.5 4:-2 # docid = A2\n"
    "1 qid:11 2:7 # docid = B1\n"
    "\n"
    "3 qid:10 1:0 2:0 3:0 4:0 5:9.25 # docid = A3\n"
    "0 qid:12 1:1e-3 # docid = C1\n"
    "4 qid:11 1:0.5 5:0.5 # docid = B2\n"
    "1 qid:12 3:3 # docid = C2\n"
    "  0   qid:13\t1:2   2:4 # docid = D1\n"
    "2 qid:13 2:8\n"
    "0 qid:11 4:1.25 # docid = B3\n";

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("oltr_letor_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST(ParseLetor, SparseFeaturesAreZeroFilled) {
    auto ds = parse_text("1 qid:7 1:0.5 3:1.0");
    ASSERT_EQ(ds.queries.size(), 1u);
    EXPECT_EQ(ds.queries[0].query_id, "7");
    ASSERT_EQ(ds.queries[0].documents.size(), 1u);
    EXPECT_EQ(ds.queries[0].documents[0].features, (Vector{0.5, 0.0, 1.0}));
    EXPECT_EQ(ds.queries[0].documents[0].relevance, 1);
    EXPECT_EQ(ds.dimensionality, 3u);
}

TEST(ParseLetor, GroupsLinesByQuery) {
    auto ds = parse_text("0 qid:a 1:0.0\n2 qid:a 2:3.5\n");
    ASSERT_EQ(ds.queries.size(), 1u);
    EXPECT_EQ(ds.queries[0].query_id, "a");
    EXPECT_EQ(ds.queries[0].documents.size(), 2u);
    EXPECT_EQ(ds.dimensionality, 2u);
    EXPECT_EQ(ds.queries[0].documents[1].features, (Vector{0.0, 3.5}));
    EXPECT_EQ(ds.max_grade, 2);
}

TEST(ParseLetor, HandWrittenFileMatchesLineSplitOracle) {
    auto ds = parse_text(kTenLines);
    auto oracle = oracle_parse(kTenLines);
    ASSERT_EQ(oracle.size(), 10u);

    std::size_t max_fid = 0;
    std::vector<std::string> qorder;
    for (const auto& d : oracle) {
        if (!d.values.empty()) max_fid = std::max(max_fid, d.values.rbegin()->first);
        if (std::find(qorder.begin(), qorder.end(), d.qid) == qorder.end()) qorder.push_back(d.qid);
    }
    EXPECT_EQ(ds.dimensionality, max_fid);
    ASSERT_EQ(ds.queries.size(), qorder.size());
    for (std::size_t qi = 0; qi < qorder.size(); ++qi) {
        const auto& q = ds.queries[qi];
        EXPECT_EQ(q.query_id, qorder[qi]);
        std::size_t k = 0;
        for (const auto& od : oracle) {
            if (od.qid != q.query_id) continue;
            ASSERT_LT(k, q.documents.size());
            const auto& doc = q.documents[k];
            EXPECT_EQ(doc.relevance, od.label);
            ASSERT_EQ(doc.features.size(), max_fid);
            for (std::size_t f = 1; f <= max_fid; ++f) {
                auto it = od.values.find(f);
                EXPECT_EQ(doc.features[f - 1], it == od.values.end() ? 0.0 : it->second) << q.query_id << " doc " << k;
            }
            EXPECT_EQ(doc.doc_id, od.docid.empty() ? "d" + std::to_string(k) : od.docid);
            ++k;
        }
        EXPECT_EQ(k, q.documents.size());
    }
}

TEST(ParseLetor, ErrorsCarryLineNumbers) {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse_text(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of("1 qid:1 1:0\nx qid:1 1:0\n"), 2u);
    EXPECT_EQ(line_of("1 qid:1 1:0\n\n1 q:1 1:0\n"), 3u);
    EXPECT_EQ(line_of("1 qid:1 1:abc\n"), 1u);
    EXPECT_EQ(line_of("1 qid:1 2:1 1:1\n"), 1u);
    EXPECT_EQ(line_of("1 qid:1 0:1\n"), 1u);
    EXPECT_EQ(line_of("1 qid:1 1:1\n1 qid:1 1\n"), 2u);
    EXPECT_EQ(line_of("-1 qid:1 1:1\n"), 1u);
    EXPECT_EQ(line_of("1\n"), 1u);
}

TEST(ParseLetor, DimensionalityHintMustMatch) {
    EXPECT_NO_THROW(parse_text("1 qid:1 3:1\n", 3));
    EXPECT_THROW(parse_text("1 qid:1 3:1\n", 4), ValidationError);
}

TEST(ParseLetor, CommentsAndBlankLinesIgnored) {
    auto ds = parse_text("# header comment\n\n1 qid:1 1:2 # trailing\n   \n");
    ASSERT_EQ(ds.queries.size(), 1u);
    EXPECT_EQ(ds.queries[0].documents[0].features, (Vector{2.0}));
}

TEST(WriteLetor, RoundTripsExactly) {
    SyntheticSpec spec;
    spec.num_queries = 6;
    spec.docs_per_query = 7;
    spec.dimensionality = 5;
    spec.noise_level = 0.37;
    spec.seed = 3;
    auto ds = generate_synthetic(spec);
    std::ostringstream out;
    write_letor(out, ds);
    auto back = parse_text(out.str());
    back.folds = ds.folds;
    back.max_grade = ds.max_grade;
    EXPECT_EQ(back, ds);
}

TEST(NormalizePerQuery, MinMaxArithmetic) {
    Dataset ds;
    ds.dimensionality = 2;
    ds.max_grade = 1;
    ds.queries.push_back({"q", {{{2, 5}, 0, "a"}, {{4, 5}, 1, "b"}, {{6, 5}, 0, "c"}}});
    auto n = normalize_per_query(ds);
    std::vector<double> col0, col1;
    for (const auto& d : n.queries[0].documents) {
        col0.push_back(d.features[0]);
        col1.push_back(d.features[1]);
    }
    EXPECT_EQ(col0, (std::vector<double>{0.0, 0.5, 1.0}));
    EXPECT_EQ(col1, (std::vector<double>{0.0, 0.0, 0.0}));
    EXPECT_EQ(n.queries[0].documents[1].relevance, 1);
}

TEST(NormalizePerQuery, MatchesTwoPassOracle) {
    std::mt19937 gen(99);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    Dataset ds;
    ds.dimensionality = 4;
    ds.max_grade = 2;
    for (int qi = 0; qi < 3; ++qi) {
        QueryGroup q{"q" + std::to_string(qi), {}};
        for (int k = 0; k < 5 + qi; ++k) q.documents.push_back({{u(gen), u(gen), 3.0, u(gen)}, k % 3, ""});
        ds.queries.push_back(q);
    }
    auto n = normalize_per_query(ds);
    for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
        const auto& docs = ds.queries[qi].documents;
        for (std::size_t j = 0; j < 4; ++j) {
            double lo = 1e300, hi = -1e300;
            for (const auto& d : docs) lo = std::min(lo, d.features[j]);
            for (const auto& d : docs) hi = std::max(hi, d.features[j]);
            for (std::size_t k = 0; k < docs.size(); ++k) {
                double expect = hi == lo ? 0.0 : (docs[k].features[j] - lo) / (hi - lo);
                EXPECT_NEAR(n.queries[qi].documents[k].features[j], expect, 1e-15);
            }
        }
    }
}

TEST(GenerateSynthetic, DeterministicForSeed) {
    SyntheticSpec spec;
    spec.num_queries = 10;
    spec.noise_level = 0.2;
    EXPECT_EQ(generate_synthetic(spec), generate_synthetic(spec));
    auto other = spec;
    other.seed = 1;
    EXPECT_NE(generate_synthetic(spec), generate_synthetic(other));
}

TEST(GenerateSynthetic, NoiselessFirstFeatureIsScaledGrade) {
    SyntheticSpec spec;
    spec.num_queries = 5;
    auto ds = generate_synthetic(spec);
    EXPECT_NO_THROW(ds.validate());
    for (const auto& q : ds.queries)
        for (const auto& d : q.documents) EXPECT_DOUBLE_EQ(d.features[0], d.relevance / 4.0);
}

TEST(GenerateSynthetic, FirstFeatureAloneRanksNearPerfectly) {
    SyntheticSpec spec;
    spec.num_queries = 20;
    spec.docs_per_query = 50;
    spec.dimensionality = 5;
    spec.seed = 1;
    auto ds = generate_synthetic(spec);
    LinearModel f1{{1.0, 0.0, 0.0, 0.0, 0.0}};
    double total = 0.0;
    for (const auto& q : ds.queries) {
        std::vector<int> pool, shown;
        for (const auto& d : q.documents) pool.push_back(d.relevance);
        for (auto i : rank(f1, q)) shown.push_back(q.documents[i].relevance);
        total += ndcg_at_k(shown, pool, 10);
    }
    EXPECT_GE(total / 20.0, 0.99);
}

TEST(GenerateSynthetic, RejectsInvalidSpecs) {
    SyntheticSpec spec;
    spec.dimensionality = 1;
    EXPECT_THROW(generate_synthetic(spec), ValidationError);
    spec = {};
    spec.docs_per_query = 1;
    EXPECT_THROW(generate_synthetic(spec), ValidationError);
    spec = {};
    spec.relevant_fraction = 1.5;
    EXPECT_THROW(generate_synthetic(spec), ValidationError);
}

TEST(Dataset, ValidateCatchesBrokenInvariants) {
    auto ds = parse_text("1 qid:a 1:1\n0 qid:b 1:2\n");
    ds.folds = {{{"a"}, {}, {"b"}}};
    EXPECT_NO_THROW(ds.validate());
    ds.folds = {{{"a"}, {}, {"a"}}};
    EXPECT_THROW(ds.validate(), ValidationError);
    ds.folds = {{{"a"}, {}, {"zzz"}}};
    EXPECT_THROW(ds.validate(), ValidationError);
}

TEST(LoadDataset, FoldDirectoryLayout) {
    auto dir = temp_dir("folds");
    const char* files[2][3] = {{"1 qid:1 1:1\n0 qid:1 1:0\n", "2 qid:2 2:1\n", "0 qid:3 1:1 3:1\n1 qid:3 1:0\n"},
                               {"2 qid:2 2:1\n", "0 qid:3 1:1 3:1\n1 qid:3 1:0\n", "1 qid:1 1:1\n0 qid:1 1:0\n"}};
    for (int f = 0; f < 2; ++f) {
        auto fd = dir / ("Fold" + std::to_string(f + 1));
        std::filesystem::create_directories(fd);
        std::ofstream(fd / "train.txt") << files[f][0];
        std::ofstream(fd / "vali.txt") << files[f][1];
        std::ofstream(fd / "test.txt") << files[f][2];
    }
    auto ds = load_dataset(dir);
    EXPECT_EQ(ds.num_folds(), 2u);
    EXPECT_EQ(ds.queries.size(), 3u);
    EXPECT_EQ(ds.dimensionality, 3u);
    EXPECT_EQ(ds.folds[0].train, std::vector<std::string>{"1"});
    EXPECT_EQ(ds.folds[1].test, std::vector<std::string>{"1"});
    EXPECT_EQ(ds.fold_view(1).validation.front()->documents.size(), 2u);
    std::filesystem::remove_all(dir);
}

TEST(LoadDataset, SingleFileUsesSplitRatio) {
    auto dir = temp_dir("single");
    std::ofstream out(dir / "all.txt");
    for (int q = 0; q < 10; ++q) out << q % 2 << " qid:" << q << " 1:" << q << "\n";
    out.close();
    auto ds = load_dataset(dir / "all.txt", {0.6, 0.2});
    ASSERT_EQ(ds.num_folds(), 1u);
    EXPECT_EQ(ds.folds[0].train.size(), 6u);
    EXPECT_EQ(ds.folds[0].validation.size(), 2u);
    EXPECT_EQ(ds.folds[0].test.size(), 2u);
    std::filesystem::remove_all(dir);
}
