#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "click_simulation.hpp"
#include "engine.hpp"
#include "evaluation.hpp"
#include "letor_data.hpp"

namespace oltr {

using nlohmann::json;

enum class Algorithm { mgd, sim_mgd, cmgd };

inline std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::mgd: return "mgd";
        case Algorithm::sim_mgd: return "sim_mgd";
        case Algorithm::cmgd: return "cmgd";
    }
    return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
    if (s == "mgd") return Algorithm::mgd;
    if (s == "sim_mgd") return Algorithm::sim_mgd;
    if (s == "cmgd") return Algorithm::cmgd;
    throw ValidationError("algorithm: unknown value '" + s + "' (expected mgd, sim_mgd or cmgd)");
}

/// Either a LETOR path (file or Fold directory) or a synthetic generator spec.
struct DatasetSource {
    std::optional<std::filesystem::path> path;
    std::optional<SyntheticSpec> synthetic;
    bool normalize = true;
    SplitRatio split{};

    bool operator==(const DatasetSource&) const = default;
};

/// One algorithm setting; runs of every condition share seeds, so they pair up.
struct Condition {
    std::string name;
    Algorithm algorithm = Algorithm::mgd;
    ClickModelParams click_model = ClickModelParams::informational();
    EngineConfig engine{};
    ReferenceConfig references{};

    bool operator==(const Condition&) const = default;
};

struct ExperimentConfig {
    DatasetSource dataset;
    std::vector<Condition> conditions;
    std::optional<std::string> baseline;
    std::size_t impressions = 10000;
    std::size_t repeats = 125;
    std::uint64_t base_seed = 0;
    std::filesystem::path output_dir = "results";

    bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline const std::set<std::string>& condition_keys() {
    static const std::set<std::string> keys{"name",  "algorithm", "click_model",       "n",          "delta",
                                            "eta",   "kappa",     "h",                 "epsilon",    "inference_samples",
                                            "comparison", "record_every", "gamma",     "tau",        "M",
                                            "selection",  "references"};
    return keys;
}

inline const std::set<std::string>& top_level_keys() {
    static const std::set<std::string> keys{"dataset", "conditions", "baseline", "impressions",
                                            "repeats", "base_seed",  "output_dir"};
    return keys;
}

template <typename T>
T get_field(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(key + ": wrong type");
    }
}

inline std::size_t get_count(const json& j, const std::string& key, std::size_t fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ValidationError(key + ": must be a non-negative integer");
    return v.get<std::size_t>();
}

inline Condition parse_condition(const json& j, const std::string& default_name) {
    for (const auto& [key, _] : j.items())
        if (!condition_keys().contains(key))
            throw ValidationError(key + ": unknown configuration key");
    Condition c;
    if (!j.contains("algorithm")) throw ValidationError("algorithm: required field missing");
    c.algorithm = algorithm_from_string(get_field<std::string>(j, "algorithm", ""));
    c.name = get_field<std::string>(j, "name", default_name.empty() ? to_string(c.algorithm) : default_name);
    if (c.name.empty() || c.name.find_first_of("/\\ ,") != std::string::npos)
        throw ValidationError("name: condition names must be non-empty without '/', '\\', ',' or spaces");
    try {
        if (j.contains("click_model")) c.click_model = click_model_from_json(j.at("click_model"));
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("click_model: ") + e.what());
    }

    auto& e = c.engine;
    e.n = get_count(j, "n", e.n);
    e.delta = get_field<double>(j, "delta", e.delta);
    e.eta = get_field<double>(j, "eta", e.eta);
    e.kappa = get_count(j, "kappa", e.kappa);
    if (c.algorithm == Algorithm::cmgd) {
        if (!j.contains("h")) throw ValidationError("h: required for algorithm cmgd");
        if (!j.contains("epsilon")) throw ValidationError("epsilon: required for algorithm cmgd");
    }
    e.h = get_count(j, "h", e.h);
    e.epsilon = get_field<double>(j, "epsilon", e.epsilon);
    e.inference_samples = get_count(j, "inference_samples", e.inference_samples);
    if (j.contains("comparison")) e.comparison = comparison_method_from_string(get_field<std::string>(j, "comparison", ""));
    e.record_every = get_count(j, "record_every", e.record_every);
    e.gamma = get_field<double>(j, "gamma", e.gamma);
    e.tau = get_field<double>(j, "tau", e.tau);

    if (e.n < 1) throw ValidationError("n: must be >= 1");
    if (!(e.delta > 0.0)) throw ValidationError("delta: must be > 0");
    if (!(e.eta > 0.0)) throw ValidationError("eta: must be > 0");
    if (e.kappa < 1) throw ValidationError("kappa: must be >= 1");
    if (e.h < 1) throw ValidationError("h: must be >= 1");
    if (!(e.epsilon >= 0.0 && e.epsilon < 1.0)) throw ValidationError("epsilon: must lie in [0, 1)");
    if (e.inference_samples < 1) throw ValidationError("inference_samples: must be >= 1");
    if (e.record_every < 1) throw ValidationError("record_every: must be >= 1");
    if (!(e.gamma > 0.0 && e.gamma <= 1.0)) throw ValidationError("gamma: must lie in (0, 1]");
    if (!(e.tau > 0.0)) throw ValidationError("tau: must be > 0");

    auto& r = c.references;
    r.M = get_count(j, "M", r.M);
    if (j.contains("selection"))
        r.selection = reference_selection_from_string(get_field<std::string>(j, "selection", ""));
    if (j.contains("references")) {
        r.fixed = get_field<std::vector<Vector>>(j, "references", {});
        if (!j.contains("selection")) r.selection = ReferenceSelection::fixed;
    }
    if (c.algorithm != Algorithm::mgd) {
        if (r.selection == ReferenceSelection::fixed) {
            if (r.fixed.empty()) throw ValidationError("references: required when selection is fixed");
            r.M = r.fixed.size();
        } else if (r.M < 1) {
            throw ValidationError("M: must be >= 1");
        }
    }
    return c;
}

inline SyntheticSpec parse_synthetic(const json& j) {
    SyntheticSpec s;
    s.num_queries = get_count(j, "num_queries", s.num_queries);
    s.docs_per_query = get_count(j, "docs_per_query", s.docs_per_query);
    s.dimensionality = get_count(j, "dimensionality", get_count(j, "D", s.dimensionality));
    s.relevant_fraction = get_field<double>(j, "relevant_fraction", s.relevant_fraction);
    s.noise_level = get_field<double>(j, "noise_level", s.noise_level);
    s.seed = get_field<std::uint64_t>(j, "seed", s.seed);
    s.max_grade = get_field<int>(j, "max_grade", s.max_grade);
    if (j.contains("split")) {
        s.split.train = get_field<double>(j.at("split"), "train", s.split.train);
        s.split.validation = get_field<double>(j.at("split"), "validation", s.split.validation);
    }
    return s;
}

}  // namespace detail

inline json to_json(const SyntheticSpec& s) {
    return {{"num_queries", s.num_queries},
            {"docs_per_query", s.docs_per_query},
            {"dimensionality", s.dimensionality},
            {"relevant_fraction", s.relevant_fraction},
            {"noise_level", s.noise_level},
            {"seed", s.seed},
            {"max_grade", s.max_grade},
            {"split", {{"train", s.split.train}, {"validation", s.split.validation}}}};
}

/// Parses a synthetic generator spec (the `synth` subcommand input).
inline SyntheticSpec synthetic_spec_from_json(const json& j) { return detail::parse_synthetic(j); }

/// Validates a config document. Engine fields given at the top level are
/// defaults for every condition; a `conditions` array overrides them per entry.
/// Relative dataset paths resolve against `base_dir`.
inline ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir = ".") {
    if (!j.is_object()) throw ValidationError("config: top level must be a JSON object");
    ExperimentConfig cfg;

    if (!j.contains("dataset")) throw ValidationError("dataset: required field missing");
    const auto& d = j.at("dataset");
    if (d.contains("path") == d.contains("synthetic"))
        throw ValidationError("dataset: exactly one of 'path' or 'synthetic' is required");
    if (d.contains("path")) {
        auto p = std::filesystem::path(detail::get_field<std::string>(d, "path", ""));
        p = std::filesystem::absolute(base_dir / p).lexically_normal();
        if (!std::filesystem::exists(p)) throw ValidationError("dataset.path: does not exist: " + p.string());
        cfg.dataset.path = p;
    } else {
        cfg.dataset.synthetic = detail::parse_synthetic(d.at("synthetic"));
    }
    cfg.dataset.normalize = detail::get_field<bool>(d, "normalize", true);
    if (d.contains("split")) {
        cfg.dataset.split.train = detail::get_field<double>(d.at("split"), "train", cfg.dataset.split.train);
        cfg.dataset.split.validation =
            detail::get_field<double>(d.at("split"), "validation", cfg.dataset.split.validation);
    }

    cfg.impressions = detail::get_count(j, "impressions", cfg.impressions);
    cfg.repeats = detail::get_count(j, "repeats", cfg.repeats);
    cfg.base_seed = detail::get_field<std::uint64_t>(j, "base_seed", cfg.base_seed);
    cfg.output_dir = detail::get_field<std::string>(j, "output_dir", cfg.output_dir.string());
    if (cfg.impressions < 1) throw ValidationError("impressions: must be >= 1");
    if (cfg.repeats < 1) throw ValidationError("repeats: must be >= 1");

    json defaults = json::object();
    for (const auto& [key, value] : j.items()) {
        if (detail::top_level_keys().contains(key)) continue;
        defaults[key] = value;
    }
    if (j.contains("conditions")) {
        if (!j.at("conditions").is_array() || j.at("conditions").empty())
            throw ValidationError("conditions: must be a non-empty array");
        for (const auto& c : j.at("conditions")) {
            json merged = defaults;
            merged.update(c);
            cfg.conditions.push_back(detail::parse_condition(merged, ""));
        }
    } else {
        cfg.conditions.push_back(detail::parse_condition(defaults, ""));
    }
    std::set<std::string> names;
    for (const auto& c : cfg.conditions)
        if (!names.insert(c.name).second) throw ValidationError("conditions: duplicate name '" + c.name + "'");
    if (j.contains("baseline")) {
        cfg.baseline = detail::get_field<std::string>(j, "baseline", "");
        if (!names.contains(*cfg.baseline)) throw ValidationError("baseline: no condition named '" + *cfg.baseline + "'");
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config: invalid JSON: ") + e.what());
    }
    return config_from_json(j, path.parent_path());
}

/// Fully explicit form: every condition carries every field, so a reload needs no defaults.
inline json to_json(const ExperimentConfig& cfg) {
    json j;
    json d;
    if (cfg.dataset.path) d["path"] = cfg.dataset.path->string();
    if (cfg.dataset.synthetic) d["synthetic"] = to_json(*cfg.dataset.synthetic);
    d["normalize"] = cfg.dataset.normalize;
    d["split"] = {{"train", cfg.dataset.split.train}, {"validation", cfg.dataset.split.validation}};
    j["dataset"] = d;
    j["impressions"] = cfg.impressions;
    j["repeats"] = cfg.repeats;
    j["base_seed"] = cfg.base_seed;
    j["output_dir"] = cfg.output_dir.string();
    if (cfg.baseline) j["baseline"] = *cfg.baseline;
    j["conditions"] = json::array();
    for (const auto& c : cfg.conditions) {
        const auto& e = c.engine;
        json cj{{"name", c.name},
                {"algorithm", to_string(c.algorithm)},
                {"click_model", to_json(c.click_model)},
                {"n", e.n},
                {"delta", e.delta},
                {"eta", e.eta},
                {"kappa", e.kappa},
                {"h", e.h},
                {"epsilon", e.epsilon},
                {"inference_samples", e.inference_samples},
                {"comparison", to_string(e.comparison)},
                {"record_every", e.record_every},
                {"gamma", e.gamma},
                {"tau", e.tau},
                {"M", c.references.M},
                {"selection", to_string(c.references.selection)}};
        if (!c.references.fixed.empty()) cj["references"] = c.references.fixed;
        j["conditions"].push_back(std::move(cj));
    }
    return j;
}

inline void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << to_json(cfg).dump(2) << '\n';
}

inline Dataset load_experiment_dataset(const DatasetSource& src) {
    Dataset ds = src.path ? load_dataset(*src.path, src.split) : generate_synthetic(*src.synthetic);
    if (src.normalize) ds = normalize_per_query(std::move(ds));
    ds.validate();
    if (ds.num_folds() == 0) throw ValidationError("dataset has no folds");
    return ds;
}

struct RunRecord {
    std::string run_id;
    std::string condition;
    std::size_t repeat = 0;
    std::uint64_t seed = 0;
    std::size_t fold = 0;  // 0-based
    double online_performance = 0.0;
    double final_offline_ndcg = 0.0;
    std::optional<std::size_t> switch_impression;
    std::size_t zero_ideal_test_queries = 0;

    bool operator==(const RunRecord&) const = default;
};

struct ConditionSummary {
    std::string name;
    std::string algorithm;
    std::size_t runs = 0;
    double online_mean = 0.0;
    double online_std = 0.0;
    double offline_mean = 0.0;
    double offline_std = 0.0;

    bool operator==(const ConditionSummary&) const = default;
};

/// Condition vs baseline on one metric; t > 0 means the condition scored higher.
struct Comparison {
    std::string condition;
    std::string baseline;
    std::string metric;
    ComparisonReport report;
    std::string marker;

    bool operator==(const Comparison& o) const {
        const auto& a = report;
        const auto& b = o.report;
        auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        return condition == o.condition && baseline == o.baseline && metric == o.metric && marker == o.marker &&
               same(a.mean_a, b.mean_a) && same(a.mean_b, b.mean_b) && same(a.std_a, b.std_a) &&
               same(a.std_b, b.std_b) && same(a.t_statistic, b.t_statistic) && same(a.p_value, b.p_value) &&
               a.degrees_of_freedom == b.degrees_of_freedom && a.n_a == b.n_a && a.n_b == b.n_b &&
               a.degenerate_variance == b.degenerate_variance;
    }
};

struct ExperimentSummary {
    std::size_t impressions = 0;
    std::size_t repeats = 0;
    std::uint64_t base_seed = 0;
    std::size_t folds = 0;
    std::vector<ConditionSummary> conditions;
    std::optional<std::string> baseline;
    std::vector<Comparison> comparisons;
    std::vector<RunRecord> runs;

    bool operator==(const ExperimentSummary&) const = default;
};

struct ExperimentResult {
    ExperimentSummary summary;
    /// Parallel to summary.runs.
    std::vector<RunTrace> traces;
};

/// Worker count from OLTR_WORKERS, else the hardware concurrency.
inline std::size_t default_worker_count() {
    if (const char* env = std::getenv("OLTR_WORKERS")) {
        char* end = nullptr;
        auto v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

struct RunOptions {
    std::size_t workers = default_worker_count();
    /// When set, every finished run's trace is written to `<dir>/runs/` as it
    /// completes, and `<dir>/manifest.json` tracks which runs are done.
    std::optional<std::filesystem::path> trace_dir;
};

inline void write_trace_csv(std::ostream& out, const std::string& run_id, const RunTrace& trace, bool header) {
    if (header) out << "run_id,impression,displayed_ndcg,offline_ndcg,phase\n";
    for (const auto& r : trace.records) {
        out << run_id << ',' << r.t << ',' << format_double(r.displayed_ndcg) << ',';
        if (r.offline_ndcg) out << format_double(*r.offline_ndcg);
        out << ',' << to_string(r.phase) << '\n';
    }
}

inline ComparisonReport compare_runs(std::span<const double> condition, std::span<const double> baseline) {
    return t_test_two_tailed(condition, baseline);
}

/// Round-robin folds (run r on fold r mod K) with seed base_seed + r for every condition.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& ds, RunOptions opts = {}) {
    struct Job {
        std::size_t condition;
        std::size_t repeat;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < cfg.conditions.size(); ++c)
        for (std::size_t r = 0; r < cfg.repeats; ++r) jobs.push_back({c, r});

    ExperimentResult result;
    auto& summary = result.summary;
    summary.impressions = cfg.impressions;
    summary.repeats = cfg.repeats;
    summary.base_seed = cfg.base_seed;
    summary.folds = ds.num_folds();
    summary.baseline = cfg.baseline;
    summary.runs.resize(jobs.size());
    result.traces.resize(jobs.size());
    std::vector<std::string> status(jobs.size(), "pending");

    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& c = cfg.conditions[jobs[i].condition];
        auto& rec = summary.runs[i];
        rec.condition = c.name;
        rec.repeat = jobs[i].repeat;
        rec.run_id = c.name + "-" + std::to_string(jobs[i].repeat);
        rec.seed = cfg.base_seed + jobs[i].repeat;
        rec.fold = jobs[i].repeat % ds.num_folds();
    }

    std::mutex io_mutex;
    auto write_manifest = [&] {
        if (!opts.trace_dir) return;
        json m{{"runs", json::array()}};
        for (std::size_t i = 0; i < jobs.size(); ++i)
            m["runs"].push_back({{"run_id", summary.runs[i].run_id}, {"status", status[i]}});
        m["complete"] = std::all_of(status.begin(), status.end(), [](const auto& s) { return s == "complete"; });
        std::ofstream(*opts.trace_dir / "manifest.json") << m.dump(2) << '\n';
    };
    if (opts.trace_dir) {
        std::filesystem::create_directories(*opts.trace_dir / "runs");
        write_manifest();
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto& c = cfg.conditions[jobs[i].condition];
            auto& rec = summary.runs[i];
            try {
                Rng rng(rec.seed);
                RunTrace trace;
                switch (c.algorithm) {
                    case Algorithm::mgd:
                        trace = run_mgd(ds, rec.fold, c.engine, c.click_model, cfg.impressions, rng);
                        break;
                    case Algorithm::sim_mgd:
                        trace = run_sim_mgd(ds, rec.fold, c.engine, c.references, c.click_model, cfg.impressions, rng);
                        break;
                    case Algorithm::cmgd:
                        trace = run_cmgd(ds, rec.fold, c.engine, c.references, c.click_model, cfg.impressions, rng);
                        break;
                }
                rec.online_performance = trace.online_performance;
                rec.final_offline_ndcg = trace.final_offline_ndcg;
                rec.switch_impression = trace.switch_impression;
                rec.zero_ideal_test_queries = trace.zero_ideal_test_queries;
                result.traces[i] = std::move(trace);
                std::lock_guard lock(io_mutex);
                status[i] = "complete";
                if (opts.trace_dir) {
                    std::ofstream out(*opts.trace_dir / "runs" / (rec.run_id + ".csv"));
                    write_trace_csv(out, rec.run_id, result.traces[i], true);
                }
                write_manifest();
            } catch (const std::exception& e) {
                std::lock_guard lock(io_mutex);
                status[i] = std::string("failed: ") + e.what();
                write_manifest();
            }
        }
    };
    const auto workers = std::max<std::size_t>(1, std::min(opts.workers, jobs.size()));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    for (std::size_t i = 0; i < jobs.size(); ++i)
        if (status[i] != "complete") throw Error("run " + summary.runs[i].run_id + " " + status[i]);

    auto metric_of = [&](const std::string& condition, bool online) {
        std::vector<double> xs;
        for (const auto& r : summary.runs)
            if (r.condition == condition) xs.push_back(online ? r.online_performance : r.final_offline_ndcg);
        return xs;
    };
    for (const auto& c : cfg.conditions) {
        auto on = metric_of(c.name, true);
        auto off = metric_of(c.name, false);
        summary.conditions.push_back(
            {c.name, to_string(c.algorithm), on.size(), mean(on), sample_stddev(on), mean(off), sample_stddev(off)});
    }
    if (cfg.baseline && cfg.repeats >= 2) {
        for (const auto& c : cfg.conditions) {
            if (c.name == *cfg.baseline) continue;
            for (bool online : {true, false}) {
                auto report = compare_runs(metric_of(c.name, online), metric_of(*cfg.baseline, online));
                summary.comparisons.push_back({c.name, *cfg.baseline, online ? "online_performance" : "final_offline_ndcg",
                                               report, significance_marker(report.p_value, report.mean_a - report.mean_b)});
            }
        }
    }
    return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, RunOptions opts = {}) {
    const auto ds = load_experiment_dataset(cfg.dataset);
    return run_experiment(cfg, ds, std::move(opts));
}

namespace detail {

inline json optional_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

/// Canonical JSON: nlohmann objects keep keys sorted; no timestamps.
inline json to_json(const ExperimentSummary& s) {
    json j;
    j["impressions"] = s.impressions;
    j["repeats"] = s.repeats;
    j["base_seed"] = s.base_seed;
    j["folds"] = s.folds;
    j["baseline"] = s.baseline ? json(*s.baseline) : json(nullptr);
    j["conditions"] = json::array();
    for (const auto& c : s.conditions)
        j["conditions"].push_back({{"name", c.name},
                                   {"algorithm", c.algorithm},
                                   {"runs", c.runs},
                                   {"online_mean", c.online_mean},
                                   {"online_std", c.online_std},
                                   {"offline_mean", c.offline_mean},
                                   {"offline_std", c.offline_std}});
    j["comparisons"] = json::array();
    for (const auto& c : s.comparisons) {
        const auto& r = c.report;
        j["comparisons"].push_back({{"condition", c.condition},
                                    {"baseline", c.baseline},
                                    {"metric", c.metric},
                                    {"marker", c.marker},
                                    {"mean_condition", r.mean_a},
                                    {"mean_baseline", r.mean_b},
                                    {"std_condition", r.std_a},
                                    {"std_baseline", r.std_b},
                                    {"t_statistic", detail::optional_number(r.t_statistic)},
                                    {"p_value", r.p_value},
                                    {"degrees_of_freedom", r.degrees_of_freedom},
                                    {"n_condition", r.n_a},
                                    {"n_baseline", r.n_b},
                                    {"degenerate_variance", r.degenerate_variance}});
    }
    j["runs"] = json::array();
    for (const auto& r : s.runs)
        j["runs"].push_back({{"run_id", r.run_id},
                             {"condition", r.condition},
                             {"repeat", r.repeat},
                             {"seed", r.seed},
                             {"fold", r.fold + 1},
                             {"online_performance", r.online_performance},
                             {"final_offline_ndcg", r.final_offline_ndcg},
                             {"switch_impression", r.switch_impression ? json(*r.switch_impression) : json(nullptr)},
                             {"zero_ideal_test_queries", r.zero_ideal_test_queries}});
    return j;
}

inline ExperimentSummary summary_from_json(const json& j) {
    ExperimentSummary s;
    s.impressions = j.at("impressions").get<std::size_t>();
    s.repeats = j.at("repeats").get<std::size_t>();
    s.base_seed = j.at("base_seed").get<std::uint64_t>();
    s.folds = j.at("folds").get<std::size_t>();
    if (!j.at("baseline").is_null()) s.baseline = j.at("baseline").get<std::string>();
    for (const auto& c : j.at("conditions"))
        s.conditions.push_back({c.at("name"), c.at("algorithm"), c.at("runs"), c.at("online_mean"), c.at("online_std"),
                                c.at("offline_mean"), c.at("offline_std")});
    for (const auto& c : j.at("comparisons")) {
        ComparisonReport r;
        r.mean_a = c.at("mean_condition");
        r.mean_b = c.at("mean_baseline");
        r.std_a = c.at("std_condition");
        r.std_b = c.at("std_baseline");
        r.t_statistic = c.at("t_statistic").is_null() ? std::copysign(INFINITY, r.mean_a - r.mean_b)
                                                      : c.at("t_statistic").get<double>();
        r.p_value = c.at("p_value");
        r.degrees_of_freedom = c.at("degrees_of_freedom");
        r.n_a = c.at("n_condition");
        r.n_b = c.at("n_baseline");
        r.degenerate_variance = c.at("degenerate_variance");
        s.comparisons.push_back({c.at("condition"), c.at("baseline"), c.at("metric"), r, c.at("marker")});
    }
    for (const auto& r : j.at("runs")) {
        RunRecord rec;
        rec.run_id = r.at("run_id");
        rec.condition = r.at("condition");
        rec.repeat = r.at("repeat");
        rec.seed = r.at("seed");
        rec.fold = r.at("fold").get<std::size_t>() - 1;
        rec.online_performance = r.at("online_performance");
        rec.final_offline_ndcg = r.at("final_offline_ndcg");
        if (!r.at("switch_impression").is_null()) rec.switch_impression = r.at("switch_impression").get<std::size_t>();
        rec.zero_ideal_test_queries = r.at("zero_ideal_test_queries");
        s.runs.push_back(std::move(rec));
    }
    return s;
}

namespace detail {

inline std::string fixed(double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

/// Pads to `width` display columns; the significance markers are one column wide.
inline std::string pad(const std::string& s, std::size_t width) {
    std::size_t cols = 0;
    for (unsigned char ch : s)
        if ((ch & 0xC0) != 0x80) ++cols;
    return cols >= width ? s + " " : s + std::string(width - cols, ' ');
}

}  // namespace detail

/// Text table in the layout of the online/offline result tables: mean (std)
/// per condition with significance markers against the baseline.
inline std::string format_table(const ExperimentSummary& s) {
    auto marker = [&](const std::string& condition, const std::string& metric) -> std::string {
        for (const auto& c : s.comparisons)
            if (c.condition == condition && c.metric == metric) return c.marker;
        return "";
    };
    std::ostringstream out;
    out << detail::pad("condition", 24) << detail::pad("online performance", 26) << "offline NDCG\n";
    for (const auto& c : s.conditions) {
        auto label = c.name + (s.baseline && *s.baseline == c.name ? " (baseline)" : "");
        auto online = detail::fixed(c.online_mean, 1) + " (" + detail::fixed(c.online_std, 1) + ") " +
                      marker(c.name, "online_performance");
        auto offline = detail::fixed(c.offline_mean, 3) + " (" + detail::fixed(c.offline_std, 3) + ") " +
                       marker(c.name, "final_offline_ndcg");
        out << detail::pad(label, 24) << detail::pad(online, 26) << offline << '\n';
    }
    out << "\n▵/▴: significant improvement over the baseline (p < 0.05 / p < 0.01); ▿/▾: significant loss.\n";
    return out.str();
}

inline void write_runs_csv(std::ostream& out, const ExperimentSummary& s, const std::string& condition) {
    out << "run_id,condition,seed,fold,online_performance,final_offline_ndcg,switch_impression\n";
    for (const auto& r : s.runs) {
        if (r.condition != condition) continue;
        out << r.run_id << ',' << r.condition << ',' << r.seed << ',' << (r.fold + 1) << ','
            << format_double(r.online_performance) << ',' << format_double(r.final_offline_ndcg) << ',';
        if (r.switch_impression) out << *r.switch_impression;
        out << '\n';
    }
}

/// Writes curves.csv, summary.json, table.txt and one runs_<condition>.csv per
/// condition; with `dump_models`, models/<run_id>.json holds each final model.
inline void emit_outputs(const ExperimentResult& result, const std::filesystem::path& dir, bool dump_models = false) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
    auto open = [](const fs::path& p) {
        std::ofstream out(p);
        if (!out) throw Error("cannot write " + p.string());
        return out;
    };
    const auto& s = result.summary;
    {
        auto out = open(dir / "curves.csv");
        out << "run_id,impression,displayed_ndcg,offline_ndcg,phase\n";
        for (std::size_t i = 0; i < s.runs.size(); ++i) write_trace_csv(out, s.runs[i].run_id, result.traces[i], false);
        if (!out) throw Error("write failed for " + (dir / "curves.csv").string());
    }
    open(dir / "summary.json") << to_json(s).dump(2) << '\n';
    open(dir / "table.txt") << format_table(s);
    for (const auto& c : s.conditions) {
        auto out = open(dir / ("runs_" + c.name + ".csv"));
        write_runs_csv(out, s, c.name);
    }
    if (dump_models) {
        fs::create_directories(dir / "models");
        for (std::size_t i = 0; i < s.runs.size(); ++i)
            open(dir / "models" / (s.runs[i].run_id + ".json")) << to_json(result.traces[i].final_model).dump() << '\n';
    }
}

/// Reads one named numeric column from a headered CSV file.
inline std::vector<double> read_csv_column(const std::filesystem::path& path, const std::string& column) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty CSV");
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::stringstream ss(l);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!l.empty() && l.back() == ',') cells.emplace_back();
        return cells;
    };
    auto header = split(line);
    auto it = std::find(header.begin(), header.end(), column);
    if (it == header.end()) throw ValidationError(path.string() + ": no column '" + column + "'");
    const auto idx = static_cast<std::size_t>(it - header.begin());
    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split(line);
        if (idx >= cells.size() || cells[idx].empty()) continue;
        double v = 0.0;
        const auto& c = cells[idx];
        auto [p, err] = std::from_chars(c.data(), c.data() + c.size(), v);
        if (err != std::errc{} || p != c.data() + c.size())
            throw ParseError(path.string() + ": non-numeric value '" + c + "'", line_no);
        values.push_back(v);
    }
    return values;
}

}  // namespace oltr
