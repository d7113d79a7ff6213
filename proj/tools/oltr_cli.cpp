#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "oltr/oltr.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

void print_report(const oltr::ComparisonReport& r, std::ostream& out) {
    out << "mean_a=" << oltr::format_double(r.mean_a) << " (sd " << oltr::format_double(r.std_a) << ", n=" << r.n_a
        << ")\n"
        << "mean_b=" << oltr::format_double(r.mean_b) << " (sd " << oltr::format_double(r.std_b) << ", n=" << r.n_b
        << ")\n"
        << "t=" << oltr::format_double(r.t_statistic) << " df=" << oltr::format_double(r.degrees_of_freedom)
        << " p=" << oltr::format_double(r.p_value);
    if (r.degenerate_variance) out << " (zero variance)";
    const auto marker = oltr::significance_marker(r.p_value, r.mean_a - r.mean_b);
    if (!marker.empty()) out << ' ' << marker;
    out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online learning to rank simulator: MGD, Sim-MGD and C-MGD"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> repeats;
    std::size_t workers = oltr::default_worker_count();
    std::optional<std::string> out_dir;
    bool dump_model = false;
    auto* run = app.add_subcommand("run", "run an experiment");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--seed", seed, "base seed override");
    run->add_option("--repeats", repeats, "repeat count override")->check(CLI::PositiveNumber);
    run->add_option("--workers", workers, "parallel runs (default: $OLTR_WORKERS or all cores)")
        ->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "output directory override");
    run->add_flag("--dump-model", dump_model, "write each run's final model to models/<run_id>.json");

    auto* validate = app.add_subcommand("validate", "check a config and its dataset");
    validate->add_option("--config", config_path, "experiment config (JSON)")->required();

    std::string spec_path;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "write a synthetic LETOR file");
    synth->add_option("--spec", spec_path, "generator spec (JSON)")->required();
    synth->add_option("--out", synth_out, "output file")->required();

    std::string csv_a;
    std::string csv_b;
    std::string column;
    bool paired = false;
    auto* ttest = app.add_subcommand("ttest", "two-tailed Student's t-test on a CSV column");
    ttest->add_option("--a", csv_a, "first CSV")->required();
    ttest->add_option("--b", csv_b, "second CSV")->required();
    ttest->add_option("--column", column, "column name")->required();
    ttest->add_flag("--paired", paired, "paired test instead of pooled two-sample");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }

    try {
        if (*run) {
            auto cfg = oltr::load_config(config_path);
            if (seed) cfg.base_seed = *seed;
            if (repeats) cfg.repeats = *repeats;
            if (out_dir) cfg.output_dir = *out_dir;
            if (cfg.baseline && cfg.repeats < 2)
                std::cerr << "note: significance tests need at least 2 repeats; comparisons skipped\n";
            const auto ds = oltr::load_experiment_dataset(cfg.dataset);
            oltr::RunOptions opts{workers, cfg.output_dir};
            const auto result = oltr::run_experiment(cfg, ds, opts);
            oltr::emit_outputs(result, cfg.output_dir, dump_model);
            std::size_t zero_ideal = 0;
            for (const auto& r : result.summary.runs) zero_ideal += r.zero_ideal_test_queries;
            std::cout << oltr::format_table(result.summary);
            if (zero_ideal > 0)
                std::cout << "note: " << zero_ideal
                          << " test-query evaluations had no relevant document and scored NDCG 0\n";
            std::cout << "wrote " << cfg.output_dir.string() << '\n';
        } else if (*validate) {
            const auto cfg = oltr::load_config(config_path);
            const auto ds = oltr::load_experiment_dataset(cfg.dataset);
            std::cout << "ok: " << cfg.conditions.size() << " condition(s), " << ds.queries.size() << " queries, D="
                      << ds.dimensionality << ", " << ds.num_folds() << " fold(s)\n";
        } else if (*synth) {
            std::ifstream in(spec_path);
            if (!in) throw oltr::ValidationError("cannot open " + spec_path);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(in);
            } catch (const nlohmann::json::parse_error& e) {
                throw oltr::ValidationError(std::string("spec: invalid JSON: ") + e.what());
            }
            const auto ds = oltr::generate_synthetic(oltr::synthetic_spec_from_json(j));
            std::ofstream out(synth_out);
            if (!out) throw oltr::Error("cannot write " + synth_out);
            oltr::write_letor(out, ds);
            if (!out) throw oltr::Error("write failed for " + synth_out);
        } else if (*ttest) {
            const auto a = oltr::read_csv_column(csv_a, column);
            const auto b = oltr::read_csv_column(csv_b, column);
            print_report(paired ? oltr::t_test_paired(a, b) : oltr::t_test_two_tailed(a, b), std::cout);
        }
    } catch (const oltr::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kValidation;
    } catch (const oltr::ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}
