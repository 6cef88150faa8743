#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "forge/commands.hpp"
#include "forge/config.hpp"
#include "forge/util.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<long> seed;
};

forge::RunConfig build_config(const GlobalArgs& args) {
    std::map<std::string, std::string> entries;
    if (!args.config_path.empty()) {
        entries = forge::parse_config_file(args.config_path);
    }
    for (const auto& assignment : args.overrides) {
        forge::apply_override(entries, assignment);
    }
    if (args.seed.has_value()) {
        entries["seed"] = std::to_string(*args.seed);
    }
    return forge::make_run_config(entries);
}

void add_global_options(CLI::App* cmd, GlobalArgs& args) {
    cmd->add_option("--config", args.config_path, "Run configuration file");
    cmd->add_option("--set", args.overrides, "Override a config key (key=value, repeatable)");
    cmd->add_option("--seed", args.seed, "Override the run seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forge: knowledge-refinement pipeline for retrieval-augmented generation"};
    app.require_subcommand(1);

    GlobalArgs args;
    std::string method = "rankcot";
    bool closed_book = false;
    std::vector<std::string> record_files;
    std::string closed_book_file;
    int n_samples = 300;
    double temperature = 0.8;
    std::string dpo_csv;

    auto* index = app.add_subcommand("index", "Build the BM25 index from the corpus");
    add_global_options(index, args);

    auto* refine = app.add_subcommand("refine", "Refine retrieved documents for every query");
    add_global_options(refine, args);
    refine->add_option("--method", method, "none|rerank|summary|rankcot")->required();

    auto* generate = app.add_subcommand("generate", "Answer every query from its refinement");
    add_global_options(generate, args);
    generate->add_option("--method", method, "none|rerank|summary|rankcot");
    generate->add_flag("--closed-book", closed_book, "Answer without any retrieved context");

    auto* build_dpo = app.add_subcommand("build-dpo",
                                         "Sample, reflect, label, pair and export DPO data");
    add_global_options(build_dpo, args);

    auto* evaluate = app.add_subcommand("evaluate", "Score generations and emit the report");
    add_global_options(evaluate, args);
    evaluate->add_option("--records", record_files, "Generation record files (repeatable)")
        ->required();
    evaluate->add_option("--closed-book-records", closed_book_file,
                         "Closed-book generation records (scenario reference)")
        ->required();

    auto* consistency = app.add_subcommand("consistency",
                                           "Repeated-sampling consistency experiment");
    add_global_options(consistency, args);
    consistency->add_option("--method", method, "Refinement method to test")->required();
    consistency->add_option("--n", n_samples, "Samples per query (default 300)");
    consistency->add_option("--temperature", temperature, "Sampling temperature");

    auto* report = app.add_subcommand("report", "Re-render the report; optional DPO diagnostics");
    add_global_options(report, args);
    report->add_option("--dpo-csv", dpo_csv, "CSV of DPO log-probability inputs");

    CLI11_PARSE(app, argc, argv);

    try {
        const forge::RunConfig config = build_config(args);
        if (index->parsed()) {
            return forge::cmd_index(config);
        }
        if (refine->parsed()) {
            return forge::cmd_refine(config, forge::refine_method_from_string(method));
        }
        if (generate->parsed()) {
            return forge::cmd_generate(config, forge::refine_method_from_string(method),
                                       closed_book);
        }
        if (build_dpo->parsed()) {
            return forge::cmd_build_dpo(config);
        }
        if (evaluate->parsed()) {
            forge::EvaluateInputs inputs;
            for (const auto& path : record_files) {
                inputs.record_files.emplace_back(path);
            }
            inputs.closed_book_file = closed_book_file;
            return forge::cmd_evaluate(config, inputs);
        }
        if (consistency->parsed()) {
            return forge::cmd_consistency(config, forge::refine_method_from_string(method),
                                          n_samples, temperature);
        }
        if (report->parsed()) {
            std::optional<std::filesystem::path> csv;
            if (!dpo_csv.empty()) {
                csv = dpo_csv;
            }
            return forge::cmd_report(config, csv);
        }
    } catch (const forge::ConfigError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return forge::kExitConfig;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
