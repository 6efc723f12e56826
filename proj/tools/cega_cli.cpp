// Command-line front end: dataset generation, extraction sweeps, gap and
// ablation batches, and result summaries.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cega/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Budget-constrained GCN model extraction experiments"};
    app.require_subcommand(1);

    cega::CommandOptions opts;
    std::string config, out;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* c = cmd->add_option("--config", config, "Experiment config (JSON)");
        if (needs_config) c->required();
        cmd->add_option("--out", out, "Output directory (overrides output_dir)");
        cmd->add_option("--seed", seed, "Run a single root seed instead of the configured list");
        cmd->add_option("--jobs", opts.jobs, "Worker threads")->check(CLI::PositiveNumber);
    };

    auto* gen = app.add_subcommand("gen-data", "Generate the configured SBM dataset into --out");
    add_common(gen, true);
    auto* run = app.add_subcommand("run", "Run selectors x budgets x seeds and write result CSVs");
    add_common(run, true);
    run->add_flag("--with-reference", opts.with_reference, "Also train the full-subgraph reference");
    auto* gap = app.add_subcommand("sweep-gap", "Performance gap against the full-subgraph reference");
    add_common(gap, true);
    gap->add_flag("--with-reference", opts.with_reference, "Train the reference before computing gaps");
    auto* ablate = app.add_subcommand("ablate", "CEGA with each criterion removed");
    add_common(ablate, true);
    auto* report = app.add_subcommand("report", "Summarize results.csv in --out (or the config's output_dir)");
    add_common(report, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    opts.config = config;
    if (!out.empty()) opts.out = out;
    for (auto* cmd : {gen, run, gap, ablate, report})
        if (cmd->parsed() && cmd->count("--seed")) opts.seed = seed;

    if (report->parsed() && config.empty() && out.empty()) {
        std::cerr << "validation error: report needs --out or --config\n";
        return 1;
    }

    if (gen->parsed()) return cega::cmd_gen_data(opts, std::cout, std::cerr);
    if (run->parsed()) return cega::cmd_run(opts, std::cout, std::cerr);
    if (gap->parsed()) return cega::cmd_sweep_gap(opts, std::cout, std::cerr);
    if (ablate->parsed()) return cega::cmd_ablate(opts, std::cout, std::cerr);
    return cega::cmd_report(opts, std::cout, std::cerr);
}
