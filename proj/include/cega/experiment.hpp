#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cega/extraction.hpp"

namespace cega {

struct DatasetSpec {
    // Directory in the graph.tsv/features.csv/labels.csv layout; when absent
    // the SBM below is generated with `seed`.
    std::optional<std::string> path;
    SbmConfig sbm;
    std::uint64_t seed = 0;

    bool operator==(const DatasetSpec&) const = default;
};

struct PartitionSpec {
    double pool_fraction = 0.1;
    double train_fraction = 0.6;
    bool allow_overlap = false;

    bool operator==(const PartitionSpec&) const = default;
};

struct ExperimentSpec {
    DatasetSpec dataset;
    PartitionSpec partition;
    // total_budget and selector are overridden per run from budgets/selectors.
    ExtractionConfig extraction;
    // Absolute budgets, or multiples of C when budget_multiples is non-empty.
    std::vector<std::size_t> budgets;
    std::vector<std::size_t> budget_multiples;
    std::vector<Selector> selectors{Selector::CEGA, Selector::Random};
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "out";

    bool operator==(const ExperimentSpec&) const = default;
};

// JSON (de)serialization. Missing fields take their defaults; unknown
// fields and bad values raise ConfigError naming the field.
nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const nlohmann::json& j);
ExperimentSpec load_spec(const std::filesystem::path& path);
void validate(const ExperimentSpec& spec);

// Budgets after expanding multiples of C, ascending and deduplicated.
std::vector<std::size_t> resolve_budgets(const ExperimentSpec& spec, std::size_t num_classes);

// Canonical compact JSON of the spec (output_dir omitted) and its FNV-1a
// hex digest.
std::string canonical_config(const ExperimentSpec& spec);
std::string config_digest(const ExperimentSpec& spec);

Dataset materialize_dataset(const DatasetSpec& spec);

// Everything one root seed shares across selectors and budgets.
struct SeedContext {
    std::uint64_t seed = 0;
    NodePartition partition;
    GcnParams target;
};

SeedContext prepare_seed(const ExperimentSpec& spec, const Dataset& ds, std::uint64_t seed);

// Extraction config of one run: spec.extraction with the run's selector,
// budget and root seed filled in.
ExtractionConfig run_config(const ExperimentSpec& spec, Selector selector, std::size_t budget, std::uint64_t seed);

struct ResultRow {
    std::string selector;  // selector or ablation variant name
    std::size_t budget = 0;
    std::uint64_t seed = 0;
    EvalReport report;
};

struct TrajectoryRow {
    std::string selector;
    std::uint64_t seed = 0;
    std::size_t budget_checkpoint = 0;
    EvalReport report;
};

struct SelectionLog {
    std::string selector;
    std::uint64_t seed = 0;
    std::vector<CycleRecord> cycles;
};

struct RunOutcome {
    std::vector<ResultRow> results;  // ordered by selector, budget, seed
    std::vector<TrajectoryRow> trajectory;
    std::vector<SelectionLog> logs;
    std::vector<std::string> failures;
};

// Cross product selectors x budgets x seeds. One extraction per
// (selector, seed) runs to the largest budget; every smaller budget trains
// its final model on the matching prefix of the query sequence, which is
// exactly the query set a run capped at that budget produces.
RunOutcome run_experiment(const ExperimentSpec& spec, const Dataset& ds, int jobs);

// Full-subgraph reference per seed (reference=true rows, budget = pool size).
std::vector<ResultRow> run_reference(const ExperimentSpec& spec, const Dataset& ds, int jobs);

struct GapRow {
    std::string selector;
    std::uint64_t seed = 0;
    PerformanceGap gap;
};

std::vector<GapRow> compute_gaps(const std::vector<ResultRow>& reference, const std::vector<ResultRow>& budgeted,
                                 std::size_t budget);

// Full CEGA plus the three single-criterion ablations at the largest budget.
RunOutcome run_ablation_batch(const ExperimentSpec& spec, const Dataset& ds, int jobs);

inline const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> names{"CEGA", "NoCentrality", "NoUncertainty", "NoDiversity"};
    return names;
}

// ---------------------------------------------------------------------------
// CSV output

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
};

MeanStd mean_std(const std::vector<double>& values);

std::string format_number(double x);

void write_results_csv(const std::filesystem::path& path, const ExperimentSpec& spec,
                       const std::vector<ResultRow>& rows, bool reference = false);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
void write_trajectory_csv(const std::filesystem::path& path, const ExperimentSpec& spec,
                          const std::vector<TrajectoryRow>& rows);
void write_selection_log(const std::filesystem::path& path, const SelectionLog& log);
void write_gap_csv(const std::filesystem::path& path, const ExperimentSpec& spec, const std::vector<GapRow>& rows);
void write_score_csv(const std::filesystem::path& path, const ScoreVector& scores);

// Mean +- std table per (selector, budget).
void print_summary(std::ostream& os, const std::vector<ResultRow>& rows);

// Writes via a temporary file and rename so readers never see partial files.
void write_atomic(const std::filesystem::path& path, const std::string& content);

// ---------------------------------------------------------------------------
// Commands. Each returns the process exit code: 0 success, 1 validation
// error, 2 run failure.

struct CommandOptions {
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    bool with_reference = false;
};

int cmd_gen_data(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_run(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_sweep_gap(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_ablate(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_report(const CommandOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace cega
