#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cega/dataset.hpp"
#include "cega/gcn.hpp"
#include "cega/scoring.hpp"
#include "cega/selection.hpp"

namespace cega {

enum class Selector { CEGA, Random, AGE };
enum class UncertaintyMode { Entropy, Perturbation };
enum class EmbeddingSource { Hidden, Softmax };
enum class InitMode { Stratified, Random };

std::string to_string(Selector s);
std::string to_string(UncertaintyMode m);
std::string to_string(EmbeddingSource e);
std::string to_string(InitMode m);
// Throw ConfigError on unknown names.
Selector parse_selector(const std::string& name);
UncertaintyMode parse_uncertainty(const std::string& name);
EmbeddingSource parse_embedding(const std::string& name);
InitMode parse_init(const std::string& name);

// Criteria whose weight is forced to zero in every cycle.
struct Ablation {
    bool centrality = false;
    bool uncertainty = false;
    bool diversity = false;

    bool any() const { return centrality || uncertainty || diversity; }
    bool operator==(const Ablation&) const = default;
};

struct ExtractionConfig {
    // Initial set: initial_per_class nodes per ground-truth class, or
    // initial_budget uniform nodes with InitMode::Random (0 means per_class * C).
    InitMode init = InitMode::Stratified;
    std::size_t initial_per_class = 2;
    std::size_t initial_budget = 0;
    std::size_t per_cycle = 1;
    std::size_t total_budget = 0;
    int interim_epochs = 1;
    Selector selector = Selector::CEGA;
    UncertaintyMode uncertainty = UncertaintyMode::Entropy;
    EmbeddingSource embedding = EmbeddingSource::Hidden;
    WeightSchedule weight_schedule;
    PerturbationConfig perturb;
    DiversityConfig diversity;
    PageRankConfig pagerank;
    AgeConfig age;
    // Used for the initial interim model and the final extracted model.
    TrainConfig train;
    std::size_t hidden_dim = 16;
    Ablation ablation;
    // Evaluate interim models on the test split whenever |queried| is a
    // multiple of C.
    bool eval_interim = false;
    std::uint64_t seed = 0;

    bool operator==(const ExtractionConfig&) const = default;
};

void validate(const ExtractionConfig& cfg);

struct EvalReport {
    double accuracy = 0.0;
    double fidelity = 0.0;
    double macro_f1 = 0.0;
    std::size_t num_test = 0;
};

struct CycleRecord {
    int cycle = 0;
    std::vector<NodeId> selected;  // global ids
    Weights weights;
    std::optional<EvalReport> interim_eval;
};

struct TrajectoryPoint {
    std::size_t budget = 0;
    EvalReport report;
};

struct ExtractionResult {
    std::vector<CycleRecord> cycles;
    std::vector<NodeId> queried;     // global ids in query order
    std::vector<int> oracle_labels;  // parallel to queried
    std::size_t initial_size = 0;
    std::vector<TrajectoryPoint> trajectory;
    std::vector<std::string> warnings;
    // Every criterion weight was zero, so selection fell back to id order.
    bool degenerate = false;
};

// Trains the target model on ground-truth labels of target_train over the
// full graph. cfg.seed drives initialization.
GcnParams train_target(const Dataset& ds, const NodePartition& part, const TrainConfig& cfg,
                       std::size_t hidden_dim = 16);

// Hard-label query access to the target model. Distinct nodes are charged
// against the budget; repeated queries of a node are free.
class QueryOracle {
public:
    // Without a budget the oracle is in reference mode (no accounting cap).
    QueryOracle(const GcnParams& target, const Dataset& ds, std::optional<std::size_t> budget);

    // Throws BudgetError if the request would exceed the budget; nothing is
    // charged in that case.
    std::vector<int> query(std::span<const NodeId> nodes);

    std::size_t distinct_queries() const { return queried_count_; }
    std::size_t calls() const { return calls_; }
    std::optional<std::size_t> budget() const { return budget_; }
    const std::vector<int>& target_predictions() const { return predictions_; }

private:
    std::vector<int> predictions_;
    std::vector<bool> charged_;
    std::size_t queried_count_ = 0;
    std::size_t calls_ = 0;
    std::optional<std::size_t> budget_;
};

// Stateless variant: target's hard labels for `nodes` over the full graph.
std::vector<int> query_oracle(const GcnParams& target, const SparseGraph& graph, const FeatureMatrix& x,
                              std::span<const NodeId> nodes);

// per_class uniform draws from the pool for each ground-truth class, in
// class order. Classes with too few pool members contribute all they have
// and add a warning.
std::vector<NodeId> init_query_set(std::span<const NodeId> pool, std::size_t per_class, const LabelVector& labels,
                                   std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

// The candidate pool as a standalone graph: node i is pool[i].
struct PoolView {
    std::vector<NodeId> pool;
    SparseGraph graph;
    SparseOperator norm_adj;
    FeatureMatrix features;

    PoolView(const Dataset& ds, std::span<const NodeId> pool_nodes);
    // Local index of a global pool node; throws UsageError if absent.
    NodeId local(NodeId global) const;
};

// Runs the iterative query loop with the configured selector.
ExtractionResult run_extraction(const Dataset& ds, const NodePartition& part, const GcnParams& target,
                                const ExtractionConfig& cfg);

// Fresh model (init seed cfg.seed) trained on oracle labels of `queried`
// (global ids) over the pool subgraph.
GcnParams train_final(const PoolView& view, std::span<const NodeId> queried, std::span<const int> labels,
                      const TrainConfig& cfg, std::size_t num_classes, std::size_t hidden_dim = 16);

// Accuracy against ground truth, fidelity against the target's labels and
// macro F1 (absent classes count as F1 = 0) on the test nodes. The model is
// applied to the full graph.
EvalReport evaluate(const GcnParams& model, const GcnParams& target, const Dataset& ds, std::span<const NodeId> test);
EvalReport evaluate_labels(std::span<const int> predicted, std::span<const int> target_labels,
                           const LabelVector& truth, std::span<const NodeId> test);

struct PerformanceGap {
    double accuracy = 0.0;
    double fidelity = 0.0;
    double macro_f1 = 0.0;
};

// Componentwise full - budget.
PerformanceGap performance_gap(const EvalReport& full, const EvalReport& budget);

// Full-subgraph reference: every pool node labeled by the oracle with
// accounting disabled, then train_final with the same seed as budgeted runs.
GcnParams train_reference(const Dataset& ds, const NodePartition& part, const GcnParams& target,
                          const ExtractionConfig& cfg);

enum class AblatedCriterion { Centrality, Uncertainty, Diversity };

// CEGA with the named criterion's weight forced to zero, trained and
// evaluated at cfg.total_budget.
EvalReport run_ablation(const Dataset& ds, const NodePartition& part, const GcnParams& target,
                        const ExtractionConfig& cfg, AblatedCriterion ablate);

// Checks the query-accounting and nesting invariants of a finished run.
// Throws BudgetError describing the first violation.
void audit_extraction(const ExtractionResult& result, const ExtractionConfig& cfg);

}  // namespace cega
