#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cega/rng.hpp"
#include "cega/scoring.hpp"

namespace cega {

enum class Direction { HigherBetter, LowerBetter };

// Rank 1 is the most preferred score; ties go to the smaller node id.
std::vector<int> ranks_from_scores(const ScoreVector& scores, Direction direction);

// Throws StructuralError unless `ranks` is a permutation of 1..m.
void check_permutation(std::span<const int> ranks);

struct WeightSchedule {
    double alpha1 = 0.2;
    double alpha2 = 0.2;
    double alpha3 = 0.2;
    double delta = 0.6;
    double lambda = 0.3;

    bool operator==(const WeightSchedule&) const = default;
};

void validate(const WeightSchedule& s);

struct Weights {
    double w1 = 0.0;  // representativeness
    double w2 = 0.0;  // uncertainty
    double w3 = 0.0;  // diversity

    bool operator==(const Weights&) const = default;
};

// w1 = a1 + D e^(-l g), w2 = a2 + D (1 - e^(-l g)), w3 = a3 (1 - e^(-g)).
// Not normalized. Throws UsageError for gamma < 1.
Weights adaptive_weights(int gamma, const WeightSchedule& sched);

struct RankTable {
    std::vector<NodeId> node_ids;
    std::vector<int> rank1, rank2, rank3;
};

void check(const RankTable& table);

// The k nodes with the smallest weighted rank sum, in selection order;
// ties by ascending node id. Throws UsageError when k exceeds the table.
std::vector<NodeId> select_top_k(const RankTable& table, const Weights& weights, std::size_t k);

// Uniform sample without replacement.
std::vector<NodeId> random_select(std::span<const NodeId> candidates, std::size_t k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// AGE baseline (time-sensitive weighting of entropy, density, centrality).

struct AgeConfig {
    int warmup_epochs = 400;

    bool operator==(const AgeConfig&) const = default;
};

// n_t = 1.05 - 0.95^t
double age_beta_shape(int t);

// Beta(1, n) by inverse CDF: 1 - u^(1/n).
double sample_beta_1n(double n, Rng& rng);

// Empirical percentile of each value among all values: the fraction of the
// other entries that are strictly smaller. A single value maps to 0.
std::vector<double> percentile_transform(std::span<const double> values);

struct AgeWeights {
    double alpha = 0.0;  // entropy
    double beta = 0.0;   // density
    double gamma = 0.0;  // centrality
};

AgeWeights age_weights(int t, std::uint64_t seed, std::optional<double> forced_gamma = std::nullopt);

// Density of each embedding: 1 / (1 + distance to its nearest center of a
// K-Means fit over all rows).
std::vector<double> age_density(const Matrix& embeddings, std::size_t num_clusters, const DiversityConfig& cfg);

// The three score vectors must list the same candidates in the same order.
std::vector<NodeId> age_select(const ScoreVector& entropy, const ScoreVector& density, const ScoreVector& centrality,
                               int t, std::size_t k, std::uint64_t seed,
                               std::optional<double> forced_gamma = std::nullopt);

}  // namespace cega
