#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cega/gcn.hpp"
#include "cega/graph.hpp"

namespace cega {

// Scores parallel to node ids.
struct ScoreVector {
    std::vector<NodeId> node_ids;
    std::vector<double> values;

    std::size_t size() const { return node_ids.size(); }
    // Restriction to `ids`, each of which must be present.
    ScoreVector subset(std::span<const NodeId> ids) const;
};

struct PageRankConfig {
    double damping = 0.85;
    double tol = 1e-10;  // L1 change between iterates
    int max_iter = 1000;

    bool operator==(const PageRankConfig&) const = default;
};

struct PerturbationConfig {
    double epsilon = 1e-2;
    int trials = 10;
    std::uint64_t seed = 0;
    // Test hook: replaces every noise draw with zero.
    bool zero_noise = false;

    bool operator==(const PerturbationConfig&) const = default;
};

struct DiversityConfig {
    double rho = 0.8;
    int kmeans_max_iter = 100;
    double kmeans_tol = 1e-4;
    std::uint64_t kmeans_seed = 0;

    bool operator==(const DiversityConfig&) const = default;
};

void validate(const PageRankConfig& cfg);
void validate(const PerturbationConfig& cfg);
void validate(const DiversityConfig& cfg);

// Power iteration from the uniform vector for
//   r(v) = (1 - xi)/N + xi * sum_{w in in(v)} r(w)/L(w),
// with the mass of zero-out-degree nodes spread uniformly over all nodes.
// Throws NumericalError if the L1 change is still above tol after max_iter.
ScoreVector pagerank(const SparseGraph& g, const PageRankConfig& cfg = {});

// Shannon entropy (natural log, 0 log 0 = 0) of each candidate's softmax row.
ScoreVector entropy_scores(const Matrix& softmax, std::span<const NodeId> candidates);

// For each of cfg.trials draws of N(0, eps^2) noise over all node features,
// counts the candidates whose predicted label is unchanged. Trial l uses the
// substream (cfg.seed, l).
ScoreVector perturbation_scores(const GcnParams& params, const SparseOperator& norm_adj, const Matrix& x,
                                std::span<const NodeId> candidates, const PerturbationConfig& cfg);

// Largest L2 distance between clean and perturbed softmax rows over the
// candidates, for one noise draw of scale epsilon.
double max_softmax_deviation(const GcnParams& params, const SparseOperator& norm_adj, const Matrix& x,
                             std::span<const NodeId> candidates, double epsilon, std::uint64_t seed);

struct KMeansResult {
    Matrix centroids;              // k x h
    std::vector<int> assignments;  // per point
    std::vector<double> inertia;   // after each assignment step
    bool degenerate = false;       // fewer points than clusters
};

// k-means++ seeding followed by Lloyd iterations.
KMeansResult kmeans_fit(const Matrix& points, std::size_t k, const DiversityConfig& cfg);

// Nearest centroid by L2 distance, ties to the smaller index.
std::pair<int, double> nearest_centroid(const Matrix& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& point);

// (x - min)/(max - min); all zeros when max == min.
std::vector<double> minmax_scale(std::span<const double> values);

// rho * scale(1/(1 + delta)) + (1 - rho) * scale(1/(1 + cluster_size)).
std::vector<double> diversity_from_terms(std::span<const double> delta, std::span<const std::size_t> cluster_size,
                                         double rho);

// Diversity of candidate embeddings relative to clusters of the queried
// nodes. queried_assignments gives the centroid of each queried node.
ScoreVector diversity_scores(const Matrix& candidate_embeddings, std::span<const NodeId> candidate_ids,
                             const Matrix& centroids, std::span<const int> queried_assignments, double rho);

}  // namespace cega
