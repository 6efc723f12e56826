#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cega/graph.hpp"

namespace cega {

struct FeatureMatrix {
    Matrix values;  // num_nodes x dim

    std::size_t num_nodes() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
    bool operator==(const FeatureMatrix& o) const {
        return values.rows() == o.values.rows() && values.cols() == o.values.cols() && values == o.values;
    }
};

struct LabelVector {
    std::size_t num_classes = 0;
    std::vector<int> labels;

    std::size_t num_nodes() const { return labels.size(); }
    bool operator==(const LabelVector&) const = default;
};

struct Dataset {
    SparseGraph graph;
    FeatureMatrix features;
    LabelVector labels;

    std::size_t num_nodes() const { return graph.num_nodes; }
    std::size_t num_classes() const { return labels.num_classes; }
    bool operator==(const Dataset&) const = default;
};

// Throws StructuralError when the three parts disagree on node count, the
// feature matrix has non-finite entries or zero columns, or a label is out
// of range.
void validate(const Dataset& ds);

// Stochastic block model with Gaussian class-conditional features.
struct SbmConfig {
    std::size_t num_nodes = 200;
    std::size_t num_classes = 5;
    double intra_p = 0.1;
    double inter_p = 0.01;
    std::size_t feature_dim = 16;
    double feature_separation = 1.0;
    double noise_sigma = 1.0;

    bool operator==(const SbmConfig&) const = default;
};

void validate(const SbmConfig& cfg);

// Node i belongs to block i mod C. Class c has feature mean
// feature_separation * e_(c mod dim).
Dataset generate_sbm(const SbmConfig& cfg, std::uint64_t seed);

// Node-id sets are sorted ascending.
struct NodePartition {
    std::vector<NodeId> target_train;
    std::vector<NodeId> test;
    std::vector<NodeId> candidate_pool;

    bool operator==(const NodePartition&) const = default;
};

// candidate_pool = round(pool_fraction * N) uniformly drawn nodes;
// target_train = round(train_fraction * remaining); test = the rest.
// With allow_overlap the pool is drawn from all nodes and train/test split
// all N nodes independently of it.
NodePartition split_partition(std::size_t num_nodes, double pool_fraction, double train_fraction,
                              std::uint64_t seed, bool allow_overlap = false);

// Directory layout: graph.tsv, features.csv, labels.csv.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace cega
