#pragma once

#include <cstdint>
#include <vector>

#include "cega/graph.hpp"
#include "cega/rng.hpp"

namespace cega::testing {

// Erdos-Renyi style edge list, optionally directed.
inline std::vector<Edge> random_edges(std::size_t n, double p, std::uint64_t seed, bool allow_self_loops = false) {
    Rng rng(seed);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j && !allow_self_loops) continue;
            if (uniform01(rng) < p) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
        }
    return edges;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * (2.0 * uniform01(rng) - 1.0);
    return m;
}

// Dense 0/1 adjacency of a CSR graph.
inline Eigen::MatrixXd dense_adjacency(const SparseGraph& g) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.num_nodes),
                                              static_cast<Eigen::Index>(g.num_nodes));
    for (std::size_t v = 0; v < g.num_nodes; ++v)
        for (NodeId u : g.neighbors(static_cast<NodeId>(v))) a(static_cast<Eigen::Index>(v), u) = 1.0;
    return a;
}

}  // namespace cega::testing
