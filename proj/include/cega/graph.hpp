#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cega {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

// Row-major dense matrix used for features, activations and weights.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Compressed sparse row adjacency. Column indices within a row are sorted
// and unique.
struct SparseGraph {
    std::size_t num_nodes = 0;
    std::vector<std::size_t> row_offsets{0};
    std::vector<NodeId> col_indices;
    bool undirected = true;

    std::size_t degree(NodeId v) const { return row_offsets[v + 1] - row_offsets[v]; }
    std::span<const NodeId> neighbors(NodeId v) const {
        return {col_indices.data() + row_offsets[v], degree(v)};
    }
    std::size_t num_entries() const { return col_indices.size(); }
    bool has_edge(NodeId u, NodeId v) const;

    bool operator==(const SparseGraph&) const = default;
};

// Builds a deduplicated, column-sorted CSR. For undirected graphs both
// directions are stored. Throws StructuralError on out-of-range endpoints.
SparseGraph build_csr(std::span<const Edge> edges, std::size_t num_nodes, bool undirected);

// Checks every CSR invariant; throws StructuralError naming the first violation.
void audit(const SparseGraph& g);

// Graph induced on `nodes`; node i of the result is nodes[i] of the input.
SparseGraph induced_subgraph(const SparseGraph& g, std::span<const NodeId> nodes);

// Edge list with u <= v for undirected graphs (each edge once), all stored
// entries otherwise.
std::vector<Edge> edge_list(const SparseGraph& g);

// Sparse real operator in CSR form with the same sparsity idiom as SparseGraph.
struct SparseOperator {
    std::size_t size = 0;
    std::vector<std::size_t> row_offsets{0};
    std::vector<NodeId> col_indices;
    std::vector<double> values;

    double at(NodeId i, NodeId j) const;

    // Y = S * X. Each output row is reduced in column order, so the result
    // does not depend on how rows are scheduled.
    Matrix multiply(const Matrix& x) const;
    Vector multiply(const Vector& x) const;
};

// S = D^-1/2 (A + I) D^-1/2 where D is the row degree of A + I. Existing
// self-loops are collapsed into the single added one.
SparseOperator normalized_adjacency(const SparseGraph& g);

}  // namespace cega
