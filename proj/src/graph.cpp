#include "cega/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cega/errors.hpp"

namespace cega {

bool SparseGraph::has_edge(NodeId u, NodeId v) const {
    auto row = neighbors(u);
    return std::binary_search(row.begin(), row.end(), v);
}

SparseGraph build_csr(std::span<const Edge> edges, std::size_t num_nodes, bool undirected) {
    std::vector<Edge> entries;
    entries.reserve(undirected ? 2 * edges.size() : edges.size());
    for (const auto& [u, v] : edges) {
        if (u >= num_nodes || v >= num_nodes) {
            throw StructuralError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                  ") has an endpoint outside [0, " + std::to_string(num_nodes) + ")");
        }
        entries.emplace_back(u, v);
        if (undirected && u != v) entries.emplace_back(v, u);
    }
    std::sort(entries.begin(), entries.end());
    entries.erase(std::unique(entries.begin(), entries.end()), entries.end());

    SparseGraph g;
    g.num_nodes = num_nodes;
    g.undirected = undirected;
    g.row_offsets.assign(num_nodes + 1, 0);
    g.col_indices.reserve(entries.size());
    for (const auto& [u, v] : entries) {
        ++g.row_offsets[u + 1];
        g.col_indices.push_back(v);
    }
    for (std::size_t i = 0; i < num_nodes; ++i) g.row_offsets[i + 1] += g.row_offsets[i];
    return g;
}

void audit(const SparseGraph& g) {
    if (g.row_offsets.size() != g.num_nodes + 1) throw StructuralError("row_offsets has wrong length");
    if (g.row_offsets.front() != 0) throw StructuralError("row_offsets must start at 0");
    if (g.row_offsets.back() != g.col_indices.size())
        throw StructuralError("last row offset does not match col_indices length");
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
        if (g.row_offsets[v + 1] < g.row_offsets[v])
            throw StructuralError("row_offsets decreases at row " + std::to_string(v));
        auto row = g.neighbors(static_cast<NodeId>(v));
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (row[k] >= g.num_nodes)
                throw StructuralError("column index out of range in row " + std::to_string(v));
            if (k > 0 && row[k] <= row[k - 1])
                throw StructuralError("unsorted or duplicate column in row " + std::to_string(v));
        }
    }
    if (g.undirected) {
        for (std::size_t v = 0; v < g.num_nodes; ++v) {
            for (NodeId u : g.neighbors(static_cast<NodeId>(v))) {
                if (!g.has_edge(u, static_cast<NodeId>(v)))
                    throw StructuralError("undirected graph is not symmetric at (" + std::to_string(v) +
                                          ", " + std::to_string(u) + ")");
            }
        }
    }
}

SparseGraph induced_subgraph(const SparseGraph& g, std::span<const NodeId> nodes) {
    std::vector<std::int64_t> local(g.num_nodes, -1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i] >= g.num_nodes) throw StructuralError("subgraph node out of range");
        if (local[nodes[i]] != -1) throw StructuralError("duplicate node in subgraph selection");
        local[nodes[i]] = static_cast<std::int64_t>(i);
    }
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (NodeId u : g.neighbors(nodes[i])) {
            if (local[u] >= 0) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(local[u]));
        }
    }
    // Edges arrive in both directions already when g is undirected.
    return build_csr(edges, nodes.size(), g.undirected);
}

std::vector<Edge> edge_list(const SparseGraph& g) {
    std::vector<Edge> out;
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
        for (NodeId u : g.neighbors(static_cast<NodeId>(v))) {
            if (!g.undirected || v <= u) out.emplace_back(static_cast<NodeId>(v), u);
        }
    }
    return out;
}

double SparseOperator::at(NodeId i, NodeId j) const {
    auto first = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[i]);
    auto last = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[i + 1]);
    auto it = std::lower_bound(first, last, j);
    if (it == last || *it != j) return 0.0;
    return values[static_cast<std::size_t>(it - col_indices.begin())];
}

Matrix SparseOperator::multiply(const Matrix& x) const {
    if (static_cast<std::size_t>(x.rows()) != size)
        throw StructuralError("operator size " + std::to_string(size) + " does not match " +
                              std::to_string(x.rows()) + " input rows");
    Matrix y = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < size; ++i) {
        for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) {
            y.row(static_cast<Eigen::Index>(i)) += values[k] * x.row(col_indices[k]);
        }
    }
    return y;
}

Vector SparseOperator::multiply(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != size) throw StructuralError("operator/vector size mismatch");
    Vector y = Vector::Zero(x.size());
    for (std::size_t i = 0; i < size; ++i) {
        double acc = 0.0;
        for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) acc += values[k] * x[col_indices[k]];
        y[static_cast<Eigen::Index>(i)] = acc;
    }
    return y;
}

SparseOperator normalized_adjacency(const SparseGraph& g) {
    const std::size_t n = g.num_nodes;
    SparseOperator s;
    s.size = n;
    s.row_offsets.assign(n + 1, 0);

    // Rows of A + I: the stored neighbors with the diagonal merged in once.
    std::vector<std::vector<NodeId>> rows(n);
    std::vector<double> degree(n);
    for (std::size_t v = 0; v < n; ++v) {
        auto nb = g.neighbors(static_cast<NodeId>(v));
        auto& row = rows[v];
        row.assign(nb.begin(), nb.end());
        auto pos = std::lower_bound(row.begin(), row.end(), static_cast<NodeId>(v));
        if (pos == row.end() || *pos != v) row.insert(pos, static_cast<NodeId>(v));
        degree[v] = static_cast<double>(row.size());
    }
    for (std::size_t v = 0; v < n; ++v) {
        for (NodeId u : rows[v]) {
            s.col_indices.push_back(u);
            s.values.push_back(1.0 / std::sqrt(degree[v] * degree[u]));
        }
        s.row_offsets[v + 1] = s.col_indices.size();
    }
    return s;
}

}  // namespace cega
