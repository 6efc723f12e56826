#include "cega/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>

#include "cega/errors.hpp"
#include "cega/rng.hpp"

namespace cega {

ScoreVector ScoreVector::subset(std::span<const NodeId> ids) const {
    std::unordered_map<NodeId, std::size_t> where;
    where.reserve(node_ids.size());
    for (std::size_t i = 0; i < node_ids.size(); ++i) where.emplace(node_ids[i], i);
    ScoreVector out;
    out.node_ids.assign(ids.begin(), ids.end());
    out.values.reserve(ids.size());
    for (NodeId id : ids) {
        auto it = where.find(id);
        if (it == where.end()) throw UsageError("node " + std::to_string(id) + " has no score");
        out.values.push_back(values[it->second]);
    }
    return out;
}

void validate(const PageRankConfig& cfg) {
    if (!(cfg.damping > 0.0 && cfg.damping < 1.0)) throw ConfigError("pagerank.damping must lie in (0, 1)");
    if (!(cfg.tol > 0.0)) throw ConfigError("pagerank.tol must be positive");
    if (cfg.max_iter < 1) throw ConfigError("pagerank.max_iter must be >= 1");
}

void validate(const PerturbationConfig& cfg) {
    if (!(cfg.epsilon > 0.0) || !std::isfinite(cfg.epsilon)) throw ConfigError("perturb.epsilon must be positive");
    if (cfg.trials < 1) throw ConfigError("perturb.trials must be >= 1");
}

void validate(const DiversityConfig& cfg) {
    if (!(cfg.rho >= 0.0 && cfg.rho <= 1.0)) throw ConfigError("diversity.rho must lie in [0, 1]");
    if (cfg.kmeans_max_iter < 1) throw ConfigError("diversity.kmeans_max_iter must be >= 1");
    if (!(cfg.kmeans_tol > 0.0)) throw ConfigError("diversity.kmeans_tol must be positive");
}

ScoreVector pagerank(const SparseGraph& g, const PageRankConfig& cfg) {
    validate(cfg);
    const std::size_t n = g.num_nodes;
    if (n == 0) throw UsageError("pagerank needs at least one node");
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<double> rank(n, inv_n), next(n);
    double residual = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        double dangling = 0.0;
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t w = 0; w < n; ++w) {
            const std::size_t out = g.degree(static_cast<NodeId>(w));
            if (out == 0) {
                dangling += rank[w];
                continue;
            }
            const double share = rank[w] / static_cast<double>(out);
            for (NodeId v : g.neighbors(static_cast<NodeId>(w))) next[v] += share;
        }
        const double base = (1.0 - cfg.damping) * inv_n + cfg.damping * dangling * inv_n;
        residual = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            next[v] = base + cfg.damping * next[v];
            residual += std::abs(next[v] - rank[v]);
        }
        rank.swap(next);
        if (residual <= cfg.tol) {
            ScoreVector out;
            out.node_ids.resize(n);
            for (std::size_t v = 0; v < n; ++v) out.node_ids[v] = static_cast<NodeId>(v);
            out.values = std::move(rank);
            return out;
        }
    }
    throw NumericalError("pagerank did not converge in " + std::to_string(cfg.max_iter) + " iterations", residual);
}

ScoreVector entropy_scores(const Matrix& softmax, std::span<const NodeId> candidates) {
    ScoreVector out;
    out.node_ids.assign(candidates.begin(), candidates.end());
    out.values.reserve(candidates.size());
    for (NodeId v : candidates) {
        if (static_cast<Eigen::Index>(v) >= softmax.rows()) throw UsageError("candidate outside softmax rows");
        double h = 0.0;
        for (Eigen::Index j = 0; j < softmax.cols(); ++j) {
            const double p = softmax(static_cast<Eigen::Index>(v), j);
            if (p > 0.0) h -= p * std::log(p);
        }
        out.values.push_back(h);
    }
    return out;
}

namespace {

Matrix gaussian_noise(Eigen::Index rows, Eigen::Index cols, double epsilon, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> dist(0.0, epsilon);
    Matrix noise(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) noise(i, j) = dist(rng);
    return noise;
}

}  // namespace

ScoreVector perturbation_scores(const GcnParams& params, const SparseOperator& norm_adj, const Matrix& x,
                                std::span<const NodeId> candidates, const PerturbationConfig& cfg) {
    validate(cfg);
    const Prediction clean = predict_embed(params, norm_adj, x);
    for (NodeId v : candidates)
        if (v >= clean.labels.size()) throw UsageError("candidate outside graph");

    ScoreVector out;
    out.node_ids.assign(candidates.begin(), candidates.end());
    out.values.assign(candidates.size(), 0.0);
    for (int trial = 0; trial < cfg.trials; ++trial) {
        Matrix noisy = x;
        if (!cfg.zero_noise)
            noisy += gaussian_noise(x.rows(), x.cols(), cfg.epsilon,
                                    substream(cfg.seed, static_cast<std::uint64_t>(trial)));
        const ForwardCache cache = forward(params, norm_adj, noisy);
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(candidates[i]);
            if (argmax_row(cache.softmax, row) == clean.labels[candidates[i]]) out.values[i] += 1.0;
        }
    }
    return out;
}

double max_softmax_deviation(const GcnParams& params, const SparseOperator& norm_adj, const Matrix& x,
                             std::span<const NodeId> candidates, double epsilon, std::uint64_t seed) {
    const ForwardCache clean = forward(params, norm_adj, x);
    const ForwardCache noisy = forward(params, norm_adj, x + gaussian_noise(x.rows(), x.cols(), epsilon, seed));
    double worst = 0.0;
    for (NodeId v : candidates) {
        const auto row = static_cast<Eigen::Index>(v);
        worst = std::max(worst, (clean.softmax.row(row) - noisy.softmax.row(row)).norm());
    }
    return worst;
}

std::pair<int, double> nearest_centroid(const Matrix& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& point) {
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const double d2 = (centroids.row(c) - point).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = static_cast<int>(c);
        }
    }
    return {best, std::sqrt(best_d2)};
}

KMeansResult kmeans_fit(const Matrix& points, std::size_t k, const DiversityConfig& cfg) {
    validate(cfg);
    const Eigen::Index m = points.rows();
    if (m < 1) throw UsageError("kmeans needs at least one point");
    if (k < 1) throw UsageError("kmeans needs k >= 1");
    const auto kk = static_cast<Eigen::Index>(k);

    KMeansResult res;
    res.assignments.resize(static_cast<std::size_t>(m));
    if (m < kk) {
        res.degenerate = true;
        res.centroids.resize(kk, points.cols());
        for (Eigen::Index c = 0; c < kk; ++c) res.centroids.row(c) = points.row(c % m);
        for (Eigen::Index i = 0; i < m; ++i) res.assignments[static_cast<std::size_t>(i)] = static_cast<int>(i);
        res.inertia.push_back(0.0);
        return res;
    }

    // k-means++ seeding.
    Rng rng = make_rng(cfg.kmeans_seed);
    Matrix centroids(kk, points.cols());
    std::vector<double> d2(static_cast<std::size_t>(m), std::numeric_limits<double>::infinity());
    centroids.row(0) = points.row(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m)));
    for (Eigen::Index c = 1; c < kk; ++c) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            auto& di = d2[static_cast<std::size_t>(i)];
            di = std::min(di, (points.row(i) - centroids.row(c - 1)).squaredNorm());
            total += di;
        }
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double target = uniform01(rng) * total;
            pick = m - 1;
            for (Eigen::Index i = 0; i < m; ++i) {
                target -= d2[static_cast<std::size_t>(i)];
                if (target < 0.0 && d2[static_cast<std::size_t>(i)] > 0.0) {
                    pick = i;
                    break;
                }
            }
            while (d2[static_cast<std::size_t>(pick)] == 0.0) --pick;
        } else {
            pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m));
        }
        centroids.row(c) = points.row(pick);
    }

    std::vector<double> dist(static_cast<std::size_t>(m));
    auto assign = [&] {
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            auto [c, d] = nearest_centroid(centroids, points.row(i));
            res.assignments[static_cast<std::size_t>(i)] = c;
            dist[static_cast<std::size_t>(i)] = d;
            inertia += d * d;
        }
        res.inertia.push_back(inertia);
    };

    assign();
    for (int iter = 0; iter < cfg.kmeans_max_iter; ++iter) {
        Matrix sums = Matrix::Zero(kk, points.cols());
        std::vector<std::size_t> counts(k, 0);
        for (Eigen::Index i = 0; i < m; ++i) {
            const int c = res.assignments[static_cast<std::size_t>(i)];
            sums.row(c) += points.row(i);
            ++counts[static_cast<std::size_t>(c)];
        }
        Matrix updated(kk, points.cols());
        for (Eigen::Index c = 0; c < kk; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                updated.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            } else {
                // Empty cluster: move it onto the point worst served by its centroid.
                auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
                updated.row(c) = points.row(far);
                dist[static_cast<std::size_t>(far)] = 0.0;
            }
        }
        const double movement = (updated - centroids).rowwise().norm().maxCoeff();
        centroids = std::move(updated);
        assign();
        if (movement <= cfg.kmeans_tol) break;
    }
    res.centroids = std::move(centroids);
    return res;
}

std::vector<double> minmax_scale(std::span<const double> values) {
    if (values.empty()) return {};
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double min = *lo, max = *hi;
    std::vector<double> out(values.size(), 0.0);
    if (max == min) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - min) / (max - min);
    return out;
}

std::vector<double> diversity_from_terms(std::span<const double> delta, std::span<const std::size_t> cluster_size,
                                         double rho) {
    if (delta.size() != cluster_size.size()) throw UsageError("diversity terms differ in length");
    if (delta.empty()) throw UsageError("diversity needs at least one candidate");
    std::vector<double> closeness(delta.size()), sparsity(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
        closeness[i] = 1.0 / (1.0 + delta[i]);
        sparsity[i] = 1.0 / (1.0 + static_cast<double>(cluster_size[i]));
    }
    const auto a = minmax_scale(closeness);
    const auto b = minmax_scale(sparsity);
    std::vector<double> out(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) out[i] = rho * a[i] + (1.0 - rho) * b[i];
    return out;
}

ScoreVector diversity_scores(const Matrix& candidate_embeddings, std::span<const NodeId> candidate_ids,
                             const Matrix& centroids, std::span<const int> queried_assignments, double rho) {
    if (candidate_ids.empty()) throw UsageError("diversity needs at least one candidate");
    if (static_cast<std::size_t>(candidate_embeddings.rows()) != candidate_ids.size())
        throw StructuralError("one embedding row per candidate required");
    if (centroids.rows() < 1 || centroids.cols() != candidate_embeddings.cols())
        throw StructuralError("centroid shape does not match embeddings");

    std::vector<std::size_t> sizes(static_cast<std::size_t>(centroids.rows()), 0);
    for (int a : queried_assignments) {
        if (a < 0 || a >= centroids.rows()) throw UsageError("queried assignment out of range");
        ++sizes[static_cast<std::size_t>(a)];
    }
    std::vector<double> delta(candidate_ids.size());
    std::vector<std::size_t> cluster(candidate_ids.size());
    for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
        auto [c, d] = nearest_centroid(centroids, candidate_embeddings.row(static_cast<Eigen::Index>(i)));
        delta[i] = d;
        cluster[i] = sizes[static_cast<std::size_t>(c)];
    }
    ScoreVector out;
    out.node_ids.assign(candidate_ids.begin(), candidate_ids.end());
    out.values = diversity_from_terms(delta, cluster, rho);
    return out;
}

}  // namespace cega
