#include "cega/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cega/errors.hpp"
#include "cega/rng.hpp"

namespace cega {

std::vector<int> ranks_from_scores(const ScoreVector& scores, Direction direction) {
    const std::size_t m = scores.size();
    if (m == 0) throw UsageError("cannot rank an empty score vector");
    if (scores.values.size() != m) throw StructuralError("score vector ids and values differ in length");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = scores.values[a], sb = scores.values[b];
        if (sa != sb) return direction == Direction::HigherBetter ? sa > sb : sa < sb;
        return scores.node_ids[a] < scores.node_ids[b];
    });
    std::vector<int> ranks(m);
    for (std::size_t pos = 0; pos < m; ++pos) ranks[order[pos]] = static_cast<int>(pos + 1);
    return ranks;
}

void check_permutation(std::span<const int> ranks) {
    std::vector<bool> seen(ranks.size() + 1, false);
    for (int r : ranks) {
        if (r < 1 || static_cast<std::size_t>(r) > ranks.size() || seen[static_cast<std::size_t>(r)])
            throw StructuralError("rank column is not a permutation of 1..m");
        seen[static_cast<std::size_t>(r)] = true;
    }
}

void validate(const WeightSchedule& s) {
    for (double v : {s.alpha1, s.alpha2, s.alpha3, s.delta, s.lambda})
        if (!std::isfinite(v)) throw ConfigError("weight schedule entries must be finite");
    if (!(s.lambda > 0.0)) throw ConfigError("weight_schedule.lambda must be positive");
}

Weights adaptive_weights(int gamma, const WeightSchedule& sched) {
    if (gamma < 1) throw UsageError("cycle index must be >= 1");
    const double g = static_cast<double>(gamma);
    const double decay = std::exp(-sched.lambda * g);
    return {sched.alpha1 + sched.delta * decay, sched.alpha2 + sched.delta * (1.0 - decay),
            sched.alpha3 * (1.0 - std::exp(-g))};
}

void check(const RankTable& table) {
    const std::size_t m = table.node_ids.size();
    if (table.rank1.size() != m || table.rank2.size() != m || table.rank3.size() != m)
        throw StructuralError("rank table columns differ in length");
    check_permutation(table.rank1);
    check_permutation(table.rank2);
    check_permutation(table.rank3);
}

std::vector<NodeId> select_top_k(const RankTable& table, const Weights& weights, std::size_t k) {
    check(table);
    const std::size_t m = table.node_ids.size();
    if (k > m) throw UsageError("cannot select " + std::to_string(k) + " of " + std::to_string(m) + " candidates");
    std::vector<double> combined(m);
    for (std::size_t i = 0; i < m; ++i)
        combined[i] = weights.w1 * table.rank1[i] + weights.w2 * table.rank2[i] + weights.w3 * table.rank3[i];
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto better = [&](std::size_t a, std::size_t b) {
        if (combined[a] != combined[b]) return combined[a] < combined[b];
        return table.node_ids[a] < table.node_ids[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
    std::vector<NodeId> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = table.node_ids[order[i]];
    return out;
}

std::vector<NodeId> random_select(std::span<const NodeId> candidates, std::size_t k, std::uint64_t seed) {
    if (k > candidates.size())
        throw UsageError("cannot sample " + std::to_string(k) + " of " + std::to_string(candidates.size()) +
                         " candidates");
    std::vector<NodeId> pool(candidates.begin(), candidates.end());
    Rng rng = make_rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

double age_beta_shape(int t) { return 1.05 - std::pow(0.95, t); }

double sample_beta_1n(double n, Rng& rng) {
    const double u = uniform01(rng);
    return 1.0 - std::pow(u, 1.0 / n);
}

std::vector<double> percentile_transform(std::span<const double> values) {
    const std::size_t m = values.size();
    std::vector<double> out(m, 0.0);
    if (m <= 1) return out;
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < m; ++i) {
        const auto below = std::lower_bound(sorted.begin(), sorted.end(), values[i]) - sorted.begin();
        out[i] = static_cast<double>(below) / static_cast<double>(m - 1);
    }
    return out;
}

AgeWeights age_weights(int t, std::uint64_t seed, std::optional<double> forced_gamma) {
    if (t < 1) throw UsageError("AGE iteration index must be >= 1");
    double gamma = 0.0;
    if (forced_gamma) {
        gamma = *forced_gamma;
    } else {
        Rng rng = make_rng(seed);
        gamma = sample_beta_1n(age_beta_shape(t), rng);
    }
    const double rest = (1.0 - gamma) / 2.0;
    return {rest, rest, gamma};
}

std::vector<double> age_density(const Matrix& embeddings, std::size_t num_clusters, const DiversityConfig& cfg) {
    const KMeansResult fit = kmeans_fit(embeddings, num_clusters, cfg);
    std::vector<double> out(static_cast<std::size_t>(embeddings.rows()));
    for (Eigen::Index i = 0; i < embeddings.rows(); ++i)
        out[static_cast<std::size_t>(i)] = 1.0 / (1.0 + nearest_centroid(fit.centroids, embeddings.row(i)).second);
    return out;
}

std::vector<NodeId> age_select(const ScoreVector& entropy, const ScoreVector& density, const ScoreVector& centrality,
                               int t, std::size_t k, std::uint64_t seed, std::optional<double> forced_gamma) {
    if (entropy.node_ids != density.node_ids || entropy.node_ids != centrality.node_ids)
        throw UsageError("AGE score vectors cover different candidates");
    const std::size_t m = entropy.size();
    if (k > m) throw UsageError("cannot select " + std::to_string(k) + " of " + std::to_string(m) + " candidates");

    const AgeWeights w = age_weights(t, seed, forced_gamma);
    const auto pe = percentile_transform(entropy.values);
    const auto pd = percentile_transform(density.values);
    const auto pc = percentile_transform(centrality.values);
    std::vector<double> combined(m);
    for (std::size_t i = 0; i < m; ++i) combined[i] = w.alpha * pe[i] + w.beta * pd[i] + w.gamma * pc[i];

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (combined[a] != combined[b]) return combined[a] > combined[b];
                          return entropy.node_ids[a] < entropy.node_ids[b];
                      });
    std::vector<NodeId> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = entropy.node_ids[order[i]];
    return out;
}

}  // namespace cega
