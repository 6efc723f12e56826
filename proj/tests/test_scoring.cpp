#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cega/errors.hpp"
#include "cega/scoring.hpp"
#include "helpers.hpp"

using namespace cega;
using cega::testing::dense_adjacency;
using cega::testing::random_edges;
using cega::testing::random_matrix;

namespace {

// Solves (I - xi M) r = (1 - xi)/N 1 with M the column-stochastic transition
// matrix, where dangling columns are uniform.
Eigen::VectorXd dense_pagerank(const SparseGraph& g, double xi) {
    const auto n = static_cast<Eigen::Index>(g.num_nodes);
    const Eigen::MatrixXd a = dense_adjacency(g);
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index w = 0; w < n; ++w) {
        const double out = a.row(w).sum();
        for (Eigen::Index v = 0; v < n; ++v) m(v, w) = out > 0 ? a(w, v) / out : 1.0 / static_cast<double>(n);
    }
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n) - xi * m;
    const Eigen::VectorXd rhs = Eigen::VectorXd::Constant(n, (1.0 - xi) / static_cast<double>(n));
    return lhs.partialPivLu().solve(rhs);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::vector<NodeId> iota_ids(std::size_t n) {
    std::vector<NodeId> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

}  // namespace

TEST_CASE("PageRank closed forms") {
    const SparseGraph single = build_csr(std::span<const Edge>{}, 1, true);
    CHECK(pagerank(single).values[0] == doctest::Approx(1.0).epsilon(1e-12));

    const SparseGraph pair = build_csr(std::vector<Edge>{{0, 1}}, 2, true);
    for (double r : pagerank(pair).values) CHECK(r == doctest::Approx(0.5).epsilon(1e-12));

    const SparseGraph cycle = build_csr(std::vector<Edge>{{0, 1}, {1, 2}, {2, 0}}, 3, false);
    for (double r : pagerank(cycle).values) CHECK(r == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // Directed 0 -> 1 with node 1 dangling: r0 = 0.075 + 0.425 r1, r1 = 0.075 + 0.85 r0 + 0.425 r1.
    const SparseGraph chain = build_csr(std::vector<Edge>{{0, 1}}, 2, false);
    const auto pr = pagerank(chain).values;
    CHECK(pr[0] == doctest::Approx(0.5 / 1.425).epsilon(1e-9));
    CHECK(pr[1] == doctest::Approx(1.0 - 0.5 / 1.425).epsilon(1e-9));
}

TEST_CASE("PageRank agrees with a dense linear solve") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const bool undirected = seed % 2 == 0;
        const SparseGraph g = build_csr(random_edges(40, 0.08, seed), 40, undirected);
        const ScoreVector pr = pagerank(g);
        const Eigen::VectorXd oracle = dense_pagerank(g, 0.85);
        double worst = 0.0, total = 0.0;
        for (std::size_t i = 0; i < pr.size(); ++i) {
            worst = std::max(worst, std::abs(pr.values[i] - oracle[static_cast<Eigen::Index>(i)]));
            total += pr.values[i];
            CHECK(pr.values[i] >= 0.15 / 40.0 - 1e-12);
        }
        CHECK(worst <= 1e-8);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("PageRank config validation and non-convergence") {
    const SparseGraph g = build_csr(random_edges(30, 0.1, 3), 30, false);
    PageRankConfig cfg;
    cfg.damping = 1.0;
    CHECK_THROWS_AS(pagerank(g, cfg), ConfigError);
    cfg = {};
    cfg.max_iter = 1;
    cfg.tol = 1e-15;
    CHECK_THROWS_AS(pagerank(g, cfg), NumericalError);
}

TEST_CASE("entropy scores") {
    Matrix p(3, 5);
    p.row(0).setConstant(0.2);
    p.row(1) << 0.7, 0.2, 0.1, 0.0, 0.0;
    p.row(2) << 1.0, 0.0, 0.0, 0.0, 0.0;
    const std::vector<NodeId> ids{0, 1, 2};
    const ScoreVector h = entropy_scores(p, ids);
    CHECK(h.values[0] == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    const double expected = -(0.7 * std::log(0.7) + 0.2 * std::log(0.2) + 0.1 * std::log(0.1));
    CHECK(h.values[1] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(h.values[2] == 0.0);

    // Permuting classes leaves entropy unchanged.
    Matrix q = p;
    q.col(0).swap(q.col(3));
    const ScoreVector hq = entropy_scores(q, ids);
    for (std::size_t i = 0; i < 3; ++i) CHECK(hq.values[i] == doctest::Approx(h.values[i]));

    // Random softmax rows stay inside [0, ln C].
    Matrix z = random_matrix(100, 4, 8, 5.0);
    Matrix s = z.array().exp();
    for (Eigen::Index i = 0; i < s.rows(); ++i) s.row(i) /= s.row(i).sum();
    for (double v : entropy_scores(s, iota_ids(100)).values) {
        CHECK(v >= 0.0);
        CHECK(v <= std::log(4.0) + 1e-12);
    }
}

TEST_CASE("perturbation scores with zero noise equal the trial count") {
    const SparseGraph g = build_csr(random_edges(10, 0.3, 2), 10, true);
    const GcnParams params = init_params(3, 4, 2, 1);
    PerturbationConfig cfg;
    cfg.zero_noise = true;
    cfg.trials = 7;
    const ScoreVector s = perturbation_scores(params, normalized_adjacency(g), random_matrix(10, 3, 5), iota_ids(10), cfg);
    for (double v : s.values) CHECK(v == 7.0);
}

namespace {

// One node with hidden activation 1 + n and logit margin 0.1 + n, so each
// trial flips exactly when n < -0.1.
struct MarginModel {
    GcnParams params;
    SparseOperator op;
    Matrix x;
    MarginModel() {
        params.w1 = Matrix::Constant(1, 1, 1.0);
        params.w2.resize(1, 2);
        params.w2 << 1.0, 0.0;
        params.b2.resize(2);
        params.b2 << -0.9, 0.0;
        op = normalized_adjacency(build_csr(std::span<const Edge>{}, 1, true));
        x = Matrix::Constant(1, 1, 1.0);
    }
};

}  // namespace

TEST_CASE("perturbation scores follow the Gaussian tail of the margin") {
    const MarginModel mm;
    const std::vector<NodeId> ids{0};
    PerturbationConfig cfg;
    cfg.epsilon = 0.05;
    cfg.trials = 5;
    const double flip = normal_cdf(-2.0);
    const int runs = 2000;
    double unchanged = 0.0;
    int all_stable = 0;
    for (int seed = 0; seed < runs; ++seed) {
        cfg.seed = static_cast<std::uint64_t>(seed);
        const double v = perturbation_scores(mm.params, mm.op, mm.x, ids, cfg).values[0];
        unchanged += v;
        all_stable += v == cfg.trials;
    }
    const double trials = static_cast<double>(runs * cfg.trials);
    const double se = std::sqrt(flip * (1 - flip) / trials);
    CHECK(std::abs(unchanged / trials - (1.0 - flip)) <= 4.0 * se);
    // Union bound over the trials.
    CHECK(static_cast<double>(all_stable) / runs >= 1.0 - cfg.trials * flip - 0.02);

    cfg.trials = 1;
    for (int seed = 0; seed < 20; ++seed) {
        cfg.seed = static_cast<std::uint64_t>(seed);
        const double v = perturbation_scores(mm.params, mm.op, mm.x, ids, cfg).values[0];
        CHECK((v == 0.0 || v == 1.0));
    }
}

TEST_CASE("softmax deviation grows with the noise scale") {
    const SparseGraph g = build_csr(random_edges(30, 0.15, 4), 30, true);
    const SparseOperator op = normalized_adjacency(g);
    const GcnParams params = init_params(5, 8, 3, 2);
    const Matrix x = random_matrix(30, 5, 6);
    const auto ids = iota_ids(30);
    double prev = 0.0;
    for (double eps : {1e-4, 1e-3, 1e-2, 1e-1}) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) total += max_softmax_deviation(params, op, x, ids, eps, seed);
        CHECK(total >= prev);
        prev = total;
    }
    CHECK(max_softmax_deviation(params, op, x, ids, 0.0, 1) == 0.0);
}

TEST_CASE("k-means on exactly k points has zero inertia") {
    const Matrix pts = random_matrix(4, 3, 1);
    DiversityConfig cfg;
    const KMeansResult r = kmeans_fit(pts, 4, cfg);
    CHECK_FALSE(r.degenerate);
    CHECK(r.inertia.back() == doctest::Approx(0.0));
}

TEST_CASE("k-means matches the exhaustive optimum on two separated pairs") {
    Matrix pts(4, 2);
    pts << 0, 0, 0, 1, 10, 0, 10, 1;
    // Exhaustive search over all 2-partitions.
    double best = std::numeric_limits<double>::infinity();
    for (int mask = 1; mask < 15; ++mask) {
        double cost = 0.0;
        for (int side = 0; side < 2; ++side) {
            Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
            int count = 0;
            for (int i = 0; i < 4; ++i)
                if (((mask >> i) & 1) == side) {
                    mean += pts.row(i);
                    ++count;
                }
            mean /= count;
            for (int i = 0; i < 4; ++i)
                if (((mask >> i) & 1) == side) cost += (pts.row(i) - mean).squaredNorm();
        }
        best = std::min(best, cost);
    }
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        DiversityConfig cfg;
        cfg.kmeans_seed = seed;
        const KMeansResult r = kmeans_fit(pts, 2, cfg);
        CHECK(r.inertia.back() == doctest::Approx(best));
        CHECK(r.assignments[0] == r.assignments[1]);
        CHECK(r.assignments[2] == r.assignments[3]);
        CHECK(r.assignments[0] != r.assignments[2]);
    }
}

TEST_CASE("k-means is deterministic with non-increasing inertia") {
    const Matrix pts = random_matrix(200, 4, 3);
    DiversityConfig cfg;
    cfg.kmeans_seed = 9;
    const KMeansResult a = kmeans_fit(pts, 6, cfg);
    const KMeansResult b = kmeans_fit(pts, 6, cfg);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids == b.centroids);
    for (std::size_t i = 1; i < a.inertia.size(); ++i) CHECK(a.inertia[i] <= a.inertia[i - 1] + 1e-9);
}

TEST_CASE("k-means with fewer points than clusters is degenerate") {
    const KMeansResult r = kmeans_fit(random_matrix(2, 3, 1), 5, {});
    CHECK(r.degenerate);
    CHECK(r.centroids.rows() == 5);
}

TEST_CASE("min-max scaling") {
    CHECK(minmax_scale(std::vector<double>{1, 2, 3}) == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(minmax_scale(std::vector<double>{7, 7}) == std::vector<double>{0.0, 0.0});
    const auto s = minmax_scale(std::vector<double>{-1, 0, 3});
    CHECK(s[0] == 0.0);
    CHECK(s[1] == doctest::Approx(0.25));
    CHECK(s[2] == 1.0);
}

TEST_CASE("diversity hand case") {
    Matrix centroids(3, 1);
    centroids << 0, 10, 20;
    Matrix cand(3, 1);
    cand << 0, 11, 23;
    const std::vector<NodeId> ids{4, 8, 9};
    const std::vector<int> queried{0, 0, 0, 0, 0, 1, 2};
    const ScoreVector d = diversity_scores(cand, ids, centroids, queried, 0.8);
    CHECK(d.node_ids == ids);
    CHECK(d.values[0] == doctest::Approx(0.8));
    CHECK(d.values[1] == doctest::Approx(0.8 / 3.0 + 0.2));
    CHECK(d.values[2] == doctest::Approx(0.2));

    const std::vector<double> delta{0, 1, 3};
    const std::vector<std::size_t> sizes{5, 1, 1};
    const auto terms = diversity_from_terms(delta, sizes, 0.8);
    for (std::size_t i = 0; i < 3; ++i) CHECK(terms[i] == doctest::Approx(d.values[i]));
}

TEST_CASE("diversity properties") {
    Matrix centroids(1, 2);
    centroids << 0, 0;
    const std::vector<int> queried{0};
    Matrix one(1, 2);
    one << 3, 4;
    CHECK(diversity_scores(one, std::vector<NodeId>{0}, centroids, queried, 0.8).values[0] == 0.0);

    const Matrix emb = random_matrix(50, 3, 2, 4.0);
    const Matrix cents = random_matrix(4, 3, 3, 4.0);
    const std::vector<int> qa{0, 1, 1, 2, 3, 3, 3};
    const ScoreVector d = diversity_scores(emb, iota_ids(50), cents, qa, 0.6);
    for (double v : d.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // With rho = 1 the score orders candidates by distance to the nearest centroid.
    const ScoreVector pure = diversity_scores(emb, iota_ids(50), cents, qa, 1.0);
    for (Eigen::Index i = 0; i < 50; ++i)
        for (Eigen::Index j = 0; j < 50; ++j) {
            const double di = nearest_centroid(cents, emb.row(i)).second;
            const double dj = nearest_centroid(cents, emb.row(j)).second;
            if (di < dj) CHECK(pure.values[static_cast<std::size_t>(i)] >= pure.values[static_cast<std::size_t>(j)]);
        }
}
