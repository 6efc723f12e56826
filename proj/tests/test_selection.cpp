#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cega/errors.hpp"
#include "cega/selection.hpp"
#include "helpers.hpp"

using namespace cega;

namespace {

ScoreVector scores(std::vector<NodeId> ids, std::vector<double> values) { return {std::move(ids), std::move(values)}; }

// Reference top-k: full sort of (combined, id).
std::vector<NodeId> brute_top_k(const RankTable& t, const Weights& w, std::size_t k) {
    std::vector<std::pair<double, NodeId>> all;
    for (std::size_t i = 0; i < t.node_ids.size(); ++i)
        all.emplace_back(w.w1 * t.rank1[i] + w.w2 * t.rank2[i] + w.w3 * t.rank3[i], t.node_ids[i]);
    std::sort(all.begin(), all.end());
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
    return out;
}

RankTable table_from(const std::vector<NodeId>& ids, const ScoreVector& a, const ScoreVector& b, const ScoreVector& c) {
    return {ids, ranks_from_scores(a, Direction::HigherBetter), ranks_from_scores(b, Direction::LowerBetter),
            ranks_from_scores(c, Direction::HigherBetter)};
}

}  // namespace

TEST_CASE("ranks from scores") {
    CHECK(ranks_from_scores(scores({0, 1, 2}, {0.5, 0.9, 0.1}), Direction::HigherBetter) == std::vector<int>{2, 1, 3});
    CHECK(ranks_from_scores(scores({0, 1, 2}, {0.5, 0.9, 0.1}), Direction::LowerBetter) == std::vector<int>{2, 3, 1});
    // Ties go to the smaller node id, regardless of position.
    CHECK(ranks_from_scores(scores({9, 3, 5}, {1.0, 1.0, 1.0}), Direction::HigherBetter) == std::vector<int>{3, 1, 2});
    CHECK_NOTHROW(check_permutation(std::vector<int>{3, 1, 2}));
    CHECK_THROWS_AS(check_permutation(std::vector<int>{1, 1, 2}), StructuralError);
    CHECK_THROWS_AS(check_permutation(std::vector<int>{0, 1, 2}), StructuralError);
}

TEST_CASE("adaptive weight schedule") {
    const WeightSchedule s;
    const Weights w = adaptive_weights(1, s);
    CHECK(w.w1 == doctest::Approx(0.2 + 0.6 * std::exp(-0.3)).epsilon(1e-12));
    CHECK(w.w2 == doctest::Approx(0.2 + 0.6 * (1.0 - std::exp(-0.3))).epsilon(1e-12));
    CHECK(w.w3 == doctest::Approx(0.2 * (1.0 - std::exp(-1.0))).epsilon(1e-12));

    const Weights late = adaptive_weights(100, s);
    CHECK(late.w1 == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(late.w2 == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(late.w3 == doctest::Approx(0.2).epsilon(1e-9));

    WeightSchedule flat = s;
    flat.delta = 0.0;
    for (int g = 1; g < 10; ++g) {
        CHECK(adaptive_weights(g, flat).w1 == 0.2);
        CHECK(adaptive_weights(g, flat).w2 == 0.2);
    }
    for (int g = 1; g < 50; ++g) {
        const Weights a = adaptive_weights(g, s), b = adaptive_weights(g + 1, s);
        CHECK(b.w1 < a.w1);
        CHECK(b.w2 > a.w2);
        CHECK(b.w3 >= a.w3);
    }
    CHECK_THROWS_AS(adaptive_weights(0, s), UsageError);
}

TEST_CASE("top-k selection") {
    RankTable t{{10, 11, 12}, {1, 3, 2}, {3, 1, 2}, {2, 3, 1}};
    // Equal weights: sums 6, 7, 5.
    CHECK(select_top_k(t, {1, 1, 1}, 1) == std::vector<NodeId>{12});
    CHECK(select_top_k(t, {1, 1, 1}, 3) == std::vector<NodeId>{12, 10, 11});
    // Combined 0.5 r1 + 0.3 r2 + 0.2 r3 = 1.8, 2.4, 1.8 -> tie between 10 and 12.
    CHECK(select_top_k(t, {0.5, 0.3, 0.2}, 2) == std::vector<NodeId>{10, 12});
    CHECK_THROWS_AS(select_top_k(t, {1, 1, 1}, 4), UsageError);

    RankTable hand{{0, 1, 2}, {1, 2, 3}, {3, 1, 2}, {1, 3, 2}};
    const Weights w{0.5, 0.4, 0.1};
    // 0.5 + 1.2 + 0.1 = 1.8, 1.0 + 0.4 + 0.3 = 1.7, 1.5 + 0.8 + 0.2 = 2.5
    CHECK(select_top_k(hand, w, 1) == std::vector<NodeId>{1});
}

TEST_CASE("top-k agrees with brute force and is invariant to monotone transforms") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Matrix m = cega::testing::random_matrix(40, 3, seed);
        std::vector<NodeId> ids(40);
        std::iota(ids.begin(), ids.end(), 100);
        ScoreVector a{ids, {}}, b{ids, {}}, c{ids, {}};
        ScoreVector ta{ids, {}}, tb{ids, {}}, tc{ids, {}};
        for (Eigen::Index i = 0; i < 40; ++i) {
            a.values.push_back(m(i, 0));
            b.values.push_back(m(i, 1));
            c.values.push_back(m(i, 2));
            ta.values.push_back(std::exp(3.0 * m(i, 0)));
            tb.values.push_back(m(i, 1) * 7.0 - 2.0);
            tc.values.push_back(std::pow(m(i, 2) + 1.5, 3));
        }
        const RankTable t = table_from(ids, a, b, c);
        const Weights w = adaptive_weights(static_cast<int>(seed), {});
        const auto picked = select_top_k(t, w, 5);
        CHECK(picked == brute_top_k(t, w, 5));
        CHECK(picked == select_top_k(table_from(ids, ta, tb, tc), w, 5));
        CHECK(picked == select_top_k(t, {w.w1 * 3.5, w.w2 * 3.5, w.w3 * 3.5}, 5));
    }
}

TEST_CASE("random selection is uniform without replacement") {
    std::vector<NodeId> pool(20);
    std::iota(pool.begin(), pool.end(), 0);
    std::map<NodeId, int> hits;
    const int runs = 10000;
    for (int s = 0; s < runs; ++s) {
        const auto pick = random_select(pool, 2, static_cast<std::uint64_t>(s));
        REQUIRE(pick.size() == 2);
        CHECK(pick[0] != pick[1]);
        for (NodeId v : pick) ++hits[v];
    }
    for (NodeId v : pool) CHECK(std::abs(hits[v] / static_cast<double>(runs) - 0.1) <= 0.01);
    CHECK(random_select(pool, 3, 5) == random_select(pool, 3, 5));
    CHECK_THROWS_AS(random_select(pool, 21, 5), UsageError);
}

TEST_CASE("AGE beta schedule and percentiles") {
    CHECK(age_beta_shape(1) == doctest::Approx(0.10));
    CHECK(age_beta_shape(100) == doctest::Approx(1.05 - std::pow(0.95, 100)));

    // Beta(1, n) has mean 1 / (1 + n).
    Rng rng(3);
    double total = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double v = sample_beta_1n(2.0, rng);
        CHECK((v >= 0.0 && v <= 1.0));
        total += v;
    }
    CHECK(total / 20000 == doctest::Approx(1.0 / 3.0).epsilon(0.02));

    CHECK(percentile_transform(std::vector<double>{3, 1, 2}) == std::vector<double>{1.0, 0.0, 0.5});
    CHECK(percentile_transform(std::vector<double>{5, 5}) == std::vector<double>{0.0, 0.0});
    CHECK(percentile_transform(std::vector<double>{4}) == std::vector<double>{0.0});
}

TEST_CASE("AGE weights and selection") {
    for (int t = 1; t < 30; ++t) {
        const AgeWeights w = age_weights(t, static_cast<std::uint64_t>(t));
        CHECK(w.alpha + w.beta + w.gamma == doctest::Approx(1.0));
        CHECK(w.alpha == w.beta);
    }
    const std::vector<NodeId> ids{3, 4, 5, 6};
    const ScoreVector ent = scores(ids, {0.9, 0.1, 0.5, 0.2});
    const ScoreVector den = scores(ids, {0.1, 0.2, 0.9, 0.5});
    const ScoreVector cen = scores(ids, {0.2, 0.3, 0.9, 0.4});
    CHECK(age_select(ent, den, cen, 1, 2, 0, 1.0) == std::vector<NodeId>{5, 6});
    // Percentiles: entropy (1, 0, 2/3, 1/3), density (0, 1/3, 1, 2/3).
    CHECK(age_select(ent, den, cen, 1, 2, 0, 0.0) == std::vector<NodeId>{5, 3});
    const ScoreVector other = scores({3, 4, 5, 7}, {0, 0, 0, 0});
    CHECK_THROWS_AS(age_select(ent, den, other, 1, 1, 0), UsageError);
}

TEST_CASE("AGE density is highest at cluster centers") {
    Matrix emb(5, 1);
    emb << 0, 1, 2, 100, 101;
    DiversityConfig cfg;
    const auto d = age_density(emb, 2, cfg);
    CHECK(d[1] == doctest::Approx(1.0));
    CHECK(d[0] == doctest::Approx(0.5));
    CHECK(d[3] == doctest::Approx(1.0 / 1.5));
}
