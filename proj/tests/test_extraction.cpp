#include <doctest.h>

#include <algorithm>
#include <set>

#include "cega/errors.hpp"
#include "cega/extraction.hpp"

using namespace cega;

namespace {

struct Fixture {
    Dataset ds;
    NodePartition part;
    GcnParams target;
    ExtractionConfig cfg;

    Fixture() {
        SbmConfig sbm;
        sbm.num_nodes = 200;
        sbm.num_classes = 3;
        sbm.feature_dim = 8;
        sbm.feature_separation = 2.0;
        ds = generate_sbm(sbm, 5);
        part = split_partition(200, 0.3, 0.6, 5);
        TrainConfig tc;
        tc.epochs = 200;
        tc.learning_rate = 1e-2;
        target = train_target(ds, part, tc);
        cfg.train.epochs = 50;
        cfg.train.learning_rate = 1e-2;
        cfg.total_budget = 12;
        cfg.seed = 3;
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

}  // namespace

TEST_CASE("oracle counts distinct nodes and enforces the budget") {
    const Fixture& f = fixture();
    QueryOracle oracle(f.target, f.ds, 3);
    const std::vector<NodeId> a{1, 2};
    const auto la = oracle.query(a);
    CHECK(oracle.query(a) == la);
    CHECK(oracle.distinct_queries() == 2);
    CHECK(oracle.calls() == 2);
    const std::vector<NodeId> b{2, 5, 7};
    CHECK_THROWS_AS(oracle.query(b), BudgetError);
    CHECK(oracle.distinct_queries() == 2);
    const std::vector<NodeId> c{5};
    CHECK_NOTHROW(oracle.query(c));
    CHECK(oracle.distinct_queries() == 3);

    const std::vector<NodeId> all{1, 2, 5};
    CHECK(query_oracle(f.target, f.ds.graph, f.ds.features, all) ==
          std::vector<int>{la[0], la[1], oracle.target_predictions()[5]});
}

TEST_CASE("a trained target agrees with ground truth on its training nodes") {
    const Fixture& f = fixture();
    const auto labels = query_oracle(f.target, f.ds.graph, f.ds.features, f.part.target_train);
    double agree = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) agree += labels[i] == f.ds.labels.labels[f.part.target_train[i]];
    CHECK(agree / static_cast<double>(labels.size()) >= 0.95);
}

TEST_CASE("stratified initial set") {
    const LabelVector labels{3, {0, 1, 2, 0, 1, 2, 0, 1, 0}};
    const std::vector<NodeId> pool{0, 1, 2, 3, 4, 5, 6, 7, 8};
    const auto init = init_query_set(pool, 2, labels, 1);
    REQUIRE(init.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(labels.labels[init[i]] == static_cast<int>(i / 2));
    CHECK(init == init_query_set(pool, 2, labels, 1));

    std::vector<std::string> warnings;
    const auto short_init = init_query_set(pool, 3, labels, 1, &warnings);
    CHECK(short_init.size() == 8);  // class 2 has only two pool members
    CHECK(warnings.size() == 1);
}

TEST_CASE("pool view maps local ids") {
    const Fixture& f = fixture();
    const PoolView view(f.ds, f.part.candidate_pool);
    CHECK(view.graph.num_nodes == f.part.candidate_pool.size());
    for (std::size_t i = 0; i < view.pool.size(); ++i) CHECK(view.local(view.pool[i]) == i);
    CHECK_THROWS_AS(view.local(f.part.test.front()), UsageError);
}

TEST_CASE("budget equal to the initial set runs no cycles") {
    const Fixture& f = fixture();
    ExtractionConfig cfg = f.cfg;
    cfg.total_budget = 6;
    const ExtractionResult r = run_extraction(f.ds, f.part, f.target, cfg);
    CHECK(r.initial_size == 6);
    CHECK(r.cycles.empty());
    CHECK(r.queried.size() == 6);
    CHECK_NOTHROW(audit_extraction(r, cfg));
}

TEST_CASE("each cycle adds new pool nodes") {
    const Fixture& f = fixture();
    for (Selector sel : {Selector::CEGA, Selector::Random, Selector::AGE}) {
        ExtractionConfig cfg = f.cfg;
        cfg.selector = sel;
        cfg.total_budget = 9;
        const ExtractionResult r = run_extraction(f.ds, f.part, f.target, cfg);
        CHECK(r.cycles.size() == 3);
        CHECK(r.queried.size() == 9);
        std::set<NodeId> seen(r.queried.begin(), r.queried.begin() + 6);
        for (const auto& c : r.cycles) {
            REQUIRE(c.selected.size() == 1);
            CHECK(seen.insert(c.selected[0]).second);
            CHECK(std::binary_search(f.part.candidate_pool.begin(), f.part.candidate_pool.end(), c.selected[0]));
        }
        CHECK_NOTHROW(audit_extraction(r, cfg));
        const ExtractionResult again = run_extraction(f.ds, f.part, f.target, cfg);
        CHECK(again.queried == r.queried);
    }
}

TEST_CASE("per-cycle batches and the last partial batch") {
    const Fixture& f = fixture();
    ExtractionConfig cfg = f.cfg;
    cfg.per_cycle = 4;
    cfg.total_budget = 13;
    const ExtractionResult r = run_extraction(f.ds, f.part, f.target, cfg);
    CHECK(r.cycles.size() == 2);
    CHECK(r.cycles[1].selected.size() == 3);
    CHECK(r.queried.size() == 13);
    CHECK_NOTHROW(audit_extraction(r, cfg));
}

TEST_CASE("extraction config errors") {
    const Fixture& f = fixture();
    ExtractionConfig cfg = f.cfg;
    cfg.total_budget = 5;
    CHECK_THROWS_AS(run_extraction(f.ds, f.part, f.target, cfg), ConfigError);
    cfg.total_budget = f.part.candidate_pool.size() + 1;
    CHECK_THROWS_AS(run_extraction(f.ds, f.part, f.target, cfg), ConfigError);
    CHECK_THROWS_AS(parse_selector("Greedy"), ConfigError);
    CHECK(parse_selector(to_string(Selector::AGE)) == Selector::AGE);
}

TEST_CASE("training on the whole pool reproduces the reference model") {
    const Fixture& f = fixture();
    const PoolView view(f.ds, f.part.candidate_pool);
    QueryOracle oracle(f.target, f.ds, std::nullopt);
    const auto labels = oracle.query(view.pool);
    TrainConfig tc = f.cfg.train;
    tc.seed = substream(f.cfg.seed, "final");
    const GcnParams direct = train_final(view, view.pool, labels, tc, 3);
    CHECK(direct == train_reference(f.ds, f.part, f.target, f.cfg));
}

TEST_CASE("evaluation metrics") {
    const LabelVector truth{2, {0, 1, 0, 1}};
    const std::vector<int> constant{0, 0, 0, 0};
    const std::vector<NodeId> test{0, 1, 2, 3};
    const EvalReport r = evaluate_labels(constant, truth.labels, truth, test);
    CHECK(r.accuracy == doctest::Approx(0.5));
    CHECK(r.fidelity == doctest::Approx(0.5));
    // Class 0: precision 1/2, recall 1 -> F1 2/3; class 1 -> 0.
    CHECK(r.macro_f1 == doctest::Approx(1.0 / 3.0));
    CHECK(r.num_test == 4);

    const Fixture& f = fixture();
    CHECK(evaluate(f.target, f.target, f.ds, f.part.test).fidelity == 1.0);

    const PerformanceGap gap = performance_gap({0.9, 0.8, 0.7, 10}, {0.6, 0.7, 0.75, 10});
    CHECK(gap.accuracy == doctest::Approx(0.3));
    CHECK(gap.fidelity == doctest::Approx(0.1));
    CHECK(gap.macro_f1 == doctest::Approx(-0.05));
}

TEST_CASE("ablating every criterion is flagged degenerate") {
    const Fixture& f = fixture();
    ExtractionConfig cfg = f.cfg;
    cfg.total_budget = 8;
    cfg.ablation = {true, true, true};
    const ExtractionResult r = run_extraction(f.ds, f.part, f.target, cfg);
    CHECK(r.degenerate);
    CHECK(r.queried.size() == 8);
    CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("ablation runs differ from the full selector") {
    const Fixture& f = fixture();
    ExtractionConfig cfg = f.cfg;
    cfg.total_budget = 15;
    const EvalReport full = run_ablation(f.ds, f.part, f.target, cfg, AblatedCriterion::Centrality);
    CHECK(full.num_test == f.part.test.size());
    CHECK_THROWS_AS(
        [&] {
            ExtractionConfig r = cfg;
            r.selector = Selector::Random;
            run_ablation(f.ds, f.part, f.target, r, AblatedCriterion::Diversity);
        }(),
        UsageError);
}

TEST_CASE("audit rejects tampered results") {
    const Fixture& f = fixture();
    ExtractionConfig cfg = f.cfg;
    cfg.total_budget = 9;
    const ExtractionResult good = run_extraction(f.ds, f.part, f.target, cfg);

    ExtractionResult dup = good;
    dup.queried.back() = dup.queried.front();
    CHECK_THROWS_AS(audit_extraction(dup, cfg), BudgetError);

    ExtractionConfig tight = cfg;
    tight.total_budget = 8;
    CHECK_THROWS_AS(audit_extraction(good, tight), BudgetError);

    ExtractionResult lost = good;
    lost.oracle_labels.pop_back();
    CHECK_THROWS_AS(audit_extraction(lost, cfg), BudgetError);
}

TEST_CASE("interim evaluation happens at multiples of the class count") {
    const Fixture& f = fixture();
    ExtractionConfig cfg = f.cfg;
    cfg.total_budget = 12;
    cfg.eval_interim = true;
    const ExtractionResult r = run_extraction(f.ds, f.part, f.target, cfg);
    std::vector<std::size_t> budgets;
    for (const auto& p : r.trajectory) budgets.push_back(p.budget);
    CHECK(budgets == std::vector<std::size_t>{6, 9, 12});
}
