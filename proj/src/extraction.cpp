#include "cega/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cega/errors.hpp"
#include "cega/rng.hpp"

namespace cega {

std::string to_string(Selector s) {
    switch (s) {
        case Selector::CEGA: return "CEGA";
        case Selector::Random: return "Random";
        case Selector::AGE: return "AGE";
    }
    return "?";
}

std::string to_string(UncertaintyMode m) { return m == UncertaintyMode::Entropy ? "entropy" : "perturbation"; }
std::string to_string(EmbeddingSource e) { return e == EmbeddingSource::Hidden ? "hidden" : "softmax"; }
std::string to_string(InitMode m) { return m == InitMode::Stratified ? "stratified" : "random"; }

Selector parse_selector(const std::string& name) {
    if (name == "CEGA") return Selector::CEGA;
    if (name == "Random") return Selector::Random;
    if (name == "AGE") return Selector::AGE;
    throw ConfigError("unknown selector '" + name + "' (expected CEGA, Random or AGE)");
}

UncertaintyMode parse_uncertainty(const std::string& name) {
    if (name == "entropy") return UncertaintyMode::Entropy;
    if (name == "perturbation") return UncertaintyMode::Perturbation;
    throw ConfigError("unknown uncertainty mode '" + name + "' (expected entropy or perturbation)");
}

EmbeddingSource parse_embedding(const std::string& name) {
    if (name == "hidden") return EmbeddingSource::Hidden;
    if (name == "softmax") return EmbeddingSource::Softmax;
    throw ConfigError("unknown embedding source '" + name + "' (expected hidden or softmax)");
}

InitMode parse_init(const std::string& name) {
    if (name == "stratified") return InitMode::Stratified;
    if (name == "random") return InitMode::Random;
    throw ConfigError("unknown init mode '" + name + "' (expected stratified or random)");
}

void validate(const ExtractionConfig& cfg) {
    if (cfg.per_cycle < 1) throw ConfigError("per_cycle must be >= 1");
    if (cfg.total_budget < 1) throw ConfigError("total_budget must be >= 1");
    if (cfg.interim_epochs < 1) throw ConfigError("interim_epochs must be >= 1");
    if (cfg.hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (cfg.init == InitMode::Stratified && cfg.initial_per_class < 1)
        throw ConfigError("initial_per_class must be >= 1");
    if (cfg.age.warmup_epochs < 0) throw ConfigError("age.warmup_epochs must be >= 0");
    validate(cfg.weight_schedule);
    validate(cfg.perturb);
    validate(cfg.diversity);
    validate(cfg.pagerank);
    validate(cfg.train);
}

GcnParams train_target(const Dataset& ds, const NodePartition& part, const TrainConfig& cfg, std::size_t hidden_dim) {
    if (part.target_train.empty()) throw UsageError("target training set is empty");
    return train(normalized_adjacency(ds.graph), ds.features, ds.labels, part.target_train, cfg, std::nullopt,
                 hidden_dim);
}

QueryOracle::QueryOracle(const GcnParams& target, const Dataset& ds, std::optional<std::size_t> budget)
    : predictions_(predict_embed(target, ds.graph, ds.features).labels),
      charged_(ds.num_nodes(), false),
      budget_(budget) {}

std::vector<int> QueryOracle::query(std::span<const NodeId> nodes) {
    std::set<NodeId> fresh;
    for (NodeId v : nodes) {
        if (v >= predictions_.size()) throw UsageError("query for node outside the graph");
        if (!charged_[v]) fresh.insert(v);
    }
    if (budget_ && queried_count_ + fresh.size() > *budget_)
        throw BudgetError("query of " + std::to_string(fresh.size()) + " new nodes exceeds the budget (" +
                          std::to_string(queried_count_) + " of " + std::to_string(*budget_) + " used)");
    for (NodeId v : fresh) charged_[v] = true;
    queried_count_ += fresh.size();
    ++calls_;
    std::vector<int> out;
    out.reserve(nodes.size());
    for (NodeId v : nodes) out.push_back(predictions_[v]);
    return out;
}

std::vector<int> query_oracle(const GcnParams& target, const SparseGraph& graph, const FeatureMatrix& x,
                              std::span<const NodeId> nodes) {
    const auto pred = predict_embed(target, graph, x).labels;
    std::vector<int> out;
    out.reserve(nodes.size());
    for (NodeId v : nodes) {
        if (v >= pred.size()) throw UsageError("query for node outside the graph");
        out.push_back(pred[v]);
    }
    return out;
}

std::vector<NodeId> init_query_set(std::span<const NodeId> pool, std::size_t per_class, const LabelVector& labels,
                                   std::uint64_t seed, std::vector<std::string>* warnings) {
    if (pool.empty()) throw UsageError("candidate pool is empty");
    std::vector<NodeId> out;
    for (std::size_t c = 0; c < labels.num_classes; ++c) {
        std::vector<NodeId> members;
        for (NodeId v : pool)
            if (labels.labels.at(v) == static_cast<int>(c)) members.push_back(v);
        if (members.size() < per_class && warnings) {
            warnings->push_back("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                                " pool members, fewer than " + std::to_string(per_class));
        }
        const std::size_t take = std::min(per_class, members.size());
        auto picked = random_select(members, take, substream(seed, static_cast<std::uint64_t>(c)));
        out.insert(out.end(), picked.begin(), picked.end());
    }
    return out;
}

PoolView::PoolView(const Dataset& ds, std::span<const NodeId> pool_nodes)
    : pool(pool_nodes.begin(), pool_nodes.end()), graph(induced_subgraph(ds.graph, pool_nodes)),
      norm_adj(normalized_adjacency(graph)) {
    if (pool.empty()) throw UsageError("candidate pool is empty");
    if (!std::is_sorted(pool.begin(), pool.end())) throw UsageError("candidate pool must be sorted");
    features.values.resize(static_cast<Eigen::Index>(pool.size()), ds.features.values.cols());
    for (std::size_t i = 0; i < pool.size(); ++i)
        features.values.row(static_cast<Eigen::Index>(i)) = ds.features.values.row(pool[i]);
}

NodeId PoolView::local(NodeId global) const {
    auto it = std::lower_bound(pool.begin(), pool.end(), global);
    if (it == pool.end() || *it != global) throw UsageError("node " + std::to_string(global) + " is not in the pool");
    return static_cast<NodeId>(it - pool.begin());
}

namespace {

// Labels over pool-local ids; only entries listed in the mask are meaningful.
struct LocalLabels {
    LabelVector labels;
    std::vector<NodeId> mask;

    LocalLabels(std::size_t pool_size, std::size_t num_classes) {
        labels.num_classes = num_classes;
        labels.labels.assign(pool_size, 0);
    }
    void add(NodeId local, int label) {
        labels.labels[local] = label;
        mask.push_back(local);
    }
};

Matrix select_rows(const Matrix& m, std::span<const NodeId> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

Weights apply_ablation(Weights w, const Ablation& a) {
    if (a.centrality) w.w1 = 0.0;
    if (a.uncertainty) w.w2 = 0.0;
    if (a.diversity) w.w3 = 0.0;
    return w;
}

}  // namespace

ExtractionResult run_extraction(const Dataset& ds, const NodePartition& part, const GcnParams& target,
                                const ExtractionConfig& cfg) {
    validate(cfg);
    if (cfg.total_budget > part.candidate_pool.size())
        throw ConfigError("total_budget exceeds the candidate pool size");
    const std::size_t num_classes = ds.num_classes();
    const PoolView view(ds, part.candidate_pool);
    QueryOracle oracle(target, ds, cfg.total_budget);

    ExtractionResult result;
    LocalLabels local(view.pool.size(), num_classes);
    std::vector<bool> in_queried(view.pool.size(), false);

    auto record_queries = [&](std::span<const NodeId> global) {
        const auto labels = oracle.query(global);
        for (std::size_t i = 0; i < global.size(); ++i) {
            const NodeId l = view.local(global[i]);
            if (in_queried[l]) continue;
            in_queried[l] = true;
            local.add(l, labels[i]);
            result.queried.push_back(global[i]);
            result.oracle_labels.push_back(labels[i]);
        }
    };

    // Initial query set.
    std::vector<NodeId> initial;
    if (cfg.init == InitMode::Stratified) {
        initial = init_query_set(view.pool, cfg.initial_per_class, ds.labels, substream(cfg.seed, "init"),
                                 &result.warnings);
    } else {
        const std::size_t n0 = cfg.initial_budget ? cfg.initial_budget : cfg.initial_per_class * num_classes;
        if (n0 > view.pool.size()) throw ConfigError("initial_budget exceeds the candidate pool size");
        initial = random_select(view.pool, n0, substream(cfg.seed, "init"));
    }
    if (initial.size() > cfg.total_budget)
        throw ConfigError("initial query set (" + std::to_string(initial.size()) + ") exceeds total_budget (" +
                          std::to_string(cfg.total_budget) + ")");
    if (initial.empty()) throw ConfigError("initial query set is empty");
    record_queries(initial);
    result.initial_size = result.queried.size();

    TrainConfig first = cfg.train;
    first.seed = substream(cfg.seed, "interim");
    if (cfg.selector == Selector::AGE) first.epochs = std::max(1, cfg.age.warmup_epochs);
    GcnParams interim = train(view.norm_adj, view.features, local.labels, local.mask, first, std::nullopt,
                              cfg.hidden_dim);

    const std::vector<int>& target_labels = oracle.target_predictions();
    auto maybe_evaluate = [&]() -> std::optional<EvalReport> {
        if (!cfg.eval_interim || part.test.empty() || result.queried.size() % num_classes != 0) return std::nullopt;
        const auto pred = predict_embed(interim, ds.graph, ds.features).labels;
        EvalReport rep = evaluate_labels(pred, target_labels, ds.labels, part.test);
        result.trajectory.push_back({result.queried.size(), rep});
        return rep;
    };
    maybe_evaluate();

    std::optional<ScoreVector> centrality;
    if (cfg.selector != Selector::Random) centrality = pagerank(view.graph, cfg.pagerank);

    const std::size_t budget = cfg.total_budget;
    const std::size_t n0 = result.initial_size;
    const std::size_t cycles = (budget - n0 + cfg.per_cycle - 1) / cfg.per_cycle;
    const std::uint64_t selector_seed = substream(cfg.seed, "selector");
    const std::uint64_t perturb_seed = substream(cfg.seed, "perturb");
    const std::uint64_t kmeans_seed = substream(cfg.seed, "kmeans");

    for (std::size_t gamma = 1; gamma <= cycles; ++gamma) {
        CycleRecord rec;
        rec.cycle = static_cast<int>(gamma);
        const auto g64 = static_cast<std::uint64_t>(gamma);

        std::vector<NodeId> candidates;  // local ids, ascending
        for (NodeId l = 0; l < view.pool.size(); ++l)
            if (!in_queried[l]) candidates.push_back(l);
        const std::size_t room = budget - result.queried.size();
        const std::size_t k = std::min({cfg.per_cycle, room, candidates.size()});

        if (n0 + (gamma - 1) * cfg.per_cycle < budget && k > 0) {
            std::vector<NodeId> chosen;
            if (cfg.selector == Selector::Random) {
                chosen = random_select(candidates, k, substream(selector_seed, g64));
            } else {
                const Prediction pred = predict_embed(interim, view.norm_adj, view.features.values);
                const Matrix& embed = cfg.embedding == EmbeddingSource::Hidden ? pred.embeddings : pred.softmax;
                const ScoreVector l1 = centrality->subset(candidates);
                const ScoreVector entropy = entropy_scores(pred.softmax, candidates);

                if (cfg.selector == Selector::CEGA) {
                    ScoreVector l2 = entropy;
                    Direction l2_dir = Direction::HigherBetter;
                    if (cfg.uncertainty == UncertaintyMode::Perturbation) {
                        PerturbationConfig pc = cfg.perturb;
                        pc.seed = substream(perturb_seed, g64);
                        l2 = perturbation_scores(interim, view.norm_adj, view.features.values, candidates, pc);
                        l2_dir = Direction::LowerBetter;
                    }
                    std::vector<NodeId> queried_local(local.mask.begin(), local.mask.end());
                    DiversityConfig dc = cfg.diversity;
                    dc.kmeans_seed = substream(kmeans_seed, g64);
                    const KMeansResult fit = kmeans_fit(select_rows(embed, queried_local), num_classes, dc);
                    const ScoreVector l3 =
                        diversity_scores(select_rows(embed, candidates), candidates, fit.centroids, fit.assignments,
                                         cfg.diversity.rho);

                    RankTable table;
                    table.node_ids = candidates;
                    table.rank1 = ranks_from_scores(l1, Direction::HigherBetter);
                    table.rank2 = ranks_from_scores(l2, l2_dir);
                    table.rank3 = ranks_from_scores(l3, Direction::HigherBetter);
                    rec.weights = apply_ablation(adaptive_weights(rec.cycle, cfg.weight_schedule), cfg.ablation);
                    if (rec.weights.w1 == 0.0 && rec.weights.w2 == 0.0 && rec.weights.w3 == 0.0 &&
                        !result.degenerate) {
                        result.degenerate = true;
                        result.warnings.push_back("all criterion weights are zero; selecting in node-id order");
                    }
                    chosen = select_top_k(table, rec.weights, k);
                } else {
                    DiversityConfig dc = cfg.diversity;
                    dc.kmeans_seed = substream(kmeans_seed, g64);
                    ScoreVector density;
                    density.node_ids = candidates;
                    density.values = age_density(select_rows(embed, candidates), num_classes, dc);
                    const AgeWeights aw = age_weights(rec.cycle, substream(selector_seed, g64));
                    rec.weights = {aw.alpha, aw.beta, aw.gamma};
                    chosen = age_select(entropy, density, l1, rec.cycle, k, substream(selector_seed, g64));
                }
            }
            for (NodeId l : chosen) rec.selected.push_back(view.pool[l]);
            record_queries(rec.selected);
        }

        TrainConfig step = cfg.train;
        step.epochs = cfg.interim_epochs;
        interim = train(view.norm_adj, view.features, local.labels, local.mask, step, interim, cfg.hidden_dim);
        rec.interim_eval = maybe_evaluate();
        result.cycles.push_back(std::move(rec));
    }
    return result;
}

GcnParams train_final(const PoolView& view, std::span<const NodeId> queried, std::span<const int> labels,
                      const TrainConfig& cfg, std::size_t num_classes, std::size_t hidden_dim) {
    if (queried.empty()) throw UsageError("queried set is empty");
    if (queried.size() != labels.size()) throw UsageError("one oracle label per queried node required");
    LocalLabels local(view.pool.size(), num_classes);
    for (std::size_t i = 0; i < queried.size(); ++i) local.add(view.local(queried[i]), labels[i]);
    return train(view.norm_adj, view.features, local.labels, local.mask, cfg, std::nullopt, hidden_dim);
}

EvalReport evaluate_labels(std::span<const int> predicted, std::span<const int> target_labels,
                           const LabelVector& truth, std::span<const NodeId> test) {
    if (test.empty()) throw UsageError("test set is empty");
    const std::size_t c = truth.num_classes;
    std::vector<double> tp(c, 0.0), fp(c, 0.0), fn(c, 0.0);
    std::size_t correct = 0, agree = 0;
    for (NodeId v : test) {
        const int p = predicted[v];
        const int y = truth.labels[v];
        if (p == y) {
            ++correct;
            tp[static_cast<std::size_t>(y)] += 1.0;
        } else {
            fp[static_cast<std::size_t>(p)] += 1.0;
            fn[static_cast<std::size_t>(y)] += 1.0;
        }
        if (p == target_labels[v]) ++agree;
    }
    double f1_sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        const double denom = 2.0 * tp[k] + fp[k] + fn[k];
        f1_sum += denom > 0.0 ? 2.0 * tp[k] / denom : 0.0;
    }
    EvalReport rep;
    rep.num_test = test.size();
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    rep.fidelity = static_cast<double>(agree) / static_cast<double>(test.size());
    rep.macro_f1 = f1_sum / static_cast<double>(c);
    return rep;
}

EvalReport evaluate(const GcnParams& model, const GcnParams& target, const Dataset& ds, std::span<const NodeId> test) {
    const SparseOperator s = normalized_adjacency(ds.graph);
    const auto pred = predict_embed(model, s, ds.features.values).labels;
    const auto tgt = predict_embed(target, s, ds.features.values).labels;
    return evaluate_labels(pred, tgt, ds.labels, test);
}

PerformanceGap performance_gap(const EvalReport& full, const EvalReport& budget) {
    return {full.accuracy - budget.accuracy, full.fidelity - budget.fidelity, full.macro_f1 - budget.macro_f1};
}

namespace {
TrainConfig final_config(const ExtractionConfig& cfg) {
    TrainConfig t = cfg.train;
    t.seed = substream(cfg.seed, "final");
    return t;
}
}  // namespace

GcnParams train_reference(const Dataset& ds, const NodePartition& part, const GcnParams& target,
                          const ExtractionConfig& cfg) {
    const PoolView view(ds, part.candidate_pool);
    QueryOracle oracle(target, ds, std::nullopt);
    const auto labels = oracle.query(view.pool);
    return train_final(view, view.pool, labels, final_config(cfg), ds.num_classes(), cfg.hidden_dim);
}

EvalReport run_ablation(const Dataset& ds, const NodePartition& part, const GcnParams& target,
                        const ExtractionConfig& cfg, AblatedCriterion ablate) {
    if (cfg.selector != Selector::CEGA) throw UsageError("ablation requires the CEGA selector");
    ExtractionConfig ablated = cfg;
    switch (ablate) {
        case AblatedCriterion::Centrality: ablated.ablation.centrality = true; break;
        case AblatedCriterion::Uncertainty: ablated.ablation.uncertainty = true; break;
        case AblatedCriterion::Diversity: ablated.ablation.diversity = true; break;
    }
    const ExtractionResult res = run_extraction(ds, part, target, ablated);
    const PoolView view(ds, part.candidate_pool);
    const GcnParams model =
        train_final(view, res.queried, res.oracle_labels, final_config(cfg), ds.num_classes(), cfg.hidden_dim);
    return evaluate(model, target, ds, part.test);
}

void audit_extraction(const ExtractionResult& result, const ExtractionConfig& cfg) {
    if (result.queried.size() > cfg.total_budget)
        throw BudgetError("queried " + std::to_string(result.queried.size()) + " nodes with budget " +
                          std::to_string(cfg.total_budget));
    std::set<NodeId> distinct(result.queried.begin(), result.queried.end());
    if (distinct.size() != result.queried.size()) throw BudgetError("a node was charged twice");
    if (result.oracle_labels.size() != result.queried.size()) throw BudgetError("oracle labels out of sync");

    const std::size_t cycles = result.cycles.size();
    const std::size_t expected =
        std::min(cfg.total_budget, result.initial_size + cycles * cfg.per_cycle);
    if (result.queried.size() != expected)
        throw BudgetError("final queried size " + std::to_string(result.queried.size()) + " != min(B, I + cycles*k) = " +
                          std::to_string(expected));

    // Replay the cycles: each one must add new nodes while budget remains.
    std::set<NodeId> seen(result.queried.begin(),
                          result.queried.begin() + static_cast<std::ptrdiff_t>(result.initial_size));
    for (const auto& rec : result.cycles) {
        const bool budget_left = seen.size() < cfg.total_budget;
        if (rec.selected.size() > cfg.per_cycle) throw BudgetError("cycle selected more than per_cycle nodes");
        if (budget_left && rec.selected.empty())
            throw BudgetError("cycle " + std::to_string(rec.cycle) + " added nothing while budget remained");
        for (NodeId v : rec.selected)
            if (!seen.insert(v).second) throw BudgetError("cycle " + std::to_string(rec.cycle) + " re-selected a node");
    }
    if (seen != distinct) throw BudgetError("cycle records do not reproduce the queried set");
}

}  // namespace cega
