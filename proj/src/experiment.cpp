#include "cega/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "cega/errors.hpp"
#include "cega/rng.hpp"

namespace cega {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Spec serialization

namespace {

json train_json(const TrainConfig& t) {
    return {{"learning_rate", t.learning_rate}, {"epochs", t.epochs},         {"seed", t.seed},
            {"adam_beta1", t.adam_beta1},       {"adam_beta2", t.adam_beta2}, {"adam_eps", t.adam_eps}};
}

// Reads fields out of a JSON object, rejecting unknown keys and reporting
// type errors with the dotted field path.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        try {
            if constexpr (std::is_same_v<T, std::uint64_t> || std::is_same_v<T, std::size_t>) {
                if (!it->is_number_unsigned() && !(it->is_number_integer() && it->template get<long long>() >= 0))
                    throw ConfigError(where(key) + ": expected a non-negative integer");
            } else if constexpr (std::is_same_v<T, int>) {
                if (!it->is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
            } else if constexpr (std::is_same_v<T, double>) {
                if (!it->is_number()) throw ConfigError(where(key) + ": expected a number");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigError(where(key) + ": expected true or false");
            }
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    template <typename Fn>
    void object(const char* key, Fn&& fn) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        Reader sub(*it, where(key));
        fn(sub);
        sub.finish();
    }

    const json* raw(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return (it == j_.end() || it->is_null()) ? nullptr : &*it;
    }

    std::string where(const std::string& key) const {
        if (key.empty()) return path_.empty() ? "config" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_train(Reader& r, TrainConfig& t) {
    r.get("learning_rate", t.learning_rate);
    r.get("epochs", t.epochs);
    r.get("seed", t.seed);
    r.get("adam_beta1", t.adam_beta1);
    r.get("adam_beta2", t.adam_beta2);
    r.get("adam_eps", t.adam_eps);
}

template <typename Enum, typename Parse>
void read_enum(Reader& r, const char* key, Enum& out, Parse parse) {
    if (const json* v = r.raw(key)) {
        if (!v->is_string()) throw ConfigError(r.where(key) + ": expected a string");
        try {
            out = parse(v->get<std::string>());
        } catch (const ConfigError& e) {
            throw ConfigError(r.where(key) + ": " + e.what());
        }
    }
}

}  // namespace

json to_json(const ExperimentSpec& spec) {
    const auto& e = spec.extraction;
    json ds = {{"seed", spec.dataset.seed},
               {"sbm",
                {{"num_nodes", spec.dataset.sbm.num_nodes},
                 {"num_classes", spec.dataset.sbm.num_classes},
                 {"intra_p", spec.dataset.sbm.intra_p},
                 {"inter_p", spec.dataset.sbm.inter_p},
                 {"feature_dim", spec.dataset.sbm.feature_dim},
                 {"feature_separation", spec.dataset.sbm.feature_separation},
                 {"noise_sigma", spec.dataset.sbm.noise_sigma}}}};
    ds["path"] = spec.dataset.path ? json(*spec.dataset.path) : json(nullptr);

    json extraction = {
        {"init", to_string(e.init)},
        {"initial_per_class", e.initial_per_class},
        {"initial_budget", e.initial_budget},
        {"per_cycle", e.per_cycle},
        {"total_budget", e.total_budget},
        {"interim_epochs", e.interim_epochs},
        {"selector", to_string(e.selector)},
        {"uncertainty", to_string(e.uncertainty)},
        {"embedding", to_string(e.embedding)},
        {"weight_schedule",
         {{"alpha1", e.weight_schedule.alpha1},
          {"alpha2", e.weight_schedule.alpha2},
          {"alpha3", e.weight_schedule.alpha3},
          {"delta", e.weight_schedule.delta},
          {"lambda", e.weight_schedule.lambda}}},
        {"perturb", {{"epsilon", e.perturb.epsilon}, {"trials", e.perturb.trials}, {"seed", e.perturb.seed}}},
        {"diversity",
         {{"rho", e.diversity.rho},
          {"kmeans_max_iter", e.diversity.kmeans_max_iter},
          {"kmeans_tol", e.diversity.kmeans_tol},
          {"kmeans_seed", e.diversity.kmeans_seed}}},
        {"pagerank", {{"damping", e.pagerank.damping}, {"tol", e.pagerank.tol}, {"max_iter", e.pagerank.max_iter}}},
        {"age", {{"warmup_epochs", e.age.warmup_epochs}}},
        {"train", train_json(e.train)},
        {"hidden_dim", e.hidden_dim},
        {"ablation",
         {{"centrality", e.ablation.centrality},
          {"uncertainty", e.ablation.uncertainty},
          {"diversity", e.ablation.diversity}}},
        {"eval_interim", e.eval_interim},
        {"seed", e.seed}};

    json selectors = json::array();
    for (Selector s : spec.selectors) selectors.push_back(to_string(s));
    return {{"dataset", ds},
            {"partition",
             {{"pool_fraction", spec.partition.pool_fraction},
              {"train_fraction", spec.partition.train_fraction},
              {"allow_overlap", spec.partition.allow_overlap}}},
            {"extraction", extraction},
            {"budgets", spec.budgets},
            {"budget_multiples", spec.budget_multiples},
            {"selectors", selectors},
            {"seeds", spec.seeds},
            {"output_dir", spec.output_dir}};
}

ExperimentSpec spec_from_json(const json& j) {
    ExperimentSpec spec;
    Reader root(j, "");
    root.object("dataset", [&](Reader& r) {
        std::string path;
        if (const json* p = r.raw("path")) {
            if (!p->is_string()) throw ConfigError(r.where("path") + ": expected a string");
            spec.dataset.path = p->get<std::string>();
        }
        r.get("seed", spec.dataset.seed);
        r.object("sbm", [&](Reader& s) {
            auto& c = spec.dataset.sbm;
            s.get("num_nodes", c.num_nodes);
            s.get("num_classes", c.num_classes);
            s.get("intra_p", c.intra_p);
            s.get("inter_p", c.inter_p);
            s.get("feature_dim", c.feature_dim);
            s.get("feature_separation", c.feature_separation);
            s.get("noise_sigma", c.noise_sigma);
        });
    });
    root.object("partition", [&](Reader& r) {
        r.get("pool_fraction", spec.partition.pool_fraction);
        r.get("train_fraction", spec.partition.train_fraction);
        r.get("allow_overlap", spec.partition.allow_overlap);
    });
    root.object("extraction", [&](Reader& r) {
        auto& e = spec.extraction;
        read_enum(r, "init", e.init, parse_init);
        r.get("initial_per_class", e.initial_per_class);
        r.get("initial_budget", e.initial_budget);
        r.get("per_cycle", e.per_cycle);
        r.get("total_budget", e.total_budget);
        r.get("interim_epochs", e.interim_epochs);
        read_enum(r, "selector", e.selector, parse_selector);
        read_enum(r, "uncertainty", e.uncertainty, parse_uncertainty);
        read_enum(r, "embedding", e.embedding, parse_embedding);
        r.object("weight_schedule", [&](Reader& w) {
            w.get("alpha1", e.weight_schedule.alpha1);
            w.get("alpha2", e.weight_schedule.alpha2);
            w.get("alpha3", e.weight_schedule.alpha3);
            w.get("delta", e.weight_schedule.delta);
            w.get("lambda", e.weight_schedule.lambda);
        });
        r.object("perturb", [&](Reader& p) {
            p.get("epsilon", e.perturb.epsilon);
            p.get("trials", e.perturb.trials);
            p.get("seed", e.perturb.seed);
        });
        r.object("diversity", [&](Reader& d) {
            d.get("rho", e.diversity.rho);
            d.get("kmeans_max_iter", e.diversity.kmeans_max_iter);
            d.get("kmeans_tol", e.diversity.kmeans_tol);
            d.get("kmeans_seed", e.diversity.kmeans_seed);
        });
        r.object("pagerank", [&](Reader& p) {
            p.get("damping", e.pagerank.damping);
            p.get("tol", e.pagerank.tol);
            p.get("max_iter", e.pagerank.max_iter);
        });
        r.object("age", [&](Reader& a) { a.get("warmup_epochs", e.age.warmup_epochs); });
        r.object("train", [&](Reader& t) { read_train(t, e.train); });
        r.get("hidden_dim", e.hidden_dim);
        r.object("ablation", [&](Reader& a) {
            a.get("centrality", e.ablation.centrality);
            a.get("uncertainty", e.ablation.uncertainty);
            a.get("diversity", e.ablation.diversity);
        });
        r.get("eval_interim", e.eval_interim);
        r.get("seed", e.seed);
    });
    root.get("budgets", spec.budgets);
    root.get("budget_multiples", spec.budget_multiples);
    if (const json* sel = root.raw("selectors")) {
        if (!sel->is_array()) throw ConfigError("selectors: expected an array of names");
        spec.selectors.clear();
        for (std::size_t i = 0; i < sel->size(); ++i) {
            const json& item = (*sel)[i];
            const std::string field = "selectors[" + std::to_string(i) + "]";
            if (!item.is_string()) throw ConfigError(field + ": expected a string");
            try {
                spec.selectors.push_back(parse_selector(item.get<std::string>()));
            } catch (const ConfigError& e) {
                throw ConfigError(field + ": " + e.what());
            }
        }
    }
    root.get("seeds", spec.seeds);
    root.get("output_dir", spec.output_dir);
    root.finish();
    validate(spec);
    return spec;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return spec_from_json(j);
}

void validate(const ExperimentSpec& spec) {
    if (!spec.dataset.path) {
        try {
            validate(spec.dataset.sbm);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("dataset.") + e.what());
        }
    }
    const auto& p = spec.partition;
    if (!(p.pool_fraction > 0.0 && p.pool_fraction < 1.0))
        throw ConfigError("partition.pool_fraction: must lie in (0, 1)");
    if (!(p.train_fraction > 0.0 && p.train_fraction < 1.0))
        throw ConfigError("partition.train_fraction: must lie in (0, 1)");
    if (spec.budgets.empty() == spec.budget_multiples.empty())
        throw ConfigError("budgets: give exactly one of budgets or budget_multiples");
    const auto& b = spec.budgets.empty() ? spec.budget_multiples : spec.budgets;
    const char* field = spec.budgets.empty() ? "budget_multiples" : "budgets";
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (b[i] == 0) throw ConfigError(std::string(field) + ": entries must be positive");
        if (i > 0 && b[i] <= b[i - 1]) throw ConfigError(std::string(field) + ": must be strictly increasing");
    }
    if (spec.selectors.empty()) throw ConfigError("selectors: must be non-empty");
    if (spec.seeds.empty()) throw ConfigError("seeds: must be non-empty");
    ExtractionConfig e = spec.extraction;
    e.total_budget = std::max<std::size_t>(1, e.total_budget);
    try {
        validate(e);
    } catch (const ConfigError& err) {
        throw ConfigError(std::string("extraction.") + err.what());
    }
}

std::vector<std::size_t> resolve_budgets(const ExperimentSpec& spec, std::size_t num_classes) {
    std::vector<std::size_t> out = spec.budgets;
    if (!spec.budget_multiples.empty()) {
        out.clear();
        for (std::size_t m : spec.budget_multiples) out.push_back(m * num_classes);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// output_dir is excluded: where results go does not change them.
std::string canonical_config(const ExperimentSpec& spec) {
    nlohmann::json j = to_json(spec);
    j.erase("output_dir");
    return j.dump();
}

std::string config_digest(const ExperimentSpec& spec) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical_config(spec))));
    return buf;
}

Dataset materialize_dataset(const DatasetSpec& spec) {
    if (spec.path) {
        Dataset ds = load_dataset(*spec.path);
        validate(ds);
        return ds;
    }
    return generate_sbm(spec.sbm, spec.seed);
}

// ---------------------------------------------------------------------------
// Runs

SeedContext prepare_seed(const ExperimentSpec& spec, const Dataset& ds, std::uint64_t seed) {
    SeedContext ctx;
    ctx.seed = seed;
    ctx.partition = split_partition(ds.num_nodes(), spec.partition.pool_fraction, spec.partition.train_fraction,
                                    substream(seed, "partition"), spec.partition.allow_overlap);
    TrainConfig tc = spec.extraction.train;
    tc.seed = substream(seed, "target");
    ctx.target = train_target(ds, ctx.partition, tc, spec.extraction.hidden_dim);
    return ctx;
}

ExtractionConfig run_config(const ExperimentSpec& spec, Selector selector, std::size_t budget, std::uint64_t seed) {
    ExtractionConfig cfg = spec.extraction;
    cfg.selector = selector;
    cfg.total_budget = budget;
    cfg.seed = seed;
    return cfg;
}

namespace {

TrainConfig final_train_config(const ExperimentSpec& spec, std::uint64_t seed) {
    TrainConfig t = spec.extraction.train;
    t.seed = substream(seed, "final");
    return t;
}

// Runs tasks[0..n) on `jobs` threads. Exceptions are captured per task.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& task,
                  std::vector<std::string>& failures, const std::function<std::string(std::size_t)>& label) {
    std::vector<std::string> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                task(i);
            } catch (const std::exception& e) {
                errors[i] = label(i) + ": " + e.what();
            }
        }
    };
    const auto threads = static_cast<std::size_t>(std::max(1, jobs));
    if (threads == 1 || n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (!e.empty()) failures.push_back(std::move(e));
}

std::vector<std::optional<SeedContext>> prepare_all(const ExperimentSpec& spec, const Dataset& ds, int jobs,
                                                    std::vector<std::string>& failures) {
    std::vector<std::optional<SeedContext>> ctx(spec.seeds.size());
    parallel_for(
        spec.seeds.size(), jobs, [&](std::size_t i) { ctx[i] = prepare_seed(spec, ds, spec.seeds[i]); }, failures,
        [&](std::size_t i) { return "seed " + std::to_string(spec.seeds[i]) + " (target)"; });
    return ctx;
}

}  // namespace

RunOutcome run_experiment(const ExperimentSpec& spec, const Dataset& ds, int jobs) {
    validate(spec);
    const auto budgets = resolve_budgets(spec, ds.num_classes());
    const std::size_t max_budget = budgets.back();
    RunOutcome outcome;
    const auto contexts = prepare_all(spec, ds, jobs, outcome.failures);

    struct Unit {
        Selector selector;
        std::size_t seed_index;
    };
    std::vector<Unit> units;
    for (Selector s : spec.selectors)
        for (std::size_t i = 0; i < spec.seeds.size(); ++i) units.push_back({s, i});

    struct UnitResult {
        std::vector<std::optional<EvalReport>> per_budget;
        std::vector<TrajectoryRow> trajectory;
        SelectionLog log;
    };
    std::vector<UnitResult> unit_results(units.size());

    parallel_for(
        units.size(), jobs,
        [&](std::size_t u) {
            const Unit& unit = units[u];
            const auto& ctx = contexts[unit.seed_index];
            if (!ctx) throw Error("target model unavailable");
            ExtractionConfig cfg = run_config(spec, unit.selector, max_budget, ctx->seed);
            cfg.eval_interim = true;
            const ExtractionResult res = run_extraction(ds, ctx->partition, ctx->target, cfg);
            audit_extraction(res, cfg);

            const PoolView view(ds, ctx->partition.candidate_pool);
            const TrainConfig final_cfg = final_train_config(spec, ctx->seed);
            UnitResult& out = unit_results[u];
            for (std::size_t b : budgets) {
                const std::size_t take = std::min(b, res.queried.size());
                std::span<const NodeId> q(res.queried.data(), take);
                std::span<const int> l(res.oracle_labels.data(), take);
                const GcnParams model =
                    train_final(view, q, l, final_cfg, ds.num_classes(), spec.extraction.hidden_dim);
                out.per_budget.push_back(evaluate(model, ctx->target, ds, ctx->partition.test));
            }
            for (const auto& point : res.trajectory)
                out.trajectory.push_back({to_string(unit.selector), ctx->seed, point.budget, point.report});
            out.log = {to_string(unit.selector), ctx->seed, res.cycles};
        },
        outcome.failures,
        [&](std::size_t u) {
            return to_string(units[u].selector) + " seed " + std::to_string(spec.seeds[units[u].seed_index]);
        });

    for (Selector s : spec.selectors) {
        for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
            for (std::size_t u = 0; u < units.size(); ++u) {
                if (units[u].selector != s || unit_results[u].per_budget.size() <= bi) continue;
                outcome.results.push_back(
                    {to_string(s), budgets[bi], spec.seeds[units[u].seed_index], *unit_results[u].per_budget[bi]});
            }
        }
    }
    for (auto& ur : unit_results) {
        outcome.trajectory.insert(outcome.trajectory.end(), ur.trajectory.begin(), ur.trajectory.end());
        if (!ur.log.selector.empty()) outcome.logs.push_back(std::move(ur.log));
    }
    return outcome;
}

std::vector<ResultRow> run_reference(const ExperimentSpec& spec, const Dataset& ds, int jobs) {
    validate(spec);
    std::vector<std::string> failures;
    const auto contexts = prepare_all(spec, ds, jobs, failures);
    std::vector<std::optional<ResultRow>> rows(spec.seeds.size());
    parallel_for(
        spec.seeds.size(), jobs,
        [&](std::size_t i) {
            const auto& ctx = contexts[i];
            if (!ctx) throw Error("target model unavailable");
            const ExtractionConfig cfg =
                run_config(spec, Selector::CEGA, ctx->partition.candidate_pool.size(), ctx->seed);
            const GcnParams model = train_reference(ds, ctx->partition, ctx->target, cfg);
            rows[i] = ResultRow{"reference", ctx->partition.candidate_pool.size(), ctx->seed,
                                evaluate(model, ctx->target, ds, ctx->partition.test)};
        },
        failures, [&](std::size_t i) { return "reference seed " + std::to_string(spec.seeds[i]); });
    if (!failures.empty()) throw Error(failures.front());
    std::vector<ResultRow> out;
    for (auto& r : rows) out.push_back(*r);
    return out;
}

std::vector<GapRow> compute_gaps(const std::vector<ResultRow>& reference, const std::vector<ResultRow>& budgeted,
                                 std::size_t budget) {
    std::map<std::uint64_t, EvalReport> ref;
    for (const auto& r : reference) ref[r.seed] = r.report;
    std::vector<GapRow> out;
    for (const auto& row : budgeted) {
        if (row.budget != budget) continue;
        auto it = ref.find(row.seed);
        if (it == ref.end())
            throw UsageError("no reference run for seed " + std::to_string(row.seed) +
                             "; run the reference first or pass --with-reference");
        out.push_back({row.selector, row.seed, performance_gap(it->second, row.report)});
    }
    return out;
}

RunOutcome run_ablation_batch(const ExperimentSpec& spec, const Dataset& ds, int jobs) {
    validate(spec);
    const std::size_t budget = resolve_budgets(spec, ds.num_classes()).back();
    RunOutcome outcome;
    const auto contexts = prepare_all(spec, ds, jobs, outcome.failures);
    const auto& variants = ablation_variants();

    const std::size_t n = variants.size() * spec.seeds.size();
    std::vector<std::optional<EvalReport>> reports(n);
    parallel_for(
        n, jobs,
        [&](std::size_t u) {
            const std::size_t v = u / spec.seeds.size();
            const auto& ctx = contexts[u % spec.seeds.size()];
            if (!ctx) throw Error("target model unavailable");
            ExtractionConfig cfg = run_config(spec, Selector::CEGA, budget, ctx->seed);
            cfg.ablation = {};
            if (v == 0) {
                const ExtractionResult res = run_extraction(ds, ctx->partition, ctx->target, cfg);
                audit_extraction(res, cfg);
                const PoolView view(ds, ctx->partition.candidate_pool);
                const GcnParams model = train_final(view, res.queried, res.oracle_labels,
                                                    final_train_config(spec, ctx->seed), ds.num_classes(),
                                                    spec.extraction.hidden_dim);
                reports[u] = evaluate(model, ctx->target, ds, ctx->partition.test);
            } else {
                const auto which = v == 1   ? AblatedCriterion::Centrality
                                   : v == 2 ? AblatedCriterion::Uncertainty
                                            : AblatedCriterion::Diversity;
                reports[u] = run_ablation(ds, ctx->partition, ctx->target, cfg, which);
            }
        },
        outcome.failures,
        [&](std::size_t u) {
            return variants[u / spec.seeds.size()] + " seed " + std::to_string(spec.seeds[u % spec.seeds.size()]);
        });
    for (std::size_t u = 0; u < n; ++u) {
        if (!reports[u]) continue;
        outcome.results.push_back(
            {variants[u / spec.seeds.size()], budget, spec.seeds[u % spec.seeds.size()], *reports[u]});
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// CSV

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    if (values.empty()) return out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

std::string format_number(double x) {
    std::ostringstream os;
    os << std::setprecision(9) << x;
    return os.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {

std::string header_comment(const ExperimentSpec& spec) {
    return "# config_digest=" + config_digest(spec) + " config=" + canonical_config(spec) + "\n";
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

}  // namespace

void write_results_csv(const std::filesystem::path& path, const ExperimentSpec& spec,
                       const std::vector<ResultRow>& rows, bool reference) {
    std::ostringstream os;
    os << header_comment(spec);
    if (reference) os << "# reference=true\n";
    os << "selector,budget,seed,accuracy,fidelity,macro_f1\n";
    for (const auto& r : rows) {
        os << r.selector << ',' << r.budget << ',' << r.seed << ',' << format_number(r.report.accuracy) << ','
           << format_number(r.report.fidelity) << ',' << format_number(r.report.macro_f1) << '\n';
    }
    write_atomic(path, os.str());
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError(path.string(), 0, "cannot open file");
    std::vector<ResultRow> rows;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "selector,budget,seed,accuracy,fidelity,macro_f1")
                throw LoadError(path.string(), line_no, "unexpected column header");
            header_seen = true;
            continue;
        }
        const auto cells = split(line, ',');
        if (cells.size() != 6) throw LoadError(path.string(), line_no, "expected 6 columns");
        try {
            ResultRow r;
            r.selector = cells[0];
            r.budget = std::stoull(cells[1]);
            r.seed = std::stoull(cells[2]);
            r.report.accuracy = std::stod(cells[3]);
            r.report.fidelity = std::stod(cells[4]);
            r.report.macro_f1 = std::stod(cells[5]);
            rows.push_back(r);
        } catch (const std::logic_error&) {
            throw LoadError(path.string(), line_no, "malformed number");
        }
    }
    if (!header_seen) throw LoadError(path.string(), line_no, "missing column header");
    return rows;
}

void write_trajectory_csv(const std::filesystem::path& path, const ExperimentSpec& spec,
                          const std::vector<TrajectoryRow>& rows) {
    std::ostringstream os;
    os << header_comment(spec) << "selector,seed,budget_checkpoint,accuracy,fidelity,macro_f1\n";
    for (const auto& r : rows) {
        os << r.selector << ',' << r.seed << ',' << r.budget_checkpoint << ',' << format_number(r.report.accuracy)
           << ',' << format_number(r.report.fidelity) << ',' << format_number(r.report.macro_f1) << '\n';
    }
    write_atomic(path, os.str());
}

void write_selection_log(const std::filesystem::path& path, const SelectionLog& log) {
    std::ostringstream os;
    os << "cycle,selected_ids,w1,w2,w3,selector\n";
    for (const auto& c : log.cycles) {
        os << c.cycle << ',';
        for (std::size_t i = 0; i < c.selected.size(); ++i) os << (i ? ";" : "") << c.selected[i];
        os << ',' << format_number(c.weights.w1) << ',' << format_number(c.weights.w2) << ','
           << format_number(c.weights.w3) << ',' << log.selector << '\n';
    }
    write_atomic(path, os.str());
}

void write_gap_csv(const std::filesystem::path& path, const ExperimentSpec& spec, const std::vector<GapRow>& rows) {
    std::ostringstream os;
    os << header_comment(spec) << "selector,seed,gap_accuracy,gap_fidelity,gap_macro_f1\n";
    for (const auto& r : rows) {
        os << r.selector << ',' << r.seed << ',' << format_number(r.gap.accuracy) << ','
           << format_number(r.gap.fidelity) << ',' << format_number(r.gap.macro_f1) << '\n';
    }
    write_atomic(path, os.str());
}

void write_score_csv(const std::filesystem::path& path, const ScoreVector& scores) {
    std::ostringstream os;
    for (std::size_t i = 0; i < scores.size(); ++i)
        os << scores.node_ids[i] << ',' << format_number(scores.values[i]) << '\n';
    write_atomic(path, os.str());
}

void print_summary(std::ostream& os, const std::vector<ResultRow>& rows) {
    std::map<std::pair<std::string, std::size_t>, std::vector<const ResultRow*>> cells;
    std::vector<std::pair<std::string, std::size_t>> order;
    for (const auto& r : rows) {
        auto key = std::make_pair(r.selector, r.budget);
        if (!cells.count(key)) order.push_back(key);
        cells[key].push_back(&r);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %7s %5s  %-16s %-16s %-16s\n", "selector", "budget", "runs", "accuracy",
                  "fidelity", "macro_f1");
    os << buf;
    for (const auto& key : order) {
        std::vector<double> acc, fid, f1;
        for (const ResultRow* r : cells[key]) {
            acc.push_back(100.0 * r->report.accuracy);
            fid.push_back(100.0 * r->report.fidelity);
            f1.push_back(100.0 * r->report.macro_f1);
        }
        auto fmt = [](const std::vector<double>& v) {
            const MeanStd ms = mean_std(v);
            char cell[32];
            std::snprintf(cell, sizeof cell, "%6.2f +- %5.2f", ms.mean, ms.std);
            return std::string(cell);
        };
        std::snprintf(buf, sizeof buf, "%-14s %7zu %5zu  %-16s %-16s %-16s\n", key.first.c_str(), key.second,
                      cells[key].size(), fmt(acc).c_str(), fmt(fid).c_str(), fmt(f1).c_str());
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct Prepared {
    ExperimentSpec spec;
    std::filesystem::path out_dir;
};

Prepared prepare(const CommandOptions& opts) {
    Prepared p{load_spec(opts.config), {}};
    if (opts.seed) p.spec.seeds = {*opts.seed};
    if (opts.out) p.spec.output_dir = opts.out->string();
    p.out_dir = p.spec.output_dir;
    if (opts.jobs < 1) throw ConfigError("--jobs must be >= 1");
    return p;
}

void write_failures(const std::filesystem::path& dir, const std::vector<std::string>& failures) {
    std::ostringstream os;
    for (const auto& f : failures) os << f << '\n';
    write_atomic(dir / "failures.txt", os.str());
}

void write_config(const Prepared& p) { write_atomic(p.out_dir / "config.json", to_json(p.spec).dump(2) + "\n"); }

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "validation error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "run failure: " << e.what() << '\n';
        return 2;
    }
}

int finish(const Prepared& p, const std::vector<std::string>& failures, std::ostream& err) {
    if (failures.empty()) return 0;
    write_failures(p.out_dir, failures);
    for (const auto& f : failures) err << "failed: " << f << '\n';
    err << failures.size() << " run(s) failed; see " << (p.out_dir / "failures.txt").string() << '\n';
    return 2;
}

}  // namespace

int cmd_gen_data(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Prepared p = prepare(opts);
        if (p.spec.dataset.path) throw ConfigError("dataset.path: gen-data needs an sbm dataset, not a path");
        const Dataset ds = generate_sbm(p.spec.dataset.sbm, p.spec.dataset.seed);
        save_dataset(ds, p.out_dir);
        out << "wrote " << ds.num_nodes() << " nodes, " << edge_list(ds.graph).size() << " edges, "
            << ds.num_classes() << " classes to " << p.out_dir.string() << '\n';
        return 0;
    });
}

namespace {

int write_reference(const Prepared& p, const Dataset& ds, int jobs, std::ostream& out) {
    const auto ref = run_reference(p.spec, ds, jobs);
    write_results_csv(p.out_dir / "reference.csv", p.spec, ref, true);
    out << "full-subgraph reference:\n";
    print_summary(out, ref);
    return 0;
}

}  // namespace

int cmd_run(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Prepared p = prepare(opts);
        const Dataset ds = materialize_dataset(p.spec.dataset);
        validate(run_config(p.spec, Selector::CEGA, resolve_budgets(p.spec, ds.num_classes()).back(), 0));
        write_config(p);
        const RunOutcome res = run_experiment(p.spec, ds, opts.jobs);
        write_results_csv(p.out_dir / "results.csv", p.spec, res.results);
        write_trajectory_csv(p.out_dir / "trajectory.csv", p.spec, res.trajectory);
        for (const auto& log : res.logs)
            write_selection_log(p.out_dir / "logs" / (log.selector + "_seed" + std::to_string(log.seed) + ".csv"), log);
        if (opts.with_reference) write_reference(p, ds, opts.jobs, out);
        print_summary(out, res.results);
        if (std::find(p.spec.selectors.begin(), p.spec.selectors.end(), Selector::AGE) != p.spec.selectors.end())
            out << "note: AGE density uses a simplified K-Means distance score (approximation of the original)\n";
        return finish(p, res.failures, err);
    });
}

int cmd_sweep_gap(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Prepared p = prepare(opts);
        const Dataset ds = materialize_dataset(p.spec.dataset);
        const auto ref_path = p.out_dir / "reference.csv";
        if (opts.with_reference) {
            write_config(p);
            write_reference(p, ds, opts.jobs, out);
        } else if (!std::filesystem::exists(ref_path)) {
            err << "run failure: missing reference run " << ref_path.string()
                << "; run the full-subgraph reference first or pass --with-reference\n";
            return 2;
        }
        const auto reference = read_results_csv(ref_path);

        ExperimentSpec max_only = p.spec;
        const std::size_t max_budget = resolve_budgets(p.spec, ds.num_classes()).back();
        max_only.budgets = {max_budget};
        max_only.budget_multiples.clear();
        const RunOutcome res = run_experiment(max_only, ds, opts.jobs);
        const auto gaps = compute_gaps(reference, res.results, max_budget);
        write_gap_csv(p.out_dir / "gap.csv", p.spec, gaps);

        std::ostringstream summary;
        summary << "selector,gap_accuracy_mean,gap_accuracy_std,gap_fidelity_mean,gap_fidelity_std,"
                   "gap_macro_f1_mean,gap_macro_f1_std\n";
        out << "performance gap (full - budget) at budget " << max_budget << ":\n";
        for (Selector s : p.spec.selectors) {
            std::vector<double> a, f, m;
            for (const auto& g : gaps) {
                if (g.selector != to_string(s)) continue;
                a.push_back(g.gap.accuracy);
                f.push_back(g.gap.fidelity);
                m.push_back(g.gap.macro_f1);
            }
            const MeanStd ma = mean_std(a), mf = mean_std(f), mm = mean_std(m);
            summary << to_string(s) << ',' << format_number(ma.mean) << ',' << format_number(ma.std) << ','
                    << format_number(mf.mean) << ',' << format_number(mf.std) << ',' << format_number(mm.mean) << ','
                    << format_number(mm.std) << '\n';
            char buf[160];
            std::snprintf(buf, sizeof buf, "  %-8s acc %6.2f +- %5.2f  fid %6.2f +- %5.2f  f1 %6.2f +- %5.2f\n",
                          to_string(s).c_str(), 100 * ma.mean, 100 * ma.std, 100 * mf.mean, 100 * mf.std,
                          100 * mm.mean, 100 * mm.std);
            out << buf;
        }
        write_atomic(p.out_dir / "gap_summary.csv", summary.str());
        return finish(p, res.failures, err);
    });
}

int cmd_ablate(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Prepared p = prepare(opts);
        const Dataset ds = materialize_dataset(p.spec.dataset);
        write_config(p);
        const RunOutcome res = run_ablation_batch(p.spec, ds, opts.jobs);
        write_results_csv(p.out_dir / "ablation_runs.csv", p.spec, res.results);

        std::ostringstream summary;
        summary << "metric,variant,mean,std\n";
        std::map<std::string, std::map<std::string, MeanStd>> stats;
        for (const char* metric : {"accuracy", "fidelity", "macro_f1"}) {
            for (const auto& variant : ablation_variants()) {
                std::vector<double> v;
                for (const auto& r : res.results) {
                    if (r.selector != variant) continue;
                    const std::string m = metric;
                    v.push_back(m == "accuracy" ? r.report.accuracy
                                : m == "fidelity" ? r.report.fidelity
                                                  : r.report.macro_f1);
                }
                const MeanStd ms = mean_std(v);
                stats[metric][variant] = ms;
                summary << metric << ',' << variant << ',' << format_number(ms.mean) << ',' << format_number(ms.std)
                        << '\n';
            }
        }
        write_atomic(p.out_dir / "ablation.csv", summary.str());
        print_summary(out, res.results);
        int wider = 0;
        for (auto& [metric, by_variant] : stats)
            if (by_variant["NoDiversity"].std >= by_variant["CEGA"].std) ++wider;
        out << "NoDiversity std >= CEGA std on " << wider << " of 3 metrics (informational)\n";
        return finish(p, res.failures, err);
    });
}

int cmd_report(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        std::filesystem::path dir = opts.out ? *opts.out : std::filesystem::path();
        if (dir.empty()) dir = load_spec(opts.config).output_dir;
        const auto rows = read_results_csv(dir / "results.csv");
        print_summary(out, rows);
        std::ostringstream summary;
        summary << "selector,budget,runs,accuracy_mean,accuracy_std,fidelity_mean,fidelity_std,macro_f1_mean,"
                   "macro_f1_std\n";
        std::map<std::pair<std::string, std::size_t>, std::vector<const ResultRow*>> cells;
        std::vector<std::pair<std::string, std::size_t>> order;
        for (const auto& r : rows) {
            auto key = std::make_pair(r.selector, r.budget);
            if (!cells.count(key)) order.push_back(key);
            cells[key].push_back(&r);
        }
        for (const auto& key : order) {
            std::vector<double> a, f, m;
            for (const ResultRow* r : cells[key]) {
                a.push_back(r->report.accuracy);
                f.push_back(r->report.fidelity);
                m.push_back(r->report.macro_f1);
            }
            const MeanStd ma = mean_std(a), mf = mean_std(f), mm = mean_std(m);
            summary << key.first << ',' << key.second << ',' << cells[key].size() << ',' << format_number(ma.mean)
                    << ',' << format_number(ma.std) << ',' << format_number(mf.mean) << ',' << format_number(mf.std)
                    << ',' << format_number(mm.mean) << ',' << format_number(mm.std) << '\n';
        }
        write_atomic(dir / "summary.csv", summary.str());
        if (std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.selector == "AGE"; }))
            out << "note: AGE density uses a simplified K-Means distance score (approximation of the original)\n";
        return 0;
    });
}

}  // namespace cega
