#include "cega/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "cega/errors.hpp"
#include "cega/rng.hpp"

namespace cega {

void validate(const Dataset& ds) {
    audit(ds.graph);
    const std::size_t n = ds.graph.num_nodes;
    if (ds.features.num_nodes() != n)
        throw StructuralError("feature matrix has " + std::to_string(ds.features.num_nodes()) +
                              " rows, graph has " + std::to_string(n) + " nodes");
    if (ds.features.dim() < 1) throw StructuralError("feature dimension must be at least 1");
    if (!ds.features.values.allFinite()) throw StructuralError("feature matrix has non-finite entries");
    if (ds.labels.num_nodes() != n)
        throw StructuralError("label vector has " + std::to_string(ds.labels.num_nodes()) + " entries, graph has " +
                              std::to_string(n) + " nodes");
    if (ds.labels.num_classes < 1) throw StructuralError("need at least one class");
    for (int y : ds.labels.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= ds.labels.num_classes)
            throw StructuralError("label " + std::to_string(y) + " outside [0, C)");
    }
}

void validate(const SbmConfig& cfg) {
    if (cfg.num_nodes < 1) throw ConfigError("sbm.num_nodes must be >= 1");
    if (cfg.num_classes < 1) throw ConfigError("sbm.num_classes must be >= 1");
    if (!(cfg.inter_p >= 0.0 && cfg.inter_p < cfg.intra_p && cfg.intra_p <= 1.0))
        throw ConfigError("sbm probabilities must satisfy 0 <= inter_p < intra_p <= 1");
    if (cfg.feature_dim < 1) throw ConfigError("sbm.feature_dim must be >= 1");
    if (!(cfg.feature_separation >= 0.0) || !std::isfinite(cfg.feature_separation))
        throw ConfigError("sbm.feature_separation must be a non-negative real");
    if (!(cfg.noise_sigma > 0.0) || !std::isfinite(cfg.noise_sigma))
        throw ConfigError("sbm.noise_sigma must be positive");
}

Dataset generate_sbm(const SbmConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    const std::size_t n = cfg.num_nodes;
    const std::size_t c = cfg.num_classes;

    Dataset ds;
    ds.labels.num_classes = c;
    ds.labels.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels.labels[i] = static_cast<int>(i % c);

    Rng edge_rng = make_rng(substream(seed, "sbm.edges"));
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double p = (i % c == j % c) ? cfg.intra_p : cfg.inter_p;
            if (uniform01(edge_rng) < p) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
        }
    }
    ds.graph = build_csr(edges, n, true);

    Rng feat_rng = make_rng(substream(seed, "sbm.features"));
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    ds.features.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.feature_dim));
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t axis = (i % c) % cfg.feature_dim;
        for (std::size_t k = 0; k < cfg.feature_dim; ++k) {
            const double mean = (k == axis) ? cfg.feature_separation : 0.0;
            ds.features.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = mean + noise(feat_rng);
        }
    }
    return ds;
}

namespace {

std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

std::vector<NodeId> shuffled_ids(std::size_t n, Rng& rng) {
    std::vector<NodeId> ids(n);
    std::iota(ids.begin(), ids.end(), NodeId{0});
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(ids[i - 1], ids[j]);
    }
    return ids;
}

}  // namespace

NodePartition split_partition(std::size_t num_nodes, double pool_fraction, double train_fraction,
                              std::uint64_t seed, bool allow_overlap) {
    if (!(pool_fraction > 0.0 && pool_fraction < 1.0)) throw ConfigError("pool_fraction must lie in (0, 1)");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");

    Rng rng = make_rng(substream(seed, "partition"));
    NodePartition part;
    const std::size_t pool = round_count(pool_fraction * static_cast<double>(num_nodes));
    if (pool == 0) throw ConfigError("pool_fraction yields an empty candidate pool");

    auto order = shuffled_ids(num_nodes, rng);
    part.candidate_pool.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pool));

    std::vector<NodeId> rest;
    if (allow_overlap) {
        rest = shuffled_ids(num_nodes, rng);
    } else {
        rest.assign(order.begin() + static_cast<std::ptrdiff_t>(pool), order.end());
    }
    const std::size_t train = round_count(train_fraction * static_cast<double>(rest.size()));
    if (train == 0) throw ConfigError("train_fraction yields an empty target training set");
    if (train >= rest.size()) throw ConfigError("partition leaves an empty test set");
    part.target_train.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(train));
    part.test.assign(rest.begin() + static_cast<std::ptrdiff_t>(train), rest.end());

    std::sort(part.candidate_pool.begin(), part.candidate_pool.end());
    std::sort(part.target_train.begin(), part.target_train.end());
    std::sort(part.test.begin(), part.test.end());
    return part;
}

// ---------------------------------------------------------------------------
// Text I/O

namespace {

struct LineReader {
    std::ifstream in;
    std::string file;
    std::size_t line_no = 0;

    explicit LineReader(const std::filesystem::path& p) : in(p), file(p.string()) {
        if (!in) throw LoadError(file, 0, "cannot open file");
    }
    bool next(std::string& line) {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    }
    [[noreturn]] void fail(const std::string& what) const { throw LoadError(file, line_no, what); }
};

// Parses "#key=value" tokens separated by spaces, e.g. "#nodes=5 undirected=1".
long long header_value(LineReader& r, const std::string& line, const std::string& key) {
    if (line.empty() || line[0] != '#') r.fail("missing header line");
    std::istringstream is(line.substr(1));
    std::string tok;
    while (is >> tok) {
        auto eq = tok.find('=');
        if (eq != std::string::npos && tok.substr(0, eq) == key) {
            try {
                std::size_t used = 0;
                long long v = std::stoll(tok.substr(eq + 1), &used);
                if (used != tok.size() - eq - 1 || v < 0) r.fail("malformed header value for " + key);
                return v;
            } catch (const std::logic_error&) {
                r.fail("malformed header value for " + key);
            }
        }
    }
    r.fail("header lacks " + key + "=");
}

bool is_blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isspace(ch); });
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    validate(ds);
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "graph.tsv");
        out << "#nodes=" << ds.graph.num_nodes << " undirected=" << (ds.graph.undirected ? 1 : 0) << '\n';
        for (const auto& [u, v] : edge_list(ds.graph)) out << u << '\t' << v << '\n';
    }
    {
        std::ofstream out(dir / "features.csv");
        out << "#dim=" << ds.features.dim() << '\n' << std::setprecision(17);
        for (Eigen::Index i = 0; i < ds.features.values.rows(); ++i) {
            for (Eigen::Index k = 0; k < ds.features.values.cols(); ++k) {
                if (k) out << ',';
                out << ds.features.values(i, k);
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "labels.csv");
        out << "#classes=" << ds.labels.num_classes << '\n';
        for (int y : ds.labels.labels) out << y << '\n';
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    std::string line;

    LineReader g(dir / "graph.tsv");
    if (!g.next(line)) g.fail("empty file");
    const auto n = static_cast<std::size_t>(header_value(g, line, "nodes"));
    const bool undirected = header_value(g, line, "undirected") != 0;
    std::vector<Edge> edges;
    while (g.next(line)) {
        if (is_blank(line)) continue;
        std::istringstream is(line);
        long long u = -1, v = -1;
        std::string extra;
        if (!(is >> u >> v) || (is >> extra)) g.fail("expected 'u<TAB>v'");
        if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n)
            g.fail("endpoint outside [0, " + std::to_string(n) + ")");
        edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
    ds.graph = build_csr(edges, n, undirected);

    LineReader f(dir / "features.csv");
    if (!f.next(line)) f.fail("empty file");
    const auto dim = static_cast<std::size_t>(header_value(f, line, "dim"));
    if (dim < 1) f.fail("dim must be >= 1");
    std::vector<double> values;
    std::size_t rows = 0;
    while (f.next(line)) {
        if (is_blank(line)) continue;
        std::istringstream is(line);
        std::string cell;
        std::size_t cols = 0;
        while (std::getline(is, cell, ',')) {
            try {
                std::size_t used = 0;
                double x = std::stod(cell, &used);
                if (!is_blank(cell.substr(used)) || !std::isfinite(x)) f.fail("malformed decimal '" + cell + "'");
                values.push_back(x);
            } catch (const std::logic_error&) {
                f.fail("malformed decimal '" + cell + "'");
            }
            ++cols;
        }
        if (cols != dim) f.fail("expected " + std::to_string(dim) + " columns, found " + std::to_string(cols));
        ++rows;
    }
    if (rows != n)
        f.fail("feature rows (" + std::to_string(rows) + ") do not match graph node count (" + std::to_string(n) + ")");
    ds.features.values = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(rows),
                                            static_cast<Eigen::Index>(dim));

    LineReader l(dir / "labels.csv");
    if (!l.next(line)) l.fail("empty file");
    ds.labels.num_classes = static_cast<std::size_t>(header_value(l, line, "classes"));
    if (ds.labels.num_classes < 1) l.fail("classes must be >= 1");
    while (l.next(line)) {
        if (is_blank(line)) continue;
        std::istringstream is(line);
        long long y = -1;
        std::string extra;
        if (!(is >> y) || (is >> extra)) l.fail("expected a single integer label");
        if (y < 0 || static_cast<std::size_t>(y) >= ds.labels.num_classes)
            l.fail("label " + std::to_string(y) + " outside [0, " + std::to_string(ds.labels.num_classes) + ")");
        ds.labels.labels.push_back(static_cast<int>(y));
    }
    if (ds.labels.labels.size() != n)
        l.fail("label count (" + std::to_string(ds.labels.labels.size()) + ") does not match graph node count (" +
               std::to_string(n) + ")");
    return ds;
}

}  // namespace cega
