#include "cega/gcn.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "cega/errors.hpp"
#include "cega/rng.hpp"

namespace cega {

bool GcnParams::operator==(const GcnParams& o) const {
    return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() && w2.rows() == o.w2.rows() &&
           w2.cols() == o.w2.cols() && b2.size() == o.b2.size() && w1 == o.w1 && w2 == o.w2 && b2 == o.b2;
}

void validate(const GcnParams& p) {
    if (p.w1.rows() < 1 || p.w1.cols() < 1 || p.w2.cols() < 1) throw StructuralError("empty GCN parameter shape");
    if (p.w2.rows() != p.w1.cols()) throw StructuralError("w2 rows must equal the hidden dimension");
    if (p.b2.size() != p.w2.cols()) throw StructuralError("b2 length must equal the class count");
    if (!p.w1.allFinite() || !p.w2.allFinite() || !p.b2.allFinite())
        throw StructuralError("GCN parameters contain non-finite entries");
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0) || !(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0))
        throw ConfigError("adam betas must lie in [0, 1)");
    if (!(cfg.adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

GcnParams init_params(std::size_t d, std::size_t h, std::size_t c, std::uint64_t seed) {
    if (d < 1 || h < 1 || c < 1) throw UsageError("GCN dimensions must be >= 1");
    Rng rng = make_rng(seed);
    auto glorot = [&rng](std::size_t fan_in, std::size_t fan_out) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = bound * (2.0 * uniform01(rng) - 1.0);
        return w;
    };
    GcnParams p;
    p.w1 = glorot(d, h);
    p.w2 = glorot(h, c);
    p.b2 = Vector::Zero(static_cast<Eigen::Index>(c));
    return p;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        double total = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            out(i, j) = std::exp(logits(i, j) - mx);
            total += out(i, j);
        }
        out.row(i) /= total;
    }
    return out;
}

ForwardCache forward_propagated(const GcnParams& params, Matrix propagated) {
    if (static_cast<std::size_t>(propagated.cols()) != params.input_dim())
        throw StructuralError("feature dimension " + std::to_string(propagated.cols()) +
                              " does not match model input dimension " + std::to_string(params.input_dim()));
    ForwardCache cache;
    cache.propagated = std::move(propagated);
    cache.hidden = (cache.propagated * params.w1).cwiseMax(0.0);
    cache.logits = cache.hidden * params.w2;
    cache.logits.rowwise() += params.b2.transpose();
    cache.softmax = softmax_rows(cache.logits);
    return cache;
}

ForwardCache forward(const GcnParams& params, const SparseOperator& norm_adj, const Matrix& x) {
    return forward_propagated(params, norm_adj.multiply(x));
}

namespace {

void check_mask(std::span<const NodeId> mask, const LabelVector& labels, Eigen::Index rows) {
    if (mask.empty()) throw UsageError("training mask is empty");
    for (NodeId v : mask) {
        if (static_cast<Eigen::Index>(v) >= rows || v >= labels.labels.size())
            throw UsageError("mask node " + std::to_string(v) + " out of range");
    }
}

}  // namespace

double cross_entropy_loss(const Matrix& softmax, const LabelVector& labels, std::span<const NodeId> mask) {
    check_mask(mask, labels, softmax.rows());
    double total = 0.0;
    for (NodeId v : mask) {
        const double p = softmax(static_cast<Eigen::Index>(v), labels.labels[v]);
        total -= std::log(std::max(p, 1e-12));
    }
    return total / static_cast<double>(mask.size());
}

double cross_entropy_loss(const ForwardCache& cache, const LabelVector& labels, std::span<const NodeId> mask) {
    return cross_entropy_loss(cache.softmax, labels, mask);
}

GcnGradients loss_gradients(const GcnParams& params, const ForwardCache& cache, const LabelVector& labels,
                            std::span<const NodeId> mask) {
    check_mask(mask, labels, cache.softmax.rows());
    const double scale = 1.0 / static_cast<double>(mask.size());
    Matrix dlogits = Matrix::Zero(cache.softmax.rows(), cache.softmax.cols());
    for (NodeId v : mask) {
        const auto i = static_cast<Eigen::Index>(v);
        dlogits.row(i) += scale * cache.softmax.row(i);
        dlogits(i, labels.labels[v]) -= scale;
    }
    GcnGradients g;
    g.w2 = cache.hidden.transpose() * dlogits;
    g.b2 = dlogits.colwise().sum().transpose();
    Matrix dhidden = dlogits * params.w2.transpose();
    dhidden = dhidden.cwiseProduct((cache.hidden.array() > 0.0).cast<double>().matrix());
    g.w1 = cache.propagated.transpose() * dhidden;
    return g;
}

namespace {

struct AdamSlot {
    Matrix m, v;
    explicit AdamSlot(Eigen::Index r, Eigen::Index c) : m(Matrix::Zero(r, c)), v(Matrix::Zero(r, c)) {}
};

template <typename Param, typename Grad>
void adam_step(Param& p, const Grad& g, Matrix& m, Matrix& v, const TrainConfig& cfg, double bc1, double bc2) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double gij = g(i, j);
            m(i, j) = cfg.adam_beta1 * m(i, j) + (1.0 - cfg.adam_beta1) * gij;
            v(i, j) = cfg.adam_beta2 * v(i, j) + (1.0 - cfg.adam_beta2) * gij * gij;
            const double mhat = m(i, j) / bc1;
            const double vhat = v(i, j) / bc2;
            p(i, j) -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

}  // namespace

GcnParams train(const SparseOperator& norm_adj, const FeatureMatrix& x, const LabelVector& labels,
                std::span<const NodeId> mask, const TrainConfig& cfg, const std::optional<GcnParams>& warm_start,
                std::size_t hidden_dim, std::vector<double>* loss_history) {
    validate(cfg);
    if (norm_adj.size != x.num_nodes()) throw StructuralError("graph and feature node counts differ");
    check_mask(mask, labels, static_cast<Eigen::Index>(x.num_nodes()));

    GcnParams params = warm_start ? *warm_start : init_params(x.dim(), hidden_dim, labels.num_classes, cfg.seed);
    validate(params);
    if (params.num_classes() != labels.num_classes) throw StructuralError("model class count differs from labels");

    const Matrix propagated = norm_adj.multiply(x.values);
    AdamSlot s1(params.w1.rows(), params.w1.cols());
    AdamSlot s2(params.w2.rows(), params.w2.cols());
    AdamSlot sb(params.b2.size(), 1);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        ForwardCache cache = forward_propagated(params, propagated);
        const double loss = cross_entropy_loss(cache, labels, mask);
        if (!std::isfinite(loss)) throw TrainingDivergence(epoch, loss);
        if (loss_history) loss_history->push_back(loss);
        GcnGradients g = loss_gradients(params, cache, labels, mask);
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, epoch);
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, epoch);
        adam_step(params.w1, g.w1, s1.m, s1.v, cfg, bc1, bc2);
        adam_step(params.w2, g.w2, s2.m, s2.v, cfg, bc1, bc2);
        adam_step(params.b2, g.b2, sb.m, sb.v, cfg, bc1, bc2);
    }
    if (!params.w1.allFinite() || !params.w2.allFinite() || !params.b2.allFinite())
        throw TrainingDivergence(cfg.epochs, std::nan(""));
    return params;
}

GcnParams train(const SparseGraph& graph, const FeatureMatrix& x, const LabelVector& labels,
                std::span<const NodeId> mask, const TrainConfig& cfg, const std::optional<GcnParams>& warm_start,
                std::size_t hidden_dim) {
    return train(normalized_adjacency(graph), x, labels, mask, cfg, warm_start, hidden_dim);
}

int argmax_row(const Matrix& m, Eigen::Index row) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < m.cols(); ++j)
        if (m(row, j) > m(row, best)) best = j;
    return static_cast<int>(best);
}

Prediction predict_embed(const GcnParams& params, const SparseOperator& norm_adj, const Matrix& x) {
    ForwardCache cache = forward(params, norm_adj, x);
    Prediction out;
    out.labels.resize(static_cast<std::size_t>(cache.softmax.rows()));
    for (Eigen::Index i = 0; i < cache.softmax.rows(); ++i) out.labels[static_cast<std::size_t>(i)] = argmax_row(cache.softmax, i);
    out.softmax = std::move(cache.softmax);
    out.embeddings = std::move(cache.hidden);
    return out;
}

Prediction predict_embed(const GcnParams& params, const SparseGraph& graph, const FeatureMatrix& x) {
    return predict_embed(params, normalized_adjacency(graph), x.values);
}

void save_params(const GcnParams& params, const std::filesystem::path& path) {
    validate(params);
    std::ofstream out(path);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out << "gcn d=" << params.input_dim() << " h=" << params.hidden_dim() << " c=" << params.num_classes() << '\n';
    out << std::setprecision(17);
    auto dump = [&out](const auto& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
            out << '\n';
        }
    };
    dump(params.w1);
    dump(params.w2);
    dump(Matrix(params.b2.transpose()));
}

GcnParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    const std::string file = path.string();
    if (!in) throw LoadError(file, 0, "cannot open file");
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw LoadError(file, 1, "empty checkpoint");
    std::size_t d = 0, h = 0, c = 0;
    if (std::sscanf(line.c_str(), "gcn d=%zu h=%zu c=%zu", &d, &h, &c) != 3 || d == 0 || h == 0 || c == 0)
        throw LoadError(file, 1, "expected header 'gcn d=<d> h=<h> c=<C>'");

    auto read_rows = [&](Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            ++line_no;
            if (!std::getline(in, line)) throw LoadError(file, line_no, "checkpoint truncated");
            std::istringstream is(line);
            for (Eigen::Index j = 0; j < cols; ++j)
                if (!(is >> m(i, j))) throw LoadError(file, line_no, "expected " + std::to_string(cols) + " values");
            std::string extra;
            if (is >> extra) throw LoadError(file, line_no, "too many values");
        }
        return m;
    };
    GcnParams p;
    p.w1 = read_rows(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(h));
    p.w2 = read_rows(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(c));
    p.b2 = read_rows(1, static_cast<Eigen::Index>(c)).row(0).transpose();
    validate(p);
    return p;
}

}  // namespace cega
