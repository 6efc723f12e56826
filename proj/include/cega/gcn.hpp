#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cega/dataset.hpp"
#include "cega/graph.hpp"

namespace cega {

// Two-layer GCN: hidden = ReLU(S X W1), logits = hidden W2 + b2.
// The first layer has no bias.
struct GcnParams {
    Matrix w1;  // d x h
    Matrix w2;  // h x C
    Vector b2;  // C

    std::size_t input_dim() const { return static_cast<std::size_t>(w1.rows()); }
    std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.cols()); }
    std::size_t num_classes() const { return static_cast<std::size_t>(w2.cols()); }

    bool operator==(const GcnParams& o) const;
};

// Throws StructuralError on inconsistent shapes or non-finite entries.
void validate(const GcnParams& p);

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 1000;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& cfg);

struct ForwardCache {
    Matrix propagated;  // S X, N x d
    Matrix hidden;      // post-ReLU, N x h
    Matrix logits;      // N x C
    Matrix softmax;     // N x C
};

// Glorot-uniform weights, zero bias.
GcnParams init_params(std::size_t d, std::size_t h, std::size_t c, std::uint64_t seed);

ForwardCache forward(const GcnParams& params, const SparseOperator& norm_adj, const Matrix& x);
// Same as forward() with S X already computed.
ForwardCache forward_propagated(const GcnParams& params, Matrix propagated);

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

// Mean of -log(max(p_true, 1e-12)) over masked nodes. Throws UsageError on
// an empty mask.
double cross_entropy_loss(const Matrix& softmax, const LabelVector& labels, std::span<const NodeId> mask);
double cross_entropy_loss(const ForwardCache& cache, const LabelVector& labels, std::span<const NodeId> mask);

struct GcnGradients {
    Matrix w1;
    Matrix w2;
    Vector b2;
};

// Analytic gradient of cross_entropy_loss with respect to every parameter.
GcnGradients loss_gradients(const GcnParams& params, const ForwardCache& cache, const LabelVector& labels,
                            std::span<const NodeId> mask);

// Full-batch Adam on the masked cross-entropy. With warm_start the weights
// continue from it and the optimizer state starts fresh; otherwise weights
// come from init_params(d, hidden_dim, C, cfg.seed). Throws
// TrainingDivergence if the loss becomes non-finite.
GcnParams train(const SparseGraph& graph, const FeatureMatrix& x, const LabelVector& labels,
                std::span<const NodeId> mask, const TrainConfig& cfg, const std::optional<GcnParams>& warm_start,
                std::size_t hidden_dim = 16);

// Overload with the normalized operator precomputed; optionally records the
// loss before each update.
GcnParams train(const SparseOperator& norm_adj, const FeatureMatrix& x, const LabelVector& labels,
                std::span<const NodeId> mask, const TrainConfig& cfg, const std::optional<GcnParams>& warm_start,
                std::size_t hidden_dim = 16, std::vector<double>* loss_history = nullptr);

struct Prediction {
    std::vector<int> labels;  // argmax, ties to the smaller class index
    Matrix softmax;
    Matrix embeddings;  // hidden layer
};

Prediction predict_embed(const GcnParams& params, const SparseOperator& norm_adj, const Matrix& x);
Prediction predict_embed(const GcnParams& params, const SparseGraph& graph, const FeatureMatrix& x);

// Index of the largest entry of row i; the first one wins ties.
int argmax_row(const Matrix& m, Eigen::Index row);

// Checkpoint: "gcn d=<d> h=<h> c=<C>" then w1, w2, b2 in row-major order.
void save_params(const GcnParams& params, const std::filesystem::path& path);
GcnParams load_params(const std::filesystem::path& path);

}  // namespace cega
