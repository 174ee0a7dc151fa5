#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedah/error.hpp"
#include "fedah/matrix.hpp"
#include "fedah/model.hpp"

namespace fedah {

struct Batch {
    Matrix inputs;                    // batch_size x D
    std::vector<std::size_t> labels;  // one class index per row

    std::size_t size() const noexcept { return labels.size(); }
};

/// Activations kept from a forward pass. activations[0] is the input,
/// activations[l + 1] is ReLU(pre_activations[l]) for extractor layer l, and
/// activations.back() is the representation fed to the head.
struct ForwardCache {
    std::vector<Matrix> pre_activations;
    std::vector<Matrix> activations;

    const Matrix& representation() const { return activations.back(); }
};

struct ForwardResult {
    Matrix logits;
    ForwardCache cache;
};

/// Which parameter groups receive zero gradient.
struct Freeze {
    bool extractor = false;
    bool head = false;
};

struct LossAndGrads {
    double loss = 0.0;
    Gradients grads;
};

namespace detail {

inline void add_bias(Matrix& m, const std::vector<double>& bias) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
}

inline void check_labels(std::span<const std::size_t> labels, std::size_t rows, std::size_t n_classes) {
    if (labels.size() != rows) {
        throw_shape("label count " + std::to_string(labels.size()) + " != input rows " +
                    std::to_string(rows));
    }
    for (std::size_t y : labels) {
        if (y >= n_classes) {
            throw_shape("label " + std::to_string(y) + " out of range for " +
                        std::to_string(n_classes) + " classes");
        }
    }
}

inline void check_chain(const ModelParams& model) {
    std::size_t dim = model.input_dim();
    for (const auto& layer : model.extractor) {
        if (layer.in_dim() != dim || layer.bias.size() != layer.out_dim()) {
            throw_shape("extractor layers do not chain");
        }
        dim = layer.out_dim();
    }
    if (model.head.in_dim() != dim || model.head.bias.size() != model.head.out_dim()) {
        throw_shape("head does not chain onto extractor");
    }
}

/// Per-sample cross-entropy terms and, optionally, dL/dlogits for the mean
/// loss. Uses max-shifted log-sum-exp.
inline double softmax_xent(const Matrix& logits, std::span<const std::size_t> labels, Matrix* dlogits) {
    const std::size_t n = logits.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    if (dlogits) *dlogits = Matrix(n, logits.cols());
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        auto z = logits.row(r);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        const double log_sum = std::log(sum) + zmax;
        total += log_sum - z[labels[r]];
        if (dlogits) {
            auto d = dlogits->row(r);
            for (std::size_t c = 0; c < z.size(); ++c) d[c] = std::exp(z[c] - log_sum) * inv_n;
            d[labels[r]] -= inv_n;
        }
    }
    return total * inv_n;
}

}  // namespace detail

inline ForwardResult forward(const ModelParams& model, const Matrix& inputs) {
    detail::check_chain(model);
    if (inputs.cols() != model.input_dim()) {
        throw_shape("input dim " + std::to_string(inputs.cols()) + " != model input dim " +
                    std::to_string(model.input_dim()));
    }
    ForwardResult out;
    auto& cache = out.cache;
    cache.activations.reserve(model.extractor.size() + 1);
    cache.pre_activations.reserve(model.extractor.size());
    cache.activations.push_back(inputs);
    for (const auto& layer : model.extractor) {
        Matrix z;
        matmul(cache.activations.back(), layer.weight, z);
        detail::add_bias(z, layer.bias);
        Matrix a = z;
        for (double& v : a.values()) v = v > 0.0 ? v : 0.0;
        cache.pre_activations.push_back(std::move(z));
        cache.activations.push_back(std::move(a));
    }
    matmul(cache.representation(), model.head.weight, out.logits);
    detail::add_bias(out.logits, model.head.bias);
    return out;
}

inline ForwardResult forward(const ModelParams& model, const Batch& batch) {
    return forward(model, batch.inputs);
}

/// Row-wise softmax probabilities.
inline Matrix softmax(const Matrix& logits) {
    Matrix probs(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto z = logits.row(r);
        auto p = probs.row(r);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) sum += (p[c] = std::exp(z[c] - zmax));
        for (double& v : p) v /= sum;
    }
    return probs;
}

/// Mean softmax cross-entropy over the batch.
inline double loss(const ModelParams& model, const Batch& batch) {
    if (batch.size() == 0) throw_usage("loss of an empty batch");
    detail::check_labels(batch.labels, batch.inputs.rows(), model.n_classes());
    const auto fwd = forward(model, batch.inputs);
    return detail::softmax_xent(fwd.logits, batch.labels, nullptr);
}

/// Mean cross-entropy and its analytic gradient. Frozen groups get
/// all-zero gradients; when the extractor is frozen the backward pass stops
/// at the representation.
inline LossAndGrads loss_and_grads(const ModelParams& model, const Batch& batch, Freeze freeze = {}) {
    if (batch.size() == 0) throw_usage("loss_and_grads on an empty batch");
    detail::check_labels(batch.labels, batch.inputs.rows(), model.n_classes());

    const auto fwd = forward(model, batch.inputs);
    LossAndGrads out;
    out.grads = zero_gradients(model);
    Matrix dlogits;
    out.loss = detail::softmax_xent(fwd.logits, batch.labels, &dlogits);

    Gradients& g = out.grads;

    if (!freeze.head) {
        matmul_tn(fwd.cache.representation(), dlogits, g.head.weight);
        for (std::size_t r = 0; r < dlogits.rows(); ++r) {
            auto d = dlogits.row(r);
            for (std::size_t c = 0; c < d.size(); ++c) g.head.bias[c] += d[c];
        }
    }
    if (freeze.extractor || model.extractor.empty()) return out;

    Matrix delta;
    matmul_nt(dlogits, model.head.weight, delta);  // dL/d(representation)
    for (std::size_t l = model.extractor.size(); l-- > 0;) {
        const Matrix& z = fwd.cache.pre_activations[l];
        auto dv = delta.values();
        auto zv = z.values();
        for (std::size_t i = 0; i < dv.size(); ++i) {
            if (zv[i] <= 0.0) dv[i] = 0.0;
        }
        DenseLayer& gl = g.extractor[l];
        matmul_tn(fwd.cache.activations[l], delta, gl.weight);
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            auto d = delta.row(r);
            for (std::size_t c = 0; c < d.size(); ++c) gl.bias[c] += d[c];
        }
        if (l > 0) {
            Matrix prev;
            matmul_nt(delta, model.extractor[l].weight, prev);
            delta = std::move(prev);
        }
    }
    return out;
}

/// p <- p - lr * g for every entry, in place.
inline void apply_sgd(ModelParams& model, const Gradients& grads, double lr) {
    require_same_shape(model, grads, "sgd_step");
    auto step = [lr](double& p, const double& g) { p -= lr * g; };
    for (std::size_t i = 0; i < model.extractor.size(); ++i) for_each_entry(model.extractor[i], grads.extractor[i], step);
    for_each_entry(model.head, grads.head, step);
    if (!model.all_finite()) {
        throw Error(ErrorKind::runtime, "non-finite parameter after SGD step (learning rate too large?)");
    }
}

inline ModelParams sgd_step(ModelParams model, const Gradients& grads, double lr) {
    if (!(lr >= 0.0)) throw_config("learning rate must be non-negative");
    apply_sgd(model, grads, lr);
    return model;
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
        if (row[c] > row[best]) best = c;
    }
    return best;
}

/// Fraction of rows whose argmax logit equals the label.
inline double accuracy(const ModelParams& model, const Matrix& features, std::span<const std::size_t> labels) {
    if (labels.empty()) throw_usage("accuracy of an empty dataset");
    detail::check_labels(labels, features.rows(), model.n_classes());
    const auto fwd = forward(model, features);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (argmax(fwd.logits.row(r)) == labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

inline double accuracy(const ModelParams& model, const Batch& batch) {
    return accuracy(model, batch.inputs, batch.labels);
}

}  // namespace fedah
