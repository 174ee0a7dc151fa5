#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fedah/error.hpp"
#include "fedah/matrix.hpp"
#include "fedah/random.hpp"

namespace fedah {

/// Fully-connected layer computing y = x * weight + bias, with the weight
/// stored fan_in x fan_out so a batch (rows = samples) multiplies on the left.
struct DenseLayer {
    Matrix weight;
    std::vector<double> bias;

    DenseLayer() = default;
    DenseLayer(std::size_t in_dim, std::size_t out_dim)
        : weight(in_dim, out_dim), bias(out_dim, 0.0) {}

    std::size_t in_dim() const noexcept { return weight.rows(); }
    std::size_t out_dim() const noexcept { return weight.cols(); }
    std::size_t param_count() const noexcept { return weight.size() + bias.size(); }

    bool same_shape(const DenseLayer& other) const noexcept {
        return weight.same_shape(other.weight) && bias.size() == other.bias.size();
    }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Applies f(a_entry, b_entry) to every weight and bias entry of two
/// shape-congruent layers. `a` may be mutated through the first argument.
template <class LayerA, class LayerB, class Fn>
void for_each_entry(LayerA& a, LayerB& b, Fn&& fn) {
    auto wa = a.weight.values();
    auto wb = b.weight.values();
    for (std::size_t i = 0; i < wa.size(); ++i) fn(wa[i], wb[i]);
    for (std::size_t i = 0; i < a.bias.size(); ++i) fn(a.bias[i], b.bias[i]);
}

inline void require_same_shape(const DenseLayer& a, const DenseLayer& b, const char* what) {
    if (!a.same_shape(b)) {
        throw_shape(std::string(what) + ": layer " + a.weight.shape_str() + " vs " +
                    b.weight.shape_str());
    }
}

namespace detail {

/// Extractor layers (ReLU after each) followed by a single linear head.
template <class Tag>
struct SplitParams {
    std::vector<DenseLayer> extractor;
    DenseLayer head;

    std::size_t input_dim() const { return extractor.empty() ? head.in_dim() : extractor.front().in_dim(); }
    std::size_t representation_dim() const { return head.in_dim(); }
    std::size_t n_classes() const { return head.out_dim(); }

    std::size_t extractor_param_count() const {
        std::size_t n = 0;
        for (const auto& layer : extractor) n += layer.param_count();
        return n;
    }
    std::size_t head_param_count() const { return head.param_count(); }
    std::size_t param_count() const { return extractor_param_count() + head_param_count(); }

    template <class OtherTag>
    bool same_shape(const SplitParams<OtherTag>& other) const {
        if (extractor.size() != other.extractor.size()) return false;
        for (std::size_t i = 0; i < extractor.size(); ++i) {
            if (!extractor[i].same_shape(other.extractor[i])) return false;
        }
        return head.same_shape(other.head);
    }

    /// Same layout, every entry zero, optionally as another parameter kind.
    template <class OutTag = Tag>
    SplitParams<OutTag> zeros_like() const {
        SplitParams<OutTag> out;
        out.extractor.reserve(extractor.size());
        for (const auto& layer : extractor) out.extractor.emplace_back(layer.in_dim(), layer.out_dim());
        out.head = DenseLayer(head.in_dim(), head.out_dim());
        return out;
    }

    bool all_finite() const {
        auto finite = [](const DenseLayer& l) {
            return std::all_of(l.weight.values().begin(), l.weight.values().end(),
                               [](double v) { return std::isfinite(v); }) &&
                   std::all_of(l.bias.begin(), l.bias.end(), [](double v) { return std::isfinite(v); });
        };
        return std::all_of(extractor.begin(), extractor.end(), finite) && finite(head);
    }

    friend bool operator==(const SplitParams&, const SplitParams&) = default;
};

struct ModelTag;
struct GradientTag;

}  // namespace detail

using ModelParams = detail::SplitParams<detail::ModelTag>;
using Gradients = detail::SplitParams<detail::GradientTag>;

inline Gradients zero_gradients(const ModelParams& model) {
    return model.zeros_like<detail::GradientTag>();
}

template <class TagA, class TagB>
void require_same_shape(const detail::SplitParams<TagA>& a, const detail::SplitParams<TagB>& b,
                        const char* what) {
    if (!a.same_shape(b)) {
        throw_shape(std::string(what) + ": parameter layouts differ");
    }
}

/// Glorot-uniform weights, U(-s, s) with s = sqrt(6 / (fan_in + fan_out)),
/// and zero biases. `extractor_dims` lists the input dimension followed by
/// each hidden width; the last entry is the representation size fed to the
/// head. A single entry means an empty extractor (the head sees raw input).
inline ModelParams init_model(const std::vector<std::size_t>& extractor_dims, std::size_t n_classes,
                              Seed seed) {
    if (extractor_dims.empty()) throw_config("extractor_dims must not be empty");
    for (std::size_t d : extractor_dims) {
        if (d < 1) throw_config("all layer dimensions must be >= 1");
    }
    if (n_classes < 2) throw_config("n_classes must be >= 2");

    Rng rng = make_rng(seed);
    auto glorot = [&rng](DenseLayer& layer) {
        const double s = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
        for (double& w : layer.weight.values()) w = (2.0 * uniform01(rng) - 1.0) * s;
    };

    ModelParams model;
    for (std::size_t i = 0; i + 1 < extractor_dims.size(); ++i) {
        model.extractor.emplace_back(extractor_dims[i], extractor_dims[i + 1]);
        glorot(model.extractor.back());
    }
    model.head = DenseLayer(extractor_dims.back(), n_classes);
    glorot(model.head);
    return model;
}

}  // namespace fedah
