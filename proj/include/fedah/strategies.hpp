#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "fedah/data.hpp"
#include "fedah/error.hpp"
#include "fedah/model.hpp"
#include "fedah/nn.hpp"
#include "fedah/random.hpp"

namespace fedah {

// ---------------------------------------------------------------------------
// Types shared by all local-update rules
// ---------------------------------------------------------------------------

/// One mixing coefficient per head entry (weights and biases), each in [0, 1].
struct AggregationWeights {
    Matrix weight;
    std::vector<double> bias;

    static AggregationWeights filled(const DenseLayer& like, double value) {
        AggregationWeights w;
        w.weight = Matrix(like.in_dim(), like.out_dim(), value);
        w.bias.assign(like.out_dim(), value);
        return w;
    }

    bool same_shape(const DenseLayer& head) const noexcept {
        return weight.same_shape(head.weight) && bias.size() == head.bias.size();
    }

    bool within_unit_interval() const {
        auto ok = [](double v) { return v >= 0.0 && v <= 1.0; };
        return std::all_of(weight.values().begin(), weight.values().end(), ok) &&
               std::all_of(bias.begin(), bias.end(), ok);
    }

    friend bool operator==(const AggregationWeights&, const AggregationWeights&) = default;
};

struct ClientState {
    std::size_t id = 0;
    ClientSplit split;
    ModelParams local_model;
    DenseLayer prev_head;            // the client's head from its last update
    AggregationWeights agg_weights;  // persisted across rounds, stale while absent
    bool participated = false;
};

/// Hooks for inspecting the aggregated-head computation. Called from the
/// worker running the client; implementations must be thread-safe when
/// clients run concurrently.
class FedahObserver {
public:
    virtual ~FedahObserver() = default;
    /// After every clipped gradient step on the aggregation weights.
    virtual void on_weight_step(std::size_t /*client_id*/, const AggregationWeights& /*weights*/) {}
    /// For every aggregated head built from (previous local head, global head).
    virtual void on_aggregated_head(std::size_t /*client_id*/, const DenseLayer& /*prev_head*/,
                                    const DenseLayer& /*global_head*/, const DenseLayer& /*built*/) {}
};

/// Client-side hyperparameters.
struct LocalTraining {
    std::size_t local_epochs = 1;
    std::size_t batch_size = 10;
    double local_lr = 0.05;
    double weight_lr = 0.05;
    double initial_agg_weight = 1.0;  // bootstrap value for every W entry
    FedahObserver* observer = nullptr;
};

enum class Phase { weights, head, extractor, joint };

inline const char* to_string(Phase p) {
    switch (p) {
    case Phase::weights: return "weights";
    case Phase::head: return "head";
    case Phase::extractor: return "extractor";
    case Phase::joint: return "joint";
    }
    return "?";
}

struct PhaseLoss {
    Phase phase;
    double mean_loss;  // mean mini-batch loss over the phase; NaN if no batches ran
};

struct LocalUpdateReport {
    std::size_t client_id = 0;
    ModelParams upload;              // head meaningful only when head_uploaded
    bool head_uploaded = true;
    std::size_t transmitted = 0;     // parameters sent in one direction
    std::vector<PhaseLoss> phases;   // in execution order

    /// Mean loss of the last phase that ran (the loss reported per round).
    double train_loss() const {
        return phases.empty() ? std::numeric_limits<double>::quiet_NaN() : phases.back().mean_loss;
    }
};

// Per-phase stream ids for derive_seed. FedRep and FedAH share the head and
// extractor ids so their mini-batch orders coincide.
inline constexpr std::uint64_t kWeightsStream = 1;
inline constexpr std::uint64_t kHeadStream = 2;
inline constexpr std::uint64_t kExtractorStream = 3;
inline constexpr std::uint64_t kJointStream = 4;

// ---------------------------------------------------------------------------
// Mini-batch training
// ---------------------------------------------------------------------------

namespace detail {

inline Batch gather(const LabeledDataset& data, std::span<const std::size_t> rows) {
    Batch b;
    b.inputs = Matrix(rows.size(), data.dim());
    b.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = data.features.row(rows[i]);
        std::copy(src.begin(), src.end(), b.inputs.row(i).begin());
        b.labels.push_back(data.labels[rows[i]]);
    }
    return b;
}

/// Calls fn(batch) for every mini-batch of `epochs` seeded shuffles of
/// `data`; the last partial batch of each epoch is kept. Returns the number
/// of batches visited.
template <class Fn>
std::size_t for_each_batch(const LabeledDataset& data, std::size_t epochs, std::size_t batch_size, Seed seed, Fn&& fn) {
    if (batch_size < 1) throw_config("batch_size must be >= 1");
    Rng rng = make_rng(seed);
    std::vector<std::size_t> order(data.size());
    std::size_t batches = 0;
    for (std::size_t e = 0; e < epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t len = std::min(batch_size, order.size() - start);
            fn(gather(data, std::span<const std::size_t>(order).subspan(start, len)));
            ++batches;
        }
    }
    return batches;
}

inline double mean_or_nan(double sum, std::size_t n) {
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

inline void bootstrap(ClientState& client, const ModelParams& global, const LocalTraining& cfg) {
    if (client.participated) return;
    client.prev_head = global.head;
    client.agg_weights = AggregationWeights::filled(global.head, cfg.initial_agg_weight);
}

inline void check_client(const ClientState& client, const ModelParams& global) {
    if (client.split.train.size() == 0) throw_usage("client has no training data");
    if (client.split.train.dim() != global.input_dim()) throw_shape("client data dim does not match model input dim");
    if (client.participated) {
        require_same_shape(client.prev_head, global.head, "client head vs global head");
        if (!client.agg_weights.same_shape(global.head)) throw_shape("aggregation weights vs global head");
    }
}

}  // namespace detail

/// Trains `model` in place for `epochs` passes with plain SGD, holding the
/// frozen groups fixed. Returns the mean mini-batch loss (NaN for 0 epochs).
inline double train_phase(ModelParams& model, const LabeledDataset& data, Freeze freeze, std::size_t epochs,
                          std::size_t batch_size, double lr, Seed seed) {
    double sum = 0.0;
    const std::size_t n = detail::for_each_batch(data, epochs, batch_size, seed, [&](const Batch& batch) {
        auto lg = loss_and_grads(model, batch, freeze);
        sum += lg.loss;
        apply_sgd(model, lg.grads, lr);
    });
    return detail::mean_or_nan(sum, n);
}

// ---------------------------------------------------------------------------
// Aggregated head
// ---------------------------------------------------------------------------

/// Element-wise interpolation prev + (global - prev) * W. W = 1 yields the
/// global entry and W = 0 the previous one exactly; other results are
/// clamped to the closed interval between the two endpoints.
inline DenseLayer fedah_build_head(const DenseLayer& prev_head, const DenseLayer& global_head,
                                   const AggregationWeights& weights) {
    require_same_shape(prev_head, global_head, "fedah_build_head");
    if (!weights.same_shape(prev_head)) throw_shape("fedah_build_head: aggregation weights shape");

    auto mix = [](double prev, double global, double w) {
        if (w == 1.0) return global;
        if (w == 0.0) return prev;
        const double v = prev + (global - prev) * w;
        return std::clamp(v, std::min(prev, global), std::max(prev, global));
    };
    DenseLayer out = prev_head;
    auto o = out.weight.values();
    auto g = global_head.weight.values();
    auto w = weights.weight.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = mix(o[i], g[i], w[i]);
    for (std::size_t i = 0; i < out.bias.size(); ++i) out.bias[i] = mix(out.bias[i], global_head.bias[i], weights.bias[i]);
    return out;
}

/// dL/dW for the loss of {extractor, build_head(prev, global, W)} on one
/// batch: the head gradient times (global - prev), entry by entry.
inline AggregationWeights fedah_weight_gradient(const std::vector<DenseLayer>& extractor, const DenseLayer& prev_head,
                                                const DenseLayer& global_head, const AggregationWeights& weights,
                                                const Batch& batch, double* loss_out = nullptr) {
    ModelParams model{extractor, fedah_build_head(prev_head, global_head, weights)};
    auto lg = loss_and_grads(model, batch, Freeze{.extractor = true, .head = false});
    if (loss_out) *loss_out = lg.loss;
    AggregationWeights grad = AggregationWeights::filled(global_head, 0.0);
    auto gw = grad.weight.values();
    auto dh = lg.grads.head.weight.values();
    auto hg = global_head.weight.values();
    auto hp = prev_head.weight.values();
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] = dh[i] * (hg[i] - hp[i]);
    for (std::size_t i = 0; i < grad.bias.size(); ++i) {
        grad.bias[i] = lg.grads.head.bias[i] * (global_head.bias[i] - prev_head.bias[i]);
    }
    return grad;
}

/// Learns the client's aggregation weights against the received global
/// extractor and head. Starts from the persisted W, runs local_epochs passes
/// of mini-batch gradient steps with the extractor and both heads frozen,
/// and clips every entry to [0, 1] after each step. The result is stored
/// back in the client and returned.
inline AggregationWeights fedah_learn_weights(ClientState& client, const std::vector<DenseLayer>& global_extractor,
                                              const DenseLayer& global_head, const LocalTraining& cfg, Seed seed,
                                              double* mean_loss = nullptr) {
    detail::bootstrap(client, ModelParams{global_extractor, global_head}, cfg);
    require_same_shape(client.prev_head, global_head, "fedah_learn_weights");
    if (!client.agg_weights.same_shape(global_head)) throw_shape("fedah_learn_weights: aggregation weights shape");

    const DenseLayer& prev = client.prev_head;
    AggregationWeights w = client.agg_weights;

    // Entries where prev == global get a zero gradient and never move.
    double sum = 0.0;
    const std::size_t n = detail::for_each_batch(
        client.split.train, cfg.local_epochs, cfg.batch_size, seed, [&](const Batch& batch) {
            if (cfg.observer) {
                cfg.observer->on_aggregated_head(client.id, prev, global_head, fedah_build_head(prev, global_head, w));
            }
            double batch_loss = 0.0;
            const auto grad = fedah_weight_gradient(global_extractor, prev, global_head, w, batch, &batch_loss);
            sum += batch_loss;
            auto step = [lr = cfg.weight_lr](double& wi, double gi) { wi = std::clamp(wi - lr * gi, 0.0, 1.0); };
            auto wv = w.weight.values();
            auto gv = grad.weight.values();
            for (std::size_t i = 0; i < wv.size(); ++i) step(wv[i], gv[i]);
            for (std::size_t i = 0; i < w.bias.size(); ++i) step(w.bias[i], grad.bias[i]);
            if (cfg.observer) cfg.observer->on_weight_step(client.id, w);
        });
    if (mean_loss) *mean_loss = detail::mean_or_nan(sum, n);
    client.agg_weights = w;
    return w;
}

// ---------------------------------------------------------------------------
// Local-update rules
// ---------------------------------------------------------------------------

/// Local model := global; joint training; full model uploaded.
inline LocalUpdateReport fedavg_update(ClientState& client, const ModelParams& global, const LocalTraining& cfg,
                                       Seed seed) {
    detail::check_client(client, global);
    detail::bootstrap(client, global, cfg);
    ModelParams model = global;
    const double loss = train_phase(model, client.split.train, {}, cfg.local_epochs, cfg.batch_size, cfg.local_lr,
                                    derive_seed(seed, {kJointStream}));
    client.local_model = model;
    client.prev_head = model.head;
    client.participated = true;
    return {client.id, std::move(model), true, global.param_count(), {{Phase::joint, loss}}};
}

/// Global extractor plus the client's retained head, trained jointly; only
/// the extractor is uploaded.
inline LocalUpdateReport fedper_update(ClientState& client, const ModelParams& global, const LocalTraining& cfg,
                                       Seed seed) {
    detail::check_client(client, global);
    detail::bootstrap(client, global, cfg);
    ModelParams model{global.extractor, client.prev_head};
    const double loss = train_phase(model, client.split.train, {}, cfg.local_epochs, cfg.batch_size, cfg.local_lr,
                                    derive_seed(seed, {kJointStream}));
    client.local_model = model;
    client.prev_head = model.head;
    client.participated = true;
    return {client.id, std::move(model), false, global.extractor_param_count(), {{Phase::joint, loss}}};
}

/// Global extractor plus retained head; head trained first with the
/// extractor frozen, then the extractor with the head frozen. Only the
/// extractor is uploaded.
inline LocalUpdateReport fedrep_update(ClientState& client, const ModelParams& global, const LocalTraining& cfg,
                                       Seed seed) {
    detail::check_client(client, global);
    detail::bootstrap(client, global, cfg);
    ModelParams model{global.extractor, client.prev_head};
    const double head_loss = train_phase(model, client.split.train, {.extractor = true, .head = false},
                                         cfg.local_epochs, cfg.batch_size, cfg.local_lr, derive_seed(seed, {kHeadStream}));
    const double extractor_loss = train_phase(model, client.split.train, {.extractor = false, .head = true},
                                              cfg.local_epochs, cfg.batch_size, cfg.local_lr,
                                              derive_seed(seed, {kExtractorStream}));
    client.local_model = model;
    client.prev_head = model.head;
    client.participated = true;
    return {client.id,
            std::move(model),
            false,
            global.extractor_param_count(),
            {{Phase::head, head_loss}, {Phase::extractor, extractor_loss}}};
}

/// Aggregated-head update: learn W, build the aggregated head from the
/// previous local head and the global head, train that head on the frozen
/// global extractor, then train the extractor on the frozen new head. The
/// full model is uploaded and the new head becomes the client's previous
/// head for its next round.
inline LocalUpdateReport fedah_update(ClientState& client, const ModelParams& global, const LocalTraining& cfg,
                                      Seed seed) {
    detail::check_client(client, global);
    detail::bootstrap(client, global, cfg);

    double weights_loss = 0.0;
    const AggregationWeights w =
        fedah_learn_weights(client, global.extractor, global.head, cfg, derive_seed(seed, {kWeightsStream}), &weights_loss);

    ModelParams model{global.extractor, fedah_build_head(client.prev_head, global.head, w)};
    if (cfg.observer) cfg.observer->on_aggregated_head(client.id, client.prev_head, global.head, model.head);

    const double head_loss = train_phase(model, client.split.train, {.extractor = true, .head = false},
                                         cfg.local_epochs, cfg.batch_size, cfg.local_lr, derive_seed(seed, {kHeadStream}));
    const double extractor_loss = train_phase(model, client.split.train, {.extractor = false, .head = true},
                                              cfg.local_epochs, cfg.batch_size, cfg.local_lr,
                                              derive_seed(seed, {kExtractorStream}));
    client.local_model = model;
    client.prev_head = model.head;
    client.participated = true;
    return {client.id,
            std::move(model),
            true,
            global.param_count(),
            {{Phase::weights, weights_loss}, {Phase::head, head_loss}, {Phase::extractor, extractor_loss}}};
}

// ---------------------------------------------------------------------------
// Strategy selection
// ---------------------------------------------------------------------------

enum class Method { fedavg, fedper, fedrep, fedah };

inline const char* to_string(Method m) {
    switch (m) {
    case Method::fedavg: return "fedavg";
    case Method::fedper: return "fedper";
    case Method::fedrep: return "fedrep";
    case Method::fedah: return "fedah";
    }
    return "?";
}

inline Method parse_method(std::string_view id) {
    if (id == "fedavg") return Method::fedavg;
    if (id == "fedper") return Method::fedper;
    if (id == "fedrep") return Method::fedrep;
    if (id == "fedah") return Method::fedah;
    throw_config("unknown method '" + std::string(id) + "' (expected fedavg, fedper, fedrep or fedah)");
}

/// The client's evaluation model. Every method evaluates the model left on
/// the client by its last local update (the initial global model before
/// the first one).
inline const ModelParams& personalized_model(const ClientState& client, Method /*method*/) {
    return client.local_model;
}

/// Stateless local-update rule. All mutable state lives in ClientState.
class Strategy {
public:
    virtual ~Strategy() = default;
    virtual std::string_view id() const = 0;
    /// Whether uploads carry the head, i.e. whether the server aggregates it.
    virtual bool shares_head() const = 0;
    virtual LocalUpdateReport local_update(ClientState& client, const ModelParams& global, const LocalTraining& cfg,
                                           Seed seed) const = 0;
};

namespace detail {

template <auto Update, bool SharesHead>
class FunctionStrategy final : public Strategy {
public:
    explicit FunctionStrategy(Method m) : method_(m) {}
    std::string_view id() const override { return to_string(method_); }
    bool shares_head() const override { return SharesHead; }
    LocalUpdateReport local_update(ClientState& client, const ModelParams& global, const LocalTraining& cfg,
                                   Seed seed) const override {
        return Update(client, global, cfg, seed);
    }

private:
    Method method_;
};

}  // namespace detail

inline std::unique_ptr<Strategy> make_strategy(Method m) {
    switch (m) {
    case Method::fedavg: return std::make_unique<detail::FunctionStrategy<&fedavg_update, true>>(m);
    case Method::fedper: return std::make_unique<detail::FunctionStrategy<&fedper_update, false>>(m);
    case Method::fedrep: return std::make_unique<detail::FunctionStrategy<&fedrep_update, false>>(m);
    case Method::fedah: return std::make_unique<detail::FunctionStrategy<&fedah_update, true>>(m);
    }
    throw_config("unknown method");
}

}  // namespace fedah
