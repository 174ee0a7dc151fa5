#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fedah/data.hpp"
#include "fedah/error.hpp"
#include "fedah/model.hpp"
#include "fedah/nn.hpp"
#include "fedah/random.hpp"
#include "fedah/strategies.hpp"

namespace fedah {

/// Fraction of clients joining a round: fixed when lo == hi, otherwise drawn
/// uniformly from [lo, hi] every round.
struct JoinRatio {
    double lo = 1.0;
    double hi = 1.0;

    static JoinRatio fixed(double rho) { return {rho, rho}; }
    static JoinRatio range(double lo, double hi) { return {lo, hi}; }
    bool is_range() const noexcept { return lo != hi; }
};

struct RoundConfig {
    std::size_t total_rounds = 100;
    JoinRatio join_ratio;
    std::size_t local_epochs = 1;
    std::size_t batch_size = 10;
    double local_lr = 0.05;
    std::optional<double> weight_lr;  // unset: same as local_lr
    std::size_t eval_every = 1;
    std::optional<std::size_t> early_stop_patience;
    Seed master_seed = 0;
    double initial_agg_weight = 1.0;
    std::size_t workers = 1;
    FedahObserver* observer = nullptr;

    double effective_weight_lr() const { return weight_lr.value_or(local_lr); }

    LocalTraining local() const {
        return {local_epochs, batch_size, local_lr, effective_weight_lr(), initial_agg_weight, observer};
    }

    void validate() const {
        if (total_rounds < 1) throw_config("total_rounds must be >= 1");
        if (!(join_ratio.lo > 0.0 && join_ratio.lo <= join_ratio.hi && join_ratio.hi <= 1.0)) {
            throw_config("join ratio must satisfy 0 < lo <= hi <= 1");
        }
        if (batch_size < 1) throw_config("batch_size must be >= 1");
        if (!(local_lr > 0.0) || !std::isfinite(local_lr)) throw_config("local_lr must be > 0");
        if (weight_lr && (!(*weight_lr >= 0.0) || !std::isfinite(*weight_lr))) throw_config("weight_lr must be >= 0");
        if (eval_every < 1) throw_config("eval_every must be >= 1");
        if (early_stop_patience && *early_stop_patience < 1) throw_config("early_stop_patience must be >= 1");
        if (!(initial_agg_weight >= 0.0 && initial_agg_weight <= 1.0)) throw_config("initial_agg_weight must be in [0, 1]");
        if (workers < 1) throw_config("workers must be >= 1");
    }
};

struct RoundRecord {
    std::size_t round = 0;
    double join_ratio = 1.0;                  // the ratio used this round
    std::vector<std::size_t> sampled;         // ascending client ids
    bool evaluated = false;
    std::vector<double> client_accuracy;      // per client id, when evaluated
    double mean_accuracy = std::numeric_limits<double>::quiet_NaN();
    double mean_train_loss = std::numeric_limits<double>::quiet_NaN();
    std::size_t params_transmitted = 0;       // this round, both directions
    std::size_t params_transmitted_cumulative = 0;

    /// Field-wise equality where two NaNs compare equal, so identical runs
    /// with unevaluated rounds still compare equal.
    friend bool operator==(const RoundRecord& a, const RoundRecord& b) {
        auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        return a.round == b.round && a.join_ratio == b.join_ratio && a.sampled == b.sampled &&
               a.evaluated == b.evaluated && a.client_accuracy == b.client_accuracy &&
               same(a.mean_accuracy, b.mean_accuracy) && same(a.mean_train_loss, b.mean_train_loss) &&
               a.params_transmitted == b.params_transmitted &&
               a.params_transmitted_cumulative == b.params_transmitted_cumulative;
    }
};

struct MetricsLog {
    std::vector<RoundRecord> rounds;
    double best_mean_accuracy = 0.0;
    std::size_t best_round = 0;               // 0 until the first evaluation
    std::vector<double> client_best_accuracy; // per-client max over evaluations
    bool stopped_early = false;

    std::size_t evaluations() const {
        return static_cast<std::size_t>(std::count_if(rounds.begin(), rounds.end(), [](const auto& r) { return r.evaluated; }));
    }

    friend bool operator==(const MetricsLog&, const MetricsLog&) = default;
};

struct ServerState {
    ModelParams global_model;
    std::size_t round = 0;
    std::vector<ClientState> clients;
    MetricsLog metrics;
    std::size_t evals_without_improvement = 0;
};

// Stream ids for derive_seed(master_seed, {stream, ...}).
inline constexpr std::uint64_t kInitStream = 11;
inline constexpr std::uint64_t kSamplingStream = 12;
inline constexpr std::uint64_t kClientStream = 13;
inline constexpr std::uint64_t kSplitStream = 14;

/// Picks ceil(rho * n_clients) distinct clients uniformly without
/// replacement (at least one). In range mode rho is drawn first from
/// U[lo, hi]. Ids are returned ascending.
inline std::vector<std::size_t> sample_clients(std::size_t n_clients, const JoinRatio& ratio, Rng& rng,
                                               double* drawn_ratio = nullptr) {
    if (n_clients < 1) throw_config("sample_clients needs at least one client");
    double rho = ratio.lo;
    if (ratio.is_range()) rho = ratio.lo + (ratio.hi - ratio.lo) * uniform01(rng);
    if (drawn_ratio) *drawn_ratio = rho;

    // The epsilon keeps products like 0.1 * 20 from rounding up to 3.
    const double want = std::ceil(rho * static_cast<double>(n_clients) - 1e-9);
    const std::size_t m = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(want, 1.0)), 1, n_clients);

    std::vector<std::size_t> ids(n_clients);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    if (m < n_clients) {
        // Partial Fisher-Yates: the first m slots become the sample.
        for (std::size_t i = 0; i < m; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n_clients - 1);
            std::swap(ids[i], ids[pick(rng)]);
        }
        ids.resize(m);
        std::sort(ids.begin(), ids.end());
    }
    return ids;
}

/// Size-weighted sample coefficients k_i = n_i / sum_j n_j.
inline std::vector<double> aggregation_coefficients(std::span<const std::size_t> data_sizes) {
    const double total = static_cast<double>(std::accumulate(data_sizes.begin(), data_sizes.end(), std::size_t{0}));
    if (!(total > 0.0)) throw_usage("aggregation needs a positive total sample count");
    std::vector<double> k(data_sizes.size());
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<double>(data_sizes[i]) / total;
    return k;
}

namespace detail {

/// out = sum_i k_i * layer_i, accumulated in list order and clamped to the
/// entry-wise [min, max] of the inputs.
inline DenseLayer weighted_layer(const std::vector<const DenseLayer*>& layers, const std::vector<double>& k) {
    DenseLayer out = *layers.front();
    DenseLayer lo = out;
    DenseLayer hi = out;
    for (double& v : out.weight.values()) v = 0.0;
    std::fill(out.bias.begin(), out.bias.end(), 0.0);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        require_same_shape(out, *layers[i], "aggregate");
        const double ki = k[i];
        for_each_entry(out, *layers[i], [ki](double& acc, const double& p) { acc += ki * p; });
        for_each_entry(lo, *layers[i], [](double& m, const double& p) { m = std::min(m, p); });
        for_each_entry(hi, *layers[i], [](double& m, const double& p) { m = std::max(m, p); });
    }
    auto ov = out.weight.values();
    auto lv = lo.weight.values();
    auto hv = hi.weight.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::clamp(ov[i], lv[i], hv[i]);
    for (std::size_t i = 0; i < out.bias.size(); ++i) out.bias[i] = std::clamp(out.bias[i], lo.bias[i], hi.bias[i]);
    return out;
}

inline std::vector<DenseLayer> weighted_extractor(std::span<const ModelParams* const> models, const std::vector<double>& k) {
    std::vector<DenseLayer> out;
    for (std::size_t l = 0; l < models.front()->extractor.size(); ++l) {
        std::vector<const DenseLayer*> layers;
        for (const auto* m : models) layers.push_back(&m->extractor[l]);
        out.push_back(weighted_layer(layers, k));
    }
    return out;
}

inline void check_aggregate_inputs(std::span<const ModelParams* const> models, std::span<const std::size_t> sizes) {
    if (models.empty()) throw_usage("aggregate needs at least one model");
    if (models.size() != sizes.size()) throw_usage("aggregate: one data size per model required");
    for (const auto* m : models) require_same_shape(*models.front(), *m, "aggregate");
}

}  // namespace detail

/// Size-weighted average of every parameter entry over the given models.
inline ModelParams aggregate(std::span<const ModelParams* const> models, std::span<const std::size_t> data_sizes) {
    detail::check_aggregate_inputs(models, data_sizes);
    const auto k = aggregation_coefficients(data_sizes);
    ModelParams out;
    out.extractor = detail::weighted_extractor(models, k);
    std::vector<const DenseLayer*> heads;
    for (const auto* m : models) heads.push_back(&m->head);
    out.head = detail::weighted_layer(heads, k);
    return out;
}

inline ModelParams aggregate(const std::vector<ModelParams>& models, const std::vector<std::size_t>& data_sizes) {
    std::vector<const ModelParams*> ptrs;
    for (const auto& m : models) ptrs.push_back(&m);
    return aggregate(std::span<const ModelParams* const>(ptrs), data_sizes);
}

/// Builds the server state: one global model from the master seed, every
/// client's local model initialised to it.
inline ServerState init_server(const RoundConfig& cfg, std::vector<ClientSplit> splits,
                               const std::vector<std::size_t>& extractor_dims, std::size_t n_classes) {
    cfg.validate();
    if (splits.empty()) throw_config("no clients");
    ServerState state;
    state.global_model = init_model(extractor_dims, n_classes, derive_seed(cfg.master_seed, {kInitStream}));
    state.clients.reserve(splits.size());
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i].train.dim() != state.global_model.input_dim()) {
            throw_config("client " + std::to_string(i) + " feature dim " + std::to_string(splits[i].train.dim()) +
                         " does not match model input dim " + std::to_string(state.global_model.input_dim()));
        }
        ClientState c;
        c.id = i;
        c.split = std::move(splits[i]);
        c.split.client_id = i;
        c.local_model = state.global_model;
        c.prev_head = state.global_model.head;
        c.agg_weights = AggregationWeights::filled(state.global_model.head, cfg.initial_agg_weight);
        state.clients.push_back(std::move(c));
    }
    state.metrics.client_best_accuracy.assign(state.clients.size(), 0.0);
    return state;
}

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception (by index) is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    auto guarded = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) guarded(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) guarded(i);
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

inline double mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

}  // namespace detail

/// The model client `c` is scored with: the current global model for
/// FedAvg (what the client receives after the round's aggregation), the
/// client's own {extractor, head} for the personalised methods.
inline const ModelParams& evaluation_model(const ServerState& state, const ClientState& c, Method method) {
    return method == Method::fedavg ? state.global_model : personalized_model(c, method);
}

/// Accuracy of every client's evaluation model on its own test split.
inline std::vector<double> evaluate_clients(const ServerState& state, Method method) {
    std::vector<double> acc(state.clients.size());
    for (std::size_t i = 0; i < state.clients.size(); ++i) {
        const auto& c = state.clients[i];
        acc[i] = accuracy(evaluation_model(state, c, method), c.split.test.features, c.split.test.labels);
    }
    return acc;
}

/// One server round: sample, broadcast, local updates, aggregate whatever
/// the strategy uploads (extractor always, head only when shared),
/// account for communication and evaluate when due.
inline void run_round(ServerState& state, const Strategy& strategy, const RoundConfig& cfg, Method eval_method) {
    if (state.round >= cfg.total_rounds) throw_usage("run_round past total_rounds");
    const std::size_t t = state.round + 1;
    RoundRecord rec;
    rec.round = t;

    Rng sampling_rng = make_rng(derive_seed(cfg.master_seed, {kSamplingStream, t}));
    rec.sampled = sample_clients(state.clients.size(), cfg.join_ratio, sampling_rng, &rec.join_ratio);

    const LocalTraining local = cfg.local();
    const ModelParams& global = state.global_model;
    std::vector<LocalUpdateReport> reports(rec.sampled.size());
    detail::parallel_for(rec.sampled.size(), cfg.workers, [&](std::size_t j) {
        const std::size_t id = rec.sampled[j];
        try {
            reports[j] = strategy.local_update(state.clients[id], global, local,
                                               derive_seed(cfg.master_seed, {kClientStream, t, id}));
        } catch (const Error& e) {
            throw e.with_context("client " + std::to_string(id));
        } catch (const std::exception& e) {
            throw Error(ErrorKind::runtime, "client " + std::to_string(id) + ": " + e.what());
        }
    });

    std::vector<const ModelParams*> uploads;
    std::vector<std::size_t> sizes;
    double loss_sum = 0.0;
    for (std::size_t j = 0; j < reports.size(); ++j) {
        uploads.push_back(&reports[j].upload);
        sizes.push_back(state.clients[rec.sampled[j]].split.train.size());
        rec.params_transmitted += 2 * reports[j].transmitted;
        loss_sum += reports[j].train_loss();
    }
    rec.mean_train_loss = loss_sum / static_cast<double>(reports.size());

    detail::check_aggregate_inputs(uploads, sizes);
    const auto k = aggregation_coefficients(sizes);
    ModelParams next;
    next.extractor = detail::weighted_extractor(uploads, k);
    if (strategy.shares_head()) {
        std::vector<const DenseLayer*> heads;
        for (const auto* m : uploads) heads.push_back(&m->head);
        next.head = detail::weighted_layer(heads, k);
    } else {
        next.head = global.head;
    }
    state.global_model = std::move(next);

    auto& log = state.metrics;
    rec.params_transmitted_cumulative =
        (log.rounds.empty() ? 0 : log.rounds.back().params_transmitted_cumulative) + rec.params_transmitted;

    if (t % cfg.eval_every == 0 || t == cfg.total_rounds) {
        rec.evaluated = true;
        rec.client_accuracy = evaluate_clients(state, eval_method);
        rec.mean_accuracy = detail::mean(rec.client_accuracy);
        if (log.best_round == 0 || rec.mean_accuracy > log.best_mean_accuracy) {
            log.best_mean_accuracy = rec.mean_accuracy;
            log.best_round = t;
            state.evals_without_improvement = 0;
        } else {
            ++state.evals_without_improvement;
        }
        for (std::size_t i = 0; i < rec.client_accuracy.size(); ++i) {
            log.client_best_accuracy[i] = std::max(log.client_best_accuracy[i], rec.client_accuracy[i]);
        }
    }
    log.rounds.push_back(std::move(rec));
    state.round = t;
}

inline void run_round(ServerState& state, Method method, const RoundConfig& cfg) {
    run_round(state, *make_strategy(method), cfg, method);
}

/// Partitions `dataset`, then splits each client's share into train and
/// test with a per-client seed derived from the partition seed.
inline std::vector<ClientSplit> prepare_clients(const LabeledDataset& dataset, const PartitionSpec& spec,
                                                double test_fraction = 0.25) {
    auto parts = partition(dataset, spec);
    std::vector<ClientSplit> splits;
    splits.reserve(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        splits.push_back(split_train_test(parts[i], test_fraction, derive_seed(spec.seed, {kSplitStream, i}), i));
    }
    return splits;
}

/// Runs rounds until total_rounds or until early stopping triggers.
inline MetricsLog run_experiment(const RoundConfig& cfg, std::vector<ClientSplit> splits,
                                 const std::vector<std::size_t>& extractor_dims, std::size_t n_classes, Method method) {
    ServerState state = init_server(cfg, std::move(splits), extractor_dims, n_classes);
    const auto strategy = make_strategy(method);
    while (state.round < cfg.total_rounds) {
        run_round(state, *strategy, cfg, method);
        if (cfg.early_stop_patience && state.evals_without_improvement >= *cfg.early_stop_patience) {
            state.metrics.stopped_early = state.round < cfg.total_rounds;
            break;
        }
    }
    return std::move(state.metrics);
}

/// `hidden_dims` lists the extractor widths after the input layer; the
/// input dimension comes from the dataset.
inline MetricsLog run_experiment(const RoundConfig& cfg, const LabeledDataset& dataset, const PartitionSpec& spec,
                                 const std::vector<std::size_t>& hidden_dims, Method method, double test_fraction = 0.25) {
    cfg.validate();
    std::vector<std::size_t> dims{dataset.dim()};
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    return run_experiment(cfg, prepare_clients(dataset, spec, test_fraction), dims, dataset.n_classes, method);
}

}  // namespace fedah
