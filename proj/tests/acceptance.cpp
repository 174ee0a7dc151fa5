// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Every tolerance and threshold is a named constant below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "fedah/experiment.hpp"
#include "fedah/federation.hpp"
#include "oracles.hpp"

using namespace fedah;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradRelTol = 1e-6;
constexpr double kFdStep = 1e-6;
constexpr int kFdInstances = 25;
constexpr double kEquivalenceTol = 1e-10;
constexpr double kAggregationTol = 1e-12;
constexpr double kFedRepOverFedAvg = 0.05;
constexpr double kPathologicalGap = 0.10;
constexpr double kDropoutDegradation = 0.02;
constexpr double kBudgetGradients = 5.0;
constexpr double kBudgetEquivalence = 10.0;
constexpr double kBudgetInvariants = 30.0;
constexpr double kBudgetOrdering = 300.0;

// Shared experimental setup for the directional criteria.
constexpr std::size_t kClasses = 10;
constexpr std::size_t kDim = 32;
constexpr std::size_t kPerClass = 200;
constexpr double kSeparation = 2.5;
constexpr std::size_t kRounds = 100;
constexpr Seed kSeeds[] = {1, 2, 3, 4, 5};
const std::vector<std::size_t> kHidden{64, 32};

struct Outcome {
    bool pass;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

LabeledDataset dataset_for(Seed s) { return generate_synthetic(kClasses, kDim, kPerClass, kSeparation, 1000 + s); }

PartitionSpec dirichlet_spec(Seed s, std::size_t clients = 20) {
    PartitionSpec p;
    p.mode = PartitionMode::dirichlet;
    p.n_clients = clients;
    p.beta = 0.1;
    p.seed = s;
    return p;
}

PartitionSpec pathological_spec(Seed s) {
    PartitionSpec p;
    p.mode = PartitionMode::pathological;
    p.n_clients = 10;
    p.classes_per_client = 2;
    p.seed = s;
    return p;
}

RoundConfig round_config(Seed s, JoinRatio ratio = JoinRatio::fixed(1.0)) {
    RoundConfig c;
    c.total_rounds = kRounds;
    c.local_lr = 0.05;
    c.batch_size = 10;
    c.local_epochs = 1;
    c.master_seed = s;
    c.join_ratio = ratio;
    return c;
}

/// Mean over seeds of best_mean_accuracy.
double mean_best(Method m, const std::function<PartitionSpec(Seed)>& spec, JoinRatio ratio) {
    double total = 0.0;
    for (Seed s : kSeeds) total += run_experiment(round_config(s, ratio), dataset_for(s), spec(s), kHidden, m).best_mean_accuracy;
    return total / static_cast<double>(std::size(kSeeds));
}

// ---------------------------------------------------------------------------

DenseLayer random_head(std::size_t k, std::size_t c, Rng& rng) {
    DenseLayer h(k, c);
    for (double& v : h.weight.values()) v = 2.0 * uniform01(rng) - 1.0;
    for (double& v : h.bias) v = 2.0 * uniform01(rng) - 1.0;
    return h;
}

Outcome gradient_oracles() {
    Rng rng(20240601);
    double worst_model = 0.0, worst_w = 0.0;
    for (int trial = 0; trial < kFdInstances; ++trial) {
        const std::size_t d = 1 + rng() % 5, k = 1 + rng() % 6, c = 2 + rng() % 3, n = 1 + rng() % 8;
        auto m = oracle::random_model({d, k, k}, c, rng);
        const auto b = oracle::random_batch(n, d, c, rng);
        const auto analytic = loss_and_grads(m, b);
        oracle::for_each_param(m, analytic.grads, [&](double& p, double g) {
            const double num = oracle::central_diff(p, kFdStep, [&] { return oracle::mean_loss(m, b); });
            worst_model = std::max(worst_model, oracle::rel_error(g, num));
        });
    }
    for (int trial = 0; trial < kFdInstances; ++trial) {
        const std::size_t d = 1 + rng() % 5, k = 1 + rng() % 6, c = 2 + rng() % 3, n = 1 + rng() % 8;
        const auto base = oracle::random_model({d, k}, c, rng);
        const auto prev = random_head(k, c, rng);
        const auto global = random_head(k, c, rng);
        auto w = AggregationWeights::filled(prev, 0.0);
        for (double& v : w.weight.values()) v = 0.05 + 0.9 * uniform01(rng);
        for (double& v : w.bias) v = 0.05 + 0.9 * uniform01(rng);
        const auto b = oracle::random_batch(n, d, c, rng);
        const auto grad = fedah_weight_gradient(base.extractor, prev, global, w, b);
        // Head rebuilt entry by entry, independent of fedah_build_head.
        auto loss_at = [&] {
            DenseLayer h = prev;
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    h.weight(i, j) = prev.weight(i, j) + (global.weight(i, j) - prev.weight(i, j)) * w.weight(i, j);
            for (std::size_t j = 0; j < c; ++j) h.bias[j] = prev.bias[j] + (global.bias[j] - prev.bias[j]) * w.bias[j];
            return oracle::mean_loss(ModelParams{base.extractor, h}, b);
        };
        auto wv = w.weight.values();
        for (std::size_t i = 0; i < wv.size(); ++i) {
            worst_w = std::max(worst_w, oracle::rel_error(grad.weight.values()[i], oracle::central_diff(wv[i], kFdStep, loss_at)));
        }
        for (std::size_t i = 0; i < w.bias.size(); ++i) {
            worst_w = std::max(worst_w, oracle::rel_error(grad.bias[i], oracle::central_diff(w.bias[i], kFdStep, loss_at)));
        }
    }
    return {worst_model < kGradRelTol && worst_w < kGradRelTol,
            std::to_string(kFdInstances) + "+" + std::to_string(kFdInstances) + " instances, max rel err model " +
                fmt("%.2e", worst_model) + ", W " + fmt("%.2e", worst_w)};
}

Outcome degenerate_equivalence() {
    const Seed s = 1;
    RoundConfig cfg = round_config(s);
    cfg.total_rounds = 5;
    cfg.weight_lr = 0.0;
    cfg.initial_agg_weight = 0.0;
    const auto clients = prepare_clients(dataset_for(s), dirichlet_spec(s, 4));
    const auto ah = run_experiment(cfg, clients, {kDim, 64, 32}, kClasses, Method::fedah);
    const auto rep = run_experiment(cfg, clients, {kDim, 64, 32}, kClasses, Method::fedrep);
    double worst = 0.0;
    for (std::size_t t = 0; t < ah.rounds.size(); ++t) {
        for (std::size_t i = 0; i < ah.rounds[t].client_accuracy.size(); ++i) {
            worst = std::max(worst, std::abs(ah.rounds[t].client_accuracy[i] - rep.rounds[t].client_accuracy[i]));
        }
    }
    const bool shape_ok = ah.rounds.size() == 5 && rep.rounds.size() == 5 && ah.rounds[0].client_accuracy.size() == 4;
    return {shape_ok && worst <= kEquivalenceTol, "5 rounds, 4 clients, max per-client accuracy diff " + fmt("%.1e", worst)};
}

class InvariantObserver final : public FedahObserver {
public:
    void on_weight_step(std::size_t, const AggregationWeights& w) override {
        std::lock_guard lock(mu_);
        ++steps_;
        if (!w.within_unit_interval()) ++violations_;
    }
    void on_aggregated_head(std::size_t, const DenseLayer& prev, const DenseLayer& global,
                            const DenseLayer& built) override {
        std::lock_guard lock(mu_);
        ++heads_;
        auto inside = [](double v, double a, double b) { return v >= std::min(a, b) && v <= std::max(a, b); };
        for (std::size_t i = 0; i < built.weight.size(); ++i) {
            if (!inside(built.weight.values()[i], prev.weight.values()[i], global.weight.values()[i])) ++violations_;
        }
        for (std::size_t i = 0; i < built.bias.size(); ++i) {
            if (!inside(built.bias[i], prev.bias[i], global.bias[i])) ++violations_;
        }
    }
    std::size_t steps_ = 0, heads_ = 0, violations_ = 0;

private:
    std::mutex mu_;
};

Outcome interpolation_invariants() {
    InvariantObserver obs;
    const Seed s = 1;
    RoundConfig cfg = round_config(s, JoinRatio::range(0.1, 1.0));
    cfg.total_rounds = 50;
    cfg.observer = &obs;
    run_experiment(cfg, dataset_for(s), dirichlet_spec(s), kHidden, Method::fedah);
    return {obs.violations_ == 0 && obs.steps_ > 0 && obs.heads_ > 0,
            "50 rounds, " + std::to_string(obs.steps_) + " W steps, " + std::to_string(obs.heads_) +
                " heads checked, " + std::to_string(obs.violations_) + " violations"};
}

Outcome aggregation_correctness() {
    Rng rng(77);
    double worst = 0.0, worst_k = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng() % 8;
        std::vector<ModelParams> models;
        std::vector<std::size_t> sizes;
        for (std::size_t i = 0; i < n; ++i) {
            models.push_back(oracle::random_model({4, 5, 3}, 3, rng));
            sizes.push_back(1 + rng() % 200);
        }
        const auto k = aggregation_coefficients(sizes);
        worst_k = std::max(worst_k, std::abs(std::accumulate(k.begin(), k.end(), 0.0) - 1.0));
        auto avg = aggregate(models, sizes);
        const Gradients zeros = zero_gradients(avg);
        std::vector<std::vector<double>> flat(n);
        for (std::size_t i = 0; i < n; ++i) {
            oracle::for_each_param(models[i], zeros, [&](double& p, double) { flat[i].push_back(p); });
        }
        std::size_t e = 0;
        oracle::for_each_param(avg, zeros, [&](double& v, double) {
            std::vector<double> values;
            for (const auto& f : flat) values.push_back(f[e]);
            worst = std::max(worst, std::abs(v - oracle::weighted_entry(values, sizes)));
            ++e;
        });
    }
    const auto k = aggregation_coefficients(std::vector<std::size_t>{30, 70});
    ModelParams a = init_model({2}, 2, 1), b = a;
    for (double& v : a.head.weight.values()) v = 0.0;
    for (double& v : b.head.weight.values()) v = 1.0;
    const auto mix = aggregate(std::vector<ModelParams>{a, b}, {30, 70});
    double worst_3070 = std::abs(k[0] - 0.3) + std::abs(k[1] - 0.7);
    for (double v : mix.head.weight.values()) worst_3070 = std::max(worst_3070, std::abs(v - 0.7));
    return {worst <= kAggregationTol && worst_k <= kAggregationTol && worst_3070 <= kAggregationTol,
            "max entry err " + fmt("%.1e", worst) + ", |sum k - 1| " + fmt("%.1e", worst_k) + ", (30,70) err " +
                fmt("%.1e", worst_3070)};
}

std::map<Method, double> ordering_results;

Outcome table_ordering() {
    auto spec = [](Seed s) { return dirichlet_spec(s); };
    for (Method m : {Method::fedah, Method::fedrep, Method::fedavg}) ordering_results[m] = mean_best(m, spec, JoinRatio::fixed(1.0));
    const double ah = ordering_results[Method::fedah], rep = ordering_results[Method::fedrep],
                 avg = ordering_results[Method::fedavg];
    return {ah >= rep && rep >= avg + kFedRepOverFedAvg,
            "FedAH " + fmt("%.4f", ah) + ", FedRep " + fmt("%.4f", rep) + ", FedAvg " + fmt("%.4f", avg)};
}

Outcome pathological_gap() {
    const double ah = mean_best(Method::fedah, pathological_spec, JoinRatio::fixed(1.0));
    const double avg = mean_best(Method::fedavg, pathological_spec, JoinRatio::fixed(1.0));
    return {ah >= avg + kPathologicalGap, "FedAH " + fmt("%.4f", ah) + ", FedAvg " + fmt("%.4f", avg) + ", gap " + fmt("%.4f", ah - avg)};
}

Outcome dropout_stability() {
    auto spec = [](Seed s) { return dirichlet_spec(s); };
    const JoinRatio range = JoinRatio::range(0.1, 1.0);
    const double ah_full = ordering_results.count(Method::fedah) ? ordering_results[Method::fedah]
                                                                  : mean_best(Method::fedah, spec, JoinRatio::fixed(1.0));
    const double ah = mean_best(Method::fedah, spec, range);
    const double rep = mean_best(Method::fedrep, spec, range);
    return {ah_full - ah <= kDropoutDegradation && ah >= rep,
            "FedAH rho=1 " + fmt("%.4f", ah_full) + ", rho in [0.1,1] " + fmt("%.4f", ah) + " (drop " +
                fmt("%.4f", ah_full - ah) + "), FedRep " + fmt("%.4f", rep)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

int run_command(const std::string& cmd) {
    const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome byte_identical_outputs() {
    const fs::path root = fs::temp_directory_path() / ("fedah_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path config = root / "run.ini";
    std::ofstream(config) << "[dataset]\nper_class = 40\n[partition]\nn_clients = 6\n[round]\ntotal_rounds = 5\n"
                             "join_ratio_range = 0.3, 1\n[experiment]\nmethods = fedavg, fedper, fedrep, fedah\n"
                             "seeds = 1, 2\njobs = 2\n";
    const std::string cli = FEDAH_CLI_PATH;
    const int rc_a = run_command(cli + " run " + config.string() + " --output-dir " + (root / "a").string());
    const int rc_b = run_command(cli + " run " + config.string() + " --output-dir " + (root / "b").string());
    std::size_t compared = 0, differing = 0;
    if (rc_a == 0 && rc_b == 0) {
        for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
            if (!entry.is_regular_file()) continue;
            const auto twin = root / "b" / fs::relative(entry.path(), root / "a");
            ++compared;
            if (!fs::exists(twin) || slurp(entry.path()) != slurp(twin)) ++differing;
        }
    }
    fs::remove_all(root);
    return {rc_a == 0 && rc_b == 0 && compared == 4 * 2 * 2 + 2 && differing == 0,
            "two CLI executions, " + std::to_string(compared) + " files compared, " + std::to_string(differing) + " differ"};
}

Outcome communication_accounting() {
    // 32 -> 64 -> 32 -> 10, counted by hand.
    const std::size_t extractor = (kDim * 64 + 64) + (64 * 32 + 32);
    const std::size_t sigma = extractor + (32 * kClasses + kClasses);
    std::size_t rounds_checked = 0, mismatches = 0;
    for (Method m : {Method::fedavg, Method::fedper, Method::fedrep, Method::fedah}) {
        RoundConfig cfg = round_config(3, JoinRatio::range(0.1, 1.0));
        cfg.total_rounds = 6;
        const auto log = run_experiment(cfg, dataset_for(3), dirichlet_spec(3), kHidden, m);
        const std::size_t per = (m == Method::fedavg || m == Method::fedah) ? sigma : extractor;
        std::size_t cumulative = 0;
        for (const auto& r : log.rounds) {
            cumulative += 2 * per * r.sampled.size();
            ++rounds_checked;
            if (r.params_transmitted != 2 * per * r.sampled.size() || r.params_transmitted_cumulative != cumulative) ++mismatches;
        }
    }
    return {mismatches == 0 && rounds_checked == 24,
            "Sigma " + std::to_string(sigma) + ", alpha*Sigma " + std::to_string(extractor) + ", " +
                std::to_string(rounds_checked) + " rounds checked, " + std::to_string(mismatches) + " mismatches"};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget;  // seconds; 0 means no runtime bound
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient oracles", kBudgetGradients, gradient_oracles},
        {2, "degenerate equivalence with FedRep", kBudgetEquivalence, degenerate_equivalence},
        {3, "head interpolation and clipping invariants", kBudgetInvariants, interpolation_invariants},
        {4, "aggregation correctness", 0.0, aggregation_correctness},
        {5, "ordering FedAH >= FedRep >= FedAvg + 0.05", kBudgetOrdering, table_ordering},
        {6, "pathological gap FedAH >= FedAvg + 0.10", 0.0, pathological_gap},
        {7, "dropout stability", 0.0, dropout_stability},
        {8, "byte-identical outputs", 0.0, byte_identical_outputs},
        {9, "communication accounting", 0.0, communication_accounting},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = seconds_since(t0);
        bool pass = o.pass;
        std::string detail = o.detail;
        if (c.budget > 0.0 && secs > c.budget) {
            pass = false;
            detail += "; over time budget " + fmt("%.0f s", c.budget);
        }
        std::printf("%s criterion %d: %s: %s [%.2f s]\n", pass ? "PASS" : "FAIL", c.id, c.name, detail.c_str(), secs);
        std::fflush(stdout);
        failures += pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
