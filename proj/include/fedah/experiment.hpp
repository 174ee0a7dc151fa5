#pragma once

// Declarative experiment configuration (INI), multi-run driver and the CSV /
// SVG writers used by the command-line tool.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fedah/data.hpp"
#include "fedah/error.hpp"
#include "fedah/federation.hpp"
#include "fedah/strategies.hpp"

namespace fedah {

enum class DatasetSource { synthetic, idx };

struct DatasetConfig {
    DatasetSource source = DatasetSource::synthetic;
    std::size_t n_classes = 10;
    std::size_t dim = 32;
    std::size_t per_class = 200;
    double separation = 2.5;
    std::optional<Seed> seed;  // unset: the run's master seed
    std::filesystem::path images;
    std::filesystem::path labels;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    PartitionSpec partition;
    bool partition_seed_set = false;  // otherwise the run's master seed
    double test_fraction = 0.25;
    std::vector<std::size_t> hidden_dims{64, 32};
    RoundConfig round;
    std::vector<Method> methods{Method::fedavg, Method::fedrep, Method::fedah};
    std::vector<Seed> seeds{1, 2, 3, 4, 5};
    std::filesystem::path output_dir = "results";
    bool plot = true;
    std::size_t jobs = 1;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T>
T parse_value(const std::string& key, const std::string& raw) {
    const std::string text = trim(raw);
    std::istringstream in(text);
    T value{};
    in >> value;
    if (text.empty() || in.fail() || !(in >> std::ws).eof()) throw_config("bad value for '" + key + "': '" + raw + "'");
    if constexpr (std::is_unsigned_v<T>) {
        if (text.front() == '-') throw_config("'" + key + "' must be non-negative");
    }
    return value;
}

template <>
inline bool parse_value<bool>(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw_config("bad boolean for '" + key + "': '" + raw + "'");
}

/// Typed access to one INI section that remembers which keys were read so
/// leftovers can be reported as unknown.
class Section {
public:
    Section(const boost::property_tree::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

    template <class T>
    void get(const std::string& key, T& out) {
        if (auto raw = find(key)) out = parse_value<T>(qualified(key), *raw);
    }

    template <class T>
    void get(const std::string& key, std::optional<T>& out) {
        if (auto raw = find(key)) out = parse_value<T>(qualified(key), *raw);
    }

    std::optional<std::string> find(const std::string& key) {
        used_.insert(key);
        if (!tree_) return std::nullopt;
        auto it = tree_->find(key);
        if (it == tree_->not_found()) return std::nullopt;
        return it->second.data();
    }

    void reject_unknown() const {
        if (!tree_) return;
        for (const auto& [key, _] : *tree_) {
            if (!used_.count(key)) throw_config("unknown key '" + qualified(key) + "'");
        }
    }

private:
    std::string qualified(const std::string& key) const { return name_ + "." + key; }

    const boost::property_tree::ptree* tree_;
    std::string name_;
    std::set<std::string> used_;
};

}  // namespace detail

/// Parses INI text. Sections: dataset, partition, model, round, experiment.
/// Every key is optional; unknown sections or keys are errors.
inline ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>") {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw_config(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    for (const auto& [name, body] : tree) {
        static const std::set<std::string> known{"dataset", "partition", "model", "round", "experiment"};
        if (!known.count(name)) throw_config(origin + ": unknown section [" + name + "]");
        if (!body.data().empty()) throw_config(origin + ": key '" + name + "' outside any section");
    }
    auto section = [&tree](const std::string& name) {
        auto it = tree.find(name);
        return detail::Section(it == tree.not_found() ? nullptr : &it->second, name);
    };

    ExperimentConfig cfg;
    try {
        auto ds = section("dataset");
        if (auto src = ds.find("source")) {
            const auto v = detail::trim(*src);
            if (v == "synthetic") cfg.dataset.source = DatasetSource::synthetic;
            else if (v == "idx") cfg.dataset.source = DatasetSource::idx;
            else throw_config("dataset.source must be 'synthetic' or 'idx'");
        }
        ds.get("n_classes", cfg.dataset.n_classes);
        ds.get("dim", cfg.dataset.dim);
        ds.get("per_class", cfg.dataset.per_class);
        ds.get("separation", cfg.dataset.separation);
        ds.get("seed", cfg.dataset.seed);
        if (auto p = ds.find("images")) cfg.dataset.images = detail::trim(*p);
        if (auto p = ds.find("labels")) cfg.dataset.labels = detail::trim(*p);
        ds.reject_unknown();

        auto part = section("partition");
        if (auto mode = part.find("mode")) {
            const auto v = detail::trim(*mode);
            if (v == "dirichlet") cfg.partition.mode = PartitionMode::dirichlet;
            else if (v == "pathological") cfg.partition.mode = PartitionMode::pathological;
            else throw_config("partition.mode must be 'dirichlet' or 'pathological'");
        }
        part.get("n_clients", cfg.partition.n_clients);
        part.get("beta", cfg.partition.beta);
        part.get("classes_per_client", cfg.partition.classes_per_client);
        part.get("min_samples_per_client", cfg.partition.min_samples_per_client);
        part.get("max_retries", cfg.partition.max_retries);
        part.get("test_fraction", cfg.test_fraction);
        std::optional<Seed> pseed;
        part.get("seed", pseed);
        if (pseed) {
            cfg.partition.seed = *pseed;
            cfg.partition_seed_set = true;
        }
        part.reject_unknown();

        auto model = section("model");
        if (auto hidden = model.find("hidden")) {
            cfg.hidden_dims.clear();
            for (const auto& item : detail::split_list(*hidden)) {
                cfg.hidden_dims.push_back(detail::parse_value<std::size_t>("model.hidden", item));
            }
        }
        model.reject_unknown();

        auto rnd = section("round");
        rnd.get("total_rounds", cfg.round.total_rounds);
        std::optional<double> ratio;
        rnd.get("join_ratio", ratio);
        if (ratio) cfg.round.join_ratio = JoinRatio::fixed(*ratio);
        if (auto range = rnd.find("join_ratio_range")) {
            if (ratio) throw_config("round.join_ratio and round.join_ratio_range are mutually exclusive");
            const auto parts = detail::split_list(*range);
            if (parts.size() != 2) throw_config("round.join_ratio_range needs two values: lo, hi");
            cfg.round.join_ratio = JoinRatio::range(detail::parse_value<double>("round.join_ratio_range", parts[0]),
                                                    detail::parse_value<double>("round.join_ratio_range", parts[1]));
        }
        rnd.get("local_epochs", cfg.round.local_epochs);
        rnd.get("batch_size", cfg.round.batch_size);
        rnd.get("local_lr", cfg.round.local_lr);
        rnd.get("weight_lr", cfg.round.weight_lr);
        rnd.get("eval_every", cfg.round.eval_every);
        rnd.get("early_stop_patience", cfg.round.early_stop_patience);
        rnd.get("initial_agg_weight", cfg.round.initial_agg_weight);
        rnd.get("workers", cfg.round.workers);
        rnd.reject_unknown();

        auto exp = section("experiment");
        if (auto methods = exp.find("methods")) {
            cfg.methods.clear();
            for (const auto& m : detail::split_list(*methods)) cfg.methods.push_back(parse_method(m));
        }
        if (auto seeds = exp.find("seeds")) {
            cfg.seeds.clear();
            for (const auto& s : detail::split_list(*seeds)) cfg.seeds.push_back(detail::parse_value<Seed>("experiment.seeds", s));
        }
        if (auto out = exp.find("output_dir")) cfg.output_dir = detail::trim(*out);
        exp.get("plot", cfg.plot);
        exp.get("jobs", cfg.jobs);
        exp.reject_unknown();
    } catch (const Error& e) {
        throw e.with_context(origin);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw_config("cannot open config file " + path.string());
    return parse_config(in, path.string());
}

/// Sorts and de-duplicates methods and seeds so output order is canonical.
inline void normalize(ExperimentConfig& cfg) {
    std::sort(cfg.methods.begin(), cfg.methods.end(),
              [](Method a, Method b) { return std::string_view(to_string(a)) < std::string_view(to_string(b)); });
    cfg.methods.erase(std::unique(cfg.methods.begin(), cfg.methods.end()), cfg.methods.end());
    std::sort(cfg.seeds.begin(), cfg.seeds.end());
    cfg.seeds.erase(std::unique(cfg.seeds.begin(), cfg.seeds.end()), cfg.seeds.end());
}

/// Checks everything that can be checked without touching data or output.
inline void validate(const ExperimentConfig& cfg) {
    if (cfg.methods.empty()) throw_config("at least one method is required");
    if (cfg.seeds.empty()) throw_config("at least one seed is required");
    if (cfg.jobs < 1) throw_config("experiment.jobs must be >= 1");
    if (cfg.output_dir.empty()) throw_config("experiment.output_dir must not be empty");
    if (cfg.hidden_dims.empty()) throw_config("model.hidden needs at least one layer width");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) throw_config("partition.test_fraction must be in (0, 1)");
    cfg.round.validate();
    if (cfg.dataset.source == DatasetSource::idx) {
        for (const auto& p : {cfg.dataset.images, cfg.dataset.labels}) {
            if (p.empty()) throw_config("dataset.images and dataset.labels are required for source = idx");
            if (!std::filesystem::is_regular_file(p)) throw_config("IDX file not found: " + p.string());
        }
    }
}

inline LabeledDataset load_dataset(const DatasetConfig& cfg, Seed run_seed) {
    if (cfg.source == DatasetSource::idx) return load_idx(cfg.images, cfg.labels);
    return generate_synthetic(cfg.n_classes, cfg.dim, cfg.per_class, cfg.separation, cfg.seed.value_or(run_seed));
}

inline PartitionSpec partition_for(const ExperimentConfig& cfg, Seed run_seed) {
    PartitionSpec spec = cfg.partition;
    if (!cfg.partition_seed_set) spec.seed = run_seed;
    return spec;
}

struct RunResult {
    Method method;
    Seed seed;
    MetricsLog log;
};

/// Everything one (method, seed) run needs, resolved up front.
struct PreparedRun {
    Method method;
    Seed seed;
    RoundConfig round;
    std::vector<ClientSplit> clients;
    std::vector<std::size_t> extractor_dims;
    std::size_t n_classes;
};

inline std::vector<std::size_t> extractor_dims_for(const ExperimentConfig& cfg, std::size_t input_dim) {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    return dims;
}

/// Loads data and partitions it for every run. Data and partition depend
/// only on the seed, so each seed is prepared once and shared across
/// methods. Errors here are configuration errors.
inline std::vector<PreparedRun> prepare_runs(const ExperimentConfig& cfg) {
    std::vector<PreparedRun> runs;
    std::optional<LabeledDataset> idx_cache;
    for (Seed seed : cfg.seeds) {
        LabeledDataset ds;
        if (cfg.dataset.source == DatasetSource::idx) {
            if (!idx_cache) idx_cache = load_dataset(cfg.dataset, seed);
            ds = *idx_cache;
        } else {
            ds = load_dataset(cfg.dataset, seed);
        }
        auto clients = prepare_clients(ds, partition_for(cfg, seed), cfg.test_fraction);
        for (Method m : cfg.methods) {
            RoundConfig round = cfg.round;
            round.master_seed = seed;
            runs.push_back({m, seed, round, clients, extractor_dims_for(cfg, ds.dim()), ds.n_classes});
        }
    }
    return runs;
}

/// Runs every prepared run, up to `jobs` at a time. Results come back in
/// the order of `runs`, independent of scheduling.
inline std::vector<RunResult> execute_runs(std::vector<PreparedRun> runs, std::size_t jobs) {
    std::vector<RunResult> results(runs.size());
    detail::parallel_for(runs.size(), jobs, [&](std::size_t i) {
        auto& r = runs[i];
        results[i] = {r.method, r.seed,
                      run_experiment(r.round, std::move(r.clients), r.extractor_dims, r.n_classes, r.method)};
    });
    return results;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_real(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.8f", v);
    return buf;
}

}  // namespace detail

struct SummaryRow {
    Method method;
    std::size_t n_seeds;
    double mean;
    double std;  // sample standard deviation (n - 1); 0 for a single seed
};

inline std::vector<SummaryRow> summarize(const std::vector<RunResult>& results, const std::vector<Method>& methods) {
    std::vector<SummaryRow> rows;
    for (Method m : methods) {
        std::vector<double> best;
        for (const auto& r : results) {
            if (r.method == m) best.push_back(r.log.best_mean_accuracy);
        }
        if (best.empty()) continue;
        double mean = 0.0;
        for (double b : best) mean += b;
        mean /= static_cast<double>(best.size());
        double var = 0.0;
        for (double b : best) var += (b - mean) * (b - mean);
        const double sd = best.size() > 1 ? std::sqrt(var / static_cast<double>(best.size() - 1)) : 0.0;
        rows.push_back({m, best.size(), mean, sd});
    }
    return rows;
}

inline void write_rounds_csv(std::ostream& out, const RunResult& r) {
    out << "round,method,seed,mean_accuracy,mean_train_loss,n_sampled,params_transmitted_cumulative\n";
    for (const auto& rec : r.log.rounds) {
        out << rec.round << ',' << to_string(r.method) << ',' << r.seed << ',' << detail::fmt_real(rec.mean_accuracy) << ','
            << detail::fmt_real(rec.mean_train_loss) << ',' << rec.sampled.size() << ','
            << rec.params_transmitted_cumulative << '\n';
    }
}

inline void write_clients_csv(std::ostream& out, const RunResult& r) {
    out << "round,client_id,test_accuracy\n";
    for (const auto& rec : r.log.rounds) {
        if (!rec.evaluated) continue;
        for (std::size_t i = 0; i < rec.client_accuracy.size(); ++i) {
            out << rec.round << ',' << i << ',' << detail::fmt_real(rec.client_accuracy[i]) << '\n';
        }
    }
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << "method,n_seeds,best_mean_accuracy_mean,best_mean_accuracy_std\n";
    for (const auto& row : rows) {
        out << to_string(row.method) << ',' << row.n_seeds << ',' << detail::fmt_real(row.mean) << ','
            << detail::fmt_real(row.std) << '\n';
    }
}

/// Mean accuracy against round, one polyline per method, averaged over
/// seeds at each evaluated round.
inline void write_curves_svg(std::ostream& out, const std::vector<RunResult>& results, const std::vector<Method>& methods) {
    constexpr double width = 720, height = 420, left = 60, right = 140, top = 20, bottom = 50;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

    std::size_t max_round = 1;
    for (const auto& r : results) {
        if (!r.log.rounds.empty()) max_round = std::max(max_round, r.log.rounds.back().round);
    }
    auto x_of = [&](double round) { return left + plot_w * round / static_cast<double>(max_round); };
    auto y_of = [&](double acc) { return top + plot_h * (1.0 - acc); };

    char buf[128];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\"" << top + plot_h
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 10; i += 2) {
        const double acc = i / 10.0;
        std::snprintf(buf, sizeof buf, "%.1f", acc);
        out << "<text x=\"" << left - 8 << "\" y=\"" << y_of(acc) + 4 << "\" text-anchor=\"end\">" << buf << "</text>\n";
    }
    out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">round</text>\n";
    out << "<text x=\"" << left + plot_w << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"end\">" << max_round
        << "</text>\n";
    out << "<text x=\"14\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 14 " << top + plot_h / 2
        << ")\" text-anchor=\"middle\">mean test accuracy</text>\n";

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        std::map<std::size_t, std::pair<double, std::size_t>> by_round;
        for (const auto& r : results) {
            if (r.method != methods[mi]) continue;
            for (const auto& rec : r.log.rounds) {
                if (!rec.evaluated) continue;
                auto& [sum, n] = by_round[rec.round];
                sum += rec.mean_accuracy;
                ++n;
            }
        }
        const char* color = colors[mi % 4];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [round, acc] : by_round) {
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x_of(static_cast<double>(round)),
                          y_of(acc.first / static_cast<double>(acc.second)));
            out << buf;
        }
        out << "\"/>\n";
        const double ly = top + 16.0 * static_cast<double>(mi + 1);
        out << "<line x1=\"" << left + plot_w + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 32 << "\" y2=\""
            << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << left + plot_w + 38 << "\" y=\"" << ly + 4 << "\">" << to_string(methods[mi]) << "</text>\n";
    }
    out << "</svg>\n";
}

inline std::filesystem::path run_dir(const std::filesystem::path& output_dir, Method m, Seed seed) {
    return output_dir / "runs" / to_string(m) / ("seed_" + std::to_string(seed));
}

/// Writes all output files and returns the paths written. On failure every
/// file written so far is removed before the error propagates.
inline std::vector<std::filesystem::path> write_outputs(const ExperimentConfig& cfg, const std::vector<RunResult>& results) {
    namespace fs = std::filesystem;
    std::vector<fs::path> written;
    auto emit = [&written](const fs::path& p, auto&& writer) {
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::runtime, "cannot write " + p.string());
        written.push_back(p);
        writer(out);
        out.flush();
        if (!out) throw Error(ErrorKind::runtime, "write failed for " + p.string());
    };
    try {
        for (const auto& r : results) {
            const auto dir = run_dir(cfg.output_dir, r.method, r.seed);
            emit(dir / "rounds.csv", [&](std::ostream& o) { write_rounds_csv(o, r); });
            emit(dir / "clients.csv", [&](std::ostream& o) { write_clients_csv(o, r); });
        }
        emit(cfg.output_dir / "summary.csv",
             [&](std::ostream& o) { write_summary_csv(o, summarize(results, cfg.methods)); });
        if (cfg.plot) {
            emit(cfg.output_dir / "curves.svg", [&](std::ostream& o) { write_curves_svg(o, results, cfg.methods); });
        }
    } catch (...) {
        std::error_code ec;
        for (const auto& p : written) fs::remove(p, ec);
        throw;
    }
    return written;
}

// ---------------------------------------------------------------------------
// describe
// ---------------------------------------------------------------------------

/// Prints the resolved configuration, the per-client sample counts of the
/// first seed's partition and the model's parameter counts.
inline void describe(const ExperimentConfig& cfg, std::ostream& out) {
    const Seed seed = cfg.seeds.front();
    const LabeledDataset ds = load_dataset(cfg.dataset, seed);
    const PartitionSpec spec = partition_for(cfg, seed);
    const auto clients = prepare_clients(ds, spec, cfg.test_fraction);
    const auto dims = extractor_dims_for(cfg, ds.dim());
    const ModelParams model = init_model(dims, ds.n_classes, 0);

    out << "[dataset]\n";
    if (cfg.dataset.source == DatasetSource::idx) {
        out << "source = idx\nimages = " << cfg.dataset.images.string() << "\nlabels = " << cfg.dataset.labels.string() << '\n';
    } else {
        out << "source = synthetic\nn_classes = " << cfg.dataset.n_classes << "\ndim = " << cfg.dataset.dim
            << "\nper_class = " << cfg.dataset.per_class << "\nseparation = " << cfg.dataset.separation
            << "\nseed = " << cfg.dataset.seed.value_or(seed) << '\n';
    }
    out << "samples = " << ds.size() << "\nfeatures = " << ds.dim() << "\nclasses = " << ds.n_classes << "\n\n";

    out << "[partition]\nmode = " << to_string(spec.mode) << "\nn_clients = " << spec.n_clients << '\n';
    if (spec.mode == PartitionMode::dirichlet) out << "beta = " << spec.beta << '\n';
    else out << "classes_per_client = " << spec.classes_per_client << '\n';
    out << "min_samples_per_client = " << spec.min_samples_per_client << "\ntest_fraction = " << cfg.test_fraction
        << "\nseed = " << spec.seed << "\n\n";

    out << "[round]\ntotal_rounds = " << cfg.round.total_rounds << '\n';
    if (cfg.round.join_ratio.is_range()) {
        out << "join_ratio_range = " << cfg.round.join_ratio.lo << ", " << cfg.round.join_ratio.hi << '\n';
    } else {
        out << "join_ratio = " << cfg.round.join_ratio.lo << '\n';
    }
    out << "local_epochs = " << cfg.round.local_epochs << "\nbatch_size = " << cfg.round.batch_size
        << "\nlocal_lr = " << cfg.round.local_lr << "\nweight_lr = " << cfg.round.effective_weight_lr()
        << "\neval_every = " << cfg.round.eval_every << "\nearly_stop_patience = "
        << (cfg.round.early_stop_patience ? std::to_string(*cfg.round.early_stop_patience) : "off")
        << "\ninitial_agg_weight = " << cfg.round.initial_agg_weight << "\n\n";

    out << "[experiment]\nmethods =";
    for (std::size_t i = 0; i < cfg.methods.size(); ++i) out << (i ? ", " : " ") << to_string(cfg.methods[i]);
    out << "\nseeds =";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? ", " : " ") << cfg.seeds[i];
    out << "\noutput_dir = " << cfg.output_dir.string() << "\n\n";

    out << "[model]\nlayers =";
    for (std::size_t d : dims) out << ' ' << d << " ->";
    out << ' ' << ds.n_classes << '\n';
    const std::size_t total = model.param_count();
    const std::size_t extractor = model.extractor_param_count();
    char alpha[32];
    std::snprintf(alpha, sizeof alpha, "%.6f", static_cast<double>(extractor) / static_cast<double>(total));
    out << "total_params = " << total << "\nextractor_params = " << extractor << "\nhead_params = "
        << model.head_param_count() << "\nextractor_fraction = " << alpha << "\n\n";

    out << "[clients]\nclient_id,train,test,total\n";
    std::size_t sum = 0;
    for (const auto& c : clients) {
        const std::size_t n = c.train.size() + c.test.size();
        sum += n;
        out << c.client_id << ',' << c.train.size() << ',' << c.test.size() << ',' << n << '\n';
    }
    out << "assigned_total = " << sum << " of " << ds.size() << '\n';
}

}  // namespace fedah
