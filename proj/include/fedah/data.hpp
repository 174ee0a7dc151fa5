#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fedah/error.hpp"
#include "fedah/matrix.hpp"
#include "fedah/nn.hpp"
#include "fedah/random.hpp"

namespace fedah {

/// Feature rows with class labels. `sample_ids` records each row's index in
/// the dataset it was originally generated or loaded as, so subsets taken by
/// partitioning and splitting can be checked for overlap.
struct LabeledDataset {
    Matrix features;                      // n x D
    std::vector<std::size_t> labels;      // n
    std::size_t n_classes = 0;
    std::vector<std::size_t> sample_ids;  // n

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }

    /// Rows at `rows`, in that order.
    LabeledDataset subset(std::span<const std::size_t> rows) const {
        LabeledDataset out;
        out.n_classes = n_classes;
        out.features = Matrix(rows.size(), dim());
        out.labels.reserve(rows.size());
        out.sample_ids.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto src = features.row(rows[i]);
            std::copy(src.begin(), src.end(), out.features.row(i).begin());
            out.labels.push_back(labels[rows[i]]);
            out.sample_ids.push_back(sample_ids[rows[i]]);
        }
        return out;
    }

    Batch as_batch() const { return Batch{features, labels}; }
};

inline std::vector<std::size_t> class_counts(const LabeledDataset& ds) {
    std::vector<std::size_t> counts(ds.n_classes, 0);
    for (std::size_t y : ds.labels) ++counts[y];
    return counts;
}

struct ClientSplit {
    std::size_t client_id = 0;
    LabeledDataset train;
    LabeledDataset test;
};

enum class PartitionMode { pathological, dirichlet };

inline const char* to_string(PartitionMode mode) {
    return mode == PartitionMode::pathological ? "pathological" : "dirichlet";
}

struct PartitionSpec {
    PartitionMode mode = PartitionMode::dirichlet;
    std::size_t n_clients = 20;
    std::size_t classes_per_client = 2;  // pathological only
    double beta = 0.1;                   // dirichlet only
    std::size_t min_samples_per_client = 8;
    std::size_t max_retries = 100;
    Seed seed = 0;
};

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Isotropic Gaussian blobs. Class c is centred at separation * u_c where u_c
/// is a seeded random unit vector; each sample adds N(0, I) noise. Rows are
/// ordered class by class.
inline LabeledDataset generate_synthetic(std::size_t n_classes, std::size_t dim, std::size_t per_class,
                                         double separation, Seed seed) {
    if (n_classes < 2) throw_config("synthetic data needs n_classes >= 2");
    if (dim < 1) throw_config("synthetic data needs dim >= 1");
    if (per_class < 1) throw_config("synthetic data needs per_class >= 1");
    if (!(separation > 0.0) || !std::isfinite(separation)) throw_config("synthetic separation must be > 0");

    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix centers(n_classes, dim);
    for (std::size_t c = 0; c < n_classes; ++c) {
        auto row = centers.row(c);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& v : row) {
                v = normal(rng);
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (double& v : row) v = v / norm * separation;
    }

    LabeledDataset ds;
    ds.n_classes = n_classes;
    ds.features = Matrix(n_classes * per_class, dim);
    ds.labels.reserve(n_classes * per_class);
    std::size_t r = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i, ++r) {
            auto row = ds.features.row(r);
            auto center = centers.row(c);
            for (std::size_t j = 0; j < dim; ++j) row[j] = center[j] + normal(rng);
            ds.labels.push_back(c);
        }
    }
    ds.sample_ids.resize(ds.labels.size());
    std::iota(ds.sample_ids.begin(), ds.sample_ids.end(), std::size_t{0});
    return ds;
}

// ---------------------------------------------------------------------------
// IDX files (MNIST layout)
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_format(path.string() + ": cannot open file");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                               const std::filesystem::path& path) {
    if (offset + 4 > bytes.size()) throw_format(path.string() + ": truncated header");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Loads an IDX image/label pair. Pixels are scaled by 1/255 and each image
/// is flattened row-major; n_classes is one past the largest label seen.
inline LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = detail::read_file(images_path);
    const auto lbl = detail::read_file(labels_path);

    const std::uint32_t img_magic = detail::read_be32(img, 0, images_path);
    if (img_magic != kIdxImageMagic) throw_format(images_path.string() + ": bad image magic");
    const std::uint32_t lbl_magic = detail::read_be32(lbl, 0, labels_path);
    if (lbl_magic != kIdxLabelMagic) throw_format(labels_path.string() + ": bad label magic");

    const std::size_t n = detail::read_be32(img, 4, images_path);
    const std::size_t rows = detail::read_be32(img, 8, images_path);
    const std::size_t cols = detail::read_be32(img, 12, images_path);
    const std::size_t n_labels = detail::read_be32(lbl, 4, labels_path);
    const std::size_t dim = rows * cols;

    if (n == 0 || dim == 0) throw_format(images_path.string() + ": empty image set");
    if (img.size() < 16 + n * dim) throw_format(images_path.string() + ": truncated pixel data");
    if (lbl.size() < 8 + n_labels) throw_format(labels_path.string() + ": truncated label data");
    if (n_labels != n) {
        throw_format(labels_path.string() + ": label count " + std::to_string(n_labels) +
                     " does not match image count " + std::to_string(n));
    }

    LabeledDataset ds;
    ds.features = Matrix(n, dim);
    auto values = ds.features.values();
    for (std::size_t i = 0; i < n * dim; ++i) values[i] = static_cast<double>(img[16 + i]) / 255.0;
    ds.labels.resize(n);
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = lbl[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.n_classes = std::max<std::size_t>(max_label + 1, 2);
    ds.sample_ids.resize(n);
    std::iota(ds.sample_ids.begin(), ds.sample_ids.end(), std::size_t{0});
    return ds;
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

namespace detail {

/// Dir(alpha) over `k` components via normalised Gamma(alpha, 1) draws.
inline std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> p(k);
    double sum = 0.0;
    for (double& v : p) sum += (v = gamma(rng));
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        // Every draw underflowed: all mass on one uniformly chosen component.
        std::fill(p.begin(), p.end(), 0.0);
        p[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
        return p;
    }
    for (double& v : p) v /= sum;
    return p;
}

/// Splits `total` items into counts proportional to `p` using cumulative
/// floor cut points; the counts sum to `total`.
inline std::vector<std::size_t> proportional_counts(std::size_t total, const std::vector<double>& p) {
    std::vector<std::size_t> counts(p.size(), 0);
    double cum = 0.0;
    std::size_t prev = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        cum += p[j];
        std::size_t cut = j + 1 == p.size() ? total
                                            : std::min(total, static_cast<std::size_t>(std::floor(cum * static_cast<double>(total))));
        cut = std::max(cut, prev);
        counts[j] = cut - prev;
        prev = cut;
    }
    return counts;
}

inline std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& ds) {
    std::vector<std::vector<std::size_t>> by_class(ds.n_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    return by_class;
}

inline std::vector<LabeledDataset> materialize(const LabeledDataset& ds,
                                               const std::vector<std::vector<std::size_t>>& rows) {
    std::vector<LabeledDataset> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(ds.subset(r));
    return out;
}

inline bool all_at_least(const std::vector<std::vector<std::size_t>>& rows, std::size_t min) {
    return std::all_of(rows.begin(), rows.end(), [min](const auto& r) { return r.size() >= min; });
}

inline void check_partition_common(const LabeledDataset& ds, const PartitionSpec& spec) {
    if (spec.n_clients < 1) throw_config("partition needs n_clients >= 1");
    if (ds.size() == 0) throw_config("cannot partition an empty dataset");
    if (spec.max_retries < 1) throw_config("partition max_retries must be >= 1");
}

}  // namespace detail

/// Class-to-client assignment: classes are shuffled, then dealt round-robin
/// so client i owns classes perm[(i * m + j) mod C] for j < m. A class owned
/// by several clients is divided among them with Dir(1) proportions, each
/// owner receiving at least one sample. Redrawn with a fresh sub-seed while
/// some client falls below min_samples_per_client.
inline std::vector<LabeledDataset> partition_pathological(const LabeledDataset& ds, const PartitionSpec& spec) {
    detail::check_partition_common(ds, spec);
    if (spec.mode != PartitionMode::pathological) throw_config("partition_pathological called with dirichlet spec");
    const std::size_t n_classes = ds.n_classes;
    const std::size_t per_client = spec.classes_per_client;
    if (per_client < 1 || per_client > n_classes) {
        throw_config("classes_per_client must be in [1, " + std::to_string(n_classes) + "]");
    }

    const auto by_class = detail::indices_by_class(ds);
    for (std::size_t attempt = 0; attempt < spec.max_retries; ++attempt) {
        Rng rng = make_rng(derive_seed(spec.seed, {attempt}));

        std::vector<std::size_t> perm(n_classes);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);

        std::vector<std::vector<std::size_t>> owners(n_classes);
        for (std::size_t i = 0; i < spec.n_clients; ++i) {
            for (std::size_t j = 0; j < per_client; ++j) owners[perm[(i * per_client + j) % n_classes]].push_back(i);
        }

        std::vector<std::vector<std::size_t>> rows(spec.n_clients);
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (owners[c].empty()) continue;
            std::vector<std::size_t> pool = by_class[c];
            if (pool.size() < owners[c].size()) {
                throw_config("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                             " samples but " + std::to_string(owners[c].size()) + " owning clients");
            }
            std::shuffle(pool.begin(), pool.end(), rng);
            const auto shares = detail::sample_dirichlet(owners[c].size(), 1.0, rng);
            auto counts = detail::proportional_counts(pool.size() - owners[c].size(), shares);
            std::size_t pos = 0;
            for (std::size_t k = 0; k < owners[c].size(); ++k) {
                auto& dst = rows[owners[c][k]];
                const std::size_t take = counts[k] + 1;
                dst.insert(dst.end(), pool.begin() + static_cast<std::ptrdiff_t>(pos),
                           pool.begin() + static_cast<std::ptrdiff_t>(pos + take));
                pos += take;
            }
        }
        if (detail::all_at_least(rows, spec.min_samples_per_client)) return detail::materialize(ds, rows);
    }
    throw_config("pathological partition: some client stayed below min_samples_per_client=" +
                 std::to_string(spec.min_samples_per_client) + " after " + std::to_string(spec.max_retries) +
                 " attempts; use fewer clients or a smaller minimum");
}

/// For each class, draws p ~ Dir(beta) over the clients and deals that
/// class's (shuffled) samples out in proportion to p. The whole partition is
/// redrawn with a fresh sub-seed while any client has fewer than
/// min_samples_per_client samples.
inline std::vector<LabeledDataset> partition_dirichlet(const LabeledDataset& ds, const PartitionSpec& spec) {
    detail::check_partition_common(ds, spec);
    if (spec.mode != PartitionMode::dirichlet) throw_config("partition_dirichlet called with pathological spec");
    if (!(spec.beta > 0.0) || !std::isfinite(spec.beta)) throw_config("dirichlet beta must be > 0");

    const auto by_class = detail::indices_by_class(ds);
    for (std::size_t attempt = 0; attempt < spec.max_retries; ++attempt) {
        Rng rng = make_rng(derive_seed(spec.seed, {attempt}));
        std::vector<std::vector<std::size_t>> rows(spec.n_clients);
        for (std::size_t c = 0; c < ds.n_classes; ++c) {
            std::vector<std::size_t> pool = by_class[c];
            std::shuffle(pool.begin(), pool.end(), rng);
            const auto p = detail::sample_dirichlet(spec.n_clients, spec.beta, rng);
            const auto counts = detail::proportional_counts(pool.size(), p);
            std::size_t pos = 0;
            for (std::size_t i = 0; i < spec.n_clients; ++i) {
                rows[i].insert(rows[i].end(), pool.begin() + static_cast<std::ptrdiff_t>(pos),
                               pool.begin() + static_cast<std::ptrdiff_t>(pos + counts[i]));
                pos += counts[i];
            }
        }
        if (detail::all_at_least(rows, spec.min_samples_per_client)) return detail::materialize(ds, rows);
    }
    throw_config("dirichlet partition: some client stayed below min_samples_per_client=" +
                 std::to_string(spec.min_samples_per_client) + " after " + std::to_string(spec.max_retries) +
                 " attempts; lower the minimum or increase beta");
}

inline std::vector<LabeledDataset> partition(const LabeledDataset& ds, const PartitionSpec& spec) {
    return spec.mode == PartitionMode::pathological ? partition_pathological(ds, spec)
                                                    : partition_dirichlet(ds, spec);
}

/// Seeded uniform shuffle, then the first round(test_fraction * n) rows
/// (clamped so both sides are non-empty) become the test set.
inline ClientSplit split_train_test(const LabeledDataset& client_data, double test_fraction, Seed seed,
                                    std::size_t client_id = 0) {
    const std::size_t n = client_data.size();
    if (n < 4) {
        throw_config("client " + std::to_string(client_id) + " has " + std::to_string(n) +
                     " samples; at least 4 are needed for a train/test split");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw_config("test_fraction must be in (0, 1)");

    std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    ClientSplit split;
    split.client_id = client_id;
    split.test = client_data.subset(std::span<const std::size_t>(order).first(n_test));
    split.train = client_data.subset(std::span<const std::size_t>(order).subspan(n_test));
    return split;
}

}  // namespace fedah
