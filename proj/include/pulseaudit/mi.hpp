#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pulseaudit/common.hpp"
#include "pulseaudit/kdtree.hpp"

namespace pulseaudit::mi {

/// Digamma for x > 0: upward recurrence to x >= 10, then the asymptotic series.
inline double digamma(double x) {
    require(x > 0.0, ErrorKind::InvalidArgument, "digamma needs x > 0");
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double series =
        inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132)))));
    return acc + std::log(x) - 0.5 * inv - series;
}

inline constexpr double kMaxDims = 32;

struct SampleMatrix {
    std::vector<std::vector<double>> columns;  // d columns of N values
    std::vector<double> target;
    std::vector<std::string> names;
    std::string target_name = "y";

    std::size_t rows() const { return target.size(); }
    std::size_t dims() const { return columns.size(); }

    /// Throws on structural problems; returns advisory warnings.
    std::vector<std::string> validate() const {
        require(!columns.empty(), ErrorKind::InvalidArgument, "no feature columns");
        require(static_cast<double>(columns.size()) <= kMaxDims, ErrorKind::InvalidArgument,
                "at most 32 feature dimensions; reduce dimensionality first");
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const std::string name = c < names.size() ? names[c] : "x" + std::to_string(c);
            require(columns[c].size() == target.size(), ErrorKind::LengthMismatch,
                    "column " + name + " length differs from target");
            require(all_finite(columns[c]), ErrorKind::InvalidArgument, "column " + name + " has non-finite values");
        }
        require(all_finite(target), ErrorKind::InvalidArgument, "target has non-finite values");
        std::vector<std::string> warnings;
        if (rows() < 10 * dims())
            warnings.push_back("N = " + std::to_string(rows()) + " is below 10 samples per dimension");
        return warnings;
    }
};

namespace detail {

inline std::uint64_t column_hash(std::span<const double> v) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double x : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof bits);
        h = splitmix64(h ^ bits);
    }
    return h;
}

inline constexpr std::uint64_t kJitterSeed = 0x5eed;
inline constexpr double kJitter = 1e-10;

// Standardized copy plus deterministic tie-breaking jitter; the jitter
// stream depends only on the column's contents, so roles can be swapped.
inline std::vector<double> prepare(std::span<const double> v, bool standardize) {
    std::vector<double> out = standardize ? znormalize(v) : std::vector<double>(v.begin(), v.end());
    Rng rng(derive_seed(kJitterSeed, column_hash(v)));
    for (double& x : out) x += kJitter * rng.uniform(-1.0, 1.0);
    return out;
}

inline double ksg_nats(const std::vector<std::vector<double>>& xs, const std::vector<double>& y, std::size_t k) {
    const std::size_t n = y.size();
    const std::size_t d = xs.size();
    std::vector<double> joint(n * (d + 1));
    std::vector<double> xonly(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) joint[i * (d + 1) + c] = xonly[i * d + c] = xs[c][i];
        joint[i * (d + 1) + d] = y[i];
    }
    const ChebyshevTree tj(joint, d + 1);
    const ChebyshevTree tx(xonly, d);
    const ChebyshevTree ty(y, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double eps = tj.kth_neighbor_distance(i, k);
        const auto nx = tx.count_within(i, eps);
        const auto ny = ty.count_within(i, eps);
        acc += digamma(static_cast<double>(nx) + 1.0) + digamma(static_cast<double>(ny) + 1.0);
    }
    return digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) - acc / static_cast<double>(n);
}

}  // namespace detail

struct MiEstimate {
    double mi_bits = 0.0;
    double raw_mi_bits = 0.0;  // before clamping at zero
    std::size_t k = 3;
    std::size_t n = 0;
    std::vector<std::string> warnings;
};

/// Kraskov-Stogbauer-Grassberger estimator (variant 1, max-norm) in bits.
inline MiEstimate ksg_mi(const SampleMatrix& m, std::size_t k = 3) {
    MiEstimate est;
    est.warnings = m.validate();
    est.k = k;
    est.n = m.rows();
    require(k >= 1 && m.rows() > k + 1, ErrorKind::InsufficientData,
            "KSG needs N > k + 1 (N = " + std::to_string(m.rows()) + ", k = " + std::to_string(k) + ")");
    require(pstdev(m.target) > 0.0, ErrorKind::ZeroEntropy, "target '" + m.target_name + "' is constant");
    std::vector<std::vector<double>> xs;
    for (const auto& c : m.columns) xs.push_back(detail::prepare(c, true));
    const auto y = detail::prepare(m.target, true);
    est.raw_mi_bits = detail::ksg_nats(xs, y, k) / std::numbers::ln2;
    est.mi_bits = std::max(0.0, est.raw_mi_bits);
    if (est.raw_mi_bits < 0.0) est.warnings.push_back("negative MI estimate clamped to 0");
    return est;
}

inline SampleMatrix single(std::span<const double> x, std::span<const double> y, std::string name = "x") {
    SampleMatrix m;
    m.columns.emplace_back(x.begin(), x.end());
    m.target.assign(y.begin(), y.end());
    m.names.push_back(std::move(name));
    return m;
}

// ---------------------------------------------------------------------------
// Target entropy

enum class EntropyMode { Histogram, KNN };

struct HistogramBins {
    std::optional<double> width;   // Freedman-Diaconis when absent
    std::optional<double> origin;  // minimum of the data when absent
};

struct EntropyEstimate {
    double bits = 0.0;
    EntropyMode mode = EntropyMode::Histogram;
    double bin_width = 0.0;  // histogram mode
    std::size_t occupied_bins = 0;
    bool negative = false;   // KNN mode may legitimately go below zero
    std::vector<std::string> warnings;
};

/// Freedman-Diaconis width 2 IQR N^(-1/3); Scott's rule when the IQR is zero.
inline double fd_width(std::span<const double> y) {
    const std::vector<double> v(y.begin(), y.end());
    const double iqr = quantile(v, 0.75) - quantile(v, 0.25);
    const double n13 = std::cbrt(static_cast<double>(y.size()));
    if (iqr > 0.0) return 2.0 * iqr / n13;
    return 3.49 * pstdev(y) / n13;
}

inline EntropyEstimate histogram_entropy(std::span<const double> y, const HistogramBins& bins = {}) {
    require(y.size() >= 100, ErrorKind::InsufficientData, "histogram entropy needs N >= 100");
    require(all_finite(y), ErrorKind::InvalidArgument, "target has non-finite values");
    require(pstdev(y) > 0.0, ErrorKind::ZeroEntropy, "constant target");
    EntropyEstimate e;
    e.mode = EntropyMode::Histogram;
    e.bin_width = bins.width ? *bins.width : fd_width(y);
    require(e.bin_width > 0.0, ErrorKind::InvalidArgument, "bin width must be positive");
    const double origin = bins.origin ? *bins.origin : *std::min_element(y.begin(), y.end());
    std::vector<std::int64_t> keys;
    keys.reserve(y.size());
    for (double v : y) keys.push_back(static_cast<std::int64_t>(std::floor((v - origin) / e.bin_width)));
    std::sort(keys.begin(), keys.end());
    const double n = static_cast<double>(y.size());
    double h = 0.0;
    for (std::size_t i = 0; i < keys.size();) {
        std::size_t j = i;
        while (j < keys.size() && keys[j] == keys[i]) ++j;
        const double p = static_cast<double>(j - i) / n;
        h -= p * std::log(p);
        ++e.occupied_bins;
        i = j;
    }
    h += static_cast<double>(e.occupied_bins - 1) / (2.0 * n);  // Miller-Madow
    e.bits = h / std::numbers::ln2;
    require(e.bits > 0.0, ErrorKind::ZeroEntropy, "all target values fall in one bin");
    return e;
}

/// Kozachenko-Leonenko differential entropy (max-norm, 1-D) in bits.
inline EntropyEstimate knn_entropy(std::span<const double> y, std::size_t k = 3) {
    require(k >= 1 && y.size() > k + 1, ErrorKind::InsufficientData, "KNN entropy needs N > k + 1");
    require(all_finite(y), ErrorKind::InvalidArgument, "target has non-finite values");
    require(pstdev(y) > 0.0, ErrorKind::ZeroEntropy, "constant target");
    const auto v = detail::prepare(y, false);
    const ChebyshevTree tree(v, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += std::log(2.0 * tree.kth_neighbor_distance(i, k));
    const double n = static_cast<double>(v.size());
    EntropyEstimate e;
    e.mode = EntropyMode::KNN;
    e.bits = (digamma(n) - digamma(static_cast<double>(k)) + acc / n) / std::numbers::ln2;
    e.negative = e.bits < 0.0;
    if (e.negative) e.warnings.push_back("differential entropy is negative; Info-Fraction is not meaningful");
    return e;
}

inline EntropyEstimate target_entropy(std::span<const double> y, EntropyMode mode, const HistogramBins& bins = {},
                                      std::size_t k = 3) {
    return mode == EntropyMode::Histogram ? histogram_entropy(y, bins) : knn_entropy(y, k);
}

inline double info_fraction(double mi_bits, double entropy_bits) {
    require(entropy_bits > 0.0, ErrorKind::ZeroEntropy, "Info-Fraction undefined for non-positive entropy");
    return mi_bits / entropy_bits;
}

inline constexpr double kEntropyTolerance = 0.1;

/// MI, entropy and their ratio, flagging MI above entropy + tolerance.
struct InfoReport {
    MiEstimate mi;
    EntropyEstimate entropy;
    double info_fraction = 0.0;
    bool exceeds_entropy = false;
};

inline InfoReport info_report(const SampleMatrix& m, std::size_t k, EntropyMode mode, const HistogramBins& bins = {}) {
    InfoReport r;
    r.entropy = target_entropy(m.target, mode, bins, k);
    r.mi = ksg_mi(m, k);
    r.info_fraction = info_fraction(r.mi.mi_bits, r.entropy.bits);
    r.exceeds_entropy = r.mi.mi_bits > r.entropy.bits + kEntropyTolerance;
    if (r.exceeds_entropy) r.mi.warnings.push_back("MI exceeds target entropy beyond tolerance");
    return r;
}

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapPoint {
    double fraction = 0.0;
    std::size_t sample_size = 0;
    std::vector<double> runs;
    double mean = 0.0;
    double std = 0.0;  // population
};

/// For each fraction, `runs` uniform subsamples without replacement (seeded
/// per fraction and run); fraction 1 uses the full data every run.
inline std::vector<BootstrapPoint> bootstrap_mi(const SampleMatrix& m, std::span<const double> fractions,
                                                std::size_t runs, std::uint64_t seed, std::size_t k = 3,
                                                unsigned threads = 1) {
    m.validate();
    require(runs >= 1, ErrorKind::InvalidArgument, "need at least one run");
    require(!fractions.empty(), ErrorKind::InvalidArgument, "no fractions");
    for (std::size_t f = 0; f < fractions.size(); ++f) {
        require(fractions[f] > 0.0 && fractions[f] <= 1.0, ErrorKind::InvalidArgument, "fractions must lie in (0, 1]");
        if (f > 0)
            require(fractions[f] > fractions[f - 1], ErrorKind::InvalidArgument, "fractions must be ascending");
    }
    const std::size_t n = m.rows();
    std::vector<BootstrapPoint> out(fractions.size());
    for (std::size_t f = 0; f < fractions.size(); ++f) {
        out[f].fraction = fractions[f];
        out[f].sample_size = static_cast<std::size_t>(std::llround(fractions[f] * static_cast<double>(n)));
        require(out[f].sample_size > k + 1, ErrorKind::InsufficientData,
                "fraction " + std::to_string(fractions[f]) + " leaves too few samples");
        out[f].runs.assign(runs, 0.0);
    }
    const std::size_t jobs = fractions.size() * runs;
    parallel_blocks(jobs, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t job = b; job < e; ++job) {
            const std::size_t f = job / runs, r = job % runs;
            const std::size_t size = out[f].sample_size;
            SampleMatrix sub;
            sub.names = m.names;
            sub.target_name = m.target_name;
            if (size >= n) {
                sub = m;
            } else {
                std::vector<std::size_t> idx(n);
                std::iota(idx.begin(), idx.end(), std::size_t{0});
                Rng rng(derive_seed(seed, f, r));
                for (std::size_t i = 0; i < size; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
                idx.resize(size);
                std::sort(idx.begin(), idx.end());
                sub.columns.assign(m.columns.size(), {});
                for (std::size_t c = 0; c < m.columns.size(); ++c)
                    for (std::size_t i : idx) sub.columns[c].push_back(m.columns[c][i]);
                for (std::size_t i : idx) sub.target.push_back(m.target[i]);
            }
            out[f].runs[r] = ksg_mi(sub, k).mi_bits;
        }
    });
    for (auto& p : out) {
        p.mean = mean(p.runs);
        p.std = pstdev(p.runs);
    }
    return out;
}

}  // namespace pulseaudit::mi
