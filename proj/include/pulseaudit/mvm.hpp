#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pulseaudit/common.hpp"
#include "pulseaudit/signals.hpp"

namespace pulseaudit::mvm {

enum class Scope { IntraPatient, InterPatient };

/// How a raw aligned L2 distance d over N samples is reported.
enum class DistanceNorm {
    None,        // d
    PerSample,   // d / sqrt(N)
    MeanSquare,  // d^2 / N
};

inline const char* to_string(Scope s) { return s == Scope::IntraPatient ? "intra" : "inter"; }

inline const char* to_string(DistanceNorm n) {
    switch (n) {
        case DistanceNorm::None: return "none";
        case DistanceNorm::PerSample: return "per-sample";
        case DistanceNorm::MeanSquare: return "mean-square";
    }
    return "none";
}

inline double apply_norm(double d, std::size_t n, DistanceNorm norm) {
    switch (norm) {
        case DistanceNorm::None: return d;
        case DistanceNorm::PerSample: return d / std::sqrt(static_cast<double>(n));
        case DistanceNorm::MeanSquare: return d * d / static_cast<double>(n);
    }
    return d;
}

/// Inverse of apply_norm: the raw distance corresponding to a reported value.
inline double raw_threshold(double t, std::size_t n, DistanceNorm norm) {
    switch (norm) {
        case DistanceNorm::None: return t;
        case DistanceNorm::PerSample: return t * std::sqrt(static_cast<double>(n));
        case DistanceNorm::MeanSquare: return std::sqrt(std::max(0.0, t) * static_cast<double>(n));
    }
    return t;
}

struct MvmConfig {
    double t_i = 1.0;
    double t_o = 8.0;
    double window_length_s = 2.0;
    double max_lag_s = 0.5;
    Scope scope = Scope::IntraPatient;
    DistanceNorm norm = DistanceNorm::None;
    bool prune = true;
    unsigned threads = 1;

    void validate() const {
        require(t_i > 0.0, ErrorKind::InvalidArgument, "t_i must be positive");
        require(t_o > 0.0, ErrorKind::InvalidArgument, "t_o must be positive");
        require(max_lag_s < window_length_s / 2.0, ErrorKind::InvalidArgument,
                "max lag must be below half the window length");
    }
};

// ---------------------------------------------------------------------------
// Alignment and distance
//
// Sign convention: at lag L >= 0 sample a[i] pairs with b[i + L] (b is
// delayed relative to a); at L < 0, a[i - L] pairs with b[i].

namespace detail {

// Products and squared differences are always formed as x[i] (.) y[i + s]
// with x from the first argument of the canonical orientation, so (a, b, L)
// and (b, a, -L) produce bit-identical sums.
inline double dot_shifted(const double* x, const double* y, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += x[i] * y[i];
        s1 += x[i + 1] * y[i + 1];
        s2 += x[i + 2] * y[i + 2];
        s3 += x[i + 3] * y[i + 3];
    }
    for (; i < n; ++i) s0 += x[i] * y[i];
    return (s0 + s1) + (s2 + s3);
}

inline double sqdiff_shifted(const double* x, const double* y, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const double d0 = x[i] - y[i], d1 = x[i + 1] - y[i + 1];
        const double d2 = x[i + 2] - y[i + 2], d3 = x[i + 3] - y[i + 3];
        s0 += d0 * d0;
        s1 += d1 * d1;
        s2 += d2 * d2;
        s3 += d3 * d3;
    }
    for (; i < n; ++i) s0 += (x[i] - y[i]) * (x[i] - y[i]);
    return (s0 + s1) + (s2 + s3);
}

// Pointers to the overlapping runs for a lag, in canonical orientation.
struct Overlap {
    const double* x;
    const double* y;
    std::size_t n;
};

inline Overlap overlap(std::span<const double> a, std::span<const double> b, std::ptrdiff_t lag) {
    const auto s = static_cast<std::size_t>(lag >= 0 ? lag : -lag);
    const std::size_t n = a.size() - s;
    if (lag >= 0) return {a.data(), b.data() + s, n};
    // a[i + s] pairs with b[i]; orient so the delayed side is second.
    return {b.data(), a.data() + s, n};
}

}  // namespace detail

struct LagResult {
    std::ptrdiff_t lag = 0;
    double correlation = 0.0;  // mean product over the overlap
    double distance = 0.0;     // raw L2 of the overlap, rescaled by sqrt(N / overlap)
};

inline double scaled_distance(std::span<const double> a, std::span<const double> b, std::ptrdiff_t lag) {
    const auto ov = detail::overlap(a, b, lag);
    const double ss = detail::sqdiff_shifted(ov.x, ov.y, ov.n);
    return std::sqrt(static_cast<double>(a.size()) / static_cast<double>(ov.n) * ss);
}

/// Lag in [-max_lag, max_lag] with the largest cross-correlation. Ties go
/// to the smaller |lag|, then to the smaller distance.
inline LagResult best_lag(std::span<const double> a, std::span<const double> b, std::size_t max_lag) {
    require(a.size() == b.size(), ErrorKind::LengthMismatch, "windows differ in length");
    require(!a.empty() && 2 * max_lag < a.size(), ErrorKind::InvalidArgument, "max lag must be below N/2");
    LagResult best;
    bool have = false;
    auto consider = [&](std::ptrdiff_t lag) {
        const auto ov = detail::overlap(a, b, lag);
        const double corr = detail::dot_shifted(ov.x, ov.y, ov.n) / static_cast<double>(ov.n);
        if (!have || corr > best.correlation) {
            best = {lag, corr, -1.0};
            have = true;
        } else if (corr == best.correlation && std::abs(lag) == std::abs(best.lag)) {
            if (best.distance < 0.0) best.distance = scaled_distance(a, b, best.lag);
            const double d = scaled_distance(a, b, lag);
            if (d < best.distance) best = {lag, corr, d};
        }
    };
    consider(0);
    for (std::size_t s = 1; s <= max_lag; ++s) {
        consider(static_cast<std::ptrdiff_t>(s));
        consider(-static_cast<std::ptrdiff_t>(s));
    }
    if (best.distance < 0.0) best.distance = scaled_distance(a, b, best.lag);
    return best;
}

struct Alignment {
    std::ptrdiff_t lag = 0;
    std::vector<double> a;
    std::vector<double> b;
};

/// Aligns two equal-length signals by the lag maximizing the correlation of
/// their z-normalized forms; returns the overlapping parts of the inputs.
inline Alignment align_xcorr(std::span<const double> a, std::span<const double> b, std::size_t max_lag) {
    const auto za = znormalize(a);
    const auto zb = znormalize(b);
    const auto r = best_lag(za, zb, max_lag);
    const auto s = static_cast<std::size_t>(r.lag >= 0 ? r.lag : -r.lag);
    const std::size_t n = a.size() - s;
    Alignment out;
    out.lag = r.lag;
    const std::size_t a0 = r.lag >= 0 ? 0 : s;
    const std::size_t b0 = r.lag >= 0 ? s : 0;
    out.a.assign(a.begin() + static_cast<std::ptrdiff_t>(a0), a.begin() + static_cast<std::ptrdiff_t>(a0 + n));
    out.b.assign(b.begin() + static_cast<std::ptrdiff_t>(b0), b.begin() + static_cast<std::ptrdiff_t>(b0 + n));
    return out;
}

/// Aligned, overlap-rescaled L2 distance of two windows as given (callers
/// z-normalize first).
inline double distance(std::span<const double> a, std::span<const double> b, std::size_t max_lag) {
    return best_lag(a, b, max_lag).distance;
}

inline std::size_t lag_samples(double max_lag_s, double rate_hz) {
    return static_cast<std::size_t>(std::floor(max_lag_s * rate_hz + 1e-9));
}

// ---------------------------------------------------------------------------
// Threshold calibration

struct Histogram {
    double bin_width = 0.0;
    std::vector<double> edges;  // size counts + 1
    std::vector<std::size_t> counts;
};

inline Histogram make_histogram(std::span<const double> values, std::size_t bins = 50) {
    Histogram h;
    if (values.empty() || bins == 0) return h;
    const double top = *std::max_element(values.begin(), values.end());
    h.bin_width = top > 0.0 ? top / static_cast<double>(bins) : 1.0;
    for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(h.bin_width * static_cast<double>(i));
    h.counts.assign(bins, 0);
    for (double v : values) {
        auto k = static_cast<std::size_t>(v / h.bin_width);
        ++h.counts[std::min(k, bins - 1)];
    }
    return h;
}

struct Calibration {
    double threshold = 0.0;
    double percentile = 90.0;
    std::vector<double> distances;
    Histogram histogram;
};

/// Distances between consecutive windows of each record (sorted by start),
/// and their nearest-rank percentile.
inline Calibration calibrate_threshold(std::span<const signals::Window> windows, double percentile,
                                       double max_lag_s = 0.5, DistanceNorm norm = DistanceNorm::None) {
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (windows[x].record_id != windows[y].record_id) return windows[x].record_id < windows[y].record_id;
        return windows[x].start_index < windows[y].start_index;
    });
    Calibration c;
    c.percentile = percentile;
    for (std::size_t k = 1; k < order.size(); ++k) {
        const auto& w0 = windows[order[k - 1]];
        const auto& w1 = windows[order[k]];
        if (w0.record_id != w1.record_id) continue;
        const auto z0 = znormalize(w0.signal().samples());
        const auto z1 = znormalize(w1.signal().samples());
        const std::size_t lag = lag_samples(max_lag_s, w0.rate_hz());
        c.distances.push_back(apply_norm(distance(z0, z1, lag), z0.size(), norm));
    }
    require(c.distances.size() >= 10, ErrorKind::InsufficientData,
            "threshold calibration needs at least 10 consecutive-window pairs, found " +
                std::to_string(c.distances.size()));
    c.threshold = pulseaudit::percentile(c.distances, percentile);
    c.histogram = make_histogram(c.distances);
    return c;
}

// ---------------------------------------------------------------------------
// Scan

struct MvmMatch {
    std::size_t i = 0;  // i < j, indices into the scanned window list
    std::size_t j = 0;
    double input_distance = 0.0;  // in the configured normalization
    double label_gap = 0.0;
    std::ptrdiff_t lag = 0;

    bool operator==(const MvmMatch& o) const { return i == o.i && j == o.j; }
};

struct MvmReport {
    std::size_t total_windows = 0;
    std::size_t matched_windows = 0;
    double match_rate = 0.0;
    std::size_t pairs_in_scope = 0;
    std::size_t pairs_label_pruned = 0;
    std::size_t pairs_bound_pruned = 0;
    std::size_t pairs_evaluated = 0;
    MvmConfig config;
    std::string label;
    std::vector<MvmMatch> matches;  // sorted by (i, j)
};

/// Z-normalized window signals packed for scanning, with prefix sums for the
/// segment-mean lower bound.
struct ScanSet {
    std::size_t n = 0;       // samples per window
    std::size_t count = 0;   // windows
    std::vector<double> z;   // count * n
    std::vector<double> prefix;  // count * (n + 1)
    std::vector<double> labels;
    std::vector<std::string> patients;

    std::span<const double> row(std::size_t k) const { return {z.data() + k * n, n}; }
    std::span<const double> row_prefix(std::size_t k) const { return {prefix.data() + k * (n + 1), n + 1}; }
};

inline ScanSet make_scan_set(std::span<const signals::Window> windows, const std::string& label) {
    ScanSet s;
    s.count = windows.size();
    if (windows.empty()) return s;
    s.n = windows.front().length();
    s.z.reserve(s.count * s.n);
    s.prefix.reserve(s.count * (s.n + 1));
    for (const auto& w : windows) {
        require(w.length() == s.n, ErrorKind::LengthMismatch,
                "window " + w.record_id + "@" + std::to_string(w.start_index) + " has length " +
                    std::to_string(w.length()) + ", expected " + std::to_string(s.n));
        const auto l = w.label(label);
        require(l.has_value(), ErrorKind::MissingLabel,
                "window " + w.record_id + "@" + std::to_string(w.start_index) + " lacks label '" + label + "'");
        const auto z = znormalize(w.signal().samples());
        s.z.insert(s.z.end(), z.begin(), z.end());
        double acc = 0.0;
        s.prefix.push_back(0.0);
        for (double v : z) s.prefix.push_back(acc += v);
        s.labels.push_back(*l);
        s.patients.push_back(w.patient_id);
    }
    return s;
}

namespace detail {

inline constexpr std::size_t kSegment = 10;

// Lower bound on the raw overlap-rescaled distance at every lag, from
// segment means: for any run of w pairs, sum (x-y)^2 >= w (mean x - mean y)^2.
// Returns true when no lag can bring the distance to `raw_t` or below.
inline bool bound_exceeds(const ScanSet& s, std::size_t a, std::size_t b, std::size_t max_lag, double raw_t) {
    const auto pa = s.row_prefix(a);
    const auto pb = s.row_prefix(b);
    const double t2 = raw_t * raw_t;
    const double n = static_cast<double>(s.n);
    for (std::size_t k = 0; k <= 2 * max_lag; ++k) {
        const std::ptrdiff_t lag = k == 0 ? 0 : (k % 2 == 1 ? static_cast<std::ptrdiff_t>((k + 1) / 2)
                                                             : -static_cast<std::ptrdiff_t>(k / 2));
        const auto sh = static_cast<std::size_t>(lag >= 0 ? lag : -lag);
        const std::size_t ov = s.n - sh;
        const std::size_t xa = lag >= 0 ? 0 : sh;
        const std::size_t xb = lag >= 0 ? sh : 0;
        double lb = 0.0;
        const double scale = n / static_cast<double>(ov);
        const double w = static_cast<double>(kSegment);
        for (std::size_t i = 0; i + kSegment <= ov; i += kSegment) {
            const double ma = pa[xa + i + kSegment] - pa[xa + i];
            const double mb = pb[xb + i + kSegment] - pb[xb + i];
            const double d = (ma - mb) / w;
            lb += w * d * d;
        }
        // Guard against rounding in the prefix sums.
        if (scale * lb * (1.0 - 1e-9) <= t2) return false;
    }
    return true;
}

}  // namespace detail

/// Exhaustive multi-valued-mapping search over window pairs in scope.
/// Pruning skips pairs whose label gap is below t_o (sorted sweep) and pairs
/// whose segment-mean lower bound exceeds t_i at every lag; both are exact.
inline MvmReport scan(const ScanSet& s, const MvmConfig& cfg, double rate_hz) {
    cfg.validate();
    MvmReport rep;
    rep.config = cfg;
    rep.total_windows = s.count;
    if (s.count == 0) return rep;
    const std::size_t max_lag = lag_samples(cfg.max_lag_s, rate_hz);
    require(2 * max_lag < s.n, ErrorKind::InvalidArgument, "max lag must be below half the window length");
    const double raw_t = raw_threshold(cfg.t_i, s.n, cfg.norm);

    // Groups: one per patient for intra scope, a single group otherwise.
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < s.count; ++k)
        groups[cfg.scope == Scope::IntraPatient ? s.patients[k] : std::string()].push_back(k);

    // Each work item is one anchor window of one group; a window's partners
    // are the later entries of its label-sorted group with a gap >= t_o.
    struct Anchor {
        const std::vector<std::size_t>* members;
        std::size_t pos;
    };
    std::vector<std::vector<std::size_t>> sorted;
    for (auto& [key, members] : groups) {
        std::stable_sort(members.begin(), members.end(),
                         [&](std::size_t x, std::size_t y) { return s.labels[x] < s.labels[y]; });
        sorted.push_back(members);
    }
    std::vector<Anchor> anchors;
    for (const auto& m : sorted)
        for (std::size_t p = 0; p < m.size(); ++p) anchors.push_back({&m, p});

    struct Partial {
        std::vector<MvmMatch> matches;
        std::size_t in_scope = 0, label_pruned = 0, bound_pruned = 0, evaluated = 0;
    };
    const unsigned threads = std::max(1u, cfg.threads);
    const std::size_t blocks = std::min<std::size_t>(anchors.size(), threads * 8);
    std::vector<Partial> parts(std::max<std::size_t>(blocks, 1));
    const std::size_t per = (anchors.size() + parts.size() - 1) / parts.size();

    parallel_blocks(parts.size(), threads, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t blk = b0; blk < b1; ++blk) {
            Partial& part = parts[blk];
            const std::size_t lo = blk * per;
            const std::size_t hi = std::min(anchors.size(), lo + per);
            for (std::size_t q = lo; q < hi; ++q) {
                const auto& m = *anchors[q].members;
                const std::size_t p = anchors[q].pos;
                const std::size_t a = m[p];
                std::size_t first = p + 1;
                if (cfg.prune) {
                    const double need = s.labels[a] + cfg.t_o;
                    first = static_cast<std::size_t>(
                        std::lower_bound(m.begin() + static_cast<std::ptrdiff_t>(p) + 1, m.end(), need,
                                         [&](std::size_t x, double v) { return s.labels[x] < v; }) -
                        m.begin());
                }
                for (std::size_t r = p + 1; r < m.size(); ++r) {
                    const std::size_t b = m[r];
                    if (cfg.scope == Scope::InterPatient && s.patients[a] == s.patients[b]) continue;
                    ++part.in_scope;
                    if (r < first) {
                        ++part.label_pruned;
                        continue;
                    }
                    const double gap = std::abs(s.labels[a] - s.labels[b]);
                    if (!(gap >= cfg.t_o)) {
                        ++part.label_pruned;
                        continue;
                    }
                    if (cfg.prune && detail::bound_exceeds(s, a, b, max_lag, raw_t)) {
                        ++part.bound_pruned;
                        continue;
                    }
                    ++part.evaluated;
                    const std::size_t i = std::min(a, b), j = std::max(a, b);
                    const auto res = best_lag(s.row(i), s.row(j), max_lag);
                    const double d = apply_norm(res.distance, s.n, cfg.norm);
                    if (d <= cfg.t_i) part.matches.push_back({i, j, d, gap, res.lag});
                }
            }
        }
    });

    std::vector<char> matched(s.count, 0);
    for (auto& part : parts) {
        rep.pairs_in_scope += part.in_scope;
        rep.pairs_label_pruned += part.label_pruned;
        rep.pairs_bound_pruned += part.bound_pruned;
        rep.pairs_evaluated += part.evaluated;
        for (auto& mt : part.matches) {
            matched[mt.i] = matched[mt.j] = 1;
            rep.matches.push_back(mt);
        }
    }
    std::sort(rep.matches.begin(), rep.matches.end(),
              [](const MvmMatch& x, const MvmMatch& y) { return x.i != y.i ? x.i < y.i : x.j < y.j; });
    rep.matched_windows = static_cast<std::size_t>(std::count(matched.begin(), matched.end(), 1));
    rep.match_rate = static_cast<double>(rep.matched_windows) / static_cast<double>(rep.total_windows);
    return rep;
}

inline MvmReport scan(std::span<const signals::Window> windows, const std::string& label, const MvmConfig& cfg) {
    const auto set = make_scan_set(windows, label);
    auto rep = scan(set, cfg, windows.empty() ? 1.0 : windows.front().rate_hz());
    rep.label = label;
    return rep;
}

}  // namespace pulseaudit::mvm
