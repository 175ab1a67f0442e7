#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pulseaudit/common.hpp"
#include "pulseaudit/csv.hpp"
#include "pulseaudit/signals.hpp"

namespace pulseaudit::splits {

enum class Scheme { NoOverlap, DomainOverlap, DataOverlap };

inline const char* to_string(Scheme s) {
    switch (s) {
        case Scheme::NoOverlap: return "no-overlap";
        case Scheme::DomainOverlap: return "domain-overlap";
        case Scheme::DataOverlap: return "data-overlap";
    }
    return "?";
}

inline Scheme parse_scheme(const std::string& s) {
    if (s == "no-overlap") return Scheme::NoOverlap;
    if (s == "domain-overlap") return Scheme::DomainOverlap;
    if (s == "data-overlap") return Scheme::DataOverlap;
    throw Error(ErrorKind::InvalidArgument, "unknown split scheme '" + s + "'");
}

struct SplitPlan {
    Scheme scheme = Scheme::NoOverlap;
    double test_fraction = 0.2;
    std::uint64_t seed = 7;
};

enum class Set { Train, Test };

struct Assigned {
    std::string patient_id;
    std::string record_id;
    std::size_t start = 0;
    std::size_t length = 0;
    Set set = Set::Train;

    std::size_t end() const { return start + length; }
};

struct SplitAssignment {
    std::vector<Assigned> windows;

    std::size_t count(Set s) const {
        return static_cast<std::size_t>(
            std::count_if(windows.begin(), windows.end(), [&](const Assigned& a) { return a.set == s; }));
    }
};

/// floor(f n) units in the test set, at least one on each side.
inline std::size_t test_count(std::size_t n, double fraction) {
    auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    return std::clamp<std::size_t>(k, 1, n - 1);
}

namespace detail {

// Seeded permutation of sorted ids; the first `k` become the test set.
inline std::set<std::string> pick(std::vector<std::string> ids, double fraction, std::uint64_t seed) {
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, 0x5b17));
    rng.shuffle(ids);
    const std::size_t k = test_count(ids.size(), fraction);
    return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k)};
}

}  // namespace detail

inline SplitAssignment make_split(const signals::Dataset& ds, const signals::WindowSpec& spec, const SplitPlan& plan) {
    require(plan.test_fraction > 0.0 && plan.test_fraction < 1.0, ErrorKind::InvalidArgument,
            "test fraction must lie in (0, 1)");
    require(!ds.records.empty(), ErrorKind::InsufficientData, "dataset has no records");
    SplitAssignment a;
    for (const auto& r : ds.records) {
        const double rate = r.rate_hz();
        spec.validate(rate);
        const std::size_t len = spec.length_samples(rate);
        const std::size_t stride = spec.stride_samples(rate);
        const std::size_t count = signals::window_count(r.length(), len, stride);
        for (std::size_t k = 0; k < count; ++k) a.windows.push_back({r.patient_id, r.record_id, k * stride, len, Set::Train});
    }

    switch (plan.scheme) {
        case Scheme::NoOverlap: {
            std::set<std::string> unique;
            for (const auto& r : ds.records) unique.insert(r.patient_id);
            require(unique.size() >= 2, ErrorKind::InsufficientData, "patient-level split needs at least 2 patients");
            const auto test = detail::pick({unique.begin(), unique.end()}, plan.test_fraction, plan.seed);
            for (auto& w : a.windows) w.set = test.count(w.patient_id) ? Set::Test : Set::Train;
            break;
        }
        case Scheme::DomainOverlap: {
            std::vector<std::string> ids;
            for (const auto& r : ds.records) ids.push_back(r.record_id);
            require(ids.size() >= 2, ErrorKind::InsufficientData, "record-level split needs at least 2 records");
            const auto test = detail::pick(ids, plan.test_fraction, plan.seed);
            for (auto& w : a.windows) w.set = test.count(w.record_id) ? Set::Test : Set::Train;
            break;
        }
        case Scheme::DataOverlap: {
            const std::size_t n = a.windows.size();
            require(n >= 2, ErrorKind::InsufficientData, "window-level split needs at least 2 windows");
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng rng(derive_seed(plan.seed, 0x5b17));
            rng.shuffle(order);
            const std::size_t k = test_count(n, plan.test_fraction);
            for (std::size_t i = 0; i < k; ++i) a.windows[order[i]].set = Set::Test;
            break;
        }
    }
    return a;
}

// ---------------------------------------------------------------------------
// Audit

struct OverlapPair {
    std::size_t train = 0;  // indices into SplitAssignment::windows
    std::size_t test = 0;
    std::size_t shared_samples = 0;
};

struct LeakageReport {
    std::vector<OverlapPair> data_overlap;
    std::vector<std::string> domain_overlap_patients;
    std::size_t train_windows = 0;
    std::size_t test_windows = 0;

    bool data_clean() const { return data_overlap.empty(); }
    bool domain_clean() const { return domain_overlap_patients.empty(); }
};

/// Every (train, test) pair of windows from one record whose sample
/// intervals intersect, plus every patient present on both sides.
inline LeakageReport audit_split(const SplitAssignment& a) {
    LeakageReport rep;
    rep.train_windows = a.count(Set::Train);
    rep.test_windows = a.count(Set::Test);

    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> by_record;
    std::map<std::string, std::pair<bool, bool>> patient_sides;
    for (std::size_t i = 0; i < a.windows.size(); ++i) {
        const auto& w = a.windows[i];
        auto& slot = by_record[w.record_id];
        (w.set == Set::Train ? slot.first : slot.second).push_back(i);
        auto& sides = patient_sides[w.patient_id];
        (w.set == Set::Train ? sides.first : sides.second) = true;
    }
    for (const auto& [pid, sides] : patient_sides)
        if (sides.first && sides.second) rep.domain_overlap_patients.push_back(pid);

    auto by_start = [&](std::size_t x, std::size_t y) {
        return a.windows[x].start != a.windows[y].start ? a.windows[x].start < a.windows[y].start : x < y;
    };
    for (auto& [rid, sides] : by_record) {
        auto& train = sides.first;
        auto& test = sides.second;
        if (train.empty() || test.empty()) continue;
        std::sort(train.begin(), train.end(), by_start);
        std::sort(test.begin(), test.end(), by_start);
        // Longest train window bounds how far back an intersecting start can lie.
        std::size_t longest = 0;
        for (std::size_t i : train) longest = std::max(longest, a.windows[i].length);
        for (std::size_t t : test) {
            const auto& tw = a.windows[t];
            const std::size_t earliest = tw.start >= longest ? tw.start - longest : 0;
            auto it = std::lower_bound(train.begin(), train.end(), earliest,
                                       [&](std::size_t i, std::size_t v) { return a.windows[i].start < v; });
            for (; it != train.end() && a.windows[*it].start < tw.end(); ++it) {
                const auto& rw = a.windows[*it];
                const std::size_t lo = std::max(rw.start, tw.start);
                const std::size_t hi = std::min(rw.end(), tw.end());
                if (hi > lo) rep.data_overlap.push_back({*it, t, hi - lo});
            }
        }
    }
    std::sort(rep.data_overlap.begin(), rep.data_overlap.end(), [](const OverlapPair& x, const OverlapPair& y) {
        return x.train != y.train ? x.train < y.train : x.test < y.test;
    });
    return rep;
}

// ---------------------------------------------------------------------------
// Split file: patient_id,record_id,start_index,length,set

inline void write_split(const SplitAssignment& a, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::MissingFile, path);
    out << "patient_id,record_id,start_index,length,set\n";
    for (const auto& w : a.windows)
        out << w.patient_id << ',' << w.record_id << ',' << w.start << ',' << w.length << ','
            << (w.set == Set::Train ? "train" : "test") << '\n';
}

inline SplitAssignment read_split(const std::string& path) {
    const auto lines = csv::read_lines(path);
    require(!lines.empty(), ErrorKind::MalformedInput, path + ": empty split file");
    const auto header = csv::split(lines.front());
    const std::vector<std::string_view> expected{"patient_id", "record_id", "start_index", "length", "set"};
    require(header == expected, ErrorKind::MalformedInput, path + ": unexpected split header");
    SplitAssignment a;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (csv::trim(lines[ln]).empty()) continue;
        const auto f = csv::split(lines[ln]);
        const std::string where = path + ": line " + std::to_string(ln + 1);
        require(f.size() == 5, ErrorKind::MalformedInput, where + " needs 5 fields");
        const auto start = csv::parse_double(f[2]);
        const auto len = csv::parse_double(f[3]);
        require(start && len && *start >= 0 && *len > 0 && std::floor(*start) == *start && std::floor(*len) == *len,
                ErrorKind::MalformedInput, where + ": bad interval");
        require(f[4] == "train" || f[4] == "test", ErrorKind::MalformedInput, where + ": set must be train or test");
        a.windows.push_back({std::string(f[0]), std::string(f[1]), static_cast<std::size_t>(*start),
                             static_cast<std::size_t>(*len), f[4] == "train" ? Set::Train : Set::Test});
    }
    return a;
}

// ---------------------------------------------------------------------------
// Label range constraints

struct LabelSummary {
    std::size_t n = 0;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double std = std::numeric_limits<double>::quiet_NaN();
    double min = std::numeric_limits<double>::quiet_NaN();
    double max = std::numeric_limits<double>::quiet_NaN();
};

inline LabelSummary summarize(std::span<const double> v) {
    LabelSummary s;
    s.n = v.size();
    if (v.empty()) return s;
    s.mean = mean(v);
    s.std = pstdev(v);
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    return s;
}

struct RangeResult {
    std::vector<std::size_t> kept;  // indices of retained items
    double discarded_fraction = 0.0;
    LabelSummary before;
    LabelSummary after;
    std::vector<std::string> warnings;
};

/// Keeps items with lo <= label <= hi.
inline RangeResult range_filter(std::span<const double> labels, double lo, double hi) {
    require(lo < hi, ErrorKind::InvalidArgument, "range needs lo < hi");
    RangeResult r;
    std::vector<double> after;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= lo && labels[i] <= hi) {
            r.kept.push_back(i);
            after.push_back(labels[i]);
        }
    r.before = summarize(labels);
    r.after = summarize(after);
    r.discarded_fraction = labels.empty() ? 0.0
                                          : static_cast<double>(labels.size() - r.kept.size()) /
                                                static_cast<double>(labels.size());
    if (r.kept.empty()) r.warnings.push_back("range keeps no windows");
    return r;
}

inline RangeResult range_filter(std::span<const signals::Window> windows, const std::string& label, double lo,
                                double hi) {
    std::vector<double> values;
    for (const auto& w : windows) {
        const auto v = w.label(label);
        require(v.has_value(), ErrorKind::MissingLabel,
                "window " + w.record_id + "@" + std::to_string(w.start_index) + " lacks label '" + label + "'");
        values.push_back(*v);
    }
    return range_filter(values, lo, hi);
}

}  // namespace pulseaudit::splits
