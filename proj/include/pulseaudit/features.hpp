#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pulseaudit/common.hpp"
#include "pulseaudit/dsp.hpp"
#include "pulseaudit/signals.hpp"

namespace pulseaudit::features {

using signals::Waveform;

struct BeatSeries {
    std::vector<std::size_t> peaks;
    std::vector<std::size_t> feet;  // feet[k] precedes peaks[k]

    std::size_t size() const { return peaks.size(); }
};

inline std::vector<double> intervals_s(const BeatSeries& b, double rate_hz) {
    std::vector<double> out;
    for (std::size_t i = 1; i < b.peaks.size(); ++i)
        out.push_back(static_cast<double>(b.peaks[i] - b.peaks[i - 1]) / rate_hz);
    return out;
}

/// Systolic peaks: local maxima with prominence >= 0.3 std, at least 0.33 s
/// apart. Each foot is the minimum between the previous peak (or the window
/// start) and its peak.
inline BeatSeries detect_beats(const Waveform& ppg) {
    const auto x = ppg.samples();
    const double sd = pstdev(x);
    require(sd > 0.0, ErrorKind::NoBeats, "flat window");
    const auto distance = static_cast<std::size_t>(std::llround(signals::kMinBeatPeriodS * ppg.rate_hz()));
    BeatSeries b;
    b.peaks = dsp::find_peaks(x, 0.3 * sd, distance);
    require(!b.peaks.empty(), ErrorKind::NoBeats, "no peaks above prominence threshold");
    std::size_t from = 0;
    for (std::size_t p : b.peaks) {
        const auto it = std::min_element(x.begin() + static_cast<std::ptrdiff_t>(from),
                                         x.begin() + static_cast<std::ptrdiff_t>(p) + 1);
        b.feet.push_back(static_cast<std::size_t>(it - x.begin()));
        from = p;
    }
    return b;
}

/// Physiological plausibility: at least 3 beats, a 40-180 bpm rate, and at
/// least 80% of successive intervals changing by no more than 20%.
inline bool beats_plausible(const BeatSeries& b, double rate_hz) {
    if (b.peaks.size() < 3) return false;
    const auto rr = intervals_s(b, rate_hz);
    const double hr = 60.0 / median(rr);
    if (hr < 40.0 || hr > 180.0) return false;
    std::size_t ok = 0;
    for (std::size_t i = 1; i < rr.size(); ++i)
        if (std::abs(rr[i] - rr[i - 1]) <= 0.2 * rr[i - 1]) ++ok;
    return static_cast<double>(ok) >= 0.8 * static_cast<double>(rr.size() - 1);
}

/// 60 / median inter-peak interval, in bpm.
inline double heart_rate(const BeatSeries& b, double rate_hz) {
    require(b.peaks.size() >= 2, ErrorKind::InsufficientData, "heart rate needs at least 2 peaks");
    return 60.0 / median(intervals_s(b, rate_hz));
}

/// Population standard deviation of inter-peak intervals, in seconds.
inline double hrv_sdnn(const BeatSeries& b, double rate_hz) {
    require(b.peaks.size() >= 3, ErrorKind::InsufficientData, "SDNN needs at least 3 peaks");
    return pstdev(intervals_s(b, rate_hz));
}

/// Mean of per-sub-window SDNN values; sub-windows with < 3 peaks are skipped.
inline double mean_sdnn(std::span<const BeatSeries> parts, double rate_hz) {
    std::vector<double> vals;
    for (const auto& b : parts)
        if (b.peaks.size() >= 3) vals.push_back(hrv_sdnn(b, rate_hz));
    require(!vals.empty(), ErrorKind::InsufficientData, "no sub-window with 3 peaks");
    return mean(vals);
}

/// Mean systolic rise fraction: (peak time - foot time) / (beat duration),
/// where a beat runs from its foot to the next foot. Beats whose foot sits on
/// the window edge are skipped since the true foot may lie outside.
inline double systolic_slope(const Waveform& ppg, const BeatSeries& b) {
    (void)ppg;
    std::vector<double> fractions;
    for (std::size_t k = 0; k + 1 < b.peaks.size(); ++k) {
        if (b.feet[k] == 0) continue;
        require(b.peaks[k] != b.feet[k], ErrorKind::InvalidArgument,
                "degenerate beat at sample " + std::to_string(b.peaks[k]));
        const double rise = static_cast<double>(b.peaks[k] - b.feet[k]);
        const double duration = static_cast<double>(b.feet[k + 1] - b.feet[k]);
        fractions.push_back(rise / duration);
    }
    require(!fractions.empty(), ErrorKind::InsufficientData, "no complete beat for systolic rise");
    return mean(fractions);
}

/// R-peaks: maxima of the squared ECG derivative reaching 30% of its
/// maximum, at least 0.33 s apart, each moved to the ECG maximum within
/// +-50 ms.
inline std::vector<std::size_t> detect_r_peaks(const Waveform& ecg) {
    const auto x = ecg.samples();
    auto d = dsp::first_derivative(x, ecg.rate_hz());
    for (double& v : d) v *= v;
    const double top = *std::max_element(d.begin(), d.end());
    require(top > 0.0, ErrorKind::NoBeats, "flat ECG window");
    const auto distance = static_cast<std::size_t>(std::llround(signals::kMinBeatPeriodS * ecg.rate_hz()));
    const auto radius = static_cast<std::size_t>(std::llround(0.05 * ecg.rate_hz()));
    std::vector<std::size_t> out;
    for (std::size_t p : dsp::find_peaks(d, 0.0, distance)) {
        if (d[p] < 0.3 * top) continue;
        const std::size_t lo = p > radius ? p - radius : 0;
        const std::size_t hi = std::min(x.size() - 1, p + radius);
        const auto it = std::max_element(x.begin() + static_cast<std::ptrdiff_t>(lo),
                                         x.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
        const auto r = static_cast<std::size_t>(it - x.begin());
        if (out.empty() || out.back() != r) out.push_back(r);
    }
    require(!out.empty(), ErrorKind::NoBeats, "no R-peaks");
    return out;
}

/// Median delay from each PPG systolic peak back to the latest R-peak at or
/// before it, in seconds.
inline double rpat(const Waveform& ecg, const Waveform& ppg, const BeatSeries& beats) {
    require(ecg.rate_hz() == ppg.rate_hz() && ecg.size() == ppg.size(), ErrorKind::InvalidArgument,
            "ECG and PPG must be time-aligned at one rate");
    const auto r_peaks = detect_r_peaks(ecg);
    std::vector<double> lags;
    for (std::size_t p : beats.peaks) {
        const auto it = std::upper_bound(r_peaks.begin(), r_peaks.end(), p);
        if (it == r_peaks.begin()) continue;
        lags.push_back(static_cast<double>(p - *std::prev(it)) / ppg.rate_hz());
    }
    require(!lags.empty(), ErrorKind::NoBeats, "no PPG peak follows an R-peak");
    return median(std::move(lags));
}

inline constexpr double kMinRpatS = 1e-3;

/// Reflected-wave arrival: per beat, the first place after the systolic peak
/// where the second derivative crosses from positive to negative marks the
/// reflected lobe; the lobe's curvature minimum (its apex) is taken as the
/// arrival. Median across beats, in seconds.
inline double rwat(const Waveform& ppg, const BeatSeries& b) {
    const auto x = ppg.samples();
    const auto d2 = dsp::second_derivative(x, ppg.rate_hz());
    const std::size_t n = x.size();
    std::vector<double> arrivals;
    for (std::size_t k = 0; k < b.peaks.size(); ++k) {
        const std::size_t p = b.peaks[k];
        const std::size_t end = k + 1 < b.peaks.size() ? b.feet[k + 1] : n - 1;
        std::size_t i = p + 1;
        while (i < end && d2[i] <= 0.0) ++i;  // leave the systolic cap
        while (i < end && d2[i] > 0.0) ++i;   // descending limb
        if (i >= end) continue;
        std::size_t apex = i;
        while (i < end && d2[i] <= 0.0) {
            if (d2[i] < d2[apex]) apex = i;
            ++i;
        }
        if (i >= end) continue;  // lobe must close before the next beat
        arrivals.push_back(static_cast<double>(apex - p) / ppg.rate_hz());
    }
    require(!arrivals.empty(), ErrorKind::NoInflection, "no reflected-wave inflection in any beat");
    return median(std::move(arrivals));
}

inline double coefficient_of_variation(std::span<const double> xs) {
    const double m = mean(xs);
    if (!(std::abs(m) > 0.0)) return 1.0;
    return pstdev(xs) / std::abs(m);
}

inline constexpr double kMinPeriodicity = 0.3;

/// 0.5 autocorrelation quality + 0.25 beat-amplitude consistency + 0.25
/// interval consistency. The beat terms count only when the beats pass
/// beats_plausible and the autocorrelation reaches kMinPeriodicity, so noise
/// maxima spaced by the refractory period do not earn consistency credit.
inline double quality_feature(const Waveform& w, const std::optional<BeatSeries>& beats) {
    const double ac = signals::autocorr_quality(w);
    double q = 0.5 * ac;
    if (!beats || ac < kMinPeriodicity || !beats_plausible(*beats, w.rate_hz())) return q;
    const auto x = w.samples();
    std::vector<double> amps;
    for (std::size_t k = 0; k < beats->size(); ++k) amps.push_back(x[beats->peaks[k]] - x[beats->feet[k]]);
    const auto rr = intervals_s(*beats, w.rate_hz());
    q += 0.25 * std::clamp(1.0 - coefficient_of_variation(amps), 0.0, 1.0);
    q += 0.25 * std::clamp(1.0 - coefficient_of_variation(rr), 0.0, 1.0);
    return q;
}

inline double quality_feature(const Waveform& w) {
    std::optional<BeatSeries> beats;
    try {
        beats = detect_beats(w);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoBeats) throw;
    }
    return quality_feature(w, beats);
}

// ---------------------------------------------------------------------------
// Feature vectors

using FeatureVector = std::map<std::string, double>;

/// Base features. Every name is also valid with a "delta_" or "std_" prefix.
inline const std::vector<std::string>& base_registry() {
    static const std::vector<std::string> names{"hr",  "hrv",  "quality", "dpdt",   "rpat",
                                                "inv_pat", "rwat", "age",     "weight", "height"};
    return names;
}

inline bool is_registered(const std::string& name) {
    auto strip = [](const std::string& s) {
        for (const char* prefix : {"delta_", "std_"})
            if (s.rfind(prefix, 0) == 0) return s.substr(std::string(prefix).size());
        return s;
    };
    const auto base = strip(name);
    const auto& reg = base_registry();
    return std::find(reg.begin(), reg.end(), base) != reg.end();
}

/// Registry columns in canonical order: base, then delta_, then std_.
inline std::vector<std::string> full_registry() {
    std::vector<std::string> out = base_registry();
    for (const auto& n : base_registry()) out.push_back("delta_" + n);
    for (const auto& n : base_registry()) out.push_back("std_" + n);
    return out;
}

/// Every feature computable from one window; failures leave the feature out.
inline FeatureVector extract_features(const signals::Window& w, const signals::PatientMeta& meta = {}) {
    FeatureVector fv;
    const Waveform& ppg = w.signal();
    std::optional<BeatSeries> beats;
    try {
        beats = detect_beats(ppg);
    } catch (const Error&) {
    }
    fv["quality"] = quality_feature(ppg, beats);
    auto attempt = [&](const char* name, auto&& fn) {
        try {
            const double v = fn();
            if (std::isfinite(v)) fv[name] = v;
        } catch (const Error&) {
        }
    };
    if (beats) {
        attempt("hr", [&] { return heart_rate(*beats, ppg.rate_hz()); });
        attempt("hrv", [&] { return hrv_sdnn(*beats, ppg.rate_hz()); });
        attempt("dpdt", [&] { return systolic_slope(ppg, *beats); });
        attempt("rwat", [&] { return rwat(ppg, *beats); });
        auto ecg = w.channels.find(signals::Channel::ECG);
        if (ecg != w.channels.end()) {
            attempt("rpat", [&] { return rpat(ecg->second, ppg, *beats); });
            if (fv.count("rpat") && fv["rpat"] > kMinRpatS) fv["inv_pat"] = 1.0 / fv["rpat"];
        }
    }
    if (meta.age) fv["age"] = *meta.age;
    if (meta.weight) fv["weight"] = *meta.weight;
    if (meta.height) fv["height"] = *meta.height;
    return fv;
}

/// Adds delta_<f> = f - baseline[f] for every base feature present on both
/// sides. Existing delta_/std_ entries are left alone, so applying it twice
/// with the same baseline changes nothing.
inline FeatureVector with_delta(FeatureVector fv, const FeatureVector& baseline) {
    for (const auto& name : base_registry()) {
        auto a = fv.find(name);
        auto b = baseline.find(name);
        if (a != fv.end() && b != baseline.end()) fv["delta_" + name] = a->second - b->second;
    }
    return fv;
}

struct DeltaStd {
    FeatureVector values;
    std::vector<std::string> warnings;
};

/// delta_<f> for the last window against the baseline, std_<f> (population)
/// across all windows. Features seen on one side only are omitted and warned.
inline DeltaStd delta_and_std(std::span<const FeatureVector> windows, const FeatureVector& baseline) {
    require(!windows.empty(), ErrorKind::InsufficientData, "no feature windows");
    DeltaStd out;
    for (const auto& name : base_registry()) {
        std::vector<double> series;
        for (const auto& fv : windows) {
            auto it = fv.find(name);
            if (it != fv.end()) series.push_back(it->second);
        }
        const bool in_windows = !series.empty();
        const bool in_base = baseline.count(name) > 0;
        if (in_windows != in_base) {
            out.warnings.push_back(name + ": present in " + (in_base ? "baseline" : "windows") + " only");
        }
        if (in_windows) out.values["std_" + name] = pstdev(series);
        const auto last = windows.back().find(name);
        if (in_base && last != windows.back().end())
            out.values["delta_" + name] = last->second - baseline.at(name);
    }
    return out;
}

/// Mean of each feature over a set of windows (used to form baselines).
inline FeatureVector average(std::span<const FeatureVector> windows) {
    std::map<std::string, std::vector<double>> cols;
    for (const auto& fv : windows)
        for (const auto& [k, v] : fv) cols[k].push_back(v);
    FeatureVector out;
    for (const auto& [k, vs] : cols) out[k] = mean(vs);
    return out;
}

}  // namespace pulseaudit::features
