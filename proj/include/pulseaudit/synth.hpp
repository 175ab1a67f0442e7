#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "pulseaudit/common.hpp"
#include "pulseaudit/features.hpp"
#include "pulseaudit/signals.hpp"

namespace pulseaudit::synth {

/// Beat shape, in units of the beat period T.
inline constexpr double kSystolicSigma = 0.10;
inline constexpr double kReflectedDelay = 0.25;
inline constexpr double kReflectedSigma = 0.06;
inline constexpr double kReflectedAmp = 0.4;
inline constexpr double kFirstBeat = 0.3;

struct Beat {
    double center_s;
    double period_s;
};

/// Noise-free sum of two Gaussians per beat.
inline std::vector<double> render(const std::vector<Beat>& beats, std::size_t n, double rate_hz) {
    std::vector<double> x(n, 0.0);
    for (const auto& b : beats) {
        const double s1 = kSystolicSigma * b.period_s;
        const double s2 = kReflectedSigma * b.period_s;
        const double c2 = b.center_s + kReflectedDelay * b.period_s;
        const double lo = b.center_s - 5.0 * s1;
        const double hi = c2 + 5.0 * s2;
        const auto i0 = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(lo * rate_hz)));
        const auto i1 = std::min(static_cast<std::ptrdiff_t>(n) - 1, static_cast<std::ptrdiff_t>(std::ceil(hi * rate_hz)));
        for (std::ptrdiff_t i = i0; i <= i1; ++i) {
            const double t = static_cast<double>(i) / rate_hz;
            const double u1 = (t - b.center_s) / s1;
            const double u2 = (t - c2) / s2;
            x[static_cast<std::size_t>(i)] += std::exp(-0.5 * u1 * u1) + kReflectedAmp * std::exp(-0.5 * u2 * u2);
        }
    }
    return x;
}

/// Beat centres for a heart-rate curve sampled at every sample: a beat falls
/// where the integrated phase crosses k + kFirstBeat. Two leading beats are
/// placed before t = 0 so the record starts mid-rhythm.
inline std::vector<Beat> beats_from_rate(std::span<const double> hr_bpm, double rate_hz) {
    std::vector<Beat> beats;
    const double t0 = 60.0 / hr_bpm.front();
    for (int k = -2; k < 0; ++k) beats.push_back({(k + kFirstBeat) * t0, t0});
    double phase = 0.0;
    double next = kFirstBeat;
    for (std::size_t i = 0; i < hr_bpm.size(); ++i) {
        const double step = hr_bpm[i] / 60.0 / rate_hz;
        while (phase + step >= next) {
            const double frac = (next - phase) / step;
            const double t = (static_cast<double>(i) + frac) / rate_hz;
            beats.push_back({t, 60.0 / hr_bpm[i]});
            next += 1.0;
        }
        phase += step;
    }
    return beats;
}

struct PulseTrain {
    signals::Waveform ppg;
    features::BeatSeries truth;  // located on the noise-free signal
};

namespace detail {

inline features::BeatSeries true_beats(std::span<const double> clean, const std::vector<Beat>& beats, double rate_hz) {
    features::BeatSeries b;
    const std::size_t n = clean.size();
    for (const auto& beat : beats) {
        const double c = beat.center_s * rate_hz;
        if (c < 0.0 || c > static_cast<double>(n - 1)) continue;
        const double half = 0.1 * beat.period_s * rate_hz;
        const auto lo = static_cast<std::size_t>(std::max(0.0, std::floor(c - half)));
        const auto hi = std::min(n - 1, static_cast<std::size_t>(std::ceil(c + half)));
        const auto it = std::max_element(clean.begin() + static_cast<std::ptrdiff_t>(lo),
                                         clean.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
        b.peaks.push_back(static_cast<std::size_t>(it - clean.begin()));
    }
    std::size_t from = 0;
    for (std::size_t p : b.peaks) {
        const auto it = std::min_element(clean.begin() + static_cast<std::ptrdiff_t>(from),
                                         clean.begin() + static_cast<std::ptrdiff_t>(p) + 1);
        b.feet.push_back(static_cast<std::size_t>(it - clean.begin()));
        from = p;
    }
    return b;
}

inline void add_noise(std::vector<double>& x, double noise_std, std::uint64_t seed) {
    if (noise_std <= 0.0) return;
    Rng rng(seed);
    for (double& v : x) v += rng.normal(0.0, noise_std);
}

}  // namespace detail

/// Constant-rate pulse train with seeded white noise and its true beats.
inline PulseTrain gen_ppg(double hr_bpm, double duration_s, double rate_hz, double noise_std, std::uint64_t seed) {
    require(hr_bpm >= 40.0 && hr_bpm <= 180.0, ErrorKind::InvalidArgument, "heart rate outside [40, 180] bpm");
    require(duration_s > 0.0 && rate_hz > 0.0 && noise_std >= 0.0, ErrorKind::InvalidArgument, "bad pulse parameters");
    const auto n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
    const double period = 60.0 / hr_bpm;
    std::vector<Beat> beats;
    for (int k = -2; (k + kFirstBeat) * period < duration_s + period; ++k) beats.push_back({(k + kFirstBeat) * period, period});
    auto x = render(beats, n, rate_hz);
    auto truth = detail::true_beats(x, beats, rate_hz);
    detail::add_noise(x, noise_std, seed);
    return {signals::Waveform(std::move(x), rate_hz, signals::Channel::PPG), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Datasets

enum class Task { HrPredictable, RandomLabel, DriftingLabel, SubspaceVectors };

inline const char* to_string(Task t) {
    switch (t) {
        case Task::HrPredictable: return "hr";
        case Task::RandomLabel: return "random";
        case Task::DriftingLabel: return "drift";
        case Task::SubspaceVectors: return "subspace";
    }
    return "?";
}

inline Task parse_task(const std::string& s) {
    if (s == "hr") return Task::HrPredictable;
    if (s == "random") return Task::RandomLabel;
    if (s == "drift") return Task::DriftingLabel;
    if (s == "subspace") return Task::SubspaceVectors;
    throw Error(ErrorKind::InvalidArgument, "unknown synth task '" + s + "' (hr|random|drift|subspace)");
}

struct SynthSpec {
    std::size_t n_patients = 20;
    std::size_t records_per_patient = 3;
    double duration_s = 360.0;
    double rate_hz = 125.0;
    double hr_lo = 60.0;
    double hr_hi = 100.0;
    double noise_std = 0.02;
    Task task = Task::HrPredictable;
    std::uint64_t seed = 7;

    double hr_swing_bpm = 3.0;      // slow sinusoidal heart-rate variation
    double hr_swing_period_s = 90.0;
    double record_gap_s = 86400.0;  // record r starts at r * gap on the dataset clock
    double label_block_s = 2.0;     // RandomLabel: one independent draw per block
    double sbp_mean = 120.0;
    double sbp_sd = 20.0;
    double drift_per_bucket = 1.0;  // DriftingLabel: label change per record_gap_s

    void validate() const {
        require(n_patients >= 1 && records_per_patient >= 1, ErrorKind::InvalidArgument, "need patients and records");
        require(hr_lo >= 40.0 && hr_hi <= 180.0 && hr_lo <= hr_hi, ErrorKind::InvalidArgument,
                "heart-rate range must lie within [40, 180] bpm");
        require(hr_lo - hr_swing_bpm >= 40.0 && hr_hi + hr_swing_bpm <= 180.0, ErrorKind::InvalidArgument,
                "heart-rate swing leaves [40, 180] bpm");
        require(noise_std >= 0.0 && duration_s > 0.0 && rate_hz > 0.0 && label_block_s > 0.0,
                ErrorKind::InvalidArgument, "bad synthetic parameters");
    }
};

inline std::string patient_name(std::size_t p) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%03zu", p);
    return buf;
}

inline std::string record_name(std::size_t p, std::size_t r) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "p%03zu_r%02zu", p, r);
    return buf;
}

/// Synthetic cohort. Every record carries an "hr" label track (the true
/// instantaneous rate); RandomLabel adds an "sbp" track of independent
/// Gaussian draws per block, DriftingLabel an "sbp" track equal to a patient
/// constant plus a linear drift on the dataset clock. The PPG depends only
/// on (seed, patient, record), never on the task.
inline signals::Dataset gen_dataset(const SynthSpec& spec) {
    spec.validate();
    require(spec.task != Task::SubspaceVectors, ErrorKind::InvalidArgument,
            "subspace vectors are not a waveform dataset; use gen_subspace_vectors");
    signals::Dataset ds;
    ds.rate_hz = spec.rate_hz;
    const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.rate_hz));
    for (std::size_t p = 0; p < spec.n_patients; ++p) {
        const std::string pid = patient_name(p);
        Rng meta(derive_seed(spec.seed, p, 0xa9e));
        signals::PatientMeta pm;
        pm.age = std::round(meta.uniform(25.0, 75.0));
        pm.weight = std::round(meta.uniform(55.0, 100.0) * 10.0) / 10.0;
        pm.height = std::round(meta.uniform(155.0, 195.0));
        ds.patients[pid] = pm;
        Rng label_rng(derive_seed(spec.seed, p, 0x5b9));
        const double patient_sbp = label_rng.normal(spec.sbp_mean, 15.0);

        for (std::size_t r = 0; r < spec.records_per_patient; ++r) {
            Rng rng(derive_seed(spec.seed, p, r, 0x99));
            const double base = rng.uniform(spec.hr_lo, spec.hr_hi);
            const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
            std::vector<double> hr(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / spec.rate_hz;
                hr[i] = base + spec.hr_swing_bpm * std::sin(2.0 * std::numbers::pi * t / spec.hr_swing_period_s + phi);
            }
            auto x = render(beats_from_rate(hr, spec.rate_hz), n, spec.rate_hz);
            detail::add_noise(x, spec.noise_std, derive_seed(spec.seed, p, r, 0x015e));

            signals::Record rec;
            rec.record_id = record_name(p, r);
            rec.patient_id = pid;
            rec.start_time = static_cast<double>(r) * spec.record_gap_s;
            if (r == 0) rec.tags.push_back("rest");
            rec.waveforms.emplace(signals::Channel::PPG, signals::Waveform(std::move(x), spec.rate_hz, signals::Channel::PPG));
            rec.label_tracks["hr"] = hr;

            if (spec.task == Task::RandomLabel) {
                Rng lr(derive_seed(spec.seed, p, r, 0x1abe1));
                const auto block = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.label_block_s * spec.rate_hz)));
                std::vector<double> sbp(n);
                double current = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i % block == 0) current = lr.normal(spec.sbp_mean, spec.sbp_sd);
                    sbp[i] = current;
                }
                rec.label_tracks["sbp"] = std::move(sbp);
            } else if (spec.task == Task::DriftingLabel) {
                std::vector<double> sbp(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double clock = *rec.start_time + static_cast<double>(i) / spec.rate_hz;
                    sbp[i] = patient_sbp + spec.drift_per_bucket * clock / spec.record_gap_s;
                }
                rec.label_tracks["sbp"] = std::move(sbp);
            }
            ds.records.push_back(std::move(rec));
        }
    }
    return ds;
}

/// `count` vectors of length `dim` spanning a random `rank`-dimensional
/// subspace whose basis vectors have zero mean, scaled so the average
/// squared entry is about 1.
inline std::vector<std::vector<double>> gen_subspace_vectors(std::size_t count, std::size_t dim, std::size_t rank,
                                                             std::uint64_t seed) {
    require(rank >= 1 && rank < dim, ErrorKind::InvalidArgument, "subspace rank must lie in [1, dim)");
    Rng rng(derive_seed(seed, 0x5ab5));
    std::vector<std::vector<double>> basis;
    while (basis.size() < rank) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.normal();
        const double m = mean(v);
        for (double& x : v) x -= m;
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) dot += v[i] * b[i];
            for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * b[i];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-8) continue;
        for (double& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    const double scale = std::sqrt(static_cast<double>(dim) / static_cast<double>(rank));
    std::vector<std::vector<double>> out(count, std::vector<double>(dim, 0.0));
    for (auto& v : out)
        for (const auto& b : basis) {
            const double c = rng.normal(0.0, scale);
            for (std::size_t i = 0; i < dim; ++i) v[i] += c * b[i];
        }
    return out;
}

}  // namespace pulseaudit::synth
