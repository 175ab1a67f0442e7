#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "pulseaudit/common.hpp"

namespace pulseaudit::dsp {

/// One second-order section, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2, a1, a2;

    double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

namespace detail {

// Butterworth section Q factors for an even order: 1 / (2 cos(theta_k)).
inline std::vector<double> butterworth_q(int order) {
    std::vector<double> qs;
    for (int k = 0; k < order / 2; ++k) {
        const double theta = std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order);
        qs.push_back(1.0 / (2.0 * std::cos(theta)));
    }
    return qs;
}

}  // namespace detail

/// Bilinear-transform Butterworth low-pass, cutoff prewarped so the -3 dB
/// point lands exactly on cutoff_hz. `order` must be even.
inline std::vector<Biquad> butter_lowpass(int order, double cutoff_hz, double rate_hz) {
    std::vector<Biquad> sos;
    const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
    for (double q : detail::butterworth_q(order)) {
        const double norm = 1.0 / (1.0 + k / q + k * k);
        const double b0 = k * k * norm;
        sos.push_back({b0, 2.0 * b0, b0, 2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm});
    }
    return sos;
}

inline std::vector<Biquad> butter_highpass(int order, double cutoff_hz, double rate_hz) {
    std::vector<Biquad> sos;
    const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
    for (double q : detail::butterworth_q(order)) {
        const double norm = 1.0 / (1.0 + k / q + k * k);
        sos.push_back({norm, -2.0 * norm, norm, 2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm});
    }
    return sos;
}

/// Transposed direct-form II cascade. `state` holds two values per section.
inline void sosfilt_inplace(std::span<const Biquad> sos, std::vector<double>& x,
                            std::vector<std::array<double, 2>> state) {
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const Biquad& f = sos[s];
        double z1 = state[s][0];
        double z2 = state[s][1];
        for (double& v : x) {
            const double in = v;
            const double out = f.b0 * in + z1;
            z1 = f.b1 * in - f.a1 * out + z2;
            z2 = f.b2 * in - f.a2 * out;
            v = out;
        }
    }
}

/// Per-section initial state for a step of height x0 already in steady state.
inline std::vector<std::array<double, 2>> steady_state(std::span<const Biquad> sos, double x0) {
    std::vector<std::array<double, 2>> zi(sos.size());
    double in = x0;
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const Biquad& f = sos[s];
        const double out = f.dc_gain() * in;
        const double z2 = f.b2 * in - f.a2 * out;
        const double z1 = f.b1 * in - f.a1 * out + z2;
        zi[s] = {z1, z2};
        in = out;
    }
    return zi;
}

/// Zero-phase forward-backward filtering with odd-symmetric edge extension
/// and steady-state initial conditions. The default pad length is three
/// times the filter's transfer-function order plus one, per section count.
inline std::vector<double> sosfiltfilt(std::span<const Biquad> sos, std::span<const double> x,
                                       std::size_t padlen = static_cast<std::size_t>(-1)) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    if (padlen == static_cast<std::size_t>(-1)) padlen = 3 * (2 * sos.size() + 1);
    padlen = std::min(padlen, n - 1);

    std::vector<double> ext;
    ext.reserve(n + 2 * padlen);
    for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    sosfilt_inplace(sos, ext, steady_state(sos, ext.front()));
    std::reverse(ext.begin(), ext.end());
    sosfilt_inplace(sos, ext, steady_state(sos, ext.front()));
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
            ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

// ---------------------------------------------------------------------------
// Peak finding

namespace detail {

// Local maxima; flat tops report their midpoint.
inline std::vector<std::size_t> local_maxima(std::span<const double> x) {
    std::vector<std::size_t> peaks;
    const std::size_t n = x.size();
    std::size_t i = 1;
    while (n >= 3 && i + 1 < n) {
        if (x[i - 1] < x[i]) {
            std::size_t ahead = i + 1;
            while (ahead + 1 < n && x[ahead] == x[i]) ++ahead;
            if (x[ahead] < x[i]) {
                peaks.push_back((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        ++i;
    }
    return peaks;
}

}  // namespace detail

/// Topographic prominence of x[peak]: height above the higher of the two
/// minima found while walking outwards until a strictly higher sample.
inline double prominence(std::span<const double> x, std::size_t peak) {
    const double h = x[peak];
    double left_min = h;
    for (std::size_t i = peak; i-- > 0;) {
        if (x[i] > h) break;
        left_min = std::min(left_min, x[i]);
    }
    double right_min = h;
    for (std::size_t i = peak + 1; i < x.size(); ++i) {
        if (x[i] > h) break;
        right_min = std::min(right_min, x[i]);
    }
    return h - std::max(left_min, right_min);
}

/// Peaks at least `min_distance` samples apart (higher peaks win), then
/// filtered to prominence >= min_prominence. Returned ascending.
inline std::vector<std::size_t> find_peaks(std::span<const double> x, double min_prominence,
                                           std::size_t min_distance) {
    std::vector<std::size_t> peaks = detail::local_maxima(x);
    if (min_distance > 1 && peaks.size() > 1) {
        std::vector<std::size_t> order(peaks.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return x[peaks[a]] > x[peaks[b]]; });
        std::vector<bool> keep(peaks.size(), true);
        for (std::size_t idx : order) {
            if (!keep[idx]) continue;
            for (std::size_t j = idx; j-- > 0 && peaks[idx] - peaks[j] < min_distance;) keep[j] = false;
            for (std::size_t j = idx + 1; j < peaks.size() && peaks[j] - peaks[idx] < min_distance; ++j)
                keep[j] = false;
        }
        std::vector<std::size_t> kept;
        for (std::size_t i = 0; i < peaks.size(); ++i)
            if (keep[i]) kept.push_back(peaks[i]);
        peaks = std::move(kept);
    }
    std::vector<std::size_t> out;
    for (std::size_t p : peaks)
        if (prominence(x, p) >= min_prominence) out.push_back(p);
    return out;
}

/// Central second difference scaled to units per second squared; endpoints 0.
inline std::vector<double> second_derivative(std::span<const double> x, double rate_hz) {
    std::vector<double> d(x.size(), 0.0);
    const double r2 = rate_hz * rate_hz;
    for (std::size_t i = 1; i + 1 < x.size(); ++i) d[i] = (x[i + 1] - 2.0 * x[i] + x[i - 1]) * r2;
    return d;
}

inline std::vector<double> first_derivative(std::span<const double> x, double rate_hz) {
    std::vector<double> d(x.size(), 0.0);
    for (std::size_t i = 1; i + 1 < x.size(); ++i) d[i] = (x[i + 1] - x[i - 1]) * 0.5 * rate_hz;
    return d;
}

}  // namespace pulseaudit::dsp
