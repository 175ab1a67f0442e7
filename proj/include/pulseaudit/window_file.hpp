#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "pulseaudit/common.hpp"
#include "pulseaudit/signals.hpp"

namespace pulseaudit {

/// Fixed-length windows exchanged between preprocessing and the autoencoder.
///
/// Layout (little-endian): "PAWINDOW", u32 version, u32 label count, labels
/// as (u32 length, bytes), u64 window count, u64 window length, f64 rate,
/// then per window: patient and record strings, u64 start, f64 per label
/// (NaN when missing), f64 samples.
struct WindowSet {
    struct Item {
        std::string patient_id;
        std::string record_id;
        std::uint64_t start = 0;
        std::vector<double> labels;
        std::vector<double> samples;
    };

    double rate_hz = 0.0;
    std::uint64_t length = 0;
    std::vector<std::string> label_names;
    std::vector<Item> items;
};

inline constexpr char kWindowMagic[8] = {'P', 'A', 'W', 'I', 'N', 'D', 'O', 'W'};
inline constexpr std::uint32_t kWindowVersion = 1;

/// Packs the PPG of each window, z-normalized, with every label seen.
inline WindowSet pack_windows(std::span<const signals::Window> windows) {
    WindowSet s;
    if (windows.empty()) return s;
    std::set<std::string> names;
    for (const auto& w : windows)
        for (const auto& [k, v] : w.labels) names.insert(k);
    s.label_names.assign(names.begin(), names.end());
    s.rate_hz = windows.front().rate_hz();
    s.length = windows.front().length();
    for (const auto& w : windows) {
        require(w.length() == s.length, ErrorKind::LengthMismatch, "windows differ in length");
        WindowSet::Item it;
        it.patient_id = w.patient_id;
        it.record_id = w.record_id;
        it.start = w.start_index;
        for (const auto& n : s.label_names) {
            const auto v = w.label(n);
            it.labels.push_back(v ? *v : std::numeric_limits<double>::quiet_NaN());
        }
        it.samples = znormalize(w.signal().samples());
        s.items.push_back(std::move(it));
    }
    return s;
}

namespace detail {

template <typename T>
void put(std::ofstream& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(buf, sizeof(T));
}

inline void put_string(std::ofstream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
    char buf[sizeof(T)];
    in.read(buf, sizeof(T));
    require(static_cast<bool>(in), ErrorKind::MalformedInput, path + ": truncated window file");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

inline std::string get_string(std::ifstream& in, const std::string& path) {
    const auto n = get<std::uint32_t>(in, path);
    require(n < (1u << 20), ErrorKind::MalformedInput, path + ": implausible string length");
    std::string s(n, '\0');
    in.read(s.data(), n);
    require(static_cast<bool>(in), ErrorKind::MalformedInput, path + ": truncated window file");
    return s;
}

}  // namespace detail

inline void write_windows(const WindowSet& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::MissingFile, path);
    out.write(kWindowMagic, sizeof kWindowMagic);
    detail::put<std::uint32_t>(out, kWindowVersion);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.label_names.size()));
    for (const auto& n : s.label_names) detail::put_string(out, n);
    detail::put<std::uint64_t>(out, s.items.size());
    detail::put<std::uint64_t>(out, s.length);
    detail::put<double>(out, s.rate_hz);
    for (const auto& it : s.items) {
        detail::put_string(out, it.patient_id);
        detail::put_string(out, it.record_id);
        detail::put<std::uint64_t>(out, it.start);
        for (double v : it.labels) detail::put<double>(out, v);
        for (double v : it.samples) detail::put<double>(out, v);
    }
}

inline WindowSet read_windows(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::MissingFile, path);
    char magic[8];
    in.read(magic, sizeof magic);
    require(static_cast<bool>(in) && std::memcmp(magic, kWindowMagic, sizeof magic) == 0, ErrorKind::MalformedInput,
            path + ": not a window file");
    require(detail::get<std::uint32_t>(in, path) == kWindowVersion, ErrorKind::MalformedInput,
            path + ": unsupported window file version");
    WindowSet s;
    const auto labels = detail::get<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < labels; ++i) s.label_names.push_back(detail::get_string(in, path));
    const auto count = detail::get<std::uint64_t>(in, path);
    s.length = detail::get<std::uint64_t>(in, path);
    s.rate_hz = detail::get<double>(in, path);
    require(s.length > 0 && s.length < (1u << 24), ErrorKind::MalformedInput, path + ": implausible window length");
    for (std::uint64_t k = 0; k < count; ++k) {
        WindowSet::Item it;
        it.patient_id = detail::get_string(in, path);
        it.record_id = detail::get_string(in, path);
        it.start = detail::get<std::uint64_t>(in, path);
        for (std::uint32_t i = 0; i < labels; ++i) it.labels.push_back(detail::get<double>(in, path));
        it.samples.resize(s.length);
        for (auto& v : it.samples) v = detail::get<double>(in, path);
        require(all_finite(it.samples), ErrorKind::MalformedInput,
                path + ": window " + it.record_id + "@" + std::to_string(it.start) + " has non-finite samples");
        s.items.push_back(std::move(it));
    }
    return s;
}

}  // namespace pulseaudit
