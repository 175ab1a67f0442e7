#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pulseaudit/common.hpp"
#include "pulseaudit/csv.hpp"
#include "pulseaudit/dsp.hpp"

namespace pulseaudit::signals {

enum class Channel { PPG, ABP, ECG, TONOMETER };

inline constexpr std::array<Channel, 4> kAllChannels{Channel::PPG, Channel::ABP, Channel::ECG,
                                                     Channel::TONOMETER};

inline std::string channel_name(Channel c) {
    switch (c) {
        case Channel::PPG: return "ppg";
        case Channel::ABP: return "abp";
        case Channel::ECG: return "ecg";
        case Channel::TONOMETER: return "tonometer";
    }
    return "?";
}

inline std::optional<Channel> parse_channel(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (Channel c : kAllChannels)
        if (channel_name(c) == lower) return c;
    return std::nullopt;
}

/// A uniformly sampled, finite, non-empty signal.
class Waveform {
public:
    Waveform(std::vector<double> samples, double rate_hz, Channel channel)
        : samples_(std::move(samples)), rate_hz_(rate_hz), channel_(channel) {
        require(!samples_.empty(), ErrorKind::InvalidArgument, "waveform has no samples");
        require(rate_hz_ > 0.0 && std::isfinite(rate_hz_), ErrorKind::InvalidArgument,
                "waveform rate must be positive");
        require(all_finite(samples_), ErrorKind::InvalidArgument, "waveform has non-finite samples");
    }

    std::span<const double> samples() const { return samples_; }
    double rate_hz() const { return rate_hz_; }
    Channel channel() const { return channel_; }
    std::size_t size() const { return samples_.size(); }
    double duration_s() const { return static_cast<double>(samples_.size()) / rate_hz_; }

    Waveform slice(std::size_t start, std::size_t length) const {
        require(start + length <= samples_.size() && length > 0, ErrorKind::InvalidArgument,
                "slice outside waveform");
        return Waveform({samples_.begin() + static_cast<std::ptrdiff_t>(start),
                         samples_.begin() + static_cast<std::ptrdiff_t>(start + length)},
                        rate_hz_, channel_);
    }

    Waveform with_samples(std::vector<double> samples) const {
        return Waveform(std::move(samples), rate_hz_, channel_);
    }

private:
    std::vector<double> samples_;
    double rate_hz_;
    Channel channel_;
};

struct Record {
    std::string record_id;
    std::string patient_id;
    std::map<Channel, Waveform> waveforms;
    /// Per-sample label series (e.g. "hr", "sbp"); NaN marks unknown samples.
    std::map<std::string, std::vector<double>> label_tracks;
    /// Seconds on a dataset-wide clock; drives elapsed-time analyses.
    std::optional<double> start_time;
    std::vector<std::string> tags;

    bool has(Channel c) const { return waveforms.count(c) > 0; }

    const Waveform& channel(Channel c) const {
        auto it = waveforms.find(c);
        require(it != waveforms.end(), ErrorKind::InvalidArgument,
                "record " + record_id + " has no " + channel_name(c) + " channel");
        return it->second;
    }

    std::size_t length() const { return waveforms.empty() ? 0 : waveforms.begin()->second.size(); }
    double rate_hz() const { return waveforms.empty() ? 0.0 : waveforms.begin()->second.rate_hz(); }
};

struct PatientMeta {
    std::optional<double> age;     // years
    std::optional<double> weight;  // kg
    std::optional<double> height;  // cm
};

struct Dataset {
    double rate_hz = 0.0;
    std::vector<Record> records;
    std::map<std::string, PatientMeta> patients;

    const Record& record(std::string_view id) const {
        for (const auto& r : records)
            if (r.record_id == id) return r;
        throw Error(ErrorKind::InvalidArgument, "unknown record " + std::string(id));
    }
};

struct WindowSpec {
    double length_s = 10.0;
    double stride_s = 5.0;

    std::size_t length_samples(double rate_hz) const {
        return static_cast<std::size_t>(std::llround(length_s * rate_hz));
    }
    std::size_t stride_samples(double rate_hz) const {
        return static_cast<std::size_t>(std::llround(stride_s * rate_hz));
    }
    void validate(double rate_hz) const {
        require(length_s > 0.0 && stride_s > 0.0, ErrorKind::InvalidArgument,
                "window length and stride must be positive");
        require(length_s * rate_hz >= 2.0, ErrorKind::InvalidArgument, "window shorter than 2 samples");
        require(stride_samples(rate_hz) >= 1, ErrorKind::InvalidArgument, "window stride below one sample");
    }
};

struct Window {
    std::string patient_id;
    std::string record_id;
    std::size_t start_index = 0;
    std::map<Channel, Waveform> channels;
    std::map<std::string, double> labels;
    /// Seconds since the dataset clock origin, when the record has a start time.
    std::optional<double> elapsed_s;

    const Waveform& signal() const {
        auto it = channels.find(Channel::PPG);
        require(it != channels.end(), ErrorKind::InvalidArgument,
                "window " + record_id + "@" + std::to_string(start_index) + " has no ppg");
        return it->second;
    }
    std::size_t length() const { return channels.empty() ? 0 : channels.begin()->second.size(); }
    double rate_hz() const { return channels.empty() ? 0.0 : channels.begin()->second.rate_hz(); }

    std::optional<double> label(const std::string& name) const {
        auto it = labels.find(name);
        if (it == labels.end()) return std::nullopt;
        return it->second;
    }
};

// ---------------------------------------------------------------------------
// Preprocessing

/// Zero-phase band-pass: 4th-order Butterworth high-pass at low_hz cascaded
/// with a 4th-order low-pass at high_hz, run forward and backward.
inline Waveform bandpass(const Waveform& w, double low_hz, double high_hz) {
    require(low_hz > 0.0 && low_hz < high_hz && high_hz < w.rate_hz() / 2.0, ErrorKind::InvalidArgument,
            "band edges must satisfy 0 < low < high < rate/2");
    auto sos = dsp::butter_highpass(4, low_hz, w.rate_hz());
    const auto lp = dsp::butter_lowpass(4, high_hz, w.rate_hz());
    sos.insert(sos.end(), lp.begin(), lp.end());
    if (w.size() < 2) return w;
    return w.with_samples(dsp::sosfiltfilt(sos, w.samples()));
}

inline constexpr double kMinBeatPeriodS = 0.33;  // 180 bpm
inline constexpr double kMaxBeatPeriodS = 1.5;   // 40 bpm

/// Peak of the normalized (unbiased, mean-removed) autocorrelation over lags
/// spanning the 40-180 bpm beat range, clamped to [0, 1]. Lags beyond half
/// the window are not searched, so windows shorter than two beat periods
/// score 0.
inline double autocorr_quality(std::span<const double> x, double rate_hz) {
    const std::size_t n = x.size();
    if (n < 4) return 0.0;
    const double m = mean(x);
    double var = 0.0;
    for (double v : x) var += (v - m) * (v - m);
    var /= static_cast<double>(n);
    if (!(var > 0.0)) return 0.0;

    const auto lo = static_cast<std::size_t>(std::ceil(kMinBeatPeriodS * rate_hz));
    const std::size_t hi = std::min(static_cast<std::size_t>(std::floor(kMaxBeatPeriodS * rate_hz)), n / 2);
    if (lo == 0 || lo > hi) return 0.0;

    std::vector<double> c(x.begin(), x.end());
    for (double& v : c) v -= m;
    double best = 0.0;
    for (std::size_t lag = lo; lag <= hi; ++lag) {
        double acc = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) acc += c[i] * c[i + lag];
        const double r = acc / static_cast<double>(n - lag) / var;
        best = std::max(best, r);
    }
    return std::clamp(best, 0.0, 1.0);
}

inline double autocorr_quality(const Waveform& w) { return autocorr_quality(w.samples(), w.rate_hz()); }

// ---------------------------------------------------------------------------
// Labels

/// Median of the per-beat maxima of an arterial pressure window.
inline double extract_sbp(const Waveform& abp) {
    const auto xs = abp.samples();
    const double sd = pstdev(xs);
    require(sd > 0.0, ErrorKind::Unlabelable, "flat arterial pressure window");
    const auto distance = static_cast<std::size_t>(std::llround(kMinBeatPeriodS * abp.rate_hz()));
    const auto peaks = dsp::find_peaks(xs, 0.3 * sd, distance);
    require(!peaks.empty(), ErrorKind::Unlabelable, "no beats in arterial pressure window");
    std::vector<double> systolic;
    systolic.reserve(peaks.size());
    for (std::size_t p : peaks) systolic.push_back(xs[p]);
    return median(std::move(systolic));
}

/// Labels for the sample range [start, start+length) of a record. Label
/// tracks reduce to the median of their finite samples; "sbp" falls back to
/// the arterial waveform when no track provides it. Unlabelable quantities
/// are left out rather than raised.
inline std::map<std::string, double> window_labels(const Record& r, std::size_t start, std::size_t length) {
    std::map<std::string, double> labels;
    for (const auto& [name, track] : r.label_tracks) {
        std::vector<double> vals;
        for (std::size_t i = start; i < start + length && i < track.size(); ++i)
            if (std::isfinite(track[i])) vals.push_back(track[i]);
        if (!vals.empty()) labels[name] = median(std::move(vals));
    }
    if (!labels.count("sbp") && r.has(Channel::ABP)) {
        try {
            labels["sbp"] = extract_sbp(r.channel(Channel::ABP).slice(start, length));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Unlabelable) throw;
        }
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Windowing

/// Windows at offsets 0, stride, 2*stride, ... fully inside the record.
inline std::vector<Window> segment(const Record& r, const WindowSpec& spec) {
    std::vector<Window> out;
    if (r.waveforms.empty()) return out;
    const double rate = r.rate_hz();
    spec.validate(rate);
    const std::size_t len = spec.length_samples(rate);
    const std::size_t stride = spec.stride_samples(rate);
    const std::size_t total = r.length();
    if (total < len) return out;
    for (std::size_t start = 0; start + len <= total; start += stride) {
        Window w;
        w.patient_id = r.patient_id;
        w.record_id = r.record_id;
        w.start_index = start;
        for (const auto& [c, wf] : r.waveforms) w.channels.emplace(c, wf.slice(start, len));
        w.labels = window_labels(r, start, len);
        if (r.start_time) w.elapsed_s = *r.start_time + static_cast<double>(start) / rate;
        out.push_back(std::move(w));
    }
    return out;
}

inline std::size_t window_count(std::size_t total, std::size_t len, std::size_t stride) {
    return total < len ? 0 : (total - len) / stride + 1;
}

/// Band-passes the PPG channel of every record (other channels untouched).
inline Dataset bandpass_dataset(Dataset ds, double low_hz = 0.5, double high_hz = 16.0) {
    for (auto& r : ds.records) {
        auto it = r.waveforms.find(Channel::PPG);
        if (it != r.waveforms.end()) it->second = bandpass(it->second, low_hz, high_hz);
    }
    return ds;
}

struct FilterResult {
    std::vector<Window> windows;
    double retained_fraction = 0.0;
    std::size_t total = 0;
};

/// Keeps the windows whose PPG autocorrelation quality reaches `threshold`.
/// An empty dataset reports a retained fraction of 1 (nothing discarded).
inline FilterResult filter_dataset(const Dataset& ds, const WindowSpec& spec, double threshold) {
    require(threshold >= 0.0 && threshold <= 1.0, ErrorKind::InvalidArgument, "threshold outside [0,1]");
    FilterResult result;
    for (const auto& r : ds.records) {
        for (auto& w : segment(r, spec)) {
            ++result.total;
            if (autocorr_quality(w.signal()) >= threshold) result.windows.push_back(std::move(w));
        }
    }
    result.retained_fraction =
        result.total == 0 ? 1.0 : static_cast<double>(result.windows.size()) / static_cast<double>(result.total);
    return result;
}

// ---------------------------------------------------------------------------
// Manifest + CSV ingestion

namespace detail {

inline std::optional<double> positive_field(const nlohmann::json& j, const char* key, const std::string& who) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    require(j[key].is_number(), ErrorKind::MalformedInput, who + ": '" + key + "' must be numeric");
    const double v = j[key].get<double>();
    require(v > 0.0, ErrorKind::MalformedInput, who + ": '" + key + "' must be positive");
    return v;
}

struct ChannelDecl {
    Channel channel;
    double rate_hz;
};

inline std::vector<ChannelDecl> parse_channels(const nlohmann::json& rec, double default_rate,
                                               const std::string& record_id) {
    require(rec.contains("channels") && rec["channels"].is_array() && !rec["channels"].empty(),
            ErrorKind::MalformedInput, "record " + record_id + ": 'channels' must be a non-empty array");
    std::vector<ChannelDecl> out;
    for (const auto& c : rec["channels"]) {
        std::string name;
        double rate = default_rate;
        if (c.is_string()) {
            name = c.get<std::string>();
        } else if (c.is_object() && c.contains("name") && c["name"].is_string()) {
            name = c["name"].get<std::string>();
            if (c.contains("rate_hz")) rate = c["rate_hz"].get<double>();
        } else {
            throw Error(ErrorKind::MalformedInput, "record " + record_id + ": bad channel entry");
        }
        const auto ch = parse_channel(name);
        require(ch.has_value(), ErrorKind::MalformedInput, "record " + record_id + ": unknown channel '" + name + "'");
        out.push_back({*ch, rate});
    }
    for (const auto& d : out)
        require(d.rate_hz == out.front().rate_hz, ErrorKind::RateMismatch,
                "record " + record_id + ": channels declare different sample rates (" +
                    channel_name(out.front().channel) + " " + csv::format_double(out.front().rate_hz) + " Hz vs " +
                    channel_name(d.channel) + " " + csv::format_double(d.rate_hz) + " Hz)");
    return out;
}

inline Record read_record_csv(const std::filesystem::path& file, const std::string& record_id,
                              const std::string& patient_id, const std::vector<ChannelDecl>& channels,
                              const std::vector<std::string>& label_names) {
    require(std::filesystem::exists(file), ErrorKind::MissingFile,
            "record " + record_id + ": " + file.string() + " not found");
    const auto lines = csv::read_lines(file.string());
    require(!lines.empty(), ErrorKind::MalformedInput, "record " + record_id + ": empty CSV (header required)");
    const auto header = csv::split(lines.front());

    auto column_of = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i) {
            std::string h(header[i]);
            std::transform(h.begin(), h.end(), h.begin(), [](unsigned char c) { return std::tolower(c); });
            if (h == name) return i;
        }
        throw Error(ErrorKind::MalformedInput, "record " + record_id + ": CSV lacks column '" + name + "'");
    };
    const std::size_t t_col = column_of("t");
    std::vector<std::size_t> ch_cols;
    for (const auto& d : channels) ch_cols.push_back(column_of(channel_name(d.channel)));
    std::vector<std::size_t> label_cols;
    for (const auto& l : label_names) label_cols.push_back(column_of(l));

    const double rate = channels.front().rate_hz;
    std::vector<double> t;
    std::vector<std::vector<double>> ch_data(channels.size());
    std::vector<std::vector<double>> label_data(label_names.size());
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (csv::trim(lines[ln]).empty()) continue;
        const auto fields = csv::split(lines[ln]);
        const std::string where = "record " + record_id + ": line " + std::to_string(ln + 1);
        require(fields.size() == header.size(), ErrorKind::MalformedInput,
                where + " has " + std::to_string(fields.size()) + " fields, expected " +
                    std::to_string(header.size()));
        auto number = [&](std::size_t col, bool allow_empty) -> double {
            if (allow_empty && fields[col].empty()) return std::numeric_limits<double>::quiet_NaN();
            const auto v = csv::parse_double(fields[col]);
            require(v.has_value() && (allow_empty || std::isfinite(*v)), ErrorKind::MalformedInput,
                    where + ": bad value '" + std::string(fields[col]) + "' in column '" +
                        std::string(header[col]) + "'");
            return *v;
        };
        t.push_back(number(t_col, false));
        for (std::size_t c = 0; c < ch_cols.size(); ++c) ch_data[c].push_back(number(ch_cols[c], false));
        for (std::size_t c = 0; c < label_cols.size(); ++c) label_data[c].push_back(number(label_cols[c], true));
    }
    require(!t.empty(), ErrorKind::MalformedInput, "record " + record_id + ": no samples");
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double expected = t.front() + static_cast<double>(i) / rate;
        require(std::abs(t[i] - expected) <= 0.5 / rate, ErrorKind::RateMismatch,
                "record " + record_id + ": t column inconsistent with " + csv::format_double(rate) +
                    " Hz at sample " + std::to_string(i));
    }

    Record r;
    r.record_id = record_id;
    r.patient_id = patient_id;
    for (std::size_t c = 0; c < channels.size(); ++c)
        r.waveforms.emplace(channels[c].channel, Waveform(std::move(ch_data[c]), rate, channels[c].channel));
    for (std::size_t c = 0; c < label_names.size(); ++c) r.label_tracks[label_names[c]] = std::move(label_data[c]);
    return r;
}

}  // namespace detail

/// Loads a JSON manifest and the per-record CSV files it references.
/// Relative CSV paths resolve against the manifest's directory.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
    require(std::filesystem::exists(manifest_path), ErrorKind::MissingFile,
            "manifest " + manifest_path.string() + " not found");
    std::ifstream in(manifest_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedInput, "manifest " + manifest_path.string() + ": " + e.what());
    }
    const auto base = manifest_path.parent_path();

    Dataset ds;
    try {
        require(j.contains("rate_hz") && j["rate_hz"].is_number(), ErrorKind::MalformedInput,
                "manifest: 'rate_hz' missing");
        ds.rate_hz = j["rate_hz"].get<double>();
        require(ds.rate_hz > 0.0, ErrorKind::MalformedInput, "manifest: 'rate_hz' must be positive");
        require(j.contains("patients") && j["patients"].is_array(), ErrorKind::MalformedInput,
                "manifest: 'patients' must be an array");

        for (const auto& p : j["patients"]) {
            require(p.contains("id") && p["id"].is_string(), ErrorKind::MalformedInput, "manifest: patient without id");
            const std::string pid = p["id"].get<std::string>();
            require(!ds.patients.count(pid), ErrorKind::MalformedInput, "manifest: duplicate patient " + pid);
            PatientMeta meta;
            meta.age = detail::positive_field(p, "age", "patient " + pid);
            meta.weight = detail::positive_field(p, "weight", "patient " + pid);
            meta.height = detail::positive_field(p, "height", "patient " + pid);
            ds.patients[pid] = meta;

            if (!p.contains("records")) continue;
            for (const auto& rec : p["records"]) {
                require(rec.contains("id") && rec["id"].is_string(), ErrorKind::MalformedInput,
                        "patient " + pid + ": record without id");
                const std::string rid = rec["id"].get<std::string>();
                for (const auto& existing : ds.records)
                    require(existing.record_id != rid, ErrorKind::MalformedInput, "duplicate record id " + rid);
                require(rec.contains("file") && rec["file"].is_string(), ErrorKind::MalformedInput,
                        "record " + rid + ": 'file' missing");
                const double rate = rec.contains("rate_hz") ? rec["rate_hz"].get<double>() : ds.rate_hz;
                const auto channels = detail::parse_channels(rec, rate, rid);
                std::vector<std::string> labels;
                if (rec.contains("labels"))
                    for (const auto& l : rec["labels"]) labels.push_back(l.get<std::string>());
                Record r = detail::read_record_csv(base / rec["file"].get<std::string>(), rid, pid, channels, labels);
                if (rec.contains("start_time") && rec["start_time"].is_number())
                    r.start_time = rec["start_time"].get<double>();
                if (rec.contains("tags"))
                    for (const auto& t : rec["tags"]) r.tags.push_back(t.get<std::string>());
                ds.records.push_back(std::move(r));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedInput, "manifest " + manifest_path.string() + ": " + e.what());
    }
    return ds;
}

/// Writes `manifest.json` plus one `<record_id>.csv` per record into `dir`.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["rate_hz"] = ds.rate_hz;
    manifest["patients"] = nlohmann::json::array();

    for (const auto& [pid, meta] : ds.patients) {
        nlohmann::json p;
        p["id"] = pid;
        if (meta.age) p["age"] = *meta.age;
        if (meta.weight) p["weight"] = *meta.weight;
        if (meta.height) p["height"] = *meta.height;
        p["records"] = nlohmann::json::array();
        for (const auto& r : ds.records) {
            if (r.patient_id != pid) continue;
            nlohmann::json rec;
            rec["id"] = r.record_id;
            rec["file"] = r.record_id + ".csv";
            rec["channels"] = nlohmann::json::array();
            for (const auto& [c, w] : r.waveforms) rec["channels"].push_back(channel_name(c));
            if (!r.label_tracks.empty()) {
                rec["labels"] = nlohmann::json::array();
                for (const auto& [name, track] : r.label_tracks) rec["labels"].push_back(name);
            }
            if (r.start_time) rec["start_time"] = *r.start_time;
            if (!r.tags.empty()) rec["tags"] = r.tags;
            p["records"].push_back(rec);

            std::ofstream out(dir / (r.record_id + ".csv"), std::ios::binary);
            require(static_cast<bool>(out), ErrorKind::MissingFile, (dir / (r.record_id + ".csv")).string());
            out << "t";
            for (const auto& [c, w] : r.waveforms) out << ',' << channel_name(c);
            for (const auto& [name, track] : r.label_tracks) out << ',' << name;
            out << '\n';
            const std::size_t n = r.length();
            const double rate = r.rate_hz();
            std::string line;
            for (std::size_t i = 0; i < n; ++i) {
                line = csv::format_double(static_cast<double>(i) / rate);
                for (const auto& [c, w] : r.waveforms) {
                    line += ',';
                    line += csv::format_double(w.samples()[i]);
                }
                for (const auto& [name, track] : r.label_tracks) {
                    line += ',';
                    if (i < track.size() && std::isfinite(track[i])) line += csv::format_double(track[i]);
                }
                line += '\n';
                out << line;
            }
        }
        manifest["patients"].push_back(p);
    }
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << '\n';
}

/// Resolves a data argument that may name a manifest file or its directory.
inline std::filesystem::path manifest_path(const std::filesystem::path& data) {
    if (std::filesystem::is_directory(data)) return data / "manifest.json";
    return data;
}

}  // namespace pulseaudit::signals
