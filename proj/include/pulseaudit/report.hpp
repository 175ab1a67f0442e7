#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulseaudit/calib.hpp"
#include "pulseaudit/mi.hpp"
#include "pulseaudit/mvm.hpp"
#include "pulseaudit/splits.hpp"

namespace pulseaudit::report {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Provenance of one scanned window, for serialized examples.
struct WindowRef {
    std::string patient_id;
    std::string record_id;
    std::size_t start = 0;
};

inline json ref_json(const WindowRef& r) {
    return {{"patient_id", r.patient_id}, {"record_id", r.record_id}, {"start_index", r.start}};
}

inline json histogram_json(const mvm::Histogram& h) {
    return {{"bin_width", h.bin_width}, {"edges", h.edges}, {"counts", h.counts}};
}

struct MvmRun {
    mvm::MvmReport report;
    std::vector<WindowRef> refs;  // parallel to the scanned windows
    std::optional<mvm::Calibration> calibration;
    std::size_t max_examples = 10;
};

inline json mvm_json(const MvmRun& run) {
    const auto& r = run.report;
    const auto& c = r.config;
    json j;
    j["kind"] = "mvm";
    j["schema"] = kSchemaVersion;
    j["label"] = r.label;
    j["config"] = {{"t_i", c.t_i},
                   {"t_i_source", run.calibration ? "auto" : "fixed"},
                   {"t_o", c.t_o},
                   {"window_length_s", c.window_length_s},
                   {"max_lag_s", c.max_lag_s},
                   {"scope", mvm::to_string(c.scope)},
                   {"distance_normalization", mvm::to_string(c.norm)},
                   {"prune", c.prune}};
    j["total_windows"] = r.total_windows;
    j["matched_windows"] = r.matched_windows;
    j["match_rate"] = r.match_rate;
    j["match_pairs"] = r.matches.size();
    j["pairs"] = {{"in_scope", r.pairs_in_scope},
                  {"label_pruned", r.pairs_label_pruned},
                  {"bound_pruned", r.pairs_bound_pruned},
                  {"evaluated", r.pairs_evaluated}};
    json ex = json::array();
    for (std::size_t k = 0; k < r.matches.size() && k < run.max_examples; ++k) {
        const auto& m = r.matches[k];
        ex.push_back({{"a", ref_json(run.refs[m.i])},
                      {"b", ref_json(run.refs[m.j])},
                      {"input_distance", m.input_distance},
                      {"label_gap", m.label_gap},
                      {"lag", m.lag}});
    }
    j["examples"] = ex;
    if (run.calibration) {
        const auto& cal = *run.calibration;
        j["threshold"] = {{"percentile", cal.percentile},
                          {"value", cal.threshold},
                          {"pairs", cal.distances.size()},
                          {"histogram", histogram_json(cal.histogram)}};
    } else {
        j["threshold"] = nullptr;
    }
    return j;
}

inline json entropy_json(const mi::EntropyEstimate& e) {
    json j = {{"mode", e.mode == mi::EntropyMode::Histogram ? "hist" : "knn"},
              {"bits", e.bits},
              {"negative", e.negative}};
    if (e.mode == mi::EntropyMode::Histogram) {
        j["bin_width"] = e.bin_width;
        j["occupied_bins"] = e.occupied_bins;
    } else {
        j["bin_width"] = nullptr;
        j["occupied_bins"] = nullptr;
    }
    return j;
}

struct MiRun {
    std::string target;
    std::size_t k = 3;
    std::size_t rows = 0;
    std::size_t dropped_rows = 0;
    mi::EntropyEstimate entropy;
    std::vector<std::pair<std::string, mi::MiEstimate>> per_feature;
    std::vector<std::string> combined_features;
    mi::MiEstimate combined;
    std::vector<mi::BootstrapPoint> bootstrap;  // empty when not requested
};

inline json mi_json(const MiRun& run) {
    json j;
    j["kind"] = "mi";
    j["schema"] = kSchemaVersion;
    j["target"] = run.target;
    j["k"] = run.k;
    j["n"] = run.rows;
    j["dropped_rows"] = run.dropped_rows;
    j["entropy"] = entropy_json(run.entropy);
    std::vector<std::string> warnings = run.entropy.warnings;
    auto fraction = [&](double bits) -> json {
        if (!(run.entropy.bits > 0.0)) return nullptr;
        return mi::info_fraction(bits, run.entropy.bits);
    };
    json feats = json::array();
    for (const auto& [name, est] : run.per_feature) {
        feats.push_back({{"name", name},
                         {"mi_bits", est.mi_bits},
                         {"raw_mi_bits", est.raw_mi_bits},
                         {"info_fraction", fraction(est.mi_bits)}});
        for (const auto& w : est.warnings) warnings.push_back(name + ": " + w);
    }
    j["features"] = feats;
    const bool exceeds = run.combined.mi_bits > run.entropy.bits + mi::kEntropyTolerance;
    j["combined"] = {{"features", run.combined_features},
                     {"mi_bits", run.combined.mi_bits},
                     {"raw_mi_bits", run.combined.raw_mi_bits},
                     {"info_fraction", fraction(run.combined.mi_bits)},
                     {"exceeds_entropy", exceeds}};
    for (const auto& w : run.combined.warnings) warnings.push_back("combined: " + w);
    if (exceeds) warnings.push_back("combined: MI exceeds target entropy beyond tolerance");
    j["warnings"] = warnings;
    if (run.bootstrap.empty()) {
        j["bootstrap"] = nullptr;
    } else {
        json b = json::array();
        for (const auto& p : run.bootstrap)
            b.push_back({{"fraction", p.fraction},
                         {"sample_size", p.sample_size},
                         {"mean", p.mean},
                         {"std", p.std},
                         {"runs", p.runs}});
        j["bootstrap"] = b;
    }
    return j;
}

inline json leakage_json(const splits::SplitAssignment& a, const splits::LeakageReport& r) {
    json j;
    j["kind"] = "leakage";
    j["schema"] = kSchemaVersion;
    j["train_windows"] = r.train_windows;
    j["test_windows"] = r.test_windows;
    json pairs = json::array();
    std::size_t shared = 0;
    for (const auto& p : r.data_overlap) {
        const auto& tr = a.windows[p.train];
        const auto& te = a.windows[p.test];
        shared += p.shared_samples;
        pairs.push_back({{"record_id", tr.record_id},
                         {"train", {{"start_index", tr.start}, {"length", tr.length}}},
                         {"test", {{"start_index", te.start}, {"length", te.length}}},
                         {"shared_samples", p.shared_samples}});
    }
    j["data_overlap"] = {{"verdict", r.data_clean() ? "clean" : "contaminated"},
                         {"pair_count", r.data_overlap.size()},
                         {"shared_samples_total", shared},
                         {"pairs", pairs}};
    j["domain_overlap"] = {{"verdict", r.domain_clean() ? "clean" : "contaminated"},
                           {"patients", r.domain_overlap_patients}};
    return j;
}

inline json eval_json(const calib::EvalResult& e) {
    return {{"bias", e.bias}, {"sd", e.sd}, {"mae", e.mae}, {"n", e.n}};
}

inline json aami_json(const calib::AamiResult& a) {
    return {{"bias_ok", a.bias_ok},         {"sd_ok", a.sd_ok},         {"subjects_ok", a.subjects_ok},
            {"high_tail_ok", a.high_tail_ok}, {"low_tail_ok", a.low_tail_ok}, {"cohort_ok", a.cohort_ok},
            {"compliant", a.compliant}};
}

inline json bhs_json(const calib::BhsResult& b) {
    return {{"pct_within_5", b.pct5}, {"pct_within_10", b.pct10}, {"pct_within_15", b.pct15},
            {"grade", calib::to_string(b.grade)}};
}

inline json calib_json(const calib::CalibOptions& opt, const calib::CalibOutcome& o) {
    json j;
    j["kind"] = "calibration";
    j["schema"] = kSchemaVersion;
    j["label"] = opt.label;
    j["method"] = opt.method == calib::Method::None ? "none" : opt.method == calib::Method::Naive ? "naive" : "offset";
    j["predictor"] = opt.predictor == calib::PredictorKind::Mean ? "mean" : "linear";
    j["features"] = opt.features;
    j["scope"] = opt.scope == calib::CalibScope::Record ? "record" : "patient";
    j["groups"] = o.groups;
    j["calibration_windows_excluded"] = o.calibration_windows_excluded;
    j["eval"] = eval_json(o.eval);
    j["cohort"] = {{"subjects", o.cohort.subjects}, {"above_180", o.cohort.above_180}, {"below_100", o.cohort.below_100}};
    j["aami"] = aami_json(o.aami);
    j["bhs"] = bhs_json(o.bhs);
    if (o.drift.empty()) {
        j["drift"] = nullptr;
    } else {
        json d = json::array();
        for (const auto& p : o.drift) {
            json e = eval_json(p.eval);
            e["bucket"] = p.bucket;
            e["bucket_start_s"] = p.bucket_start_s;
            d.push_back(e);
        }
        j["drift"] = d;
        j["bucket_s"] = opt.bucket_s;
    }
    return j;
}

inline void write_json(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::MissingFile, path);
    out << j.dump(2) << '\n';
}

inline json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::MissingArtifact, path + " not found");
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedInput, path + ": " + e.what());
    }
}

}  // namespace pulseaudit::report
