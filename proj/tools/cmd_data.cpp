#include <filesystem>
#include <map>
#include <set>

#include "cli.hpp"
#include "pulseaudit/features.hpp"
#include "pulseaudit/report.hpp"
#include "pulseaudit/signals.hpp"
#include "pulseaudit/synth.hpp"
#include "pulseaudit/table.hpp"
#include "pulseaudit/window_file.hpp"

namespace pulseaudit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SynthArgs {
    std::string task = "hr";
    synth::SynthSpec spec;
    std::size_t count = 512;
    std::size_t dim = 32;
    std::size_t rank = 3;
    std::string out;
};

void run_synth(const Globals& g, SynthArgs a) {
    a.spec.task = synth::parse_task(a.task);
    a.spec.seed = g.seed;
    const fs::path dir = a.out;
    const bool vectors = a.spec.task == synth::Task::SubspaceVectors;
    guard_outputs(g, {dir / (vectors ? "windows.bin" : "manifest.json"), dir / "synth.json"});
    fs::create_directories(dir);

    json j;
    j["kind"] = "synth";
    j["schema"] = report::kSchemaVersion;
    j["task"] = synth::to_string(a.spec.task);
    j["seed"] = g.seed;
    if (vectors) {
        const auto vs = synth::gen_subspace_vectors(a.count, a.dim, a.rank, g.seed);
        WindowSet s;
        s.rate_hz = 1.0;
        s.length = a.dim;
        for (std::size_t i = 0; i < vs.size(); ++i) {
            WindowSet::Item it;
            it.patient_id = "subspace";
            it.record_id = "subspace";
            it.start = i;
            it.samples = vs[i];
            s.items.push_back(std::move(it));
        }
        write_windows(s, (dir / "windows.bin").string());
        j["count"] = a.count;
        j["dim"] = a.dim;
        j["rank"] = a.rank;
        report::write_json(j, (dir / "synth.json").string());
        say(g, "synth: " + std::to_string(a.count) + " vectors of length " + std::to_string(a.dim) + " (rank " +
                   std::to_string(a.rank) + ") -> " + (dir / "windows.bin").string());
        return;
    }
    const auto ds = synth::gen_dataset(a.spec);
    signals::write_dataset(ds, dir);
    j["patients"] = a.spec.n_patients;
    j["records_per_patient"] = a.spec.records_per_patient;
    j["duration_s"] = a.spec.duration_s;
    j["rate_hz"] = a.spec.rate_hz;
    j["hr_range_bpm"] = {a.spec.hr_lo, a.spec.hr_hi};
    j["noise_std"] = a.spec.noise_std;
    report::write_json(j, (dir / "synth.json").string());
    say(g, "synth: " + std::to_string(ds.records.size()) + " records from " + std::to_string(ds.patients.size()) +
               " patients (task " + a.task + ") -> " + (dir / "manifest.json").string());
}

struct PreprocessArgs {
    std::string data;
    double low = 0.5;
    double high = 16.0;
    double window = 2.0;
    std::optional<double> stride;
    double threshold = 0.0;
    std::string out;
    std::string report;
};

void run_preprocess(const Globals& g, const PreprocessArgs& a) {
    guard_outputs(g, {a.out, a.report});
    const auto ds = signals::bandpass_dataset(signals::load_dataset(signals::manifest_path(a.data)), a.low, a.high);
    signals::WindowSpec spec{a.window, a.stride.value_or(a.window)};

    std::vector<signals::Window> kept;
    std::vector<double> scores;
    for (const auto& r : ds.records) {
        for (auto& w : signals::segment(r, spec)) {
            const double q = signals::autocorr_quality(w.signal());
            scores.push_back(q);
            if (q >= a.threshold) kept.push_back(std::move(w));
        }
    }
    require(!kept.empty(), ErrorKind::InsufficientData,
            "no window reaches quality " + fmt(a.threshold, 2) + " (" + std::to_string(scores.size()) + " scored)");
    ensure_parent(a.out);
    write_windows(pack_windows(kept), a.out);

    const double total = static_cast<double>(scores.size());
    json sweep = json::array();
    for (int t = 0; t <= 10; ++t) {
        const double th = t / 10.0;
        const auto n = std::count_if(scores.begin(), scores.end(), [&](double q) { return q >= th; });
        sweep.push_back({{"threshold", th}, {"retained_fraction", static_cast<double>(n) / total}});
    }
    const double retained = static_cast<double>(kept.size()) / total;
    json j = {{"kind", "preprocess"},
              {"schema", report::kSchemaVersion},
              {"band_hz", {a.low, a.high}},
              {"window_s", spec.length_s},
              {"stride_s", spec.stride_s},
              {"threshold", a.threshold},
              {"total_windows", scores.size()},
              {"kept_windows", kept.size()},
              {"retained_fraction", retained},
              {"sweep", sweep}};
    if (!a.report.empty()) {
        ensure_parent(a.report);
        report::write_json(j, a.report);
    }
    say(g, "preprocess: kept " + std::to_string(kept.size()) + " of " + std::to_string(scores.size()) +
               " windows (retained " + fmt(100.0 * retained, 1) + "%) -> " + a.out);
}

struct FeaturesArgs {
    std::string data;
    double low = 0.5;
    double high = 16.0;
    double window = 10.0;
    double stride = 5.0;
    std::string baseline_tag = "rest";
    std::size_t std_span = 6;
    std::string out;
};

void run_features(const Globals& g, const FeaturesArgs& a) {
    guard_output(g, a.out);
    require(a.std_span >= 1, ErrorKind::Usage, "--std-span must be at least 1");
    const auto ds = signals::bandpass_dataset(signals::load_dataset(signals::manifest_path(a.data)), a.low, a.high);
    const signals::WindowSpec spec{a.window, a.stride};

    struct RecordFeatures {
        const signals::Record* record;
        std::vector<signals::Window> windows;
        std::vector<features::FeatureVector> fv;
    };
    std::vector<RecordFeatures> recs;
    std::set<std::string> label_names;
    std::map<std::string, std::vector<features::FeatureVector>> rest;
    for (const auto& r : ds.records) {
        RecordFeatures rf{&r, signals::segment(r, spec), {}};
        const auto meta = ds.patients.count(r.patient_id) ? ds.patients.at(r.patient_id) : signals::PatientMeta{};
        for (const auto& w : rf.windows) {
            rf.fv.push_back(features::extract_features(w, meta));
            for (const auto& [k, v] : w.labels) label_names.insert(k);
        }
        const bool tagged = std::find(r.tags.begin(), r.tags.end(), a.baseline_tag) != r.tags.end();
        if (tagged) rest[r.patient_id].insert(rest[r.patient_id].end(), rf.fv.begin(), rf.fv.end());
        recs.push_back(std::move(rf));
    }

    Table t;
    t.columns = features::full_registry();
    std::map<std::string, std::string> label_column;
    for (const auto& l : label_names) {
        label_column[l] = features::is_registered(l) ? "label_" + l : l;
        t.columns.push_back(label_column[l]);
    }
    t.columns.push_back("elapsed_s");

    std::set<std::string> no_baseline;
    std::size_t one_sided = 0;
    for (const auto& rf : recs) {
        const auto& pid = rf.record->patient_id;
        std::optional<features::FeatureVector> baseline;
        if (rest.count(pid) && !rest[pid].empty()) baseline = features::average(rest[pid]);
        else no_baseline.insert(pid);
        for (std::size_t i = 0; i < rf.windows.size(); ++i) {
            const auto& w = rf.windows[i];
            Observation o{w.patient_id, w.record_id, w.start_index, rf.fv[i]};
            const std::size_t from = i + 1 >= a.std_span ? i + 1 - a.std_span : 0;
            const std::span<const features::FeatureVector> trail(rf.fv.data() + from, i + 1 - from);
            const auto ds_vals = features::delta_and_std(trail, baseline.value_or(features::FeatureVector{}));
            for (const auto& [k, v] : ds_vals.values) {
                if (k.rfind("delta_", 0) == 0 && !baseline) continue;
                o.values[k] = v;
            }
            if (baseline) one_sided += ds_vals.warnings.size();
            for (const auto& [k, v] : w.labels) o.values[label_column[k]] = v;
            if (w.elapsed_s) o.values["elapsed_s"] = *w.elapsed_s;
            t.rows.push_back(std::move(o));
        }
    }
    for (const auto& pid : no_baseline)
        warn(g, "patient " + pid + " has no record tagged '" + a.baseline_tag + "'; delta_ features left empty");
    if (one_sided > 0)
        warn(g, std::to_string(one_sided) + " feature values were present on only one side of the baseline comparison");
    ensure_parent(a.out);
    write_table(t, a.out);
    say(g, "features: " + std::to_string(t.rows.size()) + " windows x " + std::to_string(t.columns.size()) +
               " columns -> " + a.out);
}

}  // namespace

void add_data_commands(CLI::App& app, Globals& g, Registry& reg) {
    auto sa = std::make_shared<SynthArgs>();
    auto* synth = app.add_subcommand("synth", "Generate a deterministic synthetic dataset");
    synth->add_option("--task", sa->task, "hr | random | drift | subspace")->capture_default_str();
    synth->add_option("--patients", sa->spec.n_patients)->capture_default_str();
    synth->add_option("--records", sa->spec.records_per_patient, "Records per patient")->capture_default_str();
    synth->add_option("--duration", sa->spec.duration_s, "Seconds per record")->capture_default_str();
    synth->add_option("--rate", sa->spec.rate_hz, "Sampling rate in Hz")->capture_default_str();
    synth->add_option("--hr-min", sa->spec.hr_lo, "Lowest base heart rate (bpm)")->capture_default_str();
    synth->add_option("--hr-max", sa->spec.hr_hi, "Highest base heart rate (bpm)")->capture_default_str();
    synth->add_option("--noise", sa->spec.noise_std, "White-noise standard deviation")->capture_default_str();
    synth->add_option("--count", sa->count, "Subspace task: vector count")->capture_default_str();
    synth->add_option("--dim", sa->dim, "Subspace task: vector length")->capture_default_str();
    synth->add_option("--rank", sa->rank, "Subspace task: subspace rank")->capture_default_str();
    synth->add_option("--out", sa->out, "Output directory")->required();
    reg.add(synth, [&g, sa] { run_synth(g, *sa); });

    auto pa = std::make_shared<PreprocessArgs>();
    auto* pre = app.add_subcommand("preprocess", "Band-pass, window and quality-filter the PPG into a window file");
    pre->add_option("--data", pa->data, "Dataset directory or manifest")->required();
    pre->add_option("--low", pa->low, "High-pass corner (Hz)")->capture_default_str();
    pre->add_option("--high", pa->high, "Low-pass corner (Hz)")->capture_default_str();
    pre->add_option("--window", pa->window, "Window length (s)")->capture_default_str();
    pre->add_option("--stride", pa->stride, "Window stride (s); defaults to the window length");
    pre->add_option("--threshold", pa->threshold, "Minimum autocorrelation quality")->capture_default_str();
    pre->add_option("--out", pa->out, "Window file")->required();
    pre->add_option("--report", pa->report, "JSON summary with the retained-fraction sweep");
    reg.add(pre, [&g, pa] { run_preprocess(g, *pa); });

    auto fa = std::make_shared<FeaturesArgs>();
    auto* feat = app.add_subcommand("features", "Handcrafted per-window features as a table");
    feat->add_option("--data", fa->data, "Dataset directory or manifest")->required();
    feat->add_option("--low", fa->low)->capture_default_str();
    feat->add_option("--high", fa->high)->capture_default_str();
    feat->add_option("--window", fa->window, "Window length (s)")->capture_default_str();
    feat->add_option("--stride", fa->stride, "Window stride (s)")->capture_default_str();
    feat->add_option("--baseline-tag", fa->baseline_tag, "Record tag marking baseline recordings")->capture_default_str();
    feat->add_option("--std-span", fa->std_span, "Windows in the trailing std_ span")->capture_default_str();
    feat->add_option("--out", fa->out, "Feature table CSV")->required();
    reg.add(feat, [&g, fa] { run_features(g, *fa); });
}

}  // namespace pulseaudit::cli
