#include <filesystem>
#include <fstream>
#include <map>

#include "cli.hpp"
#include "pulseaudit/calib.hpp"
#include "pulseaudit/report.hpp"
#include "pulseaudit/signals.hpp"
#include "pulseaudit/splits.hpp"
#include "pulseaudit/table.hpp"

namespace pulseaudit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SplitMakeArgs {
    std::string data;
    std::string scheme = "no-overlap";
    double test_fraction = 0.2;
    double window = 10.0;
    double stride = 5.0;
    std::string out;
};

void run_split_make(const Globals& g, const SplitMakeArgs& a) {
    guard_output(g, a.out);
    const auto ds = signals::load_dataset(signals::manifest_path(a.data));
    splits::SplitPlan plan{splits::parse_scheme(a.scheme), a.test_fraction, g.seed};
    const auto split = splits::make_split(ds, {a.window, a.stride}, plan);
    ensure_parent(a.out);
    splits::write_split(split, a.out);
    say(g, "split: " + std::string(splits::to_string(plan.scheme)) + ", " +
               std::to_string(split.count(splits::Set::Train)) + " train / " +
               std::to_string(split.count(splits::Set::Test)) + " test windows -> " + a.out);
}

struct SplitAuditArgs {
    std::string split;
    std::string manifest;
    std::string out;
};

void run_split_audit(const Globals& g, const SplitAuditArgs& a) {
    guard_output(g, a.out);
    const auto split = splits::read_split(a.split);
    if (!a.manifest.empty()) {
        const auto ds = signals::load_dataset(signals::manifest_path(a.manifest));
        std::map<std::string, const signals::Record*> by_id;
        for (const auto& r : ds.records) by_id[r.record_id] = &r;
        for (const auto& w : split.windows) {
            const std::string where = "window " + w.record_id + "@" + std::to_string(w.start);
            auto it = by_id.find(w.record_id);
            require(it != by_id.end(), ErrorKind::MalformedInput, where + ": record not in manifest");
            require(it->second->patient_id == w.patient_id, ErrorKind::MalformedInput,
                    where + ": patient " + w.patient_id + " disagrees with manifest");
            require(w.end() <= it->second->length(), ErrorKind::MalformedInput, where + ": extends past the record");
        }
    }
    const auto rep = splits::audit_split(split);
    emit(g, report::leakage_json(split, rep), a.out,
         "audit: data overlap " + std::string(rep.data_clean() ? "clean" : "contaminated") + " (" +
             std::to_string(rep.data_overlap.size()) + " pairs), domain overlap " +
             (rep.domain_clean() ? "clean" : "contaminated") + " (" +
             std::to_string(rep.domain_overlap_patients.size()) + " patients)");
}

struct RangeArgs {
    std::string table;
    std::string label = "sbp";
    double lo = 75.0;
    double hi = 165.0;
    std::string out;
    std::string kept;
};

json summary_json(const splits::LabelSummary& s) {
    return {{"n", s.n}, {"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}};
}

void run_split_range(const Globals& g, const RangeArgs& a) {
    guard_outputs(g, {a.out, a.kept});
    const auto t = read_table(a.table);
    const auto labels = t.column(a.label);
    const auto r = splits::range_filter(labels, a.lo, a.hi);
    for (const auto& w : r.warnings) warn(g, w);
    if (!a.kept.empty()) {
        Table k;
        k.columns = t.columns;
        for (auto i : r.kept) k.rows.push_back(t.rows[i]);
        ensure_parent(a.kept);
        write_table(k, a.kept);
    }
    json j = {{"kind", "range"},
              {"schema", report::kSchemaVersion},
              {"label", a.label},
              {"lo", a.lo},
              {"hi", a.hi},
              {"kept", r.kept.size()},
              {"discarded_fraction", r.discarded_fraction},
              {"before", summary_json(r.before)},
              {"after", summary_json(r.after)}};
    emit(g, j, a.out,
         "range: kept " + std::to_string(r.kept.size()) + " of " + std::to_string(labels.size()) + " windows in [" +
             fmt(a.lo, 1) + ", " + fmt(a.hi, 1) + "] (discarded " + fmt(100.0 * r.discarded_fraction, 1) +
             "%), label std " + fmt(r.before.std, 2) + " -> " + fmt(r.after.std, 2));
}

struct CalibArgs {
    std::string table;
    std::string split;
    std::string label = "sbp";
    std::string method = "none";
    std::string predictor = "mean";
    std::string features;
    std::optional<std::size_t> calib_windows;
    std::string scope = "record";
    double bucket = 86400.0;
    std::string out;
    std::string drift_csv;
};

void run_calib(const Globals& g, const CalibArgs& a) {
    guard_outputs(g, {a.out, a.drift_csv});
    calib::CalibOptions opt;
    opt.label = a.label;
    if (a.method == "none") opt.method = calib::Method::None;
    else if (a.method == "naive") opt.method = calib::Method::Naive;
    else if (a.method == "offset") opt.method = calib::Method::Offset;
    else throw Error(ErrorKind::Usage, "--method must be none, naive or offset");
    if (a.predictor == "mean") opt.predictor = calib::PredictorKind::Mean;
    else if (a.predictor == "linear") opt.predictor = calib::PredictorKind::Linear;
    else throw Error(ErrorKind::Usage, "--predictor must be mean or linear");
    if (a.scope == "record") opt.scope = calib::CalibScope::Record;
    else if (a.scope == "patient") opt.scope = calib::CalibScope::Patient;
    else throw Error(ErrorKind::Usage, "--scope must be record or patient");
    opt.features = split_list(a.features);
    require(opt.predictor == calib::PredictorKind::Mean || !opt.features.empty(), ErrorKind::Usage,
            "--predictor linear needs --features");
    opt.calib_windows = a.calib_windows;
    opt.bucket_s = a.bucket;

    const auto t = read_table(a.table);
    require(t.has_column(a.label), ErrorKind::MissingLabel, a.table + " has no column '" + a.label + "'");
    const auto split = splits::read_split(a.split);
    std::map<std::pair<std::string, std::size_t>, splits::Set> set_of;
    for (const auto& w : split.windows) set_of[{w.record_id, w.start}] = w.set;
    std::vector<Observation> train, test;
    std::size_t unassigned = 0;
    for (const auto& row : t.rows) {
        auto it = set_of.find({row.record_id, row.start});
        if (it == set_of.end()) {
            ++unassigned;
            continue;
        }
        (it->second == splits::Set::Train ? train : test).push_back(row);
    }
    if (unassigned > 0) warn(g, std::to_string(unassigned) + " table windows are not in the split and were ignored");
    require(!train.empty() && !test.empty(), ErrorKind::InsufficientData,
            "split leaves " + std::to_string(train.size()) + " train and " + std::to_string(test.size()) +
                " test windows from the table");

    const auto outcome = calib::run_calibration(train, test, opt);
    if (!a.drift_csv.empty()) {
        require(!outcome.drift.empty(), ErrorKind::MissingLabel, "no elapsed_s column; drift curve unavailable");
        ensure_parent(a.drift_csv);
        std::ofstream f(a.drift_csv, std::ios::binary);
        require(static_cast<bool>(f), ErrorKind::MissingFile, "cannot write " + a.drift_csv);
        f << "bucket,bucket_start_s,bias,sd,mae,n\n";
        for (const auto& p : outcome.drift)
            f << p.bucket << ',' << csv::format_double(p.bucket_start_s) << ',' << csv::format_double(p.eval.bias)
              << ',' << csv::format_double(p.eval.sd) << ',' << csv::format_double(p.eval.mae) << ',' << p.eval.n
              << '\n';
    }
    emit(g, report::calib_json(opt, outcome), a.out,
         "calib: " + a.method + " (" + a.predictor + "), " + std::to_string(outcome.eval.n) + " windows: bias " +
             fmt(outcome.eval.bias, 2) + ", sd " + fmt(outcome.eval.sd, 2) + ", mae " + fmt(outcome.eval.mae, 2) +
             ", BHS " + calib::to_string(outcome.bhs.grade) + ", AAMI " +
             (outcome.aami.compliant ? "pass" : "fail"));
}

struct ReportArgs {
    std::string mvm;
    std::string mi;
    std::string leakage;
    std::string calib;
    std::string preprocess;
    std::string out_dir;
};

json load_section(const std::string& path, const std::string& kind) {
    if (path.empty()) return nullptr;
    auto j = report::read_json(path);
    require(j.is_object() && j.value("kind", "") == kind, ErrorKind::MalformedInput,
            path + " is not a " + kind + " artifact");
    require(j.value("schema", 0) == report::kSchemaVersion, ErrorKind::MalformedInput,
            path + " has schema " + j.value("schema", json(nullptr)).dump() + ", expected " +
                std::to_string(report::kSchemaVersion));
    return j;
}

void run_report(const Globals& g, const ReportArgs& a) {
    const fs::path dir = a.out_dir;
    const auto sections = {a.mvm, a.mi, a.leakage, a.calib, a.preprocess};
    for (const auto& s : sections)
        require(s.empty() || fs::exists(s), ErrorKind::MissingArtifact, s + " not found");
    bool any = false;
    for (const auto& s : sections) any = any || !s.empty();
    require(any, ErrorKind::Usage, "report needs at least one artifact");

    json r;
    r["schema"] = report::kSchemaVersion;
    r["generator"] = "pulseaudit";
    r["mvm"] = load_section(a.mvm, "mvm");
    r["mi"] = load_section(a.mi, "mi");
    r["leakage"] = load_section(a.leakage, "leakage");
    r["calibration"] = load_section(a.calib, "calibration");
    r["preprocess"] = load_section(a.preprocess, "preprocess");

    std::vector<std::pair<fs::path, std::string>> csvs;
    if (!r["mvm"].is_null() && !r["mvm"]["threshold"].is_null()) {
        const auto& h = r["mvm"]["threshold"]["histogram"];
        std::string s = "bin_lo,bin_hi,count\n";
        for (std::size_t b = 0; b < h["counts"].size(); ++b)
            s += csv::format_double(h["edges"][b].get<double>()) + ',' +
                 csv::format_double(h["edges"][b + 1].get<double>()) + ',' +
                 std::to_string(h["counts"][b].get<std::size_t>()) + '\n';
        csvs.emplace_back(dir / "histogram.csv", s);
    }
    if (!r["mi"].is_null() && !r["mi"]["bootstrap"].is_null()) {
        std::string s = "fraction,sample_size,run,mi_bits\n";
        for (const auto& p : r["mi"]["bootstrap"])
            for (std::size_t k = 0; k < p["runs"].size(); ++k)
                s += csv::format_double(p["fraction"].get<double>()) + ',' +
                     std::to_string(p["sample_size"].get<std::size_t>()) + ',' + std::to_string(k) + ',' +
                     csv::format_double(p["runs"][k].get<double>()) + '\n';
        csvs.emplace_back(dir / "bootstrap.csv", s);
    }
    if (!r["calibration"].is_null() && !r["calibration"]["drift"].is_null()) {
        std::string s = "bucket,bucket_start_s,bias,sd,mae,n\n";
        for (const auto& p : r["calibration"]["drift"])
            s += std::to_string(p["bucket"].get<std::size_t>()) + ',' +
                 csv::format_double(p["bucket_start_s"].get<double>()) + ',' +
                 csv::format_double(p["bias"].get<double>()) + ',' + csv::format_double(p["sd"].get<double>()) +
                 ',' + csv::format_double(p["mae"].get<double>()) + ',' + std::to_string(p["n"].get<std::size_t>()) +
                 '\n';
        csvs.emplace_back(dir / "drift.csv", s);
    }
    guard_output(g, dir / "report.json");
    for (const auto& [p, s] : csvs) guard_output(g, p);

    fs::create_directories(dir);
    report::write_json(r, (dir / "report.json").string());
    std::vector<std::string> names;
    for (const auto& [p, s] : csvs) {
        std::ofstream f(p, std::ios::binary);
        require(static_cast<bool>(f), ErrorKind::MissingFile, "cannot write " + p.string());
        f << s;
        names.push_back(p.filename().string());
    }
    std::string line = "report: " + (dir / "report.json").string();
    for (const auto& n : names) line += ", " + n;
    say(g, line);
}

}  // namespace

void add_eval_commands(CLI::App& app, Globals& g, Registry& reg) {
    auto* sp = app.add_subcommand("split", "Make, audit or range-filter train/test splits");
    sp->require_subcommand(1);

    auto ma = std::make_shared<SplitMakeArgs>();
    auto* mk = sp->add_subcommand("make", "Assign windows to train and test");
    mk->add_option("--data", ma->data, "Dataset directory or manifest")->required();
    mk->add_option("--scheme", ma->scheme, "no-overlap | domain-overlap | data-overlap")->capture_default_str();
    mk->add_option("--test-fraction", ma->test_fraction)->capture_default_str();
    mk->add_option("--window", ma->window, "Window length (s)")->capture_default_str();
    mk->add_option("--stride", ma->stride, "Window stride (s)")->capture_default_str();
    mk->add_option("--out", ma->out, "Split CSV")->required();
    reg.add(mk, [&g, ma] { run_split_make(g, *ma); });

    auto aa = std::make_shared<SplitAuditArgs>();
    auto* au = sp->add_subcommand("audit", "Report data and domain overlap between train and test");
    au->add_option("--split", aa->split, "Split CSV")->required();
    au->add_option("--manifest", aa->manifest, "Checks every window against the dataset");
    au->add_option("--out", aa->out, "Leakage JSON (stdout when absent)");
    reg.add(au, [&g, aa] { run_split_audit(g, *aa); });

    auto ra = std::make_shared<RangeArgs>();
    auto* rg = sp->add_subcommand("range", "Keep windows whose label lies in [lo, hi]");
    rg->add_option("--table", ra->table, "Feature table CSV")->required();
    rg->add_option("--label", ra->label)->capture_default_str();
    rg->add_option("--lo", ra->lo)->capture_default_str();
    rg->add_option("--hi", ra->hi)->capture_default_str();
    rg->add_option("--out", ra->out, "Summary JSON (stdout when absent)");
    rg->add_option("--kept", ra->kept, "Filtered table CSV");
    reg.add(rg, [&g, ra] { run_split_range(g, *ra); });

    auto ca = std::make_shared<CalibArgs>();
    auto* cb = app.add_subcommand("calib", "Evaluate a baseline predictor with optional per-record calibration");
    cb->add_option("--table", ca->table, "Feature table CSV")->required();
    cb->add_option("--split", ca->split, "Split CSV")->required();
    cb->add_option("--label", ca->label)->capture_default_str();
    cb->add_option("--method", ca->method, "none | naive | offset")->capture_default_str();
    cb->add_option("--predictor", ca->predictor, "mean | linear")->capture_default_str();
    cb->add_option("--features", ca->features, "Comma-separated columns for the linear predictor");
    cb->add_option("--calib-windows", ca->calib_windows, "Calibration windows per group (naive 3, offset 1)");
    cb->add_option("--scope", ca->scope, "Calibrate per record or per patient")->capture_default_str();
    cb->add_option("--bucket", ca->bucket, "Drift bucket width (s)")->capture_default_str();
    cb->add_option("--out", ca->out, "Evaluation JSON (stdout when absent)");
    cb->add_option("--drift-csv", ca->drift_csv, "Per-bucket drift curve");
    reg.add(cb, [&g, ca] { run_calib(g, *ca); });

    auto pa = std::make_shared<ReportArgs>();
    auto* rp = app.add_subcommand("report", "Bundle artifacts into one report with plot-ready CSVs");
    rp->add_option("--mvm", pa->mvm);
    rp->add_option("--mi", pa->mi);
    rp->add_option("--leakage", pa->leakage);
    rp->add_option("--calib", pa->calib);
    rp->add_option("--preprocess", pa->preprocess);
    rp->add_option("--out-dir", pa->out_dir)->required();
    reg.add(rp, [&g, pa] { run_report(g, *pa); });
}

}  // namespace pulseaudit::cli
