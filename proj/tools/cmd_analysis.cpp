#include <cmath>
#include <fstream>
#include <set>

#include "cli.hpp"
#include "pulseaudit/autoenc.hpp"
#include "pulseaudit/mi.hpp"
#include "pulseaudit/mvm.hpp"
#include "pulseaudit/report.hpp"
#include "pulseaudit/signals.hpp"
#include "pulseaudit/table.hpp"
#include "pulseaudit/window_file.hpp"

namespace pulseaudit::cli {

using nlohmann::json;

namespace {

autoenc::Matrix to_matrix(const WindowSet& s) {
    autoenc::Matrix x(static_cast<Eigen::Index>(s.length), static_cast<Eigen::Index>(s.items.size()));
    for (std::size_t c = 0; c < s.items.size(); ++c)
        for (std::size_t r = 0; r < s.length; ++r)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = s.items[c].samples[r];
    return x;
}

struct TrainArgs {
    std::string in;
    std::size_t hidden = 128;
    std::size_t bottleneck = 20;
    std::string candidates;
    autoenc::TrainConfig cfg;
    std::string out;
    std::string report;
};

void run_train(const Globals& g, TrainArgs a) {
    guard_outputs(g, {a.out, a.report});
    const auto s = read_windows(a.in);
    require(!s.items.empty(), ErrorKind::InsufficientData, a.in + " holds no windows");
    const auto x = to_matrix(s);
    a.cfg.seed = g.seed;
    autoenc::MlpSpec spec{static_cast<std::size_t>(s.length), a.hidden, a.bottleneck};

    json j = {{"kind", "autoencoder"}, {"schema", report::kSchemaVersion}, {"windows", s.items.size()}};
    if (!a.candidates.empty()) {
        std::vector<std::size_t> cands;
        for (double v : parse_numbers(a.candidates, "--candidates")) {
            require(v >= 1.0 && std::floor(v) == v, ErrorKind::Usage, "--candidates must be positive integers");
            cands.push_back(static_cast<std::size_t>(v));
        }
        const auto choice = autoenc::choose_bottleneck(x, cands, spec, a.cfg);
        json tried = json::array();
        for (const auto& [size, loss] : choice.final_losses) tried.push_back({{"bottleneck", size}, {"final_loss", loss}});
        j["candidates"] = tried;
        j["chosen_bottleneck"] = choice.size;
        if (!choice.converged) warn(g, "no candidate bottleneck reached the stop loss; using the largest");
        spec.bottleneck = choice.size;
    }
    const auto model = autoenc::train(x, spec, a.cfg);
    if (!model.converged)
        warn(g, "training stopped after " + std::to_string(model.history.size()) + " epochs above the stop loss");
    ensure_parent(a.out);
    report::write_json(autoenc::to_json(model), a.out);
    j["bottleneck"] = spec.bottleneck;
    j["epochs"] = model.history.size();
    j["final_loss"] = model.final_loss();
    j["converged"] = model.converged;
    j["history"] = model.history;
    if (!a.report.empty()) {
        ensure_parent(a.report);
        report::write_json(j, a.report);
    }
    say(g, "autoencoder: bottleneck " + std::to_string(spec.bottleneck) + ", " + std::to_string(model.history.size()) +
               " epochs, final loss " + fmt(model.final_loss(), 5) + (model.converged ? "" : " (not converged)") +
               " -> " + a.out);
}

struct EncodeArgs {
    std::string model;
    std::string in;
    std::string out;
};

void run_encode(const Globals& g, const EncodeArgs& a) {
    guard_output(g, a.out);
    const auto model = autoenc::from_json(report::read_json(a.model));
    const auto s = read_windows(a.in);
    require(!s.items.empty(), ErrorKind::InsufficientData, a.in + " holds no windows");
    const auto codes = model.net.encode(to_matrix(s));
    Table t;
    for (Eigen::Index r = 0; r < codes.rows(); ++r) t.columns.push_back("ae_" + std::to_string(r));
    for (const auto& l : s.label_names) t.columns.push_back(l);
    for (std::size_t c = 0; c < s.items.size(); ++c) {
        const auto& it = s.items[c];
        Observation o{it.patient_id, it.record_id, static_cast<std::size_t>(it.start), {}};
        for (Eigen::Index r = 0; r < codes.rows(); ++r)
            o.values["ae_" + std::to_string(r)] = codes(r, static_cast<Eigen::Index>(c));
        for (std::size_t l = 0; l < s.label_names.size(); ++l)
            if (std::isfinite(it.labels[l])) o.values[s.label_names[l]] = it.labels[l];
        t.rows.push_back(std::move(o));
    }
    ensure_parent(a.out);
    write_table(t, a.out);
    say(g, "encode: " + std::to_string(t.rows.size()) + " windows -> " + std::to_string(codes.rows()) +
               "-dimensional codes in " + a.out);
}

struct MvmArgs {
    std::string data;
    std::string windows;
    std::string label;
    std::string ti = "auto";
    double to = 8.0;
    std::string scope = "intra";
    double percentile = 90.0;
    double max_lag = 0.5;
    double window = 2.0;
    double low = 0.5;
    double high = 16.0;
    std::string norm = "none";
    std::size_t max_examples = 10;
    bool no_prune = false;
    std::string out;
    std::string histogram;
};

std::vector<signals::Window> windows_from_file(const WindowSet& s) {
    std::vector<signals::Window> out;
    for (const auto& it : s.items) {
        signals::Window w;
        w.patient_id = it.patient_id;
        w.record_id = it.record_id;
        w.start_index = static_cast<std::size_t>(it.start);
        w.channels.emplace(signals::Channel::PPG, signals::Waveform(it.samples, s.rate_hz, signals::Channel::PPG));
        for (std::size_t l = 0; l < s.label_names.size(); ++l)
            if (std::isfinite(it.labels[l])) w.labels[s.label_names[l]] = it.labels[l];
        out.push_back(std::move(w));
    }
    return out;
}

void run_mvm(const Globals& g, const MvmArgs& a) {
    require(a.data.empty() != a.windows.empty(), ErrorKind::Usage, "give exactly one of --data or --windows");
    guard_outputs(g, {a.out, a.histogram});
    mvm::MvmConfig cfg;
    cfg.t_o = a.to;
    cfg.max_lag_s = a.max_lag;
    cfg.threads = g.threads;
    cfg.prune = !a.no_prune;
    if (a.scope == "intra") cfg.scope = mvm::Scope::IntraPatient;
    else if (a.scope == "inter") cfg.scope = mvm::Scope::InterPatient;
    else throw Error(ErrorKind::Usage, "--scope must be intra or inter");
    if (a.norm == "none") cfg.norm = mvm::DistanceNorm::None;
    else if (a.norm == "per-sample") cfg.norm = mvm::DistanceNorm::PerSample;
    else if (a.norm == "mean-square") cfg.norm = mvm::DistanceNorm::MeanSquare;
    else throw Error(ErrorKind::Usage, "--distance-normalization must be none, per-sample or mean-square");

    std::vector<signals::Window> windows;
    if (!a.data.empty()) {
        const auto ds = signals::bandpass_dataset(signals::load_dataset(signals::manifest_path(a.data)), a.low, a.high);
        const signals::WindowSpec spec{a.window, a.window};
        for (const auto& r : ds.records)
            for (auto& w : signals::segment(r, spec)) windows.push_back(std::move(w));
    } else {
        windows = windows_from_file(read_windows(a.windows));
    }
    require(windows.size() >= 2, ErrorKind::InsufficientData, "mvm needs at least two windows");
    cfg.window_length_s = static_cast<double>(windows.front().length()) / windows.front().rate_hz();

    report::MvmRun run;
    run.max_examples = a.max_examples;
    if (a.ti == "auto") {
        run.calibration = mvm::calibrate_threshold(windows, a.percentile, a.max_lag, cfg.norm);
        cfg.t_i = run.calibration->threshold;
    } else {
        const auto v = csv::parse_double(a.ti);
        require(v && *v > 0.0, ErrorKind::Usage, "--ti must be 'auto' or a positive number");
        cfg.t_i = *v;
    }
    run.report = mvm::scan(windows, a.label, cfg);
    for (const auto& w : windows) run.refs.push_back({w.patient_id, w.record_id, w.start_index});

    const auto j = report::mvm_json(run);
    if (!a.histogram.empty()) {
        require(run.calibration.has_value(), ErrorKind::Usage, "--histogram needs --ti auto");
        ensure_parent(a.histogram);
        std::ofstream h(a.histogram, std::ios::binary);
        require(static_cast<bool>(h), ErrorKind::MissingFile, "cannot write " + a.histogram);
        h << "bin_lo,bin_hi,count\n";
        const auto& hist = run.calibration->histogram;
        for (std::size_t b = 0; b < hist.counts.size(); ++b)
            h << csv::format_double(hist.edges[b]) << ',' << csv::format_double(hist.edges[b + 1]) << ','
              << hist.counts[b] << '\n';
    }
    emit(g, j, a.out,
         "mvm: label " + a.label + ", t_i " + fmt(cfg.t_i) + ", t_o " + fmt(cfg.t_o, 2) + ": " +
             std::to_string(run.report.matched_windows) + " of " + std::to_string(run.report.total_windows) +
             " windows matched (match rate " + fmt(100.0 * run.report.match_rate, 2) + "%, " +
             std::to_string(run.report.matches.size()) + " pairs)");
}

struct MiArgs {
    std::string table;
    std::string features;
    std::string target = "sbp";
    std::size_t k = 3;
    std::string entropy_mode = "hist";
    std::string bins = "fd";
    std::string bootstrap;
    std::size_t runs = 20;
    std::string out;
    std::string bootstrap_csv;
};

void run_mi(const Globals& g, const MiArgs& a) {
    guard_outputs(g, {a.out, a.bootstrap_csv});
    const auto names = split_list(a.features);
    require(!names.empty(), ErrorKind::Usage, "--features is empty");
    mi::EntropyMode mode;
    if (a.entropy_mode == "hist") mode = mi::EntropyMode::Histogram;
    else if (a.entropy_mode == "knn") mode = mi::EntropyMode::KNN;
    else throw Error(ErrorKind::Usage, "--entropy-mode must be hist or knn");
    mi::HistogramBins bins;
    if (a.bins != "fd") {
        const auto w = csv::parse_double(a.bins);
        require(w && *w > 0.0, ErrorKind::Usage, "--bins must be 'fd' or a positive width");
        bins.width = *w;
    }
    std::vector<double> fractions;
    if (!a.bootstrap.empty()) fractions = parse_numbers(a.bootstrap, "--bootstrap");

    const auto t = read_table(a.table);
    require(t.has_column(a.target), ErrorKind::MissingLabel, a.table + " has no column '" + a.target + "'");
    for (const auto& n : names)
        require(t.has_column(n), ErrorKind::MissingLabel, a.table + " has no column '" + n + "'");

    mi::SampleMatrix m;
    m.names = names;
    m.target_name = a.target;
    m.columns.assign(names.size(), {});
    std::size_t dropped = 0;
    for (const auto& row : t.rows) {
        bool complete = row.get(a.target).has_value();
        for (const auto& n : names) complete = complete && row.get(n).has_value();
        if (!complete) {
            ++dropped;
            continue;
        }
        for (std::size_t c = 0; c < names.size(); ++c) m.columns[c].push_back(*row.get(names[c]));
        m.target.push_back(*row.get(a.target));
    }
    if (dropped > 0) warn(g, std::to_string(dropped) + " windows lack a selected column and were dropped");
    require(m.rows() > a.k + 1, ErrorKind::InsufficientData,
            std::to_string(m.rows()) + " complete windows are too few for k = " + std::to_string(a.k));
    require(pstdev(m.target) > 0.0, ErrorKind::ZeroEntropy,
            "target '" + a.target + "' is constant over all " + std::to_string(m.rows()) + " windows");

    report::MiRun run;
    run.target = a.target;
    run.k = a.k;
    run.rows = m.rows();
    run.dropped_rows = dropped;
    run.combined_features = names;
    run.combined = mi::ksg_mi(m, a.k);
    run.entropy = mi::target_entropy(m.target, mode, bins, a.k);
    for (std::size_t c = 0; c < names.size(); ++c)
        run.per_feature.emplace_back(names[c], mi::ksg_mi(mi::single(m.columns[c], m.target, names[c]), a.k));
    if (!fractions.empty()) run.bootstrap = mi::bootstrap_mi(m, fractions, a.runs, g.seed, a.k, g.threads);

    if (!a.bootstrap_csv.empty()) {
        require(!fractions.empty(), ErrorKind::Usage, "--bootstrap-csv needs --bootstrap");
        ensure_parent(a.bootstrap_csv);
        std::ofstream f(a.bootstrap_csv, std::ios::binary);
        require(static_cast<bool>(f), ErrorKind::MissingFile, "cannot write " + a.bootstrap_csv);
        f << "fraction,sample_size,run,mi_bits\n";
        for (const auto& p : run.bootstrap)
            for (std::size_t r = 0; r < p.runs.size(); ++r)
                f << csv::format_double(p.fraction) << ',' << p.sample_size << ',' << r << ','
                  << csv::format_double(p.runs[r]) << '\n';
    }
    const auto j = report::mi_json(run);
    for (const auto& w : j["warnings"]) warn(g, w.get<std::string>());
    std::string summary = "mi: " + a.target + " from " + std::to_string(names.size()) + " feature(s), N " +
                          std::to_string(m.rows()) + ": combined " + fmt(run.combined.mi_bits) + " bits, entropy " +
                          fmt(run.entropy.bits) + " bits";
    if (run.entropy.bits > 0.0)
        summary += ", info fraction " + fmt(100.0 * mi::info_fraction(run.combined.mi_bits, run.entropy.bits), 1) + "%";
    emit(g, j, a.out, summary);
}

}  // namespace

void add_analysis_commands(CLI::App& app, Globals& g, Registry& reg) {
    auto* ae = app.add_subcommand("autoencoder", "Train an autoencoder or encode windows with one");
    ae->require_subcommand(1);

    auto ta = std::make_shared<TrainArgs>();
    auto* tr = ae->add_subcommand("train", "Train on a window file");
    tr->add_option("--in", ta->in, "Window file")->required();
    tr->add_option("--hidden", ta->hidden)->capture_default_str();
    tr->add_option("--bottleneck", ta->bottleneck)->capture_default_str();
    tr->add_option("--candidates", ta->candidates, "Ascending bottleneck sizes; picks the smallest that converges");
    tr->add_option("--epochs", ta->cfg.max_epochs)->capture_default_str();
    tr->add_option("--batch", ta->cfg.batch_size)->capture_default_str();
    tr->add_option("--lr", ta->cfg.lr)->capture_default_str();
    tr->add_option("--stop-loss", ta->cfg.stop_loss, "Stop once the epoch MSE falls below this")->capture_default_str();
    tr->add_option("--out", ta->out, "Model file (JSON)")->required();
    tr->add_option("--report", ta->report, "JSON training summary");
    reg.add(tr, [&g, ta] { run_train(g, *ta); });

    auto ea = std::make_shared<EncodeArgs>();
    auto* en = ae->add_subcommand("encode", "Bottleneck codes for every window");
    en->add_option("--model", ea->model)->required();
    en->add_option("--in", ea->in, "Window file")->required();
    en->add_option("--out", ea->out, "Code table CSV")->required();
    reg.add(en, [&g, ea] { run_encode(g, *ea); });

    auto ma = std::make_shared<MvmArgs>();
    auto* mv = app.add_subcommand("mvm", "Search for similar inputs with dissimilar labels");
    mv->add_option("--data", ma->data, "Dataset directory or manifest (band-passed and windowed here)");
    mv->add_option("--windows", ma->windows, "Window file from preprocess");
    mv->add_option("--label", ma->label)->required();
    mv->add_option("--ti", ma->ti, "Input threshold: 'auto' or a distance")->capture_default_str();
    mv->add_option("--to", ma->to, "Output threshold in label units")->capture_default_str();
    mv->add_option("--scope", ma->scope, "intra | inter")->capture_default_str();
    mv->add_option("--percentile", ma->percentile, "Percentile for --ti auto")->capture_default_str();
    mv->add_option("--max-lag", ma->max_lag, "Alignment lag bound (s)")->capture_default_str();
    mv->add_option("--window", ma->window, "Window length for --data (s)")->capture_default_str();
    mv->add_option("--low", ma->low)->capture_default_str();
    mv->add_option("--high", ma->high)->capture_default_str();
    mv->add_option("--distance-normalization", ma->norm, "none | per-sample | mean-square")->capture_default_str();
    mv->add_option("--max-examples", ma->max_examples)->capture_default_str();
    mv->add_flag("--no-prune", ma->no_prune, "Evaluate every pair in scope");
    mv->add_option("--out", ma->out, "Report JSON (stdout when absent)");
    mv->add_option("--histogram", ma->histogram, "CSV of the calibration distance histogram");
    reg.add(mv, [&g, ma] { run_mvm(g, *ma); });

    auto ia = std::make_shared<MiArgs>();
    auto* mi = app.add_subcommand("mi", "Mutual information between features and a target");
    mi->add_option("--table", ia->table, "Feature or code table CSV")->required();
    mi->add_option("--features", ia->features, "Comma-separated columns")->required();
    mi->add_option("--target", ia->target)->capture_default_str();
    mi->add_option("--k", ia->k)->capture_default_str();
    mi->add_option("--entropy-mode", ia->entropy_mode, "hist | knn")->capture_default_str();
    mi->add_option("--bins", ia->bins, "'fd' or a bin width")->capture_default_str();
    mi->add_option("--bootstrap", ia->bootstrap, "Comma-separated ascending fractions in (0, 1]");
    mi->add_option("--runs", ia->runs, "Subsamples per fraction")->capture_default_str();
    mi->add_option("--out", ia->out, "Report JSON (stdout when absent)");
    mi->add_option("--bootstrap-csv", ia->bootstrap_csv, "One row per fraction and run");
    reg.add(mi, [&g, ia] { run_mi(g, *ia); });
}

}  // namespace pulseaudit::cli
