#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "cli.hpp"
#include "pulseaudit/csv.hpp"

namespace pulseaudit::cli {

std::vector<double> parse_numbers(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        const auto v = csv::parse_double(item);
        require(v.has_value(), ErrorKind::Usage, what + ": '" + item + "' is not a number");
        out.push_back(*v);
    }
    require(!out.empty(), ErrorKind::Usage, what + ": empty list");
    return out;
}

std::string fmt(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace pulseaudit::cli

namespace {

unsigned default_threads() {
    if (const char* env = std::getenv("PULSEAUDIT_THREADS")) {
        const auto v = pulseaudit::csv::parse_double(env);
        if (v && *v >= 1.0) return static_cast<unsigned>(*v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

int main(int argc, char** argv) {
    using namespace pulseaudit;
    cli::Globals g;
    g.threads = default_threads();
    cli::Registry reg;

    CLI::App app{"Audit whether a physiological waveform is a well-conditioned predictor of a label."};
    app.name("pulseaudit");
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--seed", g.seed, "Seed for every stochastic step")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads (falls back to PULSEAUDIT_THREADS)")
        ->check(CLI::PositiveNumber);
    app.add_flag("--force", g.force, "Overwrite existing outputs");
    app.add_flag("-q,--quiet", g.quiet, "Suppress the human-readable summary");

    cli::add_data_commands(app, g, reg);
    cli::add_analysis_commands(app, g, reg);
    cli::add_eval_commands(app, g, reg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << '\n' << app.help();
        return 1;
    }

    try {
        for (auto& [sub, action] : reg.actions)
            if (sub->parsed()) {
                action();
                return 0;
            }
        std::cerr << app.help();
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::Usage ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
