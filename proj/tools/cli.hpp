#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pulseaudit/common.hpp"

namespace pulseaudit::cli {

struct Globals {
    std::uint64_t seed = 7;
    unsigned threads = 1;
    bool force = false;
    bool quiet = false;
};

using Action = std::function<void()>;

/// Leaf subcommands paired with what they run once parsing succeeds.
struct Registry {
    std::vector<std::pair<CLI::App*, Action>> actions;

    void add(CLI::App* app, Action a) { actions.emplace_back(app, std::move(a)); }
};

void add_data_commands(CLI::App& app, Globals& g, Registry& reg);
void add_analysis_commands(CLI::App& app, Globals& g, Registry& reg);
void add_eval_commands(CLI::App& app, Globals& g, Registry& reg);

/// Refuses to replace an existing file unless --force was given.
inline void guard_output(const Globals& g, const std::filesystem::path& p) {
    if (p.empty() || g.force) return;
    require(!std::filesystem::exists(p), ErrorKind::Usage, p.string() + " exists; pass --force to overwrite");
}

inline void guard_outputs(const Globals& g, std::initializer_list<std::filesystem::path> paths) {
    for (const auto& p : paths) guard_output(g, p);
}

inline void ensure_parent(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

/// JSON to `out` (stdout when empty) and the summary line to stdout, or to
/// stderr when stdout carries the JSON.
inline void emit(const Globals& g, const nlohmann::json& j, const std::string& out, const std::string& summary) {
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
        if (!g.quiet) std::cerr << summary << '\n';
        return;
    }
    ensure_parent(out);
    std::ofstream f(out, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::MissingFile, "cannot write " + out);
    f << j.dump(2) << '\n';
    if (!g.quiet) std::cout << summary << '\n';
}

inline void say(const Globals& g, const std::string& line) {
    if (!g.quiet) std::cout << line << '\n';
}

inline void warn(const Globals& g, const std::string& line) {
    if (!g.quiet) std::cerr << "warning: " << line << '\n';
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto end = comma == std::string::npos ? s.size() : comma;
        if (end > start) out.push_back(s.substr(start, end - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::vector<double> parse_numbers(const std::string& s, const std::string& what);

std::string fmt(double v, int digits = 4);

}  // namespace pulseaudit::cli
