#pragma once

#include <atomic>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "pulseaudit/common.hpp"

namespace testing_support {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("pulseaudit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::vector<double> sine(double freq_hz, double seconds, double rate_hz, double amp = 1.0, double phase = 0.0) {
    const auto n = static_cast<std::size_t>(std::llround(seconds * rate_hz));
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = amp * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate_hz + phase);
    return x;
}

inline std::vector<double> white_noise(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    pulseaudit::Rng rng(seed);
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal(0.0, sd);
    return x;
}

/// Single-bin DFT magnitude scaled to a sinusoid amplitude.
inline double dft_amplitude(std::span<const double> x, std::size_t from, std::size_t to, double freq_hz,
                            double rate_hz) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = from; i < to; ++i) {
        const double ph = -2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate_hz;
        acc += x[i] * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    return 2.0 * std::abs(acc) / static_cast<double>(to - from);
}

inline double rms(std::span<const double> x, std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += x[i] * x[i];
    return std::sqrt(s / static_cast<double>(to - from));
}

}  // namespace testing_support
