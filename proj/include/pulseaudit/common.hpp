#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace pulseaudit {

/// Categories of failure. The CLI maps every kind except `Usage` to exit code 2.
enum class ErrorKind {
    Usage,
    InvalidArgument,
    MissingFile,
    MalformedInput,
    RateMismatch,
    Unlabelable,
    NoBeats,
    NoInflection,
    InsufficientData,
    ZeroEntropy,
    LengthMismatch,
    MissingLabel,
    Divergence,
    MissingArtifact,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage: return "usage";
        case ErrorKind::InvalidArgument: return "invalid argument";
        case ErrorKind::MissingFile: return "missing file";
        case ErrorKind::MalformedInput: return "malformed input";
        case ErrorKind::RateMismatch: return "rate mismatch";
        case ErrorKind::Unlabelable: return "unlabelable window";
        case ErrorKind::NoBeats: return "no beats";
        case ErrorKind::NoInflection: return "no inflection";
        case ErrorKind::InsufficientData: return "insufficient data";
        case ErrorKind::ZeroEntropy: return "zero-entropy target";
        case ErrorKind::LengthMismatch: return "length mismatch";
        case ErrorKind::MissingLabel: return "missing label";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::MissingArtifact: return "missing artifact";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) throw Error(kind, what);
}

// ---------------------------------------------------------------------------
// Descriptive statistics over spans of doubles.

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Population standard deviation (divides by n).
inline double pstdev(std::span<const double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    // The rounded mean of identical values can differ from them by an ulp.
    if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs.front(); })) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size()));
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Nearest-rank percentile: the smallest value with at least p% of the
/// sample at or below it. p in [0, 100].
inline double percentile(std::vector<double> xs, double p) {
    require(!xs.empty(), ErrorKind::InsufficientData, "percentile of empty sample");
    require(p >= 0.0 && p <= 100.0, ErrorKind::InvalidArgument, "percentile outside [0,100]");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, xs.size());
    return xs[rank - 1];
}

/// Linear-interpolated quantile (type 7), q in [0, 1].
inline double quantile(std::vector<double> xs, double q) {
    require(!xs.empty(), ErrorKind::InsufficientData, "quantile of empty sample");
    std::sort(xs.begin(), xs.end());
    const double h = q * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

/// Zero mean, unit (population) variance. Constant input maps to all zeros.
inline std::vector<double> znormalize(std::span<const double> xs) {
    std::vector<double> out(xs.begin(), xs.end());
    if (out.empty()) return out;
    const double m = mean(xs);
    const double sd = pstdev(xs);
    for (double& v : out) v = sd > 0.0 ? (v - m) / sd : 0.0;
    return out;
}

inline bool all_finite(std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// std::mt19937_64 has a standard-mandated output sequence; the distribution
// adaptors in <random> do not, so the few we need are written out here to
// keep seeded outputs identical across standard libraries.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Derive a child seed from a parent seed and a stream of integer tags.
template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t seed, Tags... tags) {
    std::uint64_t h = splitmix64(seed);
    ((h = splitmix64(h ^ static_cast<std::uint64_t>(tags))), ...);
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    /// Unbiased integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (std::size_t i = xs.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(index(i));
            std::swap(xs[i - 1], xs[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// ---------------------------------------------------------------------------

/// Runs fn(begin, end) over contiguous blocks of [0, n). Blocks are fixed by
/// (n, threads) so callers that merge per-block results in block order stay
/// deterministic for any thread count.
template <typename Fn>
void parallel_blocks(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t t = std::min<std::size_t>(threads, n);
    const std::size_t chunk = (n + t - 1) / t;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(t);
    pool.reserve(t);
    for (std::size_t b = 0, slot = 0; b < n; b += chunk, ++slot) {
        const std::size_t e = std::min(n, b + chunk);
        pool.emplace_back([&fn, &errors, slot, b, e] {
            try {
                fn(b, e);
            } catch (...) {
                errors[slot] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

}  // namespace pulseaudit
