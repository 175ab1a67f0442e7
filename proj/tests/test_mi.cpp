#include <gtest/gtest.h>

#include <numbers>

#include "pulseaudit/kdtree.hpp"
#include "pulseaudit/mi.hpp"
#include "support.hpp"

using namespace pulseaudit;
using namespace pulseaudit::mi;

namespace {

constexpr double kEulerGamma = 0.57721566490153286;

struct Pair {
    std::vector<double> x, y;
};

Pair gaussian_pair(std::size_t n, double rho, std::uint64_t seed) {
    Rng rng(seed);
    Pair p;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = rng.normal(), b = rng.normal();
        p.x.push_back(a);
        p.y.push_back(rho * a + std::sqrt(1.0 - rho * rho) * b);
    }
    return p;
}

std::vector<double> uniform(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform();
    return v;
}

double cheb(const std::vector<std::vector<double>>& cols, std::size_t i, std::size_t j) {
    double d = 0.0;
    for (const auto& c : cols) d = std::max(d, std::abs(c[i] - c[j]));
    return d;
}

// O(N^2) KSG on already-prepared columns.
double brute_ksg_bits(const std::vector<std::vector<double>>& xs, const std::vector<double>& y, std::size_t k) {
    const std::size_t n = y.size();
    auto joint = xs;
    joint.push_back(y);
    const std::vector<std::vector<double>> ycol{y};
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d.push_back(cheb(joint, i, j));
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
        const double eps = d[k - 1];
        std::size_t nx = 0, ny = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (cheb(xs, i, j) < eps) ++nx;
            if (cheb(ycol, i, j) < eps) ++ny;
        }
        acc += digamma(static_cast<double>(nx) + 1.0) + digamma(static_cast<double>(ny) + 1.0);
    }
    const double nats = digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) - acc / static_cast<double>(n);
    return nats / std::numbers::ln2;
}

}  // namespace

// ---------------------------------------------------------------------------
// Digamma

TEST(Digamma, KnownValues) {
    EXPECT_NEAR(digamma(1.0), -kEulerGamma, 1e-10);
    EXPECT_NEAR(digamma(0.5), -kEulerGamma - 2.0 * std::numbers::ln2, 1e-10);
    EXPECT_NEAR(digamma(2.0), 1.0 - kEulerGamma, 1e-10);
    EXPECT_NEAR(digamma(0.25), -kEulerGamma - std::numbers::pi / 2.0 - 3.0 * std::numbers::ln2, 1e-10);
}

TEST(Digamma, Recurrence) {
    for (double x = 0.1; x < 30.0; x += 0.37) EXPECT_NEAR(digamma(x + 1.0), digamma(x) + 1.0 / x, 1e-10) << x;
    EXPECT_THROW(digamma(0.0), Error);
}

// ---------------------------------------------------------------------------
// Neighbour search

TEST(ChebyshevTree, MatchesBruteForce) {
    Rng rng(5);
    for (std::size_t dim : {1u, 2u, 4u}) {
        const std::size_t n = 600;
        std::vector<double> pts(n * dim);
        // Quantized coordinates create many ties.
        for (double& v : pts) v = std::round(rng.normal() * 4.0) / 4.0;
        const ChebyshevTree tree(pts, dim, 8);
        for (std::size_t i = 0; i < n; i += 7) {
            std::vector<double> d;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                double m = 0.0;
                for (std::size_t c = 0; c < dim; ++c) m = std::max(m, std::abs(pts[i * dim + c] - pts[j * dim + c]));
                d.push_back(m);
            }
            std::sort(d.begin(), d.end());
            for (std::size_t k : {1u, 3u, 10u}) EXPECT_EQ(tree.kth_neighbor_distance(i, k), d[k - 1]);
            for (double r : {0.0, 0.25, 0.3, 1.0}) {
                const auto strict = static_cast<std::size_t>(std::lower_bound(d.begin(), d.end(), r) - d.begin());
                EXPECT_EQ(tree.count_within(i, r), strict);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// KSG

TEST(Ksg, MatchesBruteForceEstimator) {
    const auto p = gaussian_pair(300, 0.7, 8);
    const auto z = uniform(300, 9);
    SampleMatrix m;
    m.columns = {p.x, z};
    m.target = p.y;
    const std::vector<std::vector<double>> xs{detail::prepare(p.x, true), detail::prepare(z, true)};
    const auto y = detail::prepare(p.y, true);
    for (std::size_t k : {1u, 3u, 5u}) EXPECT_NEAR(ksg_mi(m, k).raw_mi_bits, brute_ksg_bits(xs, y, k), 1e-10) << k;
}

TEST(Ksg, IndependentUniformNearZero) {
    const auto est = ksg_mi(single(uniform(5000, 1), uniform(5000, 2)));
    EXPECT_LT(std::abs(est.raw_mi_bits), 0.05);
    EXPECT_GE(est.mi_bits, 0.0);
}

TEST(Ksg, GaussianClosedForm) {
    const double rho = 0.9;
    const double oracle = -0.5 * std::log2(1.0 - rho * rho);
    EXPECT_NEAR(oracle, 1.1981, 2e-4);
    const auto p = gaussian_pair(10000, rho, 3);
    EXPECT_NEAR(ksg_mi(single(p.x, p.y)).mi_bits, oracle, 0.05);
}

TEST(Ksg, IdentityMapSaturatesEntropy) {
    const auto x = uniform(5000, 4);
    const auto r = info_report(single(x, x), 3, EntropyMode::Histogram);
    // Continuous MI of Y = X is unbounded; the estimate exceeds any binned
    // entropy and is flagged.
    EXPECT_GE(r.info_fraction, 0.95);
    EXPECT_TRUE(r.exceeds_entropy);
}

TEST(Ksg, Symmetric) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto p = gaussian_pair(2000, 0.5, 20 + s);
        EXPECT_EQ(ksg_mi(single(p.x, p.y)).raw_mi_bits, ksg_mi(single(p.y, p.x)).raw_mi_bits);
    }
}

TEST(Ksg, MonotoneTransformInvariance) {
    const auto p = gaussian_pair(5000, 0.8, 6);
    const double base = ksg_mi(single(p.x, p.y)).mi_bits;
    std::vector<double> cubed, expo;
    for (double v : p.x) {
        cubed.push_back(v * v * v + v);
        expo.push_back(std::exp(v));
    }
    EXPECT_NEAR(ksg_mi(single(cubed, p.y)).mi_bits, base, 0.02);
    EXPECT_NEAR(ksg_mi(single(expo, p.y)).mi_bits, base, 0.02);
    std::vector<double> affine;
    for (double v : p.x) affine.push_back(3.0 * v - 7.0);
    EXPECT_NEAR(ksg_mi(single(affine, p.y)).mi_bits, base, 1e-6);
}

TEST(Ksg, IndependentNoiseColumnBarelyMatters) {
    const auto p = gaussian_pair(10000, 0.8, 7);
    SampleMatrix with_noise;
    with_noise.columns = {p.x, testing_support::white_noise(10000, 77)};
    with_noise.target = p.y;
    EXPECT_NEAR(ksg_mi(with_noise).mi_bits, ksg_mi(single(p.x, p.y)).mi_bits, 0.05);
}

TEST(Ksg, Deterministic) {
    const auto p = gaussian_pair(3000, 0.4, 8);
    SampleMatrix m = single(p.x, p.y);
    EXPECT_EQ(ksg_mi(m).raw_mi_bits, ksg_mi(m).raw_mi_bits);
}

TEST(Ksg, QuantizedLabelsAreHandled) {
    const auto p = gaussian_pair(3000, 0.8, 9);
    std::vector<double> q;
    for (double v : p.y) q.push_back(std::round(v * 3.0));
    const auto est = ksg_mi(single(p.x, q));
    EXPECT_TRUE(std::isfinite(est.mi_bits));
    EXPECT_GT(est.mi_bits, 0.5);
}

TEST(Ksg, NegativeEstimateClampedWithWarning) {
    bool seen = false;
    for (std::uint64_t s = 0; s < 20 && !seen; ++s) {
        const auto est = ksg_mi(single(uniform(200, 100 + s), uniform(200, 200 + s)));
        if (est.raw_mi_bits < 0.0) {
            seen = true;
            EXPECT_EQ(est.mi_bits, 0.0);
            EXPECT_FALSE(est.warnings.empty());
        }
    }
    EXPECT_TRUE(seen);
}

TEST(Ksg, Errors) {
    try {
        ksg_mi(single(uniform(100, 1), std::vector<double>(100, 120.0)));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ZeroEntropy);
    }
    EXPECT_THROW(ksg_mi(single(uniform(4, 1), uniform(4, 2)), 3), Error);
    SampleMatrix wide;
    wide.target = uniform(500, 3);
    for (int c = 0; c < 33; ++c) wide.columns.push_back(uniform(500, 10 + static_cast<std::uint64_t>(c)));
    EXPECT_THROW(ksg_mi(wide), Error);
    SampleMatrix ragged = single(uniform(50, 1), uniform(50, 2));
    ragged.columns[0].pop_back();
    EXPECT_THROW(ksg_mi(ragged), Error);
}

TEST(Ksg, FewSamplesPerDimensionWarns) {
    SampleMatrix m;
    m.target = uniform(30, 1);
    for (int c = 0; c < 4; ++c) m.columns.push_back(uniform(30, 2 + static_cast<std::uint64_t>(c)));
    EXPECT_FALSE(ksg_mi(m).warnings.empty());
}

// ---------------------------------------------------------------------------
// Entropy

TEST(Entropy, EightEquiprobableBins) {
    std::vector<double> y;
    Rng rng(1);
    for (int i = 0; i < 8000; ++i) y.push_back((i % 8) + rng.uniform(0.0, 0.99));
    HistogramBins bins;
    bins.width = 1.0;
    bins.origin = 0.0;
    const auto e = histogram_entropy(y, bins);
    EXPECT_NEAR(e.bits, 3.0, 0.05);
    EXPECT_EQ(e.occupied_bins, 8u);
}

TEST(Entropy, HistogramMatchesDirectCount) {
    const auto y = testing_support::white_noise(5000, 2, 15.0);
    const auto e = histogram_entropy(y);
    // Independent Freedman-Diaconis width and plug-in entropy.
    auto s = y;
    std::sort(s.begin(), s.end());
    auto q = [&](double p) {
        const double h = p * static_cast<double>(s.size() - 1);
        const auto lo = static_cast<std::size_t>(h);
        return s[lo] + (h - static_cast<double>(lo)) * (s[lo + 1] - s[lo]);
    };
    const double width = 2.0 * (q(0.75) - q(0.25)) / std::cbrt(5000.0);
    EXPECT_NEAR(e.bin_width, width, 1e-12);
    std::map<long, int> counts;
    for (double v : y) ++counts[static_cast<long>(std::floor((v - s.front()) / width))];
    double h = 0.0;
    for (const auto& [bin, c] : counts) {
        const double p = c / 5000.0;
        h -= p * std::log2(p);
    }
    h += (static_cast<double>(counts.size()) - 1.0) / (2.0 * 5000.0) / std::numbers::ln2;
    EXPECT_NEAR(e.bits, h, 1e-9);
}

TEST(Entropy, KnnStandardNormal) {
    const double oracle = 0.5 * std::log2(2.0 * std::numbers::pi * std::numbers::e);
    EXPECT_NEAR(oracle, 2.047, 1e-3);
    const auto e = knn_entropy(testing_support::white_noise(10000, 3));
    EXPECT_NEAR(e.bits, oracle, 0.05);
    EXPECT_FALSE(e.negative);
}

TEST(Entropy, KnnNegativeIsFlagged) {
    const auto e = knn_entropy(testing_support::white_noise(2000, 4, 0.01));
    EXPECT_TRUE(e.negative);
    EXPECT_FALSE(e.warnings.empty());
}

TEST(Entropy, ConstantTargetIsZeroEntropy) {
    const std::vector<double> y(500, 120.0);
    for (auto mode : {EntropyMode::Histogram, EntropyMode::KNN}) {
        try {
            target_entropy(y, mode);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::ZeroEntropy);
            EXPECT_NE(std::string(e.what()).find("zero-entropy target"), std::string::npos);
        }
    }
}

TEST(Entropy, HistogramNeedsHundredSamples) {
    EXPECT_THROW(histogram_entropy(uniform(99, 1)), Error);
}

TEST(InfoFraction, Examples) {
    EXPECT_NEAR(info_fraction(0.28, 2.93), 0.0956, 5e-5);
    EXPECT_EQ(info_fraction(0.0, 2.5), 0.0);
    EXPECT_EQ(info_fraction(2.5, 2.5), 1.0);
    EXPECT_THROW(info_fraction(1.0, 0.0), Error);
}

TEST(InfoFraction, MiStaysBelowHistogramEntropy) {
    for (double rho : {0.0, 0.5, 0.9, 0.99}) {
        const auto p = gaussian_pair(4000, rho, 30);
        std::vector<double> sbp;
        for (double v : p.y) sbp.push_back(120.0 + 15.0 * v);
        const auto r = info_report(single(p.x, sbp), 3, EntropyMode::Histogram);
        EXPECT_LE(r.mi.mi_bits, r.entropy.bits + kEntropyTolerance) << rho;
        EXPECT_FALSE(r.exceeds_entropy);
        EXPECT_GE(r.info_fraction, 0.0);
    }
}

// ---------------------------------------------------------------------------
// Bootstrap

TEST(Bootstrap, FullFractionHasNoSpread) {
    const auto p = gaussian_pair(2000, 0.9, 11);
    const std::vector<double> fractions{0.05, 0.5, 1.0};
    const auto curve = bootstrap_mi(single(p.x, p.y), fractions, 20, 7);
    ASSERT_EQ(curve.size(), 3u);
    EXPECT_EQ(curve[2].std, 0.0);
    EXPECT_EQ(curve[2].sample_size, 2000u);
    EXPECT_GT(curve[0].std, curve[2].std);
    EXPECT_EQ(curve[0].sample_size, 100u);
    for (const auto& pt : curve) EXPECT_EQ(pt.runs.size(), 20u);
}

TEST(Bootstrap, IndependentMeansNearZero) {
    const std::vector<double> fractions{0.05, 0.25, 1.0};
    const auto curve = bootstrap_mi(single(uniform(4000, 1), uniform(4000, 2)), fractions, 20, 3);
    for (const auto& pt : curve) EXPECT_LT(pt.mean, 0.05) << pt.fraction;
}

TEST(Bootstrap, DeterministicAcrossThreadCounts) {
    const auto p = gaussian_pair(1000, 0.6, 12);
    const std::vector<double> fractions{0.1, 0.5};
    const auto a = bootstrap_mi(single(p.x, p.y), fractions, 6, 9, 3, 1);
    const auto b = bootstrap_mi(single(p.x, p.y), fractions, 6, 9, 3, 4);
    for (std::size_t f = 0; f < a.size(); ++f) EXPECT_EQ(a[f].runs, b[f].runs);
    const auto c = bootstrap_mi(single(p.x, p.y), fractions, 6, 10, 3, 1);
    EXPECT_NE(a[0].runs, c[0].runs);
}

TEST(Bootstrap, RejectsBadFractions) {
    const auto p = gaussian_pair(200, 0.6, 13);
    const auto m = single(p.x, p.y);
    EXPECT_THROW(bootstrap_mi(m, std::vector<double>{0.5, 0.1}, 3, 1), Error);
    EXPECT_THROW(bootstrap_mi(m, std::vector<double>{0.0, 1.0}, 3, 1), Error);
    EXPECT_THROW(bootstrap_mi(m, std::vector<double>{0.01, 1.0}, 3, 1), Error);
}
