#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "pulseaudit/synth.hpp"

using namespace pulseaudit;
using namespace pulseaudit::synth;

namespace {

SynthSpec small_spec(Task task = Task::HrPredictable) {
    SynthSpec s;
    s.n_patients = 3;
    s.records_per_patient = 2;
    s.duration_s = 40;
    s.task = task;
    return s;
}

std::vector<double> ppg_of(const signals::Record& r) {
    const auto x = r.waveforms.at(signals::Channel::PPG).samples();
    return {x.begin(), x.end()};
}

std::vector<double> vec(const signals::Waveform& w) { return {w.samples().begin(), w.samples().end()}; }

}  // namespace

TEST(GenPpg, DetectorRecoversAnalyticPeaks) {
    const auto p = gen_ppg(60, 10, 125, 0.0, 1);
    ASSERT_EQ(p.truth.peaks.size(), 10u);
    // Systolic centres sit at (k + 0.3) s; the reflected lobe is too far away to move them.
    for (std::size_t k = 0; k < 10; ++k)
        EXPECT_NEAR(static_cast<double>(p.truth.peaks[k]), (static_cast<double>(k) + 0.3) * 125.0, 1.0);
    const auto found = features::detect_beats(p.ppg);
    ASSERT_EQ(found.peaks.size(), 10u);
    for (std::size_t k = 0; k < 10; ++k)
        EXPECT_LE(std::abs(static_cast<double>(found.peaks[k]) - static_cast<double>(p.truth.peaks[k])), 1.0);
    for (std::size_t k = 0; k < 10; ++k) EXPECT_LE(p.truth.feet[k], p.truth.peaks[k]);
}

TEST(GenPpg, HeartRateMatchesConstruction) {
    for (double hr : {50.0, 60.0, 75.0, 110.0, 150.0}) {
        const auto p = gen_ppg(hr, 20, 125, 0.0, 1);
        EXPECT_NEAR(features::heart_rate(features::detect_beats(p.ppg), 125), hr, 0.5 + hr * hr / (60 * 125)) << hr;
    }
    EXPECT_NEAR(features::heart_rate(features::detect_beats(gen_ppg(60, 10, 125, 0.0, 1).ppg), 125), 60.0, 0.5);
}

TEST(GenPpg, SeededNoise) {
    const auto a = gen_ppg(72, 30, 125, 0.05, 9);
    const auto b = gen_ppg(72, 30, 125, 0.05, 9);
    const auto c = gen_ppg(72, 30, 125, 0.05, 10);
    const auto clean = gen_ppg(72, 30, 125, 0.0, 9);
    EXPECT_EQ(vec(a.ppg), vec(b.ppg));
    EXPECT_NE(vec(a.ppg), vec(c.ppg));
    std::vector<double> resid(clean.ppg.size());
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = a.ppg.samples()[i] - clean.ppg.samples()[i];
    EXPECT_NEAR(pstdev(resid), 0.05, 0.003);
    EXPECT_EQ(a.truth.peaks, clean.truth.peaks);
}

TEST(GenPpg, RejectsBadParameters) {
    EXPECT_THROW(gen_ppg(39, 10, 125, 0, 1), Error);
    EXPECT_THROW(gen_ppg(181, 10, 125, 0, 1), Error);
    EXPECT_THROW(gen_ppg(60, 10, 125, -0.1, 1), Error);
    EXPECT_THROW(gen_ppg(60, 0, 125, 0, 1), Error);
}

TEST(BeatsFromRate, ConstantRateSpacing) {
    const std::vector<double> hr(125 * 30, 80.0);
    const auto beats = beats_from_rate(hr, 125);
    for (std::size_t k = 3; k < beats.size(); ++k) EXPECT_NEAR(beats[k].center_s - beats[k - 1].center_s, 0.75, 1e-9);
    EXPECT_NEAR(beats[2].center_s, 0.3 * 0.75, 1e-9);
}

TEST(BeatsFromRate, CountFollowsIntegratedRate) {
    std::vector<double> hr(125 * 60);
    double integral = 0.0;
    for (std::size_t i = 0; i < hr.size(); ++i) {
        hr[i] = 60.0 + 30.0 * static_cast<double>(i) / static_cast<double>(hr.size());
        integral += hr[i] / 60.0 / 125.0;
    }
    const auto beats = beats_from_rate(hr, 125);
    const auto in_record = static_cast<double>(std::count_if(beats.begin(), beats.end(), [](const Beat& b) { return b.center_s >= 0; }));
    EXPECT_NEAR(in_record, std::floor(integral + 0.7), 1.0);
}

TEST(GenDataset, Layout) {
    const auto ds = gen_dataset(small_spec());
    ASSERT_EQ(ds.records.size(), 6u);
    EXPECT_EQ(ds.patients.size(), 3u);
    EXPECT_EQ(ds.records[3].record_id, "p001_r01");
    EXPECT_EQ(ds.records[3].patient_id, "p001");
    EXPECT_EQ(*ds.records[3].start_time, 86400.0);
    EXPECT_EQ(ds.records[2].tags, std::vector<std::string>{"rest"});
    EXPECT_TRUE(ds.records[3].tags.empty());
    for (const auto& r : ds.records) {
        EXPECT_EQ(r.waveforms.at(signals::Channel::PPG).size(), 5000u);
        const auto& hr = r.label_tracks.at("hr");
        EXPECT_EQ(hr.size(), 5000u);
        for (double v : hr) {
            EXPECT_GE(v, 57.0);
            EXPECT_LE(v, 103.0);
        }
        EXPECT_FALSE(r.label_tracks.count("sbp"));
    }
    for (const auto& [id, m] : ds.patients) {
        EXPECT_GE(*m.age, 25.0);
        EXPECT_LE(*m.age, 75.0);
    }
}

TEST(GenDataset, DeterministicAndTaskIndependentSignal) {
    const auto a = gen_dataset(small_spec());
    const auto b = gen_dataset(small_spec());
    const auto r = gen_dataset(small_spec(Task::RandomLabel));
    auto other = small_spec();
    other.seed = 8;
    const auto c = gen_dataset(other);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const auto x = ppg_of(a.records[i]);
        EXPECT_EQ(x, ppg_of(b.records[i]));
        EXPECT_EQ(x, ppg_of(r.records[i]));
        EXPECT_NE(x, ppg_of(c.records[i]));
        EXPECT_EQ(a.records[i].label_tracks.at("hr"), r.records[i].label_tracks.at("hr"));
    }
}

TEST(GenDataset, HrLabelMatchesSignal) {
    const auto ds = gen_dataset(small_spec());
    for (const auto& rec : ds.records)
        for (const auto& w : signals::segment(rec, {10, 5})) {
            const double measured = features::heart_rate(features::detect_beats(w.signal()), ds.rate_hz);
            EXPECT_NEAR(measured, w.labels.at("hr"), 3.0) << w.record_id << "@" << w.start_index;
        }
}

TEST(GenDataset, RandomLabelBlocksAndMoments) {
    auto spec = small_spec(Task::RandomLabel);
    spec.n_patients = 10;
    spec.duration_s = 120;
    const auto ds = gen_dataset(spec);
    std::vector<double> draws;
    for (const auto& rec : ds.records) {
        const auto& sbp = rec.label_tracks.at("sbp");
        for (std::size_t i = 0; i < sbp.size(); ++i) {
            if (i % 250 == 0) draws.push_back(sbp[i]);
            else EXPECT_EQ(sbp[i], sbp[i - 1]);
        }
    }
    ASSERT_EQ(draws.size(), 20u * 60u);
    EXPECT_NEAR(mean(draws), 120.0, 2.0);
    EXPECT_NEAR(pstdev(draws), 20.0, 1.5);
}

TEST(GenDataset, DriftingLabelSlope) {
    auto spec = small_spec(Task::DriftingLabel);
    spec.records_per_patient = 4;
    const auto ds = gen_dataset(spec);
    for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t r = 1; r < 4; ++r) {
            const auto& prev = ds.records[p * 4 + r - 1].label_tracks.at("sbp");
            const auto& cur = ds.records[p * 4 + r].label_tracks.at("sbp");
            for (std::size_t i = 0; i < cur.size(); i += 500) EXPECT_NEAR(cur[i] - prev[i], 1.0, 1e-9);
        }
}

TEST(GenDataset, WindowLabelsReproducible) {
    const auto spec = small_spec(Task::RandomLabel);
    const auto a = gen_dataset(spec);
    const auto b = gen_dataset(spec);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const auto wa = signals::segment(a.records[i], {10, 5});
        const auto wb = signals::segment(b.records[i], {10, 5});
        ASSERT_EQ(wa.size(), wb.size());
        for (std::size_t k = 0; k < wa.size(); ++k) EXPECT_EQ(wa[k].labels, wb[k].labels);
    }
}

TEST(GenDataset, ValidatesSpec) {
    auto s = small_spec();
    s.hr_lo = 30;
    EXPECT_THROW(gen_dataset(s), Error);
    s = small_spec();
    s.hr_hi = 179;
    EXPECT_THROW(gen_dataset(s), Error);
    s = small_spec();
    s.noise_std = -1;
    EXPECT_THROW(gen_dataset(s), Error);
    s = small_spec();
    s.n_patients = 0;
    EXPECT_THROW(gen_dataset(s), Error);
    EXPECT_THROW(gen_dataset(small_spec(Task::SubspaceVectors)), Error);
    EXPECT_EQ(parse_task("drift"), Task::DriftingLabel);
    EXPECT_THROW(parse_task("nope"), Error);
}

TEST(SubspaceVectors, ExactRankAndZeroMean) {
    for (std::size_t rank : {1u, 3u, 5u}) {
        const auto vs = gen_subspace_vectors(200, 24, rank, 4);
        Eigen::MatrixXd m(24, 200);
        double sq = 0.0;
        for (std::size_t c = 0; c < vs.size(); ++c) {
            EXPECT_NEAR(mean(vs[c]), 0.0, 1e-12);
            for (std::size_t r = 0; r < 24; ++r) {
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = vs[c][r];
                sq += vs[c][r] * vs[c][r];
            }
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
        lu.setThreshold(1e-10);
        EXPECT_EQ(lu.rank(), static_cast<Eigen::Index>(rank));
        EXPECT_NEAR(sq / (24.0 * 200.0), 1.0, 0.25);
    }
    EXPECT_EQ(gen_subspace_vectors(10, 8, 2, 1), gen_subspace_vectors(10, 8, 2, 1));
    EXPECT_THROW(gen_subspace_vectors(10, 8, 8, 1), Error);
    EXPECT_THROW(gen_subspace_vectors(10, 8, 0, 1), Error);
}
