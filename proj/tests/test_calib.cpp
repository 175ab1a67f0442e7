#include <gtest/gtest.h>

#include "pulseaudit/calib.hpp"

using namespace pulseaudit;
using namespace pulseaudit::calib;

namespace {

Observation obs(const std::string& rec, std::size_t start, std::map<std::string, double> values,
                const std::string& patient = "p") {
    return Observation{patient, rec, start, std::move(values)};
}

std::vector<Observation> record_with_truths(const std::vector<double>& truths, const std::string& rec = "r") {
    std::vector<Observation> out;
    for (std::size_t i = 0; i < truths.size(); ++i) out.push_back(obs(rec, i * 625, {{"sbp", truths[i]}}));
    return out;
}

class TruthMinus : public Predictor {
public:
    explicit TruthMinus(double d) : d_(d) {}
    double predict(const Observation& o) const override { return *o.get("sbp") - d_; }
    std::string name() const override { return "truth-minus"; }

private:
    double d_;
};

int rank(BhsGrade g) { return static_cast<int>(g); }

// Grade from exact counts, written from the threshold table by hand.
BhsGrade oracle_grade(std::size_t c5, std::size_t c10, std::size_t c15, std::size_t n) {
    const auto at_least = [&](std::size_t c, std::size_t pct) { return 100 * c >= pct * n; };
    if (at_least(c5, 60) && at_least(c10, 85) && at_least(c15, 95)) return BhsGrade::A;
    if (at_least(c5, 50) && at_least(c10, 75) && at_least(c15, 90)) return BhsGrade::B;
    if (at_least(c5, 40) && at_least(c10, 65) && at_least(c15, 85)) return BhsGrade::C;
    return BhsGrade::Fail;
}

std::vector<double> errors_with_counts(std::size_t within5, std::size_t within10, std::size_t within15, std::size_t n) {
    std::vector<double> e;
    for (std::size_t i = 0; i < n; ++i) {
        if (i < within5) e.push_back(i % 2 ? 5.0 : -1.0);
        else if (i < within10) e.push_back(i % 2 ? 10.0 : -7.0);
        else if (i < within15) e.push_back(i % 2 ? -15.0 : 12.0);
        else e.push_back(i % 2 ? 15.5 : -40.0);
    }
    return e;
}

}  // namespace

TEST(NaiveCalibrate, MeanOfFirstThree) {
    const auto rec = record_with_truths({118, 120, 122, 150, 90});
    const auto p = naive_calibrate(rec, "sbp");
    EXPECT_DOUBLE_EQ(p->value(), 120.0);
    for (const auto& o : rec) EXPECT_DOUBLE_EQ(p->predict(o), 120.0);
}

TEST(NaiveCalibrate, ConstantTruthGivesZeroError) {
    const auto rec = record_with_truths(std::vector<double>(12, 120.0));
    const auto p = naive_calibrate(rec, "sbp");
    std::vector<double> preds, truths;
    for (std::size_t i = 3; i < rec.size(); ++i) {
        preds.push_back(p->predict(rec[i]));
        truths.push_back(120.0);
    }
    const auto r = evaluate(preds, truths);
    EXPECT_EQ(r.bias, 0.0);
    EXPECT_EQ(r.sd, 0.0);
}

TEST(NaiveCalibrate, Errors) {
    try {
        naive_calibrate(record_with_truths({120, 121}), "sbp");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
    }
    auto rec = record_with_truths({120, 121, 122});
    rec[1].values.clear();
    try {
        naive_calibrate(rec, "sbp");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingLabel);
    }
}

TEST(OffsetCalibrate, ShiftsConstantBase) {
    const auto rec = record_with_truths({120, 130, 110});
    const auto p = offset_calibrate(std::make_shared<ConstantPredictor>(100.0), rec, "sbp");
    EXPECT_DOUBLE_EQ(p->offset(), 20.0);
    for (const auto& o : rec) EXPECT_DOUBLE_EQ(p->predict(o), 120.0);
}

TEST(OffsetCalibrate, ExactBaseUnchanged) {
    const auto rec = record_with_truths({100, 130, 110});
    const auto p = offset_calibrate(std::make_shared<ConstantPredictor>(100.0), rec, "sbp");
    EXPECT_EQ(p->offset(), 0.0);
    EXPECT_EQ(p->predict(rec[1]), 100.0);
}

TEST(OffsetCalibrate, CancelsConstantBias) {
    Rng rng(2);
    std::vector<double> truths(40);
    for (double& t : truths) t = rng.uniform(90, 170);
    const auto rec = record_with_truths(truths);
    const auto p = offset_calibrate(std::make_shared<TruthMinus>(7.0), rec, "sbp");
    std::vector<double> preds;
    for (std::size_t i = 1; i < rec.size(); ++i) preds.push_back(p->predict(rec[i]));
    const auto r = evaluate(preds, std::span<const double>(truths).subspan(1));
    EXPECT_NEAR(r.bias, 0.0, 1e-12);
    EXPECT_NEAR(r.sd, 0.0, 1e-12);
}

TEST(OffsetCalibrate, FirstWindowErrorIsZero) {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const auto rec = record_with_truths({rng.uniform(80, 200), rng.uniform(80, 200)});
        const auto p = offset_calibrate(std::make_shared<ConstantPredictor>(rng.uniform(-50, 50)), rec, "sbp");
        EXPECT_NEAR(p->predict(rec[0]) - *rec[0].get("sbp"), 0.0, 1e-12);
    }
}

TEST(OffsetCalibrate, MissingFirstTruth) {
    auto rec = record_with_truths({120, 130});
    rec[0].values.clear();
    EXPECT_THROW(offset_calibrate(std::make_shared<ConstantPredictor>(1.0), rec, "sbp"), Error);
    EXPECT_THROW(offset_calibrate(std::make_shared<ConstantPredictor>(1.0), std::vector<Observation>{}, "sbp"), Error);
}

TEST(Evaluate, Examples) {
    const std::vector<double> truths{0, 0, 0, 0};
    auto r = evaluate(std::vector<double>{3, -3, 3, -3}, truths);
    EXPECT_DOUBLE_EQ(r.bias, 0.0);
    EXPECT_DOUBLE_EQ(r.sd, 3.0);
    EXPECT_DOUBLE_EQ(r.mae, 3.0);
    r = evaluate(truths, truths);
    EXPECT_EQ(r.bias, 0.0);
    EXPECT_EQ(r.sd, 0.0);
    EXPECT_EQ(r.mae, 0.0);
    r = evaluate(std::vector<double>{1, 2, 3, 4}, truths);
    EXPECT_DOUBLE_EQ(r.bias, 2.5);
    EXPECT_NEAR(r.sd, std::sqrt(1.25), 1e-12);
    EXPECT_NEAR(r.sd, 1.1180, 1e-4);
    EXPECT_DOUBLE_EQ(r.mae, 2.5);
    EXPECT_EQ(r.n, 4u);
}

TEST(Evaluate, Errors) {
    EXPECT_THROW(evaluate(std::vector<double>{1, 2}, std::vector<double>{1}), Error);
    EXPECT_THROW(evaluate(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST(Evaluate, TranslationEquivariant) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> p(30), t(30), shifted(30);
        const double c = rng.uniform(-20, 20);
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = rng.normal(120, 10);
            t[i] = rng.normal(120, 10);
            shifted[i] = p[i] + c;
        }
        const auto a = evaluate(p, t);
        const auto b = evaluate(shifted, t);
        EXPECT_NEAR(b.bias, a.bias + c, 1e-9);
        EXPECT_NEAR(b.sd, a.sd, 1e-9);
        EXPECT_GE(a.sd, 0.0);
        EXPECT_GE(a.mae, std::abs(a.bias) - 1e-12);
    }
}

TEST(Drift, StationaryIsFlat) {
    Rng rng(6);
    std::vector<Observation> w;
    for (int i = 0; i < 400; ++i)
        w.push_back(obs("r", 0, {{"sbp", 120 + rng.normal(0, 1)}, {"elapsed_s", i * 864.0}}));
    const auto curve = drift_curve(ConstantPredictor(120), w, "sbp", 86400);
    ASSERT_EQ(curve.size(), 4u);
    for (const auto& pt : curve) EXPECT_NEAR(pt.eval.bias, 0.0, 0.5);
}

TEST(Drift, LinearDriftGivesLinearBias) {
    std::vector<Observation> w;
    for (int day = 0; day < 8; ++day)
        for (int k = 0; k < 10; ++k)
            w.push_back(obs("r", 0, {{"sbp", 120.0 + day}, {"elapsed_s", day * 86400.0 + k * 600.0}}));
    const auto curve = drift_curve(ConstantPredictor(120), w, "sbp", 86400);
    ASSERT_EQ(curve.size(), 8u);
    for (std::size_t b = 0; b < curve.size(); ++b) {
        EXPECT_EQ(curve[b].bucket, b);
        EXPECT_DOUBLE_EQ(curve[b].bucket_start_s, 86400.0 * static_cast<double>(b));
        EXPECT_NEAR(curve[b].eval.bias, -static_cast<double>(b), 1e-12);
    }
}

TEST(Drift, SparseBucketsOmitted) {
    std::vector<Observation> w;
    for (double t : {0.0, 10.0, 200.0, 310.0, 320.0, 330.0})
        w.push_back(obs("r", 0, {{"sbp", 100.0}, {"elapsed_s", t}}));
    const auto curve = drift_curve(ConstantPredictor(100), w, "sbp", 100);
    ASSERT_EQ(curve.size(), 2u);
    EXPECT_EQ(curve[0].bucket, 0u);
    EXPECT_EQ(curve[1].bucket, 3u);
    EXPECT_EQ(curve[1].eval.n, 3u);
    EXPECT_THROW(drift_curve(ConstantPredictor(100), w, "sbp", 0), Error);
}

TEST(Aami, Examples) {
    const CohortStats good{85, 9, 9};
    EXPECT_FALSE(aami_check(0.79, 8.61, good).sd_ok);
    EXPECT_FALSE(aami_check(0.79, 8.61, good).compliant);
    EXPECT_TRUE(aami_check(4.9, 7.9, good).compliant);
    const auto r = aami_check(0.0, 0.0, CohortStats{84, 20, 20});
    EXPECT_FALSE(r.subjects_ok);
    EXPECT_FALSE(r.cohort_ok);
    EXPECT_FALSE(r.compliant);
    EXPECT_TRUE(r.bias_ok && r.sd_ok);
}

TEST(Aami, BoundariesAreInclusive) {
    const CohortStats good{100, 10, 10};
    EXPECT_TRUE(aami_check(0, 8.0, good).sd_ok);
    EXPECT_FALSE(aami_check(0, 8.000001, good).sd_ok);
    EXPECT_TRUE(aami_check(5.0, 0, good).bias_ok);
    EXPECT_TRUE(aami_check(-5.0, 0, good).bias_ok);
    EXPECT_FALSE(aami_check(-5.000001, 0, good).bias_ok);
    EXPECT_TRUE(aami_check(0, 0, good).compliant);
    EXPECT_FALSE(aami_check(0, 0, CohortStats{100, 9, 10}).high_tail_ok);
    EXPECT_FALSE(aami_check(0, 0, CohortStats{100, 10, 9}).low_tail_ok);
    // 10% of 85 is 8.5 subjects, so 9 are needed.
    EXPECT_TRUE(aami_check(0, 0, CohortStats{85, 9, 9}).cohort_ok);
    EXPECT_FALSE(aami_check(0, 0, CohortStats{85, 8, 9}).cohort_ok);
    EXPECT_FALSE(aami_check(0, 0, CohortStats{}).cohort_ok);
}

TEST(Aami, CompliantIsConjunction) {
    Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
        const CohortStats c{80 + rng.index(20), rng.index(15), rng.index(15)};
        const auto r = aami_check(rng.uniform(-7, 7), rng.uniform(5, 11), c);
        EXPECT_EQ(r.cohort_ok, r.subjects_ok && r.high_tail_ok && r.low_tail_ok);
        EXPECT_EQ(r.compliant, r.bias_ok && r.sd_ok && r.cohort_ok);
    }
}

TEST(Cohort, CountsSubjectMeans) {
    const std::map<std::string, std::vector<double>> m{
        {"a", {190, 185}}, {"b", {170, 180}}, {"c", {95, 99}}, {"d", {100}}, {"e", {}}};
    const auto c = cohort_from(m);
    EXPECT_EQ(c.subjects, 4u);
    EXPECT_EQ(c.above_180, 1u);
    EXPECT_EQ(c.below_100, 1u);
}

TEST(Bhs, Examples) {
    auto r = bhs_grade(errors_with_counts(62, 86, 96, 100));
    EXPECT_DOUBLE_EQ(r.pct5, 62.0);
    EXPECT_DOUBLE_EQ(r.pct10, 86.0);
    EXPECT_DOUBLE_EQ(r.pct15, 96.0);
    EXPECT_EQ(r.grade, BhsGrade::A);
    EXPECT_EQ(bhs_grade(errors_with_counts(45, 70, 86, 100)).grade, BhsGrade::C);
    r = bhs_grade(std::vector<double>(10, 0.0));
    EXPECT_EQ(r.pct15, 100.0);
    EXPECT_EQ(r.grade, BhsGrade::A);
    EXPECT_EQ(grade_from_percentages(62, 86, 96), BhsGrade::A);
    EXPECT_EQ(grade_from_percentages(45, 70, 86), BhsGrade::C);
    EXPECT_THROW(bhs_grade(std::vector<double>{}), Error);
}

TEST(Bhs, TableBoundaries) {
    EXPECT_EQ(bhs_grade(errors_with_counts(60, 85, 95, 100)).grade, BhsGrade::A);
    EXPECT_EQ(bhs_grade(errors_with_counts(59, 85, 95, 100)).grade, BhsGrade::B);
    EXPECT_EQ(bhs_grade(errors_with_counts(50, 75, 90, 100)).grade, BhsGrade::B);
    EXPECT_EQ(bhs_grade(errors_with_counts(50, 75, 89, 100)).grade, BhsGrade::C);
    EXPECT_EQ(bhs_grade(errors_with_counts(40, 65, 85, 100)).grade, BhsGrade::C);
    EXPECT_EQ(bhs_grade(errors_with_counts(40, 64, 85, 100)).grade, BhsGrade::Fail);
    // 3/5 is exactly 60%, 17/20 exactly 85%.
    EXPECT_EQ(bhs_grade(errors_with_counts(12, 17, 19, 20)).grade, BhsGrade::A);
    EXPECT_EQ(bhs_grade(std::vector<double>{5.0, -5.0, 5.000001}).pct5, 200.0 / 3.0);
}

TEST(Bhs, AgreesWithCountOracle) {
    Rng rng(9);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.index(300);
        std::vector<double> e(n);
        std::size_t c5 = 0, c10 = 0, c15 = 0;
        const double scale = rng.uniform(1, 15);
        for (double& v : e) {
            v = std::round(rng.normal(0, scale));
            c5 += std::abs(v) <= 5;
            c10 += std::abs(v) <= 10;
            c15 += std::abs(v) <= 15;
        }
        const auto r = bhs_grade(e);
        EXPECT_EQ(r.grade, oracle_grade(c5, c10, c15, n));
        EXPECT_LE(r.pct5, r.pct10);
        EXPECT_LE(r.pct10, r.pct15);
    }
}

TEST(Bhs, SmallerErrorsNeverWorsen) {
    Rng rng(10);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> e(50), smaller(50);
        for (std::size_t i = 0; i < e.size(); ++i) {
            e[i] = rng.normal(0, 9);
            smaller[i] = e[i] * rng.uniform();
        }
        EXPECT_LE(rank(bhs_grade(smaller).grade), rank(bhs_grade(e).grade));
    }
}

TEST(Predictors, MeanOfTraining) {
    const auto train = record_with_truths({100, 110, 120});
    const MeanOfTraining m(train, "sbp");
    EXPECT_DOUBLE_EQ(m.predict(Observation{}), 110.0);
    EXPECT_THROW(MeanOfTraining(train, "hr"), Error);
}

TEST(Predictors, LinearRecoversExactModel) {
    Rng rng(11);
    std::vector<Observation> train;
    for (int i = 0; i < 50; ++i) {
        const double a = rng.normal(), b = rng.normal();
        train.push_back(obs("r", 0, {{"a", a}, {"b", b}, {"sbp", 2 + 3 * a - b}}));
    }
    const LinearOnFeatures lin(train, "sbp", {"a", "b"});
    EXPECT_FALSE(lin.used_ridge());
    EXPECT_NEAR(lin.coefficients()(0), 2.0, 1e-9);
    EXPECT_NEAR(lin.coefficients()(1), 3.0, 1e-9);
    EXPECT_NEAR(lin.coefficients()(2), -1.0, 1e-9);
    EXPECT_NEAR(lin.predict(obs("x", 0, {{"a", 1}, {"b", 1}})), 4.0, 1e-9);
}

TEST(Predictors, LinearSingularDesignUsesRidge) {
    std::vector<Observation> train;
    for (int i = 0; i < 20; ++i) {
        const double a = i;
        train.push_back(obs("r", 0, {{"a", a}, {"a2", a}, {"sbp", 100 + 2 * a}}));
    }
    const LinearOnFeatures lin(train, "sbp", {"a", "a2"});
    EXPECT_TRUE(lin.used_ridge());
    EXPECT_NEAR(lin.predict(obs("x", 0, {{"a", 5}, {"a2", 5}})), 110.0, 1e-4);
    // A missing feature falls back to its training mean.
    EXPECT_NEAR(lin.predict(obs("x", 0, {})), 100 + 2 * 9.5, 1e-4);
    EXPECT_THROW(LinearOnFeatures(train, "sbp", {"zz"}), Error);
    EXPECT_THROW(LinearOnFeatures(train, "sbp", {}), Error);
}

TEST(RunCalibration, NaiveOnConstantRecords) {
    const auto train = record_with_truths({100, 140, 160}, "train");
    std::vector<Observation> test;
    for (int r = 0; r < 4; ++r)
        for (int i = 0; i < 6; ++i)
            test.push_back(obs("r" + std::to_string(r), static_cast<std::size_t>(i) * 625,
                               {{"sbp", 100.0 + 20 * r}}, "p" + std::to_string(r)));
    CalibOptions opt;
    opt.method = Method::Naive;
    const auto out = run_calibration(train, test, opt);
    EXPECT_EQ(out.groups, 4u);
    EXPECT_EQ(out.calibration_windows_excluded, 12u);
    EXPECT_EQ(out.eval.n, 12u);
    EXPECT_EQ(out.eval.bias, 0.0);
    EXPECT_EQ(out.eval.sd, 0.0);
    EXPECT_EQ(out.bhs.grade, BhsGrade::A);
    EXPECT_FALSE(out.aami.cohort_ok);
    EXPECT_TRUE(out.drift.empty());

    opt.method = Method::None;
    const auto none = run_calibration(train, test, opt);
    EXPECT_EQ(none.eval.n, 24u);
    EXPECT_NEAR(none.eval.bias, 133.3333333333 - 130.0, 1e-9);
}

TEST(RunCalibration, OffsetMatchesHandComputation) {
    const auto train = record_with_truths({100, 120}, "train");
    std::vector<Observation> test;
    const std::vector<double> truths{130, 125, 140, 150};
    // Rows arrive out of order; calibration uses the earliest window.
    for (std::size_t i = truths.size(); i-- > 0;)
        test.push_back(obs("r", i * 625, {{"sbp", truths[i]}, {"elapsed_s", 5.0 * static_cast<double>(i)}}));
    CalibOptions opt;
    opt.method = Method::Offset;
    opt.bucket_s = 10.0;
    const auto out = run_calibration(train, test, opt);
    // Base predicts 110, offset 20, so every prediction is 130.
    EXPECT_EQ(out.eval.n, 3u);
    EXPECT_NEAR(out.eval.bias, (5.0 - 10.0 - 20.0) / 3.0, 1e-12);
    ASSERT_EQ(out.drift.size(), 1u);  // bucket 0 holds one window, bucket 1 two
    EXPECT_EQ(out.drift[0].bucket, 1u);
    EXPECT_NEAR(out.drift[0].eval.bias, (-10.0 - 20.0) / 2.0, 1e-12);
}

TEST(RunCalibration, PatientScopeAndTooShortRecords) {
    const auto train = record_with_truths({100, 120}, "train");
    std::vector<Observation> test{obs("a", 0, {{"sbp", 120}}, "p"), obs("b", 0, {{"sbp", 124}}, "p"),
                                  obs("b", 625, {{"sbp", 126}}, "p"), obs("c", 0, {{"sbp", 118}}, "p"),
                                  obs("c", 625, {{"sbp", 130}}, "p")};
    CalibOptions opt;
    opt.method = Method::Naive;
    // Record "a" has a single window, too few to calibrate on.
    EXPECT_THROW(run_calibration(train, test, opt), Error);
    opt.scope = CalibScope::Patient;
    const auto out = run_calibration(train, test, opt);
    EXPECT_EQ(out.groups, 1u);
    // Ordered by record then start: 120, 124, 126 calibrate; 118 and 130 remain.
    EXPECT_EQ(out.eval.n, 2u);
    EXPECT_NEAR(out.eval.bias, (370.0 / 3.0) - 124.0, 1e-12);
}
