#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pulseaudit/common.hpp"
#include "pulseaudit/table.hpp"

namespace pulseaudit::calib {

class Predictor {
public:
    virtual ~Predictor() = default;
    virtual double predict(const Observation& o) const = 0;
    virtual std::string name() const = 0;
};

using PredictorPtr = std::shared_ptr<const Predictor>;

class ConstantPredictor : public Predictor {
public:
    explicit ConstantPredictor(double value) : value_(value) {}
    double predict(const Observation&) const override { return value_; }
    std::string name() const override { return "constant"; }
    double value() const { return value_; }

private:
    double value_;
};

/// Predicts the training-set mean of the label.
class MeanOfTraining : public Predictor {
public:
    MeanOfTraining(std::span<const Observation> train, const std::string& label) {
        std::vector<double> ys;
        for (const auto& o : train)
            if (auto y = o.get(label)) ys.push_back(*y);
        require(!ys.empty(), ErrorKind::InsufficientData, "no training windows carry '" + label + "'");
        mean_ = mean(ys);
    }
    double predict(const Observation&) const override { return mean_; }
    std::string name() const override { return "mean"; }

private:
    double mean_ = 0.0;
};

/// Ordinary least squares with intercept on selected features, fitted by the
/// normal equations; a 1e-8 ridge is added when the design is singular.
/// Missing feature values are replaced by their training mean.
class LinearOnFeatures : public Predictor {
public:
    LinearOnFeatures(std::span<const Observation> train, const std::string& label, std::vector<std::string> features)
        : features_(std::move(features)) {
        require(!features_.empty(), ErrorKind::InvalidArgument, "linear predictor needs at least one feature");
        std::vector<const Observation*> rows;
        for (const auto& o : train)
            if (o.get(label)) rows.push_back(&o);
        require(rows.size() >= 2, ErrorKind::InsufficientData, "too few labelled training windows");
        fill_.assign(features_.size(), 0.0);
        for (std::size_t f = 0; f < features_.size(); ++f) {
            std::vector<double> vs;
            for (const auto* o : rows)
                if (auto v = o->get(features_[f])) vs.push_back(*v);
            require(!vs.empty(), ErrorKind::MissingLabel, "feature '" + features_[f] + "' absent from training data");
            fill_[f] = mean(vs);
        }
        const auto n = static_cast<Eigen::Index>(rows.size());
        const auto p = static_cast<Eigen::Index>(features_.size() + 1);
        Eigen::MatrixXd x(n, p);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            x.row(i) = design(*rows[static_cast<std::size_t>(i)]).transpose();
            y(i) = *rows[static_cast<std::size_t>(i)]->get(label);
        }
        Eigen::MatrixXd xtx = x.transpose() * x;
        const Eigen::VectorXd xty = x.transpose() * y;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
        if (lu.rank() < p) {
            ridge_ = true;
            xtx += 1e-8 * Eigen::MatrixXd::Identity(p, p);
            lu.compute(xtx);
        }
        beta_ = lu.solve(xty);
    }

    double predict(const Observation& o) const override { return design(o).dot(beta_); }
    std::string name() const override { return "linear"; }
    bool used_ridge() const { return ridge_; }
    const Eigen::VectorXd& coefficients() const { return beta_; }

private:
    Eigen::VectorXd design(const Observation& o) const {
        Eigen::VectorXd d(static_cast<Eigen::Index>(features_.size() + 1));
        d(0) = 1.0;
        for (std::size_t f = 0; f < features_.size(); ++f) {
            const auto v = o.get(features_[f]);
            d(static_cast<Eigen::Index>(f + 1)) = v ? *v : fill_[f];
        }
        return d;
    }

    std::vector<std::string> features_;
    std::vector<double> fill_;
    Eigen::VectorXd beta_;
    bool ridge_ = false;
};

class OffsetPredictor : public Predictor {
public:
    OffsetPredictor(PredictorPtr base, double offset) : base_(std::move(base)), offset_(offset) {}
    double predict(const Observation& o) const override { return base_->predict(o) + offset_; }
    std::string name() const override { return base_->name() + "+offset"; }
    double offset() const { return offset_; }

private:
    PredictorPtr base_;
    double offset_;
};

/// Constant equal to the mean truth of the record's first k windows.
inline std::shared_ptr<ConstantPredictor> naive_calibrate(std::span<const Observation> record,
                                                          const std::string& label, std::size_t k = 3) {
    require(record.size() >= k && k >= 1, ErrorKind::InsufficientData,
            "naive calibration needs " + std::to_string(k) + " windows, record has " + std::to_string(record.size()));
    std::vector<double> truths;
    for (std::size_t i = 0; i < k; ++i) {
        const auto y = record[i].get(label);
        require(y.has_value(), ErrorKind::MissingLabel,
                "calibration window " + record[i].record_id + "@" + std::to_string(record[i].start) + " has no truth");
        truths.push_back(*y);
    }
    return std::make_shared<ConstantPredictor>(mean(truths));
}

/// Shifts `base` by the mean residual (truth - prediction) of the first k windows.
inline std::shared_ptr<OffsetPredictor> offset_calibrate(PredictorPtr base, std::span<const Observation> record,
                                                         const std::string& label, std::size_t k = 1) {
    require(record.size() >= k && k >= 1, ErrorKind::InsufficientData, "offset calibration needs a first window");
    std::vector<double> residuals;
    for (std::size_t i = 0; i < k; ++i) {
        const auto y = record[i].get(label);
        require(y.has_value(), ErrorKind::MissingLabel,
                "calibration window " + record[i].record_id + "@" + std::to_string(record[i].start) + " has no truth");
        residuals.push_back(*y - base->predict(record[i]));
    }
    return std::make_shared<OffsetPredictor>(std::move(base), mean(residuals));
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
    double bias = 0.0;  // mean(pred - truth)
    double sd = 0.0;    // population standard deviation of the errors
    double mae = 0.0;
    std::size_t n = 0;
    std::vector<double> errors;
};

inline EvalResult evaluate_errors(std::vector<double> errors) {
    require(errors.size() >= 2, ErrorKind::InsufficientData, "evaluation needs at least 2 windows");
    EvalResult r;
    r.n = errors.size();
    r.bias = mean(errors);
    r.sd = pstdev(errors);
    double abs_sum = 0.0;
    for (double e : errors) abs_sum += std::abs(e);
    r.mae = abs_sum / static_cast<double>(errors.size());
    r.errors = std::move(errors);
    return r;
}

inline EvalResult evaluate(std::span<const double> preds, std::span<const double> truths) {
    require(preds.size() == truths.size(), ErrorKind::LengthMismatch,
            std::to_string(preds.size()) + " predictions vs " + std::to_string(truths.size()) + " truths");
    std::vector<double> errors(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) errors[i] = preds[i] - truths[i];
    return evaluate_errors(std::move(errors));
}

struct DriftPoint {
    std::size_t bucket = 0;
    double bucket_start_s = 0.0;  // seconds since the calibration origin
    EvalResult eval;
};

/// Per-bucket evaluation of windows by elapsed time since `origin_s`
/// (default: the earliest window). Buckets with fewer than 2 windows are left out.
inline std::vector<DriftPoint> drift_curve(const Predictor& p, std::span<const Observation> windows,
                                           const std::string& label, double bucket_s,
                                           std::optional<double> origin_s = std::nullopt,
                                           const std::string& time_column = "elapsed_s") {
    require(bucket_s > 0.0, ErrorKind::InvalidArgument, "bucket duration must be positive");
    std::map<std::size_t, std::vector<double>> errs;
    double origin = origin_s.value_or(std::numeric_limits<double>::infinity());
    if (!origin_s)
        for (const auto& w : windows)
            if (auto t = w.get(time_column)) origin = std::min(origin, *t);
    for (const auto& w : windows) {
        const auto t = w.get(time_column);
        const auto y = w.get(label);
        if (!t || !y || *t < origin) continue;
        const auto b = static_cast<std::size_t>(std::floor((*t - origin) / bucket_s));
        errs[b].push_back(p.predict(w) - *y);
    }
    std::vector<DriftPoint> out;
    for (auto& [b, e] : errs) {
        if (e.size() < 2) continue;
        out.push_back({b, static_cast<double>(b) * bucket_s, evaluate_errors(std::move(e))});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Standards

struct CohortStats {
    std::size_t subjects = 0;
    std::size_t above_180 = 0;  // subjects with SBP > 180 mmHg
    std::size_t below_100 = 0;  // subjects with SBP < 100 mmHg
};

/// Cohort counts from each subject's mean SBP.
inline CohortStats cohort_from(const std::map<std::string, std::vector<double>>& sbp_by_subject) {
    CohortStats c;
    for (const auto& [id, vals] : sbp_by_subject) {
        if (vals.empty()) continue;
        ++c.subjects;
        const double m = mean(vals);
        if (m > 180.0) ++c.above_180;
        if (m < 100.0) ++c.below_100;
    }
    return c;
}

struct AamiResult {
    bool bias_ok = false;
    bool sd_ok = false;
    bool subjects_ok = false;
    bool high_tail_ok = false;
    bool low_tail_ok = false;
    bool cohort_ok = false;
    bool compliant = false;
};

inline constexpr double kAamiBias = 5.0;
inline constexpr double kAamiSd = 8.0;
inline constexpr std::size_t kAamiSubjects = 85;

/// |bias| <= 5 mmHg, SD <= 8 mmHg, >= 85 subjects with >= 10% above 180 and
/// >= 10% below 100 mmHg. Tail shares are compared in integers.
inline AamiResult aami_check(double bias, double sd, const CohortStats& cohort) {
    AamiResult r;
    r.bias_ok = std::abs(bias) <= kAamiBias;
    r.sd_ok = sd <= kAamiSd;
    r.subjects_ok = cohort.subjects >= kAamiSubjects;
    r.high_tail_ok = cohort.subjects > 0 && cohort.above_180 * 10 >= cohort.subjects;
    r.low_tail_ok = cohort.subjects > 0 && cohort.below_100 * 10 >= cohort.subjects;
    r.cohort_ok = r.subjects_ok && r.high_tail_ok && r.low_tail_ok;
    r.compliant = r.bias_ok && r.sd_ok && r.cohort_ok;
    return r;
}

inline AamiResult aami_check(const EvalResult& e, const CohortStats& cohort) { return aami_check(e.bias, e.sd, cohort); }

enum class BhsGrade { A, B, C, Fail };

inline const char* to_string(BhsGrade g) {
    switch (g) {
        case BhsGrade::A: return "A";
        case BhsGrade::B: return "B";
        case BhsGrade::C: return "C";
        case BhsGrade::Fail: return "Fail";
    }
    return "?";
}

struct BhsRow {
    BhsGrade grade;
    int within5, within10, within15;  // minimum cumulative percentages
};

inline constexpr std::array<BhsRow, 3> kBhsTable{{{BhsGrade::A, 60, 85, 95},
                                                  {BhsGrade::B, 50, 75, 90},
                                                  {BhsGrade::C, 40, 65, 85}}};

struct BhsResult {
    double pct5 = 0.0, pct10 = 0.0, pct15 = 0.0;
    BhsGrade grade = BhsGrade::Fail;
};

inline BhsGrade grade_from_percentages(double p5, double p10, double p15) {
    for (const auto& row : kBhsTable)
        if (p5 >= row.within5 && p10 >= row.within10 && p15 >= row.within15) return row.grade;
    return BhsGrade::Fail;
}

/// Cumulative shares of |error| <= 5, 10, 15 mmHg and the best grade whose
/// three minimums are all met (compared as exact integer counts).
inline BhsResult bhs_grade(std::span<const double> errors) {
    require(!errors.empty(), ErrorKind::InsufficientData, "BHS grading needs at least one error");
    std::size_t c5 = 0, c10 = 0, c15 = 0;
    for (double e : errors) {
        const double a = std::abs(e);
        if (a <= 5.0) ++c5;
        if (a <= 10.0) ++c10;
        if (a <= 15.0) ++c15;
    }
    const std::size_t n = errors.size();
    BhsResult r;
    r.pct5 = 100.0 * static_cast<double>(c5) / static_cast<double>(n);
    r.pct10 = 100.0 * static_cast<double>(c10) / static_cast<double>(n);
    r.pct15 = 100.0 * static_cast<double>(c15) / static_cast<double>(n);
    for (const auto& row : kBhsTable) {
        const auto need = [&](std::size_t count, int pct) { return count * 100 >= static_cast<std::size_t>(pct) * n; };
        if (need(c5, row.within5) && need(c10, row.within10) && need(c15, row.within15)) {
            r.grade = row.grade;
            return r;
        }
    }
    r.grade = BhsGrade::Fail;
    return r;
}

// ---------------------------------------------------------------------------
// Calibration experiment over a train/test partition

enum class Method { None, Naive, Offset };
enum class PredictorKind { Mean, Linear };
enum class CalibScope { Record, Patient };

struct CalibOptions {
    std::string label = "sbp";
    Method method = Method::None;
    PredictorKind predictor = PredictorKind::Mean;
    std::vector<std::string> features;  // for the linear predictor
    std::optional<std::size_t> calib_windows;  // default 3 (naive) or 1 (offset)
    CalibScope scope = CalibScope::Record;
    double bucket_s = 86400.0;
};

struct CalibOutcome {
    EvalResult eval;
    CohortStats cohort;
    AamiResult aami;
    BhsResult bhs;
    std::vector<DriftPoint> drift;  // empty without elapsed-time data
    std::size_t groups = 0;         // calibrated records or patients
    std::size_t calibration_windows_excluded = 0;
};

/// Fits the base predictor on `train`, calibrates each test record (or
/// patient) on its first windows, and evaluates on the remaining windows.
/// The drift curve pools errors by time since each group's first window.
inline CalibOutcome run_calibration(std::span<const Observation> train, std::span<const Observation> test,
                                    const CalibOptions& opt) {
    PredictorPtr base;
    if (opt.predictor == PredictorKind::Mean) base = std::make_shared<MeanOfTraining>(train, opt.label);
    else base = std::make_shared<LinearOnFeatures>(train, opt.label, opt.features);

    std::map<std::string, std::vector<Observation>> groups;
    for (const auto& o : test) {
        if (!o.get(opt.label)) continue;
        groups[opt.scope == CalibScope::Record ? o.record_id : o.patient_id].push_back(o);
    }
    const std::size_t k = opt.calib_windows.value_or(opt.method == Method::Naive ? 3 : opt.method == Method::Offset ? 1 : 0);

    CalibOutcome out;
    std::vector<double> errors;
    std::map<std::size_t, std::vector<double>> drift_errs;
    std::map<std::string, std::vector<double>> sbp_by_subject;
    bool any_time = false;
    for (auto& [key, rows] : groups) {
        std::stable_sort(rows.begin(), rows.end(), [](const Observation& a, const Observation& b) {
            const auto ta = a.get("elapsed_s"), tb = b.get("elapsed_s");
            if (ta && tb && *ta != *tb) return *ta < *tb;
            if (a.record_id != b.record_id) return a.record_id < b.record_id;
            return a.start < b.start;
        });
        PredictorPtr p = base;
        if (opt.method == Method::Naive) p = naive_calibrate(rows, opt.label, k);
        else if (opt.method == Method::Offset) p = offset_calibrate(base, rows, opt.label, k);
        ++out.groups;
        out.calibration_windows_excluded += std::min(k, rows.size());
        const auto origin = rows.front().get("elapsed_s");
        for (std::size_t i = std::min(k, rows.size()); i < rows.size(); ++i) {
            const double truth = *rows[i].get(opt.label);
            const double e = p->predict(rows[i]) - truth;
            errors.push_back(e);
            sbp_by_subject[rows[i].patient_id].push_back(truth);
            const auto t = rows[i].get("elapsed_s");
            if (origin && t) {
                any_time = true;
                drift_errs[static_cast<std::size_t>(std::floor((*t - *origin) / opt.bucket_s))].push_back(e);
            }
        }
    }
    out.eval = evaluate_errors(std::move(errors));
    out.cohort = cohort_from(sbp_by_subject);
    out.aami = aami_check(out.eval, out.cohort);
    out.bhs = bhs_grade(out.eval.errors);
    if (any_time)
        for (auto& [b, e] : drift_errs)
            if (e.size() >= 2) out.drift.push_back({b, static_cast<double>(b) * opt.bucket_s, evaluate_errors(std::move(e))});
    return out;
}

}  // namespace pulseaudit::calib
