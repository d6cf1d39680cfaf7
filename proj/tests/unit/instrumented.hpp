#pragma once

#include <map>
#include <mutex>

#include "ddml/learners.hpp"
#include "ddml/random.hpp"

namespace testutil {

/// Learner that records what it is shown. Column 0 of every feature matrix
/// must carry the observation id. A model predicts serial * 1e4 + id, so any
/// prediction names the model that made it.
struct FitLog {
    struct Entry {
        std::vector<int> train_ids;
        std::vector<double> train_targets;
        ddml::Index feature_cols = 0;
        std::vector<int> predicted_ids;
    };
    std::mutex mutex;
    std::vector<Entry> entries;

    static int serial_of(double prediction) { return static_cast<int>(prediction / 1e4); }
    static int id_of(double prediction) { return static_cast<int>(prediction - 1e4 * serial_of(prediction) + 0.5); }
};

class RecordingModel final : public ddml::FittedModel {
public:
    RecordingModel(FitLog& log, int serial, ddml::Index cols)
        : FittedModel(ddml::FeatureTransform::Base, cols), log_(log), serial_(serial) {}
    std::string_view kind() const override { return "recording"; }

protected:
    ddml::Vector predict_features(const ddml::Matrix& x) const override {
        ddml::Vector out(x.rows());
        std::lock_guard lock(log_.mutex);
        auto& e = log_.entries[static_cast<std::size_t>(serial_)];
        for (ddml::Index i = 0; i < x.rows(); ++i) {
            e.predicted_ids.push_back(static_cast<int>(x(i, 0)));
            out(i) = 1e4 * serial_ + x(i, 0);
        }
        return out;
    }

private:
    FitLog& log_;
    int serial_;
};

class RecordingLearner final : public ddml::Learner {
public:
    RecordingLearner(std::string name, FitLog& log) : name_(std::move(name)), log_(log) {}
    std::string name() const override { return name_; }
    std::unique_ptr<ddml::FittedModel> fit(const ddml::Matrix& x, const ddml::Vector& y,
                                           std::uint64_t) const override {
        FitLog::Entry e;
        for (ddml::Index i = 0; i < x.rows(); ++i) {
            e.train_ids.push_back(static_cast<int>(x(i, 0)));
            e.train_targets.push_back(y(i));
        }
        e.feature_cols = x.cols();
        std::lock_guard lock(log_.mutex);
        log_.entries.push_back(std::move(e));
        return std::make_unique<RecordingModel>(log_, static_cast<int>(log_.entries.size()) - 1, x.cols());
    }

private:
    std::string name_;
    FitLog& log_;
};

/// Data whose first control is the row id. Treatment and instrument are
/// binary so every model kind accepts it.
inline ddml::Dataset id_dataset(ddml::Index n, std::uint64_t seed) {
    ddml::Rng rng(seed);
    ddml::Dataset data;
    data.x = ddml::Matrix(n, 2);
    data.d = ddml::Matrix(n, 1);
    data.z = ddml::Matrix(n, 1);
    data.y = ddml::Vector(n);
    for (ddml::Index i = 0; i < n; ++i) {
        data.x(i, 0) = static_cast<double>(i);
        data.x(i, 1) = rng.normal();
        data.z(i, 0) = i % 2 == 0 ? 1.0 : 0.0;
        data.d(i, 0) = (i % 3 == 0) != (data.z(i, 0) == 1.0) ? 1.0 : 0.0;
        data.y(i) = rng.normal();
    }
    data.names = {"y", {"d"}, {"id", "x"}, {"z"}, std::nullopt};
    return data;
}

}  // namespace testutil
