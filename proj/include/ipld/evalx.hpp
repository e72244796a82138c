#pragma once

#include "ipld/data.hpp"
#include "ipld/model.hpp"
#include "ipld/series.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ipld::evalx {

struct Confusion {
    long long tp = 0;
    long long fp = 0;
    long long tn = 0;
    long long fn = 0;

    long long total() const { return tp + fp + tn + fn; }
};

/// Rates whose denominator is zero are left empty.
struct Metrics {
    std::optional<double> accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1_paper;     // P*R/(P+R), at most 0.5
    std::optional<double> f1_standard;  // 2PR/(P+R), supplementary
};

/// A sample is on when its power exceeds on_threshold.
Confusion confusion(const series::TimeSeries& pred, const series::TimeSeries& truth, double on_threshold);
Confusion confusion(std::span<const double> pred, std::span<const double> truth, double on_threshold);

Metrics metrics(const Confusion& c);
/// F1 from precision and recall directly, as the table reports them.
double f1_paper(double precision, double recall);

struct DeviceReport {
    std::string device;
    double threshold_kw = 0.0;
    Confusion confusion;
    Metrics metrics;
    std::optional<double> cc;  // empty when either trace is constant
};

struct EvalReport {
    std::vector<DeviceReport> devices;
    Metrics mean;  // unweighted over devices where the rate is defined
    std::optional<double> mean_cc;
};

/// Per-device on threshold is threshold_fraction of that device's largest true power.
EvalReport evaluate_disaggregation(const model::DeviceEstimate& estimates, const data::ParkDataset& truth,
                                   double threshold_fraction = 0.1);

std::string format_table(const EvalReport& report);
std::string format_csv(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace ipld::evalx
