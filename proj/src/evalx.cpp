#include "ipld/evalx.hpp"

#include "ipld/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ipld::evalx {

namespace {

void accumulate(std::optional<double>& sum, int& n, const std::optional<double>& v) {
    if (!v) return;
    sum = sum.value_or(0.0) + *v;
    ++n;
}

std::string cell(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

std::string csv_cell(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", *v);
    return buf;
}

}  // namespace

Confusion confusion(std::span<const double> pred, std::span<const double> truth, double on_threshold) {
    if (pred.size() != truth.size()) throw InvalidArgument("confusion: length mismatch");
    if (!(on_threshold > 0.0)) throw InvalidArgument("confusion: on_threshold must be positive");
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] > on_threshold;
        const bool t = truth[i] > on_threshold;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

Confusion confusion(const series::TimeSeries& pred, const series::TimeSeries& truth, double on_threshold) {
    return confusion(pred.span(), truth.span(), on_threshold);
}

double f1_paper(double precision, double recall) {
    if (precision < 0.0 || precision > 1.0 || recall < 0.0 || recall > 1.0) {
        throw InvalidArgument("f1_paper: precision and recall must lie in [0,1]");
    }
    if (precision + recall == 0.0) throw InvalidArgument("f1_paper: precision + recall is zero");
    return precision * recall / (precision + recall);
}

Metrics metrics(const Confusion& c) {
    if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0) throw InvalidArgument("metrics: negative count");
    if (c.total() == 0) throw InvalidArgument("metrics: empty confusion matrix");
    Metrics m;
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
        m.f1_paper = f1_paper(*m.precision, *m.recall);
        m.f1_standard = 2.0 * *m.f1_paper;
    }
    return m;
}

EvalReport evaluate_disaggregation(const model::DeviceEstimate& estimates, const data::ParkDataset& truth,
                                   double threshold_fraction) {
    if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0)) {
        throw InvalidArgument("evaluate: threshold fraction must be in (0,1)");
    }
    if (estimates.device_ids.size() != truth.device_names.size() ||
        static_cast<std::size_t>(estimates.power.rows()) != truth.devices.size()) {
        throw InvalidArgument("evaluate: estimate has " + std::to_string(estimates.device_ids.size()) +
                              " devices, truth has " + std::to_string(truth.device_names.size()));
    }
    if (static_cast<std::size_t>(estimates.power.cols()) != truth.size()) {
        throw InvalidArgument("evaluate: estimate covers " + std::to_string(estimates.power.cols()) +
                              " samples, truth has " + std::to_string(truth.size()));
    }

    EvalReport report;
    Metrics sums;
    int n_acc = 0, n_p = 0, n_r = 0, n_f = 0, n_fs = 0, n_cc = 0;
    for (std::size_t d = 0; d < estimates.device_ids.size(); ++d) {
        const auto& name = estimates.device_ids[d];
        const auto it = std::find(truth.device_names.begin(), truth.device_names.end(), name);
        if (it == truth.device_names.end()) throw InvalidArgument("evaluate: device '" + name + "' missing from truth");
        const auto& t = truth.devices[static_cast<std::size_t>(it - truth.device_names.begin())].values();
        std::vector<double> est(t.size());
        for (std::size_t i = 0; i < est.size(); ++i) est[i] = estimates.power(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i));

        DeviceReport r;
        r.device = name;
        const double peak = *std::max_element(t.begin(), t.end());
        r.threshold_kw = peak > 0.0 ? threshold_fraction * peak : threshold_fraction;
        r.confusion = confusion(est, t, r.threshold_kw);
        r.metrics = metrics(r.confusion);
        try {
            r.cc = series::correlation_coefficient(est, t);
        } catch (const DegenerateSignal&) {
        }
        accumulate(sums.accuracy, n_acc, r.metrics.accuracy);
        accumulate(sums.precision, n_p, r.metrics.precision);
        accumulate(sums.recall, n_r, r.metrics.recall);
        accumulate(sums.f1_paper, n_f, r.metrics.f1_paper);
        accumulate(sums.f1_standard, n_fs, r.metrics.f1_standard);
        std::optional<double> cc_sum = report.mean_cc;
        accumulate(cc_sum, n_cc, r.cc);
        report.mean_cc = cc_sum;
        report.devices.push_back(std::move(r));
    }
    auto divide = [](std::optional<double> s, int n) { return s ? std::optional<double>(*s / n) : std::nullopt; };
    report.mean.accuracy = divide(sums.accuracy, n_acc);
    report.mean.precision = divide(sums.precision, n_p);
    report.mean.recall = divide(sums.recall, n_r);
    report.mean.f1_paper = divide(sums.f1_paper, n_f);
    report.mean.f1_standard = divide(sums.f1_standard, n_fs);
    report.mean_cc = divide(report.mean_cc, n_cc);
    return report;
}

std::string format_table(const EvalReport& report) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %9s %11s %9s\n", "Device", "Accuracy", "Precision", "Recall",
                  "F1 score", "F1 (2PR/)", "CC");
    out << line;
    auto row = [&](const std::string& name, const Metrics& m, const std::optional<double>& cc) {
        std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %9s %11s %9s\n", name.c_str(), cell(m.accuracy).c_str(),
                      cell(m.precision).c_str(), cell(m.recall).c_str(), cell(m.f1_paper).c_str(),
                      cell(m.f1_standard).c_str(), cell(cc).c_str());
        out << line;
    };
    for (const auto& d : report.devices) row(d.device, d.metrics, d.cc);
    row("mean", report.mean, report.mean_cc);
    out << "F1 score is P*R/(P+R) (maximum 0.5); F1 (2PR/) is the conventional F1, supplementary.\n";
    return out.str();
}

std::string format_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "device,threshold_kw,tp,fp,tn,fn,accuracy,precision,recall,f1_paper,f1_standard,cc\n";
    auto row = [&](const std::string& name, const std::string& thr, const std::string& counts, const Metrics& m,
                   const std::optional<double>& cc) {
        out << name << ',' << thr << ',' << counts << ',' << csv_cell(m.accuracy) << ',' << csv_cell(m.precision) << ','
            << csv_cell(m.recall) << ',' << csv_cell(m.f1_paper) << ',' << csv_cell(m.f1_standard) << ','
            << csv_cell(cc) << '\n';
    };
    for (const auto& d : report.devices) {
        const auto& c = d.confusion;
        row(d.device, csv_cell(d.threshold_kw),
            std::to_string(c.tp) + ',' + std::to_string(c.fp) + ',' + std::to_string(c.tn) + ',' + std::to_string(c.fn),
            d.metrics, d.cc);
    }
    row("mean", "", ",,,", report.mean, report.mean_cc);
    return out.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
    out << (path.extension() == ".csv" ? format_csv(report) : format_table(report));
}

}  // namespace ipld::evalx
