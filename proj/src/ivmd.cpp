#include "ipld/ivmd.hpp"

#include "ipld/error.hpp"

#include <algorithm>
#include <cmath>

namespace ipld::ivmd {

namespace {

// Bends smaller than this (cycles per sample) are indistinguishable from a straight line.
constexpr double kMinElbowCurvature = 0.03;

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<double> curvature(std::span<const double> curve) {
    const std::size_t n = curve.size();
    if (n < 3) throw InvalidArgument("curvature: need at least 3 points");
    std::vector<double> d1(n), d2(n);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        d1[i] = 0.5 * (curve[i + 1] - curve[i - 1]);
        d2[i] = curve[i + 1] - 2.0 * curve[i] + curve[i - 1];
    }
    d1[0] = curve[1] - curve[0];
    d1[n - 1] = curve[n - 1] - curve[n - 2];
    d2[0] = d2[1];
    d2[n - 1] = d2[n - 2];

    std::vector<double> kappa(n);
    for (std::size_t i = 0; i < n; ++i) kappa[i] = std::abs(d2[i]) / std::pow(1.0 + d1[i] * d1[i], 1.5);
    return kappa;
}

KSelectionReport select_k(const series::TimeSeries& signal, int k_min, int k_max, const vmd::VmdParams& params,
                          double elbow_factor) {
    if (k_min < 2 || k_min >= k_max || k_max > 16) {
        throw InvalidArgument("select_k: require 2 <= k_min < k_max <= 16");
    }
    if (!(elbow_factor > 0.0)) throw InvalidArgument("select_k: elbow factor must be positive");

    KSelectionReport report;
    std::vector<double> curve;
    for (int k = k_min; k <= k_max; ++k) {
        auto p = params;
        p.k = k;
        const auto modes = vmd::decompose(signal, p);
        double total = 0.0;
        int counted = 0;
        for (const auto& mode : modes.modes) {
            try {
                total += series::instantaneous_frequency_mean(mode);
                ++counted;
            } catch (const DegenerateSignal&) {
                // an empty mode carries no frequency
            }
        }
        const double m = counted > 0 ? total / counted : 0.0;
        curve.push_back(m);
        report.candidates.push_back({k, m, 0.0});
    }

    const auto kappa = curvature(curve);
    for (std::size_t i = 0; i < kappa.size(); ++i) report.candidates[i].curvature = kappa[i];

    const bool flat = std::all_of(curve.begin(), curve.end(), [&](double v) { return v == curve.front(); }) ||
                      *std::max_element(kappa.begin(), kappa.end()) < kMinElbowCurvature;
    if (flat) {
        report.selected_k = k_min;
        report.no_elbow = true;
        return report;
    }

    // The elbow is the first interior curvature peak above threshold. Past it the
    // curve stops bending, so the next K is the first one whose extra mode has no
    // component of its own to absorb.
    report.threshold_used = elbow_factor * median(kappa);
    for (std::size_t i = 1; i + 1 < kappa.size(); ++i) {
        if (kappa[i] > report.threshold_used && kappa[i] >= kappa[i + 1]) {
            report.selected_k = report.candidates[i + 1].k;
            return report;
        }
    }
    report.selected_k = k_max;
    report.no_elbow = true;
    return report;
}

DenoiseResult denoise(const series::TimeSeries& signal, const vmd::VmdParams& params, const DenoiseOptions& options) {
    std::optional<KSelectionReport> report;
    auto p = params;
    if (options.auto_k) {
        report = select_k(signal, options.k_min, options.k_max, params, options.elbow_factor);
        p.k = report->selected_k;
    }
    auto modes = vmd::decompose(signal, p);

    const std::size_t k = modes.modes.size();
    const std::size_t n = signal.size();
    std::vector<double> residual(signal.values());
    for (const auto& mode : modes.modes) {
        for (std::size_t t = 0; t < n; ++t) residual[t] -= mode[t];
    }

    std::vector<double> cc(k, 0.0);
    std::vector<bool> keep(k, false);
    std::size_t best = 0;
    bool any_varying_kept = false;
    for (std::size_t i = 0; i < k; ++i) {
        try {
            cc[i] = series::correlation_coefficient(modes.modes[i], signal);
            keep[i] = std::abs(cc[i]) >= options.cc_threshold;
            any_varying_kept = any_varying_kept || keep[i];
        } catch (const DegenerateSignal&) {
            // A constant mode is pure offset; it cannot be noise.
            cc[i] = 0.0;
            keep[i] = true;
        }
        if (std::abs(cc[i]) > std::abs(cc[best])) best = i;
    }

    double residual_cc = 0.0;
    try {
        residual_cc = series::correlation_coefficient(residual, signal.span());
    } catch (const DegenerateSignal&) {
    }
    bool keep_residual = std::abs(residual_cc) >= options.cc_threshold;
    if (!any_varying_kept && !keep_residual) keep[best] = true;

    std::vector<double> out(n, 0.0);
    if (keep_residual) out = residual;
    for (std::size_t i = 0; i < k; ++i) {
        if (!keep[i]) continue;
        for (std::size_t t = 0; t < n; ++t) out[t] += modes.modes[i][t];
    }
    DenoiseResult result{series::TimeSeries(std::move(out), signal.interval_minutes(), signal.start_index()),
                         std::move(report),
                         std::move(modes),
                         std::move(keep),
                         std::move(cc),
                         series::TimeSeries(std::move(residual), signal.interval_minutes(), signal.start_index()),
                         residual_cc,
                         keep_residual};
    return result;
}

DenoiseResult denoise(const series::TimeSeries& signal, const vmd::VmdParams& params, bool auto_k) {
    DenoiseOptions options;
    options.auto_k = auto_k;
    return denoise(signal, params, options);
}

}  // namespace ipld::ivmd
