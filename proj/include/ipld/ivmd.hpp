#pragma once

#include "ipld/series.hpp"
#include "ipld/vmd.hpp"

#include <optional>
#include <span>
#include <vector>

namespace ipld::ivmd {

struct KCandidate {
    int k = 0;
    double mean_if = 0.0;    // instantaneous-frequency mean averaged over the k modes
    double curvature = 0.0;  // curvature of the mean_if curve at this k
};

struct KSelectionReport {
    std::vector<KCandidate> candidates;  // contiguous, ascending k
    int selected_k = 0;
    double threshold_used = 0.0;
    bool no_elbow = false;
};

/// Curvature |y''| / (1 + y'^2)^{3/2} at unit spacing. Central differences inside,
/// one-sided y' at the ends, y'' copied from the nearest interior point.
std::vector<double> curvature(std::span<const double> curve);

/// Sweeps k over [k_min, k_max]. The elbow is the first interior local maximum of
/// curvature above elbow_factor * median curvature; the selected k is one past it.
/// A curve whose curvature never reaches 0.03 has no elbow and yields k_min.
KSelectionReport select_k(const series::TimeSeries& signal, int k_min, int k_max, const vmd::VmdParams& params,
                          double elbow_factor = 1.0);

struct DenoiseOptions {
    bool auto_k = true;
    int k_min = 2;
    int k_max = 8;
    double elbow_factor = 1.0;
    double cc_threshold = 0.10;  // modes with |CC| against the raw signal below this are dropped
};

struct DenoiseResult {
    series::TimeSeries denoised;
    std::optional<KSelectionReport> report;  // present when auto_k ran
    vmd::ModeSet modes;
    std::vector<bool> retained;  // parallel to modes.modes
    std::vector<double> mode_cc;
    series::TimeSeries residual;  // signal minus the sum of all modes
    double residual_cc = 0.0;
    bool residual_retained = false;
};

/// Decomposes, then drops every mode (and the unexplained residual) whose |CC| with
/// the raw signal falls below cc_threshold. Constant modes are kept as offset. If
/// nothing that varies survives, the single highest-|CC| mode is returned.
DenoiseResult denoise(const series::TimeSeries& signal, const vmd::VmdParams& params, const DenoiseOptions& options);
DenoiseResult denoise(const series::TimeSeries& signal, const vmd::VmdParams& params, bool auto_k);

}  // namespace ipld::ivmd
