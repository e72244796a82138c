#pragma once

#include "ipld/series.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ipld::vmd {

using series::Complex;

inline constexpr double kMaxReconstructionError = 0.05;

enum class InitMode { zero, uniform, random };

struct VmdParams {
    double alpha = 2000.0;  // bandwidth penalty
    double tau = 0.001;     // dual ascent step
    int k = 4;              // mode count
    bool dc_mode = false;   // pin the first mode at zero frequency
    InitMode init_mode = InitMode::uniform;
    double tol = 1e-7;
    int max_iters = 500;
    std::uint64_t seed = 0;  // only used by InitMode::random

    /// Throws InvalidArgument naming the offending field.
    void validate() const;
};

struct ModeSet {
    std::vector<series::TimeSeries> modes;  // sorted by ascending center frequency
    std::vector<double> center_freqs;       // cycles per sample, in [0, 0.5]
    int iterations_used = 0;
    double final_residual = 0.0;        // last relative mode change
    double reconstruction_error = 0.0;  // ||sum of modes - signal|| / ||signal||
    bool converged = false;             // modes stationary and reconstruction_error <= kMaxReconstructionError
};

/// Closed-form mode refresh for one frequency bin: a Wiener filter of the
/// current residual centered on omega_k.
Complex wiener_mode_update(Complex residual_bin, Complex multiplier_bin, double omega, double omega_k, double alpha);

/// Power-weighted mean frequency over the non-negative part of freq_grid.
/// freq_grid[i] is the frequency of mode_spectrum.bins[i].
double center_frequency(const series::Spectrum& mode_spectrum, std::span<const double> freq_grid);
double center_frequency(std::span<const Complex> bins, std::span<const double> freq_grid);

/// Sum over modes of ||next_k - prev_k||^2 / ||prev_k||^2.
double convergence_residual(const std::vector<std::vector<Complex>>& prev,
                            const std::vector<std::vector<Complex>>& next);

/// Spectral ADMM decomposition of a mirror-extended copy of the signal into
/// params.k band-limited modes. Mode updates are Gauss-Seidel in k.
ModeSet decompose(const series::TimeSeries& signal, const VmdParams& params);

/// Reflects the signal about both ends; the original occupies [n/2, n/2 + n).
std::vector<double> mirror_extend(std::span<const double> values);

}  // namespace ipld::vmd
