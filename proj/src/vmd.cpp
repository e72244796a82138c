#include "ipld/vmd.hpp"

#include "ipld/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace ipld::vmd {

namespace {

double energy(std::span<const Complex> bins) {
    double acc = 0.0;
    for (const auto& b : bins) acc += std::norm(b);
    return acc;
}

// Iterates of the spectral ADMM, all over the one-sided grid of the extended signal.
struct VmdState {
    std::vector<std::vector<Complex>> mode_spectra;
    std::vector<Complex> multiplier;
    std::vector<double> omega;
    int iteration = 0;
};

std::vector<double> initial_frequencies(const VmdParams& p, std::size_t n) {
    const auto k = static_cast<std::size_t>(p.k);
    std::vector<double> omega(k, 0.0);
    switch (p.init_mode) {
        case InitMode::zero:
            break;
        case InitMode::uniform:
            for (std::size_t i = 0; i < k; ++i) omega[i] = 0.5 * static_cast<double>(i) / static_cast<double>(k);
            break;
        case InitMode::random: {
            // log-uniform between one cycle per record and Nyquist
            std::mt19937_64 rng(p.seed);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            const double lo = std::log(1.0 / static_cast<double>(n));
            const double hi = std::log(0.5);
            for (auto& w : omega) w = std::exp(lo + (hi - lo) * unit(rng));
            std::sort(omega.begin(), omega.end());
            break;
        }
    }
    if (p.dc_mode) omega[0] = 0.0;
    return omega;
}

}  // namespace

void VmdParams::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("vmd.alpha must be positive");
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw InvalidArgument("vmd.tau must be non-negative");
    if (k < 1) throw InvalidArgument("vmd.k must be at least 1");
    if (!(tol > 0.0)) throw InvalidArgument("vmd.tol must be positive");
    if (max_iters < 1) throw InvalidArgument("vmd.max_iters must be at least 1");
}

Complex wiener_mode_update(Complex residual_bin, Complex multiplier_bin, double omega, double omega_k, double alpha) {
    const double d = omega - omega_k;
    return (residual_bin + multiplier_bin / 2.0) / (1.0 + 2.0 * alpha * d * d);
}

double center_frequency(std::span<const Complex> bins, std::span<const double> freq_grid) {
    if (bins.size() != freq_grid.size()) throw InvalidArgument("center_frequency: grid and spectrum sizes differ");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < bins.size(); ++i) {
        if (freq_grid[i] < 0.0) continue;
        const double p = std::norm(bins[i]);
        num += freq_grid[i] * p;
        den += p;
    }
    if (den == 0.0) throw DegenerateSignal("center_frequency: mode has zero energy");
    return num / den;
}

double center_frequency(const series::Spectrum& mode_spectrum, std::span<const double> freq_grid) {
    return center_frequency(std::span<const Complex>(mode_spectrum.bins), freq_grid);
}

double convergence_residual(const std::vector<std::vector<Complex>>& prev,
                            const std::vector<std::vector<Complex>>& next) {
    if (prev.size() != next.size()) throw InvalidArgument("convergence_residual: mode counts differ");
    double total = 0.0;
    for (std::size_t k = 0; k < prev.size(); ++k) {
        if (prev[k].size() != next[k].size()) throw InvalidArgument("convergence_residual: spectrum lengths differ");
        const double base = energy(prev[k]);
        if (base == 0.0) throw DegenerateSignal("convergence_residual: previous mode " + std::to_string(k) + " has zero energy");
        double diff = 0.0;
        for (std::size_t j = 0; j < prev[k].size(); ++j) diff += std::norm(next[k][j] - prev[k][j]);
        total += diff / base;
    }
    return total;
}

std::vector<double> mirror_extend(std::span<const double> values) {
    const std::size_t n = values.size();
    const std::size_t head = n / 2;
    std::vector<double> out;
    out.reserve(2 * n);
    for (std::size_t i = 0; i < head; ++i) out.push_back(values[head - 1 - i]);
    out.insert(out.end(), values.begin(), values.end());
    for (std::size_t i = 0; i < n - head; ++i) out.push_back(values[n - 1 - i]);
    return out;
}

ModeSet decompose(const series::TimeSeries& signal, const VmdParams& params) {
    params.validate();
    const std::size_t n = signal.size();
    const auto k_count = static_cast<std::size_t>(params.k);
    if (n < 2 * k_count) throw InvalidArgument("decompose: signal must hold at least 2*k samples");

    const auto extended = mirror_extend(signal.span());
    const std::size_t t_len = extended.size();
    const std::size_t bins = t_len / 2 + 1;
    const auto full = series::dft(extended).bins;
    const std::vector<Complex> f_hat(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(bins));
    if (energy(f_hat) == 0.0) throw DegenerateSignal("decompose: signal is identically zero");

    std::vector<double> grid(bins);
    for (std::size_t j = 0; j < bins; ++j) grid[j] = static_cast<double>(j) / static_cast<double>(t_len);

    VmdState state;
    state.mode_spectra.assign(k_count, std::vector<Complex>(bins, Complex{}));
    state.multiplier.assign(bins, Complex{});
    state.omega = initial_frequencies(params, n);

    std::vector<Complex> mode_sum(bins, Complex{});
    double residual = 0.0;
    bool stationary = false;
    while (state.iteration < params.max_iters) {
        const auto previous = state.mode_spectra;
        for (std::size_t k = 0; k < k_count; ++k) {
            auto& u = state.mode_spectra[k];
            for (std::size_t j = 0; j < bins; ++j) {
                // mode_sum holds fresh modes i < k and stale modes i >= k
                const Complex others = mode_sum[j] - u[j];
                const Complex updated = wiener_mode_update(f_hat[j] - others, state.multiplier[j], grid[j],
                                                           state.omega[k], params.alpha);
                mode_sum[j] = others + updated;
                u[j] = updated;
            }
            if (!(params.dc_mode && k == 0)) {
                state.omega[k] = std::clamp(center_frequency(u, grid), 0.0, 0.5);
            }
        }
        for (std::size_t j = 0; j < bins; ++j) state.multiplier[j] += params.tau * (f_hat[j] - mode_sum[j]);
        ++state.iteration;

        if (state.iteration > 1) {
            residual = convergence_residual(previous, state.mode_spectra);
            if (residual < params.tol) {
                stationary = true;
                break;
            }
        }
    }

    const std::size_t head = n / 2;
    std::vector<std::size_t> order(k_count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return state.omega[a] < state.omega[b]; });

    ModeSet out;
    out.iterations_used = state.iteration;
    out.final_residual = residual;
    for (std::size_t idx : order) {
        const series::Spectrum one_sided{state.mode_spectra[idx], t_len, true};
        const auto z = series::idft_complex(one_sided);
        std::vector<double> mode(n);
        for (std::size_t t = 0; t < n; ++t) mode[t] = z[head + t].real();
        out.modes.emplace_back(std::move(mode), signal.interval_minutes(), signal.start_index());
        out.center_freqs.push_back(state.omega[idx]);
    }
    double err = 0.0, norm = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double s = 0.0;
        for (const auto& u : out.modes) s += u[t];
        err += (s - signal[t]) * (s - signal[t]);
        norm += signal[t] * signal[t];
    }
    out.reconstruction_error = std::sqrt(err / norm);
    out.converged = stationary && out.reconstruction_error <= kMaxReconstructionError;
    return out;
}

}  // namespace ipld::vmd
