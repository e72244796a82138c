#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ipld::series {

using Complex = std::complex<double>;

/// Uniformly sampled load record in kW. Never empty, always finite.
class TimeSeries {
public:
    explicit TimeSeries(std::vector<double> values, int interval_minutes = 15, std::size_t start_index = 0);

    const std::vector<double>& values() const noexcept { return values_; }
    std::span<const double> span() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    int interval_minutes() const noexcept { return interval_minutes_; }
    std::size_t start_index() const noexcept { return start_index_; }

private:
    std::vector<double> values_;
    int interval_minutes_;
    std::size_t start_index_;
};

/// Discrete spectrum. Full spectra hold n bins; one-sided spectra hold bins 0..n/2.
struct Spectrum {
    std::vector<Complex> bins;
    std::size_t n = 0;
    bool one_sided = false;
};

/// Arbitrary-length FFT backed by FFTW.
/// The forward transform is unnormalized; the inverse divides by n.
std::vector<Complex> fft(std::span<const Complex> input, bool inverse = false);

/// bins[k] = sum_t x[t] exp(-2 pi i k t / n)
Spectrum dft(const TimeSeries& series);
Spectrum dft(std::span<const double> values);

/// Complex inverse. One-sided spectra are expanded by conjugate symmetry first.
std::vector<Complex> idft_complex(const Spectrum& spec);

/// Real part of idft_complex.
TimeSeries idft(const Spectrum& spec);

/// Hilbert-transform analytic signal: real part is the input, negative frequencies removed.
std::vector<Complex> analytic_signal(const TimeSeries& series);
std::vector<Complex> analytic_signal(std::span<const double> values);

/// Mean instantaneous frequency in cycles per sample, clamped to [0, 0.5].
/// The first and last 5% of samples are ignored.
double instantaneous_frequency_mean(const TimeSeries& series);
double instantaneous_frequency_mean(std::span<const double> values);

/// Pearson correlation.
double correlation_coefficient(const TimeSeries& x, const TimeSeries& y);
double correlation_coefficient(std::span<const double> x, std::span<const double> y);

/// Adds seeded white Gaussian noise scaled so that the realized SNR (mean-removed
/// signal power over noise power) equals snr_db exactly.
TimeSeries add_noise_at_snr(const TimeSeries& series, double snr_db, std::uint64_t seed);

double mean(std::span<const double> values);
/// Mean square of the mean-removed values.
double centered_power(std::span<const double> values);

}  // namespace ipld::series
