#include "ipld/series.hpp"

#include "ipld/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <mutex>
#include <random>
#include <string>

namespace ipld::series {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// FFTW's planner is not reentrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + ": non-finite value");
    }
}

}  // namespace

TimeSeries::TimeSeries(std::vector<double> values, int interval_minutes, std::size_t start_index)
    : values_(std::move(values)), interval_minutes_(interval_minutes), start_index_(start_index) {
    if (values_.empty()) throw InvalidArgument("TimeSeries: empty");
    if (interval_minutes_ <= 0) throw InvalidArgument("TimeSeries: interval_minutes must be positive");
    require_finite(values_, "TimeSeries");
}

std::vector<Complex> fft(std::span<const Complex> input, bool inverse) {
    if (input.empty()) throw InvalidArgument("fft: empty input");
    const int n = static_cast<int>(input.size());
    std::vector<Complex> in(input.begin(), input.end());
    std::vector<Complex> out(input.size());
    auto* in_ptr = reinterpret_cast<fftw_complex*>(in.data());
    auto* out_ptr = reinterpret_cast<fftw_complex*>(out.data());
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_1d(n, in_ptr, out_ptr, inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
    }
    if (plan == nullptr) throw NumericFailure("fft", "planner refused length " + std::to_string(n));
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n);
        for (auto& v : out) v *= scale;
    }
    return out;
}

Spectrum dft(std::span<const double> values) {
    if (values.empty()) throw InvalidArgument("dft: empty input");
    require_finite(values, "dft");
    std::vector<Complex> buf(values.begin(), values.end());
    return Spectrum{fft(buf, false), values.size(), false};
}

Spectrum dft(const TimeSeries& series) { return dft(series.span()); }

std::vector<Complex> idft_complex(const Spectrum& spec) {
    if (spec.bins.empty() || spec.n == 0) throw InvalidArgument("idft: empty spectrum");
    if (!spec.one_sided) {
        if (spec.bins.size() != spec.n) throw InvalidArgument("idft: bin count does not match n");
        return fft(spec.bins, true);
    }
    const std::size_t half = spec.n / 2;
    if (spec.bins.size() != half + 1) throw InvalidArgument("idft: one-sided spectrum must hold n/2+1 bins");
    std::vector<Complex> full(spec.n);
    for (std::size_t k = 0; k <= half; ++k) full[k] = spec.bins[k];
    for (std::size_t k = 1; k < spec.n - half; ++k) full[spec.n - k] = std::conj(spec.bins[k]);
    full[0] = spec.bins[0].real();
    if (spec.n % 2 == 0) full[half] = spec.bins[half].real();
    return fft(full, true);
}

TimeSeries idft(const Spectrum& spec) {
    const auto z = idft_complex(spec);
    std::vector<double> re(z.size());
    std::transform(z.begin(), z.end(), re.begin(), [](Complex c) { return c.real(); });
    return TimeSeries(std::move(re));
}

std::vector<Complex> analytic_signal(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 4) throw InvalidArgument("analytic_signal: length must be at least 4");
    auto spec = dft(values).bins;
    // DC and Nyquist untouched, positive frequencies doubled, negative ones zeroed.
    const std::size_t positive_end = (n % 2 == 0) ? n / 2 : (n + 1) / 2;
    for (std::size_t k = 1; k < positive_end; ++k) spec[k] *= 2.0;
    for (std::size_t k = (n % 2 == 0 ? n / 2 + 1 : positive_end); k < n; ++k) spec[k] = 0.0;
    auto z = fft(spec, true);
    // The real part is the input by construction; pin it to avoid round-off drift.
    for (std::size_t t = 0; t < n; ++t) z[t] = {values[t], z[t].imag()};
    return z;
}

std::vector<Complex> analytic_signal(const TimeSeries& series) { return analytic_signal(series.span()); }

double instantaneous_frequency_mean(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 8) throw InvalidArgument("instantaneous_frequency_mean: length must be at least 8");
    const auto z = analytic_signal(values);
    double peak = 0.0;
    for (const auto& c : z) peak = std::max(peak, std::abs(c));
    if (peak < 1e-12) throw DegenerateSignal("instantaneous_frequency_mean: signal amplitude is zero");

    const auto trim = static_cast<std::size_t>(0.05 * static_cast<double>(n));
    const std::size_t first = trim;
    const std::size_t last = n - trim;  // exclusive
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = first; t + 1 < last; ++t) {
        double d = std::arg(z[t + 1]) - std::arg(z[t]);
        while (d > std::numbers::pi) d -= kTwoPi;
        while (d <= -std::numbers::pi) d += kTwoPi;
        total += d;
        ++count;
    }
    const double f = total / static_cast<double>(count) / kTwoPi;
    return std::clamp(f, 0.0, 0.5);
}

double instantaneous_frequency_mean(const TimeSeries& series) { return instantaneous_frequency_mean(series.span()); }

double mean(std::span<const double> values) {
    if (values.empty()) throw InvalidArgument("mean: empty input");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double centered_power(std::span<const double> values) {
    const double mu = mean(values);
    double acc = 0.0;
    for (double v : values) acc += (v - mu) * (v - mu);
    return acc / static_cast<double>(values.size());
}

double correlation_coefficient(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InvalidArgument("correlation_coefficient: length mismatch");
    if (x.size() < 2) throw InvalidArgument("correlation_coefficient: need at least 2 samples");
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw DegenerateSignal("correlation_coefficient: zero variance input");
    return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

double correlation_coefficient(const TimeSeries& x, const TimeSeries& y) {
    return correlation_coefficient(x.span(), y.span());
}

TimeSeries add_noise_at_snr(const TimeSeries& series, double snr_db, std::uint64_t seed) {
    if (!std::isfinite(snr_db)) throw InvalidArgument("add_noise_at_snr: snr_db must be finite");
    const double signal_power = centered_power(series.span());
    if (signal_power == 0.0) throw DegenerateSignal("add_noise_at_snr: constant input has no signal power");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> noise(series.size());
    for (auto& w : noise) w = gauss(rng);
    double noise_power = 0.0;
    for (double w : noise) noise_power += w * w;
    noise_power /= static_cast<double>(noise.size());

    const double target = signal_power / std::pow(10.0, snr_db / 10.0);
    const double scale = std::sqrt(target / noise_power);
    std::vector<double> out(series.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * noise[i];
    return TimeSeries(std::move(out), series.interval_minutes(), series.start_index());
}

}  // namespace ipld::series
