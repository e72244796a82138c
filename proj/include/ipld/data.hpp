#pragma once

#include "ipld/series.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ipld::data {

inline constexpr int kSamplesPerDay = 96;
inline constexpr int kIntervalMinutes = 15;
inline constexpr double kPeakPrice = 0.9182;

enum class Duty { continuous, shift, cyclic };

/// One piece of plant. Sample indices count 15-minute slots within a day (0..95).
struct DeviceSpec {
    std::string name;
    double rated_kw = 100.0;
    Duty duty = Duty::continuous;
    int on_index = 0;    // shift: first on slot
    int off_index = 96;  // shift: first off slot after the run
    int start_jitter = 0;  // shift: run boundaries move by up to this many slots per day
    int period = 8;        // cyclic: slots per cycle
    int on_length = 4;     // cyclic: on slots per cycle
    int interruptions_per_day = 0;  // up to this many short outages per operating day
    int interruption_length = 3;
    double noise_kw = 0.0;         // Gaussian jitter on the on-level
    bool workdays_only = false;    // off on weekends and festivals
    double offday_fraction = 1.0;  // level multiplier on weekends and festivals when not workdays_only

    void validate() const;
};

std::string to_string(Duty d);
Duty duty_from_string(const std::string& s);

/// The four-device desk-scale park used by the CLI and the end-to-end checks.
std::vector<DeviceSpec> default_devices();

struct GeneratorOptions {
    std::chrono::sys_days start = std::chrono::sys_days{std::chrono::year{2019} / 1 / 1};
    std::vector<std::chrono::sys_days> festivals;
    std::optional<double> measurement_snr_db;  // none: aggregate is the exact device sum
    double price_base = 1.0;                   // valley and flat tiers are 0.30 and 0.60 of this
};

struct ParkDataset {
    series::TimeSeries aggregate;
    std::vector<std::string> device_names;
    std::vector<series::TimeSeries> devices;
    series::TimeSeries price;
    series::TimeSeries calendar;
    int days = 0;
    std::chrono::sys_days start;

    std::size_t size() const { return aggregate.size(); }
    /// Copy of days [first, first + count).
    ParkDataset slice_days(int first, int count) const;
    void validate() const;
};

/// Calendar code for a day: 1 workday, 2 weekend, 3 festival.
int calendar_code(std::chrono::sys_days day, const std::vector<std::chrono::sys_days>& festivals);

/// Tariff in effect at a 15-minute slot of the day.
double tou_price(int slot, double price_base = 1.0);

ParkDataset generate_park(const std::vector<DeviceSpec>& specs, int days, std::uint64_t seed,
                          const GeneratorOptions& options = {});

struct ClusterStats {
    double capacity_kw = 0.0;  // sum of member peak loads
    double capacity_ratio = 0.0;
    int members = 0;
    double count_ratio = 0.0;
};

struct ClusterReport {
    std::vector<ClusterStats> clusters;
    std::vector<int> labels;  // cluster of each profile; clusters numbered by first appearance
    std::vector<std::vector<double>> centers;  // in normalized profile units
    double inertia = 0.0;
};

/// k-means over per-profile min-max scaled profiles, k-means++ seeding, best of `restarts`.
ClusterReport cluster_profiles(const std::vector<std::vector<double>>& profiles, int k, std::uint64_t seed,
                               int restarts = 50);

/// One row per day of the aggregate load.
std::vector<std::vector<double>> daily_profiles(const ParkDataset& ds);

struct MinMax {
    double min = 0.0;
    double max = 1.0;
};

/// Fits min/max on values (throws DegenerateSignal if constant) unless constants are given.
std::vector<double> normalize(std::span<const double> values, MinMax& constants, bool fit = true);
std::vector<double> denormalize(std::span<const double> values, const MinMax& constants);

std::string format_timestamp(std::chrono::sys_days start, std::size_t sample);
void write_csv(const ParkDataset& ds, const std::filesystem::path& path);
ParkDataset load_csv(const std::filesystem::path& path);

/// Reads device.<name>.<field> keys. Devices appear in order of first mention.
std::vector<DeviceSpec> devices_from_config(const std::map<std::string, std::string>& kv,
                                            const std::vector<std::string>& order);

std::chrono::sys_days parse_date(const std::string& s);
std::string format_date(std::chrono::sys_days d);

}  // namespace ipld::data
