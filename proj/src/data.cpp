#include "ipld/data.hpp"

#include "ipld/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace ipld::data {

namespace {

using std::chrono::sys_days;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index)};
    return std::mt19937_64(seq);
}

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_cell(const std::string& cell, std::size_t line, const std::string& column) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    const auto res = std::from_chars(first, last, v);
    if (cell.empty() || res.ec != std::errc() || res.ptr != last) {
        throw ParseError(line, "column " + column + ": '" + cell + "' is not a number");
    }
    if (!std::isfinite(v)) throw ParseError(line, "column " + column + ": non-finite value");
    return v;
}

// "YYYY-MM-DDTHH:MM" to minutes since the epoch.
long long parse_timestamp(const std::string& s, std::size_t line) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    char tail = 0;
    if (s.size() != 16 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' ||
        std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d%c", &y, &mo, &d, &h, &mi, &tail) != 5) {
        throw ParseError(line, "timestamp '" + s + "' is not YYYY-MM-DDTHH:MM");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59) throw ParseError(line, "timestamp '" + s + "' is not a valid time");
    return static_cast<long long>(sys_days{ymd}.time_since_epoch().count()) * 1440 + h * 60 + mi;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// One day of one device in kW.
std::vector<double> device_day(const DeviceSpec& spec, int calendar, std::mt19937_64& rng) {
    std::vector<double> out(kSamplesPerDay, 0.0);
    const bool offday = calendar != 1;
    if (offday && spec.workdays_only) return out;

    std::vector<bool> on(kSamplesPerDay, false);
    switch (spec.duty) {
        case Duty::continuous:
            std::fill(on.begin(), on.end(), true);
            break;
        case Duty::shift: {
            const int j = spec.start_jitter;
            const int start = std::clamp(spec.on_index + (j > 0 ? uniform_int(rng, -j, j) : 0), 0, kSamplesPerDay);
            const int stop = std::clamp(spec.off_index + (j > 0 ? uniform_int(rng, -j, j) : 0), start, kSamplesPerDay);
            for (int t = start; t < stop; ++t) on[static_cast<std::size_t>(t)] = true;
            break;
        }
        case Duty::cyclic: {
            const int phase = uniform_int(rng, 0, spec.period - 1);
            for (int t = 0; t < kSamplesPerDay; ++t) on[static_cast<std::size_t>(t)] = (t + phase) % spec.period < spec.on_length;
            break;
        }
    }

    if (spec.interruptions_per_day > 0) {
        std::vector<int> on_slots;
        for (int t = 0; t < kSamplesPerDay; ++t)
            if (on[static_cast<std::size_t>(t)]) on_slots.push_back(t);
        const int count = uniform_int(rng, 0, spec.interruptions_per_day);
        for (int i = 0; i < count && !on_slots.empty(); ++i) {
            const int start = on_slots[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(on_slots.size()) - 1))];
            for (int t = start; t < std::min(kSamplesPerDay, start + spec.interruption_length); ++t) {
                on[static_cast<std::size_t>(t)] = false;
            }
        }
    }

    const double level = spec.rated_kw * (offday ? spec.offday_fraction : 1.0);
    std::normal_distribution<double> jitter(0.0, 1.0);
    for (std::size_t t = 0; t < out.size(); ++t) {
        // The jitter draw happens for every slot so the stream does not depend on the on/off pattern.
        const double e = spec.noise_kw > 0.0 ? spec.noise_kw * jitter(rng) : 0.0;
        if (on[t]) out[t] = std::max(0.0, level + e);
    }
    return out;
}

}  // namespace

void DeviceSpec::validate() const {
    if (name.empty()) throw InvalidArgument("device: empty name");
    for (char ch : name) {
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-')) {
            throw InvalidArgument("device " + name + ": name may hold only letters, digits, '_' and '-'");
        }
    }
    const std::string who = "device " + name + ": ";
    if (!(rated_kw > 0.0) || !std::isfinite(rated_kw)) throw InvalidArgument(who + "rated_kw must be positive");
    if (interruptions_per_day < 0 || interruptions_per_day > 4) {
        throw InvalidArgument(who + "interruptions_per_day must be in [0, 4]");
    }
    if (interruption_length < 1) throw InvalidArgument(who + "interruption_length must be positive");
    if (!(noise_kw >= 0.0)) throw InvalidArgument(who + "noise_kw must be non-negative");
    if (!(offday_fraction >= 0.0)) throw InvalidArgument(who + "offday_fraction must be non-negative");
    if (duty == Duty::shift) {
        if (on_index < 0 || off_index > kSamplesPerDay || on_index >= off_index) {
            throw InvalidArgument(who + "shift needs 0 <= on_index < off_index <= 96");
        }
        if (start_jitter < 0) throw InvalidArgument(who + "start_jitter must be non-negative");
    }
    if (duty == Duty::cyclic && (period < 2 || on_length < 1 || on_length >= period)) {
        throw InvalidArgument(who + "cyclic needs period >= 2 and 1 <= on_length < period");
    }
}

std::string to_string(Duty d) {
    switch (d) {
        case Duty::continuous: return "continuous";
        case Duty::shift: return "shift";
        case Duty::cyclic: return "cyclic";
    }
    return "continuous";
}

Duty duty_from_string(const std::string& s) {
    if (s == "continuous") return Duty::continuous;
    if (s == "shift") return Duty::shift;
    if (s == "cyclic") return Duty::cyclic;
    throw InvalidArgument("unknown duty profile '" + s + "' (continuous, shift, cyclic)");
}

std::vector<DeviceSpec> default_devices() {
    DeviceSpec aux;
    aux.name = "aux";
    aux.rated_kw = 120.0;
    aux.duty = Duty::continuous;
    aux.noise_kw = 3.0;
    aux.offday_fraction = 0.4;

    DeviceSpec spin;
    spin.name = "spinning";
    spin.rated_kw = 400.0;
    spin.duty = Duty::shift;
    spin.on_index = 28;
    spin.off_index = 76;
    spin.start_jitter = 2;
    spin.interruptions_per_day = 2;
    spin.noise_kw = 8.0;
    spin.workdays_only = true;

    DeviceSpec dryer;
    dryer.name = "dryer";
    dryer.rated_kw = 250.0;
    dryer.duty = Duty::cyclic;
    dryer.period = 12;
    dryer.on_length = 6;
    dryer.noise_kw = 5.0;
    dryer.workdays_only = true;

    DeviceSpec furnace;
    furnace.name = "furnace";
    furnace.rated_kw = 800.0;
    furnace.duty = Duty::shift;
    furnace.on_index = 0;
    furnace.off_index = 60;
    furnace.start_jitter = 2;
    furnace.interruptions_per_day = 1;
    furnace.noise_kw = 10.0;

    return {aux, spin, dryer, furnace};
}

ParkDataset ParkDataset::slice_days(int first, int count) const {
    if (first < 0 || count < 1 || first + count > days) throw InvalidArgument("slice_days: range outside the dataset");
    const auto a = static_cast<std::ptrdiff_t>(first) * kSamplesPerDay;
    const auto b = a + static_cast<std::ptrdiff_t>(count) * kSamplesPerDay;
    auto cut = [&](const series::TimeSeries& s) {
        return series::TimeSeries(std::vector<double>(s.values().begin() + a, s.values().begin() + b), s.interval_minutes(),
                                  s.start_index() + static_cast<std::size_t>(a));
    };
    std::vector<series::TimeSeries> devs;
    for (const auto& d : devices) devs.push_back(cut(d));
    return ParkDataset{cut(aggregate), device_names, std::move(devs), cut(price), cut(calendar), count,
                       start + std::chrono::days{first}};
}

void ParkDataset::validate() const {
    const std::size_t n = aggregate.size();
    if (days < 1 || n != static_cast<std::size_t>(days) * kSamplesPerDay) {
        throw InvalidArgument("dataset: length is not days * 96");
    }
    if (price.size() != n || calendar.size() != n) throw InvalidArgument("dataset: price/calendar length mismatch");
    if (device_names.size() != devices.size()) throw InvalidArgument("dataset: device names and traces differ in count");
    for (const auto& d : devices) {
        if (d.size() != n) throw InvalidArgument("dataset: device trace length mismatch");
    }
    for (double c : calendar.values()) {
        if (c != 1.0 && c != 2.0 && c != 3.0) throw InvalidArgument("dataset: calendar value outside {1,2,3}");
    }
}

int calendar_code(sys_days day, const std::vector<sys_days>& festivals) {
    if (std::find(festivals.begin(), festivals.end(), day) != festivals.end()) return 3;
    const std::chrono::weekday wd{day};
    return (wd == std::chrono::Saturday || wd == std::chrono::Sunday) ? 2 : 1;
}

double tou_price(int slot, double price_base) {
    if (slot < 0 || slot >= kSamplesPerDay) throw InvalidArgument("tou_price: slot outside the day");
    const int hour = slot / 4;
    if (hour >= 23 || hour < 7) return 0.30 * price_base;
    if ((hour >= 8 && hour < 11) || (hour >= 17 && hour < 21)) return kPeakPrice;
    return 0.60 * price_base;
}

ParkDataset generate_park(const std::vector<DeviceSpec>& specs, int days, std::uint64_t seed,
                          const GeneratorOptions& options) {
    if (days < 1) throw InvalidArgument("generate_park: days must be at least 1");
    if (specs.empty()) throw InvalidArgument("generate_park: need at least one device");
    if (!(options.price_base > 0.0)) throw InvalidArgument("generate_park: price_base must be positive");
    std::set<std::string> names;
    for (const auto& s : specs) {
        s.validate();
        if (!names.insert(s.name).second) throw InvalidArgument("generate_park: duplicate device name " + s.name);
    }

    const std::size_t n = static_cast<std::size_t>(days) * kSamplesPerDay;
    std::vector<double> price(n), calendar(n), total(n, 0.0);
    for (int d = 0; d < days; ++d) {
        const int code = calendar_code(options.start + std::chrono::days{d}, options.festivals);
        for (int t = 0; t < kSamplesPerDay; ++t) {
            const auto i = static_cast<std::size_t>(d) * kSamplesPerDay + static_cast<std::size_t>(t);
            price[i] = tou_price(t, options.price_base);
            calendar[i] = code;
        }
    }

    std::vector<series::TimeSeries> traces;
    std::vector<std::string> device_names;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        auto rng = stream(seed, 1, k);
        std::vector<double> trace;
        trace.reserve(n);
        for (int d = 0; d < days; ++d) {
            const auto day = device_day(specs[k], static_cast<int>(calendar[static_cast<std::size_t>(d) * kSamplesPerDay]), rng);
            trace.insert(trace.end(), day.begin(), day.end());
        }
        for (std::size_t i = 0; i < n; ++i) total[i] += trace[i];
        traces.emplace_back(std::move(trace), kIntervalMinutes);
        device_names.push_back(specs[k].name);
    }

    series::TimeSeries aggregate(total, kIntervalMinutes);
    if (options.measurement_snr_db) {
        auto rng = stream(seed, 2, 0);
        const auto noisy = series::add_noise_at_snr(aggregate, *options.measurement_snr_db, rng());
        std::vector<double> v = noisy.values();
        for (auto& x : v) x = std::max(0.0, x);
        aggregate = series::TimeSeries(std::move(v), kIntervalMinutes);
    }
    return ParkDataset{std::move(aggregate),
                       std::move(device_names),
                       std::move(traces),
                       series::TimeSeries(std::move(price), kIntervalMinutes),
                       series::TimeSeries(std::move(calendar), kIntervalMinutes),
                       days,
                       options.start};
}

ClusterReport cluster_profiles(const std::vector<std::vector<double>>& profiles, int k, std::uint64_t seed, int restarts) {
    const auto n = profiles.size();
    if (k < 1) throw InvalidArgument("cluster_profiles: k must be positive");
    if (n < static_cast<std::size_t>(k)) throw InvalidArgument("cluster_profiles: fewer profiles than clusters");
    if (restarts < 1) throw InvalidArgument("cluster_profiles: restarts must be positive");
    const std::size_t dim = profiles.front().size();
    if (dim == 0) throw InvalidArgument("cluster_profiles: empty profile");

    std::vector<std::vector<double>> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (profiles[i].size() != dim) throw InvalidArgument("cluster_profiles: profiles differ in length");
        const auto [lo, hi] = std::minmax_element(profiles[i].begin(), profiles[i].end());
        x[i].resize(dim);
        for (std::size_t j = 0; j < dim; ++j) x[i][j] = *hi > *lo ? (profiles[i][j] - *lo) / (*hi - *lo) : 0.0;
    }
    // Cluster in a canonical order so the result cannot depend on how the caller ordered the days.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    {
        std::vector<std::vector<double>> sorted(n);
        for (std::size_t i = 0; i < n; ++i) sorted[i] = std::move(x[order[i]]);
        x = std::move(sorted);
    }
    auto dist2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
        return s;
    };

    std::vector<int> best_labels;
    std::vector<std::vector<double>> best_centers;
    double best_inertia = std::numeric_limits<double>::infinity();
    const auto kk = static_cast<std::size_t>(k);
    for (int run = 0; run < restarts; ++run) {
        auto rng = stream(seed, 3, static_cast<std::uint64_t>(run));
        std::vector<std::vector<double>> centers;
        centers.push_back(x[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
        std::vector<double> d2(n);
        while (centers.size() < kk) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double m = std::numeric_limits<double>::infinity();
                for (const auto& c : centers) m = std::min(m, dist2(x[i], c));
                d2[i] = m;
                sum += m;
            }
            std::size_t pick = 0;
            if (sum > 0.0) {
                double u = std::uniform_real_distribution<double>(0.0, sum)(rng);
                for (pick = 0; pick + 1 < n && u >= d2[pick]; ++pick) u -= d2[pick];
            } else {
                pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
            }
            centers.push_back(x[pick]);
        }

        std::vector<int> labels(n, -1);
        for (int iter = 0; iter < 300; ++iter) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                int arg = 0;
                double m = dist2(x[i], centers[0]);
                for (std::size_t c = 1; c < kk; ++c) {
                    const double v = dist2(x[i], centers[c]);
                    if (v < m) {
                        m = v;
                        arg = static_cast<int>(c);
                    }
                }
                if (labels[i] != arg) {
                    labels[i] = arg;
                    changed = true;
                }
            }
            if (!changed) break;
            std::vector<std::vector<double>> sums(kk, std::vector<double>(dim, 0.0));
            std::vector<int> counts(kk, 0);
            for (std::size_t i = 0; i < n; ++i) {
                const auto c = static_cast<std::size_t>(labels[i]);
                ++counts[c];
                for (std::size_t j = 0; j < dim; ++j) sums[c][j] += x[i][j];
            }
            for (std::size_t c = 0; c < kk; ++c) {
                if (counts[c] == 0) continue;  // an empty cluster keeps its last center
                for (std::size_t j = 0; j < dim; ++j) centers[c][j] = sums[c][j] / counts[c];
            }
        }
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) inertia += dist2(x[i], centers[static_cast<std::size_t>(labels[i])]);
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_labels = labels;
            best_centers = centers;
        }
    }

    {
        std::vector<int> original(n);
        for (std::size_t i = 0; i < n; ++i) original[order[i]] = best_labels[i];
        best_labels = std::move(original);
    }

    // Renumber clusters by first appearance so the labeling does not depend on the seeding draw.
    std::vector<int> remap(kk, -1);
    int next = 0;
    for (int& l : best_labels) {
        auto& r = remap[static_cast<std::size_t>(l)];
        if (r < 0) r = next++;
        l = r;
    }
    for (auto& r : remap)
        if (r < 0) r = next++;

    ClusterReport report;
    report.inertia = best_inertia;
    report.labels = best_labels;
    report.centers.resize(kk);
    report.clusters.resize(kk);
    for (std::size_t c = 0; c < kk; ++c) report.centers[static_cast<std::size_t>(remap[c])] = best_centers[c];
    double total_capacity = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double peak = *std::max_element(profiles[i].begin(), profiles[i].end());
        auto& s = report.clusters[static_cast<std::size_t>(report.labels[i])];
        s.capacity_kw += peak;
        s.members += 1;
        total_capacity += peak;
    }
    for (auto& s : report.clusters) {
        s.capacity_ratio = total_capacity > 0.0 ? s.capacity_kw / total_capacity : 0.0;
        s.count_ratio = static_cast<double>(s.members) / static_cast<double>(n);
    }
    return report;
}

std::vector<std::vector<double>> daily_profiles(const ParkDataset& ds) {
    std::vector<std::vector<double>> out;
    const auto& v = ds.aggregate.values();
    for (int d = 0; d < ds.days; ++d) {
        const auto a = v.begin() + static_cast<std::ptrdiff_t>(d) * kSamplesPerDay;
        out.emplace_back(a, a + kSamplesPerDay);
    }
    return out;
}

std::vector<double> normalize(std::span<const double> values, MinMax& constants, bool fit) {
    if (values.empty()) throw InvalidArgument("normalize: empty input");
    if (fit) {
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        if (!(*hi > *lo)) throw DegenerateSignal("normalize: constant series has no range");
        constants = MinMax{*lo, *hi};
    } else if (!(constants.max > constants.min)) {
        throw InvalidArgument("normalize: stored range is empty");
    }
    std::vector<double> out(values.size());
    const double span = constants.max - constants.min;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - constants.min) / span;
    return out;
}

std::vector<double> denormalize(std::span<const double> values, const MinMax& constants) {
    std::vector<double> out(values.size());
    const double span = constants.max - constants.min;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = constants.min + values[i] * span;
    return out;
}

std::string format_date(sys_days d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

sys_days parse_date(const std::string& s) {
    int y = 0, m = 0, d = 0;
    char tail = 0;
    if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2d-%2d%c", &y, &m, &d, &tail) != 3) {
        throw InvalidArgument("date '" + s + "' is not YYYY-MM-DD");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw InvalidArgument("date '" + s + "' does not exist");
    return sys_days{ymd};
}

std::string format_timestamp(sys_days start, std::size_t sample) {
    const auto minutes = static_cast<long long>(sample) * kIntervalMinutes;
    const sys_days day = start + std::chrono::days{minutes / 1440};
    const long long rem = minutes % 1440;
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02lld:%02lld", rem / 60, rem % 60);
    return format_date(day) + "T" + buf;
}

void write_csv(const ParkDataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
    out << "timestamp,load_kw,price,calendar";
    for (const auto& name : ds.device_names) out << ",dev_" << name << "_kw";
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << format_timestamp(ds.start, i) << ',' << format_number(ds.aggregate[i]) << ',' << format_number(ds.price[i])
            << ',' << static_cast<int>(ds.calendar[i]);
        for (const auto& d : ds.devices) out << ',' << format_number(d[i]);
        out << '\n';
    }
    if (!out) throw InvalidArgument("write failed: " + path.string());
}

ParkDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "empty file");
    if (!line.empty() && line.back() == '\r') throw ParseError(1, "CRLF line endings are not accepted");
    const auto header = split(line, ',');
    if (header.size() < 4 || header[0] != "timestamp" || header[1] != "load_kw" || header[2] != "price" ||
        header[3] != "calendar") {
        throw ParseError(1, "header must start with timestamp,load_kw,price,calendar");
    }
    std::vector<std::string> names;
    for (std::size_t c = 4; c < header.size(); ++c) {
        const auto& h = header[c];
        if (h.size() <= 7 || h.rfind("dev_", 0) != 0 || h.substr(h.size() - 3) != "_kw") {
            throw ParseError(1, "column '" + h + "' is not dev_<name>_kw");
        }
        names.push_back(h.substr(4, h.size() - 7));
    }

    std::vector<double> load, price, calendar;
    std::vector<std::vector<double>> devs(names.size());
    std::optional<sys_days> start;
    long long first_minute = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) throw ParseError(line_no, "empty row");
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) {
            throw ParseError(line_no, "expected " + std::to_string(header.size()) + " cells, found " +
                                          std::to_string(cells.size()));
        }
        const long long minute = parse_timestamp(cells[0], line_no);
        const std::size_t index = load.size();
        if (!start) {
            if (minute % 1440 != 0) throw ParseError(line_no, "first row must fall at 00:00");
            start = sys_days{std::chrono::days{minute / 1440}};
            first_minute = minute;
        } else if (minute != first_minute + static_cast<long long>(index) * kIntervalMinutes) {
            throw ParseError(line_no, "timestamp breaks the 15-minute grid");
        }
        const double l = parse_cell(cells[1], line_no, "load_kw");
        if (l < 0.0) throw ParseError(line_no, "load_kw is negative");
        load.push_back(l);
        price.push_back(parse_cell(cells[2], line_no, "price"));
        const double cal = parse_cell(cells[3], line_no, "calendar");
        if (cal != 1.0 && cal != 2.0 && cal != 3.0) {
            throw ParseError(line_no, "calendar value " + cells[3] + " is not 1, 2 or 3");
        }
        calendar.push_back(cal);
        for (std::size_t d = 0; d < names.size(); ++d) devs[d].push_back(parse_cell(cells[4 + d], line_no, header[4 + d]));
    }
    if (load.empty()) throw ParseError(line_no, "no data rows");
    if (load.size() % kSamplesPerDay != 0) {
        throw ParseError(line_no, "row count " + std::to_string(load.size()) + " is not a whole number of days");
    }

    std::vector<series::TimeSeries> dev_series;
    for (auto& d : devs) dev_series.emplace_back(std::move(d), kIntervalMinutes);
    const int days = static_cast<int>(load.size() / kSamplesPerDay);
    ParkDataset ds{series::TimeSeries(std::move(load), kIntervalMinutes),
                   std::move(names),
                   std::move(dev_series),
                   series::TimeSeries(std::move(price), kIntervalMinutes),
                   series::TimeSeries(std::move(calendar), kIntervalMinutes),
                   days,
                   *start};
    return ds;
}

std::vector<DeviceSpec> devices_from_config(const std::map<std::string, std::string>& kv,
                                            const std::vector<std::string>& order) {
    std::vector<DeviceSpec> specs;
    for (const auto& name : order) {
        DeviceSpec s;
        s.name = name;
        const std::string prefix = "device." + name + ".";
        for (const auto& [key, value] : kv) {
            if (key.rfind(prefix, 0) != 0) continue;
            const std::string field = key.substr(prefix.size());
            auto num = [&] {
                try {
                    std::size_t used = 0;
                    const double v = std::stod(value, &used);
                    if (used != value.size()) throw std::invalid_argument(value);
                    return v;
                } catch (const std::exception&) {
                    throw InvalidArgument(key + ": '" + value + "' is not a number");
                }
            };
            auto integer = [&] {
                const double v = num();
                if (v != std::floor(v)) throw InvalidArgument(key + ": '" + value + "' is not an integer");
                return static_cast<int>(v);
            };
            if (field == "rated_kw") s.rated_kw = num();
            else if (field == "duty") s.duty = duty_from_string(value);
            else if (field == "on_index") s.on_index = integer();
            else if (field == "off_index") s.off_index = integer();
            else if (field == "start_jitter") s.start_jitter = integer();
            else if (field == "period") s.period = integer();
            else if (field == "on_length") s.on_length = integer();
            else if (field == "interruptions_per_day") s.interruptions_per_day = integer();
            else if (field == "interruption_length") s.interruption_length = integer();
            else if (field == "noise_kw") s.noise_kw = num();
            else if (field == "offday_fraction") s.offday_fraction = num();
            else if (field == "workdays_only") {
                if (value != "true" && value != "false") throw InvalidArgument(key + ": expected true or false");
                s.workdays_only = value == "true";
            } else {
                throw InvalidArgument("unknown device key " + key);
            }
        }
        s.validate();
        specs.push_back(s);
    }
    return specs;
}

}  // namespace ipld::data
