#include "ipld/data.hpp"
#include "ipld/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

using namespace ipld;
using namespace ipld::data;
using namespace std::chrono;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("ipld_test_data_" + name);
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
    std::ofstream out(p, std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
}

std::string replace_cell(const std::string& row, std::size_t column, const std::string& value) {
    std::stringstream in(row);
    std::vector<std::string> cells;
    for (std::string c; std::getline(in, c, ',');) cells.push_back(c);
    cells.at(column) = value;
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    return out;
}

// Cells with the same label in a must share a label in b and vice versa.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    return true;
}

std::vector<std::vector<double>> planted_profiles(std::mt19937_64& rng, std::vector<int>& family) {
    std::normal_distribution<double> noise(0.0, 0.03);
    std::vector<std::vector<double>> out;
    for (int i = 0; i < 24; ++i) {
        const int f = (i * 7) % 3 == 0 ? 0 : 1;
        std::vector<double> p(96);
        for (int t = 0; t < 96; ++t) {
            const bool day_shift = t >= 32 && t < 72;
            const double shape = f == 0 ? (day_shift ? 1.0 : 0.1) : (day_shift ? 0.1 : 1.0);
            p[static_cast<std::size_t>(t)] = (50.0 + 10.0 * i) * (shape + noise(rng));
        }
        out.push_back(p);
        family.push_back(f);
    }
    return out;
}

}  // namespace

TEST_CASE("one continuous device gives a constant aggregate") {
    DeviceSpec d;
    d.name = "pump";
    d.rated_kw = 100.0;
    const auto ds = generate_park({d}, 3, 7);
    CHECK(ds.size() == 3 * 96);
    for (double v : ds.aggregate.values()) REQUIRE(v == 100.0);
}

TEST_CASE("tariff peaks at 0.9182") {
    std::vector<double> p;
    for (int s = 0; s < 96; ++s) p.push_back(tou_price(s));
    CHECK(*std::max_element(p.begin(), p.end()) == 0.9182);
    CHECK(*std::min_element(p.begin(), p.end()) == doctest::Approx(0.3));
    CHECK_THROWS_AS(tou_price(96), InvalidArgument);
    const auto ds = generate_park(default_devices(), 2, 1);
    CHECK(*std::max_element(ds.price.values().begin(), ds.price.values().end()) == kPeakPrice);
}

TEST_CASE("aggregate equals the device sum before noise") {
    const auto ds = generate_park(default_devices(), 30, 42);
    REQUIRE(ds.devices.size() == 4);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        double sum = 0.0;
        for (const auto& d : ds.devices) sum += d[i];
        REQUIRE(ds.aggregate[i] == sum);
    }
}

TEST_CASE("measurement noise leaves devices untouched") {
    GeneratorOptions opt;
    opt.measurement_snr_db = 30.0;
    const auto clean = generate_park(default_devices(), 4, 42);
    const auto noisy = generate_park(default_devices(), 4, 42, opt);
    for (std::size_t d = 0; d < 4; ++d) CHECK(clean.devices[d].values() == noisy.devices[d].values());
    CHECK(clean.aggregate.values() != noisy.aggregate.values());
}

TEST_CASE("calendar codes") {
    const sys_days mon = year{2019} / 1 / 7;
    const sys_days sat = year{2019} / 1 / 12;
    const sys_days sun = year{2019} / 1 / 13;
    CHECK(calendar_code(mon, {}) == 1);
    CHECK(calendar_code(sat, {}) == 2);
    CHECK(calendar_code(sun, {}) == 2);
    CHECK(calendar_code(mon, {mon}) == 3);
    CHECK(calendar_code(sat, {sat}) == 3);

    GeneratorOptions opt;
    opt.festivals = {sys_days{year{2019} / 1 / 3}};
    const auto ds = generate_park(default_devices(), 14, 5, opt);
    for (double c : ds.calendar.values()) REQUIRE((c == 1.0 || c == 2.0 || c == 3.0));
    CHECK(ds.calendar[2 * 96] == 3.0);  // 2019-01-03
    CHECK(ds.calendar[4 * 96] == 2.0);  // Saturday
    CHECK(ds.calendar[0] == 1.0);
}

TEST_CASE("generation is deterministic per seed") {
    const auto a = generate_park(default_devices(), 5, 9);
    const auto b = generate_park(default_devices(), 5, 9);
    const auto c = generate_park(default_devices(), 5, 10);
    CHECK(a.aggregate.values() == b.aggregate.values());
    CHECK(a.aggregate.values() != c.aggregate.values());
}

TEST_CASE("invalid specs are rejected") {
    DeviceSpec d;
    d.name = "x";
    d.rated_kw = 0.0;
    CHECK_THROWS_AS(generate_park({d}, 1, 1), InvalidArgument);
    d.rated_kw = 10.0;
    d.interruptions_per_day = 5;
    CHECK_THROWS_AS(generate_park({d}, 1, 1), InvalidArgument);
    d.interruptions_per_day = 0;
    CHECK_THROWS_AS(generate_park({d}, 0, 1), InvalidArgument);
    CHECK_THROWS_AS(generate_park({}, 1, 1), InvalidArgument);
    CHECK_THROWS_AS(generate_park({d, d}, 1, 1), InvalidArgument);
}

TEST_CASE("planted clusters are recovered") {
    std::mt19937_64 rng(1);
    std::vector<int> family;
    const auto profiles = planted_profiles(rng, family);
    const auto report = cluster_profiles(profiles, 2, 3);
    CHECK(same_partition(report.labels, family));
    CHECK(report.labels[0] == 0);
    double cap = 0.0, count = 0.0;
    for (const auto& c : report.clusters) {
        cap += c.capacity_ratio;
        count += c.count_ratio;
    }
    CHECK(cap == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(count == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("one cluster holds everything") {
    std::mt19937_64 rng(2);
    std::vector<int> family;
    const auto profiles = planted_profiles(rng, family);
    const auto report = cluster_profiles(profiles, 1, 3);
    REQUIRE(report.clusters.size() == 1);
    CHECK(report.clusters[0].members == 24);
    CHECK(report.clusters[0].capacity_ratio == 1.0);
    CHECK(report.clusters[0].count_ratio == 1.0);
    CHECK(std::all_of(report.labels.begin(), report.labels.end(), [](int l) { return l == 0; }));
    CHECK_THROWS_AS(cluster_profiles(std::vector<std::vector<double>>(2, std::vector<double>(96, 1.0)), 3, 1), InvalidArgument);
}

TEST_CASE("clustering does not depend on profile order") {
    const auto ds = generate_park(default_devices(), 30, 42);
    const auto profiles = daily_profiles(ds);
    REQUIRE(profiles.size() == 30);
    const auto base = cluster_profiles(profiles, 4, 7);
    std::vector<std::size_t> perm(profiles.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(8);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<double>> shuffled;
    for (auto i : perm) shuffled.push_back(profiles[i]);
    const auto again = cluster_profiles(shuffled, 4, 7);
    std::vector<int> back(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) back[perm[i]] = again.labels[i];
    CHECK(same_partition(base.labels, back));
    CHECK(again.inertia == doctest::Approx(base.inertia).epsilon(1e-9));
}

TEST_CASE("csv round trip is bit-identical") {
    GeneratorOptions opt;
    opt.measurement_snr_db = 25.0;
    opt.festivals = {sys_days{year{2019} / 1 / 2}};
    const auto ds = generate_park(default_devices(), 3, 4, opt);
    const auto path = temp_file("roundtrip.csv");
    write_csv(ds, path);
    const auto back = load_csv(path);
    CHECK(back.days == 3);
    CHECK(back.start == ds.start);
    CHECK(back.device_names == ds.device_names);
    CHECK(back.aggregate.values() == ds.aggregate.values());
    CHECK(back.price.values() == ds.price.values());
    CHECK(back.calendar.values() == ds.calendar.values());
    for (std::size_t d = 0; d < ds.devices.size(); ++d) CHECK(back.devices[d].values() == ds.devices[d].values());
    CHECK(read_lines(path)[0] == "timestamp,load_kw,price,calendar,dev_aux_kw,dev_spinning_kw,dev_dryer_kw,dev_furnace_kw");
    std::filesystem::remove(path);
}

TEST_CASE("malformed csv files name the offending line") {
    const auto ds = generate_park(default_devices(), 1, 4);
    const auto path = temp_file("bad.csv");
    write_csv(ds, path);
    const auto lines = read_lines(path);

    auto expect_line = [&](std::vector<std::string> edited, std::size_t line) {
        write_lines(path, edited);
        try {
            load_csv(path);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.line() == line);
            CHECK(std::string(e.what()).find("line " + std::to_string(line)) != std::string::npos);
        }
    };

    auto calendar4 = lines;
    calendar4[11] = replace_cell(calendar4[11], 3, "4");
    expect_line(calendar4, 12);

    auto ragged = lines;
    ragged[5] = ragged[5].substr(0, ragged[5].rfind(','));
    expect_line(ragged, 6);

    auto text = lines;
    text[20] = replace_cell(text[20], 1, "abc");
    expect_line(text, 21);

    auto header = lines;
    header[0] = "time,load_kw,price,calendar";
    expect_line(header, 1);

    auto short_file = lines;
    short_file.resize(50);
    expect_line(short_file, 50);
    std::filesystem::remove(path);
}

TEST_CASE("a device column in the header without data is rejected") {
    const auto ds = generate_park(default_devices(), 1, 4);
    const auto path = temp_file("missing.csv");
    write_csv(ds, path);
    auto lines = read_lines(path);
    lines[0] += ",dev_extra_kw";
    write_lines(path, lines);
    CHECK_THROWS_AS(load_csv(path), ParseError);
    std::filesystem::remove(path);
}

TEST_CASE("normalize examples") {
    const std::vector<double> v{0, 5, 10};
    MinMax c;
    CHECK(normalize(v, c) == std::vector<double>{0, 0.5, 1});
    CHECK(c.min == 0.0);
    CHECK(c.max == 10.0);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-400.0, 900.0);
    std::vector<double> x(500);
    for (auto& e : x) e = u(rng);
    MinMax fitted;
    const auto back = denormalize(normalize(x, fitted), fitted);
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(std::abs(back[i] - x[i]) <= 1e-12 * 900.0);

    MinMax stored{0.0, 10.0};
    CHECK(normalize(std::vector<double>{-5, 20}, stored, false) == std::vector<double>{-0.5, 2.0});
    MinMax unused;
    CHECK_THROWS_AS(normalize(std::vector<double>{3, 3, 3}, unused), DegenerateSignal);
}

TEST_CASE("device config keys") {
    const std::map<std::string, std::string> kv{{"device.kiln.rated_kw", "500"},
                                                 {"device.kiln.duty", "shift"},
                                                 {"device.kiln.on_index", "10"},
                                                 {"device.kiln.off_index", "40"},
                                                 {"device.fan.rated_kw", "20"}};
    const auto specs = devices_from_config(kv, {"kiln", "fan"});
    REQUIRE(specs.size() == 2);
    CHECK(specs[0].rated_kw == 500.0);
    CHECK(specs[0].duty == Duty::shift);
    CHECK(specs[0].off_index == 40);
    CHECK(specs[1].duty == Duty::continuous);
    auto bad = kv;
    bad["device.kiln.colour"] = "red";
    CHECK_THROWS_AS(devices_from_config(bad, {"kiln", "fan"}), InvalidArgument);
}

TEST_CASE("dates") {
    CHECK(format_date(parse_date("2019-03-05")) == "2019-03-05");
    CHECK(format_timestamp(parse_date("2019-03-05"), 97) == "2019-03-06T00:15");
    CHECK_THROWS_AS(parse_date("2019-02-30"), InvalidArgument);
}
