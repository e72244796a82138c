#include "ipld/cli.hpp"

#include "ipld/config.hpp"
#include "ipld/data.hpp"
#include "ipld/error.hpp"
#include "ipld/evalx.hpp"
#include "ipld/ivmd.hpp"
#include "ipld/model.hpp"
#include "ipld/plot.hpp"
#include "ipld/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

namespace ipld::cli {

namespace {

struct KeyInfo {
    std::string key;
    std::string def;
    std::string help;
};

const std::vector<KeyInfo>& key_table() {
    static const std::vector<KeyInfo> table = {
        {"vmd.alpha", "2000", "bandwidth penalty"},
        {"vmd.tau", "0.001", "dual ascent step"},
        {"vmd.k", "4", "mode count when K selection is off"},
        {"vmd.dc", "false", "pin the first mode at zero frequency"},
        {"vmd.init", "uniform", "center frequency initialisation: uniform, zero or random"},
        {"vmd.tol", "1e-7", "convergence tolerance"},
        {"vmd.max_iters", "500", "iteration cap"},
        {"vmd.seed", "0", "seed for random initialisation"},
        {"ivmd.auto_k", "true", "choose K by the curvature elbow"},
        {"ivmd.k_min", "2", "smallest K tried"},
        {"ivmd.k_max", "8", "largest K tried"},
        {"ivmd.elbow_factor", "1.0", "elbow threshold as a multiple of the median curvature"},
        {"ivmd.cc_threshold", "0.1", "modes with |CC| below this are discarded"},
        {"synth.days", "30", "days to generate"},
        {"synth.devices", "0", "number of devices, 0 for all"},
        {"synth.device_names", "", "device order when devices come from device.<name>.* keys"},
        {"synth.seed", "42", "generator seed"},
        {"synth.start", "2019-01-01", "first day (YYYY-MM-DD)"},
        {"synth.snr_db", "none", "measurement noise on the aggregate, none for an exact sum"},
        {"synth.festivals", "", "comma-separated festival dates"},
        {"train.learning_rate", "0.001", "step size"},
        {"train.batch_size", "16", "windows per step"},
        {"train.iterations", "1000", "optimizer steps"},
        {"train.seed", "0", "seed for initialisation, shuffling and dropout"},
        {"train.optimizer", "adam", "adam or sgd"},
        {"train.clip_norm", "5", "global gradient norm cap, 0 disables"},
        {"train.aux_weight", "0.1", "weight of the category cross-entropy"},
        {"train.dropout", "0.2", "dropout rate on the dense features"},
        {"train.days", "0", "train on the first N days, 0 for all"},
        {"train.denoise", "false", "denoise the aggregate day by day before training"},
        {"model.conv_channels", "16", "convolution filters"},
        {"model.kernel", "5", "convolution width"},
        {"model.features", "128", "feature vector length"},
        {"model.classes", "4", "load categories"},
        {"model.sru_hidden", "64", "hidden units per direction"},
        {"model.head_hidden", "128", "units in each head layer"},
        {"eval.threshold_fraction", "0.1", "on threshold as a fraction of each device's peak"},
    };
    return table;
}

const KeyInfo& key_info(const std::string& key) {
    for (const auto& k : key_table())
        if (k.key == key) return k;
    throw std::logic_error("unregistered config key " + key);
}

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Settings {
    vmd::VmdParams vmd;
    ivmd::DenoiseOptions ivmd;
    train::TrainConfig train;
    int train_days = 0;
    bool train_denoise = false;
    int synth_days = 30;
    int synth_devices = 0;
    std::uint64_t synth_seed = 42;
    data::GeneratorOptions generator;
    std::vector<data::DeviceSpec> devices;
    double threshold_fraction = 0.1;
};

struct Context {
    std::ostream& out;
    config::KeyValues flags;
    std::string config_file;
    std::vector<std::string> sets;
    config::KeyValues kv;
    Settings settings;
};

int as_int(const config::KeyValues& kv, const std::string& key) {
    const auto v = config::get_int(kv, key);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw config::ConfigError(key, "out of range");
    }
    return static_cast<int>(v);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

bool is_known(const std::string& key) {
    if (key.rfind("device.", 0) == 0) return true;
    return std::any_of(key_table().begin(), key_table().end(), [&](const KeyInfo& k) { return k.key == key; });
}

Settings resolve(const config::KeyValues& kv) {
    Settings s;
    auto& v = s.vmd;
    v.alpha = config::get_double(kv, "vmd.alpha");
    v.tau = config::get_double(kv, "vmd.tau");
    v.k = as_int(kv, "vmd.k");
    v.dc_mode = config::get_bool(kv, "vmd.dc");
    const auto& init = kv.at("vmd.init");
    if (init == "uniform") v.init_mode = vmd::InitMode::uniform;
    else if (init == "zero") v.init_mode = vmd::InitMode::zero;
    else if (init == "random") v.init_mode = vmd::InitMode::random;
    else throw config::ConfigError("vmd.init", "expected uniform, zero or random");
    v.tol = config::get_double(kv, "vmd.tol");
    v.max_iters = as_int(kv, "vmd.max_iters");
    v.seed = config::get_uint(kv, "vmd.seed");
    v.validate();

    auto& d = s.ivmd;
    d.auto_k = config::get_bool(kv, "ivmd.auto_k");
    d.k_min = as_int(kv, "ivmd.k_min");
    d.k_max = as_int(kv, "ivmd.k_max");
    d.elbow_factor = config::get_double(kv, "ivmd.elbow_factor");
    d.cc_threshold = config::get_double(kv, "ivmd.cc_threshold");
    if (d.k_min < 1 || d.k_max < d.k_min + 2) throw config::ConfigError("ivmd.k_max", "need 1 <= k_min and k_max >= k_min + 2");
    if (!(d.elbow_factor > 0.0)) throw config::ConfigError("ivmd.elbow_factor", "must be positive");
    if (!(d.cc_threshold >= 0.0 && d.cc_threshold < 1.0)) throw config::ConfigError("ivmd.cc_threshold", "must be in [0,1)");

    s.synth_days = as_int(kv, "synth.days");
    if (s.synth_days < 1) throw config::ConfigError("synth.days", "must be positive");
    s.synth_devices = as_int(kv, "synth.devices");
    if (s.synth_devices < 0) throw config::ConfigError("synth.devices", "must be >= 0");
    s.synth_seed = config::get_uint(kv, "synth.seed");
    try {
        s.generator.start = data::parse_date(kv.at("synth.start"));
        for (const auto& f : split_list(kv.at("synth.festivals"))) s.generator.festivals.push_back(data::parse_date(f));
    } catch (const std::exception& e) {
        throw config::ConfigError("synth.start/synth.festivals", e.what());
    }
    if (kv.at("synth.snr_db") != "none") s.generator.measurement_snr_db = config::get_double(kv, "synth.snr_db");

    std::vector<std::string> names = split_list(kv.at("synth.device_names"));
    if (names.empty()) {
        std::set<std::string> seen;
        for (const auto& [key, value] : kv) {
            if (key.rfind("device.", 0) != 0) continue;
            const auto dot = key.find('.', 7);
            if (dot == std::string::npos) throw config::ConfigError(key, "expected device.<name>.<field>");
            const auto name = key.substr(7, dot - 7);
            if (seen.insert(name).second) names.push_back(name);
        }
    }
    try {
        s.devices = names.empty() ? data::default_devices() : data::devices_from_config(kv, names);
    } catch (const InvalidArgument& e) {
        throw config::ConfigError("device.*", e.what());
    }
    if (s.synth_devices > static_cast<int>(s.devices.size())) {
        throw config::ConfigError("synth.devices", "only " + std::to_string(s.devices.size()) + " devices are defined");
    }
    if (s.synth_devices > 0) s.devices.resize(static_cast<std::size_t>(s.synth_devices));

    auto& t = s.train;
    t.learning_rate = config::get_double(kv, "train.learning_rate");
    t.batch_size = as_int(kv, "train.batch_size");
    t.max_iterations = as_int(kv, "train.iterations");
    t.seed = config::get_uint(kv, "train.seed");
    const auto& opt = kv.at("train.optimizer");
    if (opt == "adam") t.optimizer = train::Optimizer::adam;
    else if (opt == "sgd") t.optimizer = train::Optimizer::sgd;
    else throw config::ConfigError("train.optimizer", "expected adam or sgd");
    t.clip_norm = config::get_double(kv, "train.clip_norm");
    t.aux_weight = config::get_double(kv, "train.aux_weight");
    t.dropout_rate = config::get_double(kv, "train.dropout");
    t.shape.conv_channels = as_int(kv, "model.conv_channels");
    t.shape.kernel = as_int(kv, "model.kernel");
    t.shape.features = as_int(kv, "model.features");
    t.shape.classes = as_int(kv, "model.classes");
    t.shape.sru_hidden = as_int(kv, "model.sru_hidden");
    t.shape.head_hidden = as_int(kv, "model.head_hidden");
    t.validate();
    t.shape.validate();
    s.train_days = as_int(kv, "train.days");
    if (s.train_days < 0) throw config::ConfigError("train.days", "must be >= 0");
    s.train_denoise = config::get_bool(kv, "train.denoise");

    s.threshold_fraction = config::get_double(kv, "eval.threshold_fraction");
    if (!(s.threshold_fraction > 0.0 && s.threshold_fraction < 1.0)) {
        throw config::ConfigError("eval.threshold_fraction", "must be in (0,1)");
    }
    return s;
}

// file < environment < --set < flags
void build_config(Context& ctx) {
    config::KeyValues kv;
    std::vector<std::string> names;
    for (const auto& k : key_table()) {
        kv[k.key] = k.def;
        names.push_back(k.key);
    }
    if (!ctx.config_file.empty()) {
        config::KeyValues file;
        try {
            file = config::load_file(ctx.config_file);
        } catch (const std::exception& e) {
            throw UsageError(std::string("config file: ") + e.what());
        }
        for (const auto& [key, value] : file) {
            if (!is_known(key)) throw UsageError("unknown config key '" + key + "' in " + ctx.config_file);
        }
        config::merge(kv, file);
    }
    config::merge(kv, config::from_environment(names));
    for (const auto& item : ctx.sets) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + item + "'");
        const auto key = item.substr(0, eq);
        if (!is_known(key)) throw UsageError("unknown config key '" + key + "'");
        kv[key] = item.substr(eq + 1);
    }
    config::merge(kv, ctx.flags);
    try {
        ctx.settings = resolve(kv);
    } catch (const config::ConfigError& e) {
        throw UsageError(std::string("invalid config ") + e.what());
    } catch (const InvalidArgument& e) {
        throw UsageError(std::string("invalid config: ") + e.what());
    }
    ctx.kv = std::move(kv);
}

void bind(CLI::App* app, Context& ctx, const std::string& flag, const std::string& key) {
    const auto& info = key_info(key);
    app->add_option_function<std::string>(
           flag, [&ctx, key](const std::string& v) { ctx.flags[key] = v; }, info.help + " (" + key + ")")
        ->default_str(info.def.empty() ? "\"\"" : info.def);
}

void bind_flag(CLI::App* app, Context& ctx, const std::string& flag, const std::string& key, const std::string& value,
               const std::string& help = "") {
    const auto& info = key_info(key);
    app->add_flag_callback(flag, [&ctx, key, value] { ctx.flags[key] = value; },
                           (help.empty() ? info.help : help) + " (sets " + key + "=" + value + ", default " + info.def + ")");
}

void add_common(CLI::App* app, Context& ctx) {
    app->add_option("--config", ctx.config_file, "key=value configuration file, overridden by IPLD_* variables and flags");
    app->add_option("--set", ctx.sets, "override any configuration key, e.g. --set vmd.alpha=1500")->take_all();
}

void add_vmd_flags(CLI::App* app, Context& ctx) {
    bind(app, ctx, "--alpha", "vmd.alpha");
    bind(app, ctx, "--tau", "vmd.tau");
    bind(app, ctx, "--k", "vmd.k");
    bind_flag(app, ctx, "--dc", "vmd.dc", "true");
    bind(app, ctx, "--init", "vmd.init");
    bind(app, ctx, "--tol", "vmd.tol");
    bind(app, ctx, "--max-iters", "vmd.max_iters");
    bind(app, ctx, "--vmd-seed", "vmd.seed");
}

void add_k_flags(CLI::App* app, Context& ctx) {
    bind(app, ctx, "--k-min", "ivmd.k_min");
    bind(app, ctx, "--k-max", "ivmd.k_max");
    bind(app, ctx, "--elbow-factor", "ivmd.elbow_factor");
}

data::ParkDataset read_park(const std::string& path) {
    try {
        return data::load_csv(path);
    } catch (const std::exception& e) {
        throw DataError("reading " + path + ": " + e.what());
    }
}

void write_park(const data::ParkDataset& ds, const std::string& path) {
    try {
        data::write_csv(ds, path);
    } catch (const std::exception& e) {
        throw DataError("writing " + path + ": " + e.what());
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    return f;
}

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

series::TimeSeries day_of(const series::TimeSeries& s, int day) {
    const auto part = s.span().subspan(static_cast<std::size_t>(day) * data::kSamplesPerDay, data::kSamplesPerDay);
    return series::TimeSeries(std::vector<double>(part.begin(), part.end()), data::kIntervalMinutes);
}

ivmd::DenoiseResult denoise_day(const series::TimeSeries& day, const Settings& s, int index) {
    try {
        return ivmd::denoise(day, s.vmd, s.ivmd);
    } catch (const NumericFailure& e) {
        throw NumericFailure(e.stage(), std::string("day ") + std::to_string(index) + ": " + e.what());
    } catch (const std::exception& e) {
        throw DataError("denoise day " + std::to_string(index) + ": " + e.what());
    }
}

// Replaces the aggregate with its denoised version. Negative excursions are clipped to zero.
std::vector<ivmd::DenoiseResult> denoise_aggregate(data::ParkDataset& ds, const Settings& s) {
    std::vector<ivmd::DenoiseResult> results;
    std::vector<double> load;
    load.reserve(ds.size());
    for (int d = 0; d < ds.days; ++d) {
        results.push_back(denoise_day(day_of(ds.aggregate, d), s, d));
        for (double v : results.back().denoised.values()) load.push_back(std::max(0.0, v));
    }
    ds.aggregate = series::TimeSeries(std::move(load), data::kIntervalMinutes);
    return results;
}

// ---------------------------------------------------------------------------

void cmd_synth(Context& ctx, const std::string& out_path) {
    const auto& s = ctx.settings;
    const auto ds = data::generate_park(s.devices, s.synth_days, s.synth_seed, s.generator);
    write_park(ds, out_path);
    ctx.out << "wrote " << out_path << ": " << ds.days << " days, " << ds.devices.size() << " devices, " << ds.size()
            << " samples\n";
}

struct DenoiseArgs {
    std::string data;
    std::string out;
    std::string report;
    std::vector<double> snr_sweep;
    int sweep_seeds = 10;
    int sweep_days = 1;
};

void snr_sweep(Context& ctx, const DenoiseArgs& a) {
    const auto& s = ctx.settings;
    data::ParkDataset ds = a.data.empty() ? data::generate_park(s.devices, a.sweep_days, s.synth_seed, s.generator)
                                          : read_park(a.data);
    if (a.sweep_seeds < 1 || a.sweep_days < 1) throw UsageError("--sweep-seeds and --sweep-days must be positive");
    const int days = std::min(a.sweep_days, ds.days);
    std::ostringstream table;
    table << "snr_db,cc_noisy,cc_denoised,mean_k\n";
    ctx.out << "  SNR dB   CC noisy   CC denoised   mean K\n";
    for (double snr : a.snr_sweep) {
        double cc_noisy = 0.0, cc_denoised = 0.0, k_sum = 0.0;
        int n = 0;
        for (int d = 0; d < days; ++d) {
            const auto clean = day_of(ds.aggregate, d);
            for (int seed = 0; seed < a.sweep_seeds; ++seed) {
                const auto noisy = series::add_noise_at_snr(clean, snr, static_cast<std::uint64_t>(seed) * 1000 + d);
                const auto r = denoise_day(noisy, s, d);
                cc_noisy += series::correlation_coefficient(noisy, clean);
                cc_denoised += series::correlation_coefficient(r.denoised, clean);
                k_sum += static_cast<double>(r.modes.modes.size());
                ++n;
            }
        }
        cc_noisy /= n;
        cc_denoised /= n;
        k_sum /= n;
        table << fmt("%g", snr) << ',' << fmt("%.10g", cc_noisy) << ',' << fmt("%.10g", cc_denoised) << ','
              << fmt("%.10g", k_sum) << '\n';
        char line[128];
        std::snprintf(line, sizeof line, "%8g %10.4f %13.4f %8.2f\n", snr, cc_noisy, cc_denoised, k_sum);
        ctx.out << line;
    }
    if (!a.out.empty()) {
        auto f = open_out(a.out);
        f << table.str();
        ctx.out << "wrote " << a.out << "\n";
    }
}

void cmd_denoise(Context& ctx, const DenoiseArgs& a) {
    if (!a.snr_sweep.empty()) {
        snr_sweep(ctx, a);
        return;
    }
    if (a.data.empty() || a.out.empty()) throw UsageError("denoise needs --data and --out (or --snr-sweep)");
    auto ds = read_park(a.data);
    const auto results = denoise_aggregate(ds, ctx.settings);
    write_park(ds, a.out);

    std::ostringstream report;
    report << "day,k,mean_if,curvature,selected,threshold,no_elbow,modes_kept,residual_kept\n";
    for (std::size_t d = 0; d < results.size(); ++d) {
        const auto& r = results[d];
        const auto kept = std::count(r.retained.begin(), r.retained.end(), true);
        const std::string tail = std::to_string(kept) + ',' + (r.residual_retained ? "1" : "0");
        if (!r.report) {
            report << d << ',' << r.modes.modes.size() << ",,,1,,," << tail << '\n';
            continue;
        }
        for (const auto& c : r.report->candidates) {
            report << d << ',' << c.k << ',' << fmt("%.10g", c.mean_if) << ',' << fmt("%.10g", c.curvature) << ','
                   << (c.k == r.report->selected_k ? 1 : 0) << ',' << fmt("%.10g", r.report->threshold_used) << ','
                   << (r.report->no_elbow ? 1 : 0) << ',' << tail << '\n';
        }
    }
    const std::string report_path = a.report.empty() ? a.out + ".k.csv" : a.report;
    auto f = open_out(report_path);
    f << report.str();

    std::map<std::size_t, int> k_counts;
    for (const auto& r : results) ++k_counts[r.modes.modes.size()];
    ctx.out << "denoised " << results.size() << " days; K chosen:";
    for (const auto& [k, n] : k_counts) ctx.out << " K=" << k << " x" << n;
    ctx.out << "\nwrote " << a.out << " and " << report_path << "\n";
}

void cmd_select_k(Context& ctx, const std::string& data_path, int day, const std::string& out_path) {
    const auto ds = read_park(data_path);
    if (day < 0 || day >= ds.days) throw DataError("--day " + std::to_string(day) + " outside 0.." + std::to_string(ds.days - 1));
    const auto& s = ctx.settings;
    ivmd::KSelectionReport r;
    try {
        r = ivmd::select_k(day_of(ds.aggregate, day), s.ivmd.k_min, s.ivmd.k_max, s.vmd, s.ivmd.elbow_factor);
    } catch (const NumericFailure&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(std::string("select-k: ") + e.what());
    }
    std::ostringstream csv;
    csv << "k,mean_if,curvature,selected\n";
    ctx.out << "   K   mean IF      curvature\n";
    for (const auto& c : r.candidates) {
        char line[128];
        std::snprintf(line, sizeof line, "%4d %10.6f %14.6g%s\n", c.k, c.mean_if, c.curvature,
                      c.k == r.selected_k ? "  <- selected" : "");
        ctx.out << line;
        csv << c.k << ',' << fmt("%.10g", c.mean_if) << ',' << fmt("%.10g", c.curvature) << ','
            << (c.k == r.selected_k ? 1 : 0) << '\n';
    }
    ctx.out << "selected K = " << r.selected_k << " (threshold " << fmt("%.6g", r.threshold_used)
            << (r.no_elbow ? ", no elbow found" : "") << ")\n";
    if (!out_path.empty()) {
        auto f = open_out(out_path);
        f << csv.str();
    }
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string history;
};

void cmd_train(Context& ctx, const TrainArgs& a) {
    const auto& s = ctx.settings;
    auto ds = read_park(a.data);
    if (s.train_days > ds.days) {
        throw DataError(a.data + " has " + std::to_string(ds.days) + " days, train.days is " + std::to_string(s.train_days));
    }
    if (s.train_days > 0) ds = ds.slice_days(0, s.train_days);
    if (ds.devices.empty()) throw DataError(a.data + " has no device columns to learn from");
    if (s.train_denoise) denoise_aggregate(ds, s);

    const std::string history_path = a.history.empty() ? a.out + ".loss.txt" : a.history;
    train::TrainResult result;
    try {
        result = train::train(ds, s.train);
    } catch (const Diverged& e) {
        train::write_history(e.regression_history(), history_path);
        throw;
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("train: ") + e.what());
    }
    try {
        model::save_model(result.model, a.out);
    } catch (const std::exception& e) {
        throw DataError("writing " + a.out + ": " + e.what());
    }
    train::write_history(result.history.regression, history_path);

    const auto& h = result.history.regression;
    const auto smoothed = train::smooth(h, 50);
    ctx.out << "trained on " << ds.days << " days, " << ds.devices.size() << " devices, " << result.model.params.count()
            << " parameters, " << h.size() << " iterations\n";
    ctx.out << "loss " << fmt("%.6g", h.front()) << " -> " << fmt("%.6g", smoothed.back()) << " (50-step mean)\n";
    ctx.out << "wrote " << a.out << " and " << history_path << "\n";
}

void cmd_disaggregate(Context& ctx, const std::string& data_path, const std::string& model_path,
                      const std::string& out_path, int skip_days, int days) {
    const auto ds = read_park(data_path);
    model::DisaggregationModel m;
    try {
        m = model::load_model(model_path);
    } catch (const std::exception& e) {
        throw DataError("reading " + model_path + ": " + e.what());
    }
    if (m.shape.window != data::kSamplesPerDay) throw DataError(model_path + ": model window is not one day");
    if (skip_days < 0 || days < 0) throw UsageError("--skip-days and --days must be >= 0");
    if (skip_days >= ds.days) throw DataError("--skip-days " + std::to_string(skip_days) + " leaves no data in " + data_path);
    const int count = days == 0 ? ds.days - skip_days : days;
    if (skip_days + count > ds.days) throw DataError(data_path + " has only " + std::to_string(ds.days) + " days");
    auto part = ds.slice_days(skip_days, count);

    const auto d_count = static_cast<std::size_t>(m.shape.devices);
    std::vector<std::vector<double>> est(d_count);
    for (int day = 0; day < count; ++day) {
        const auto a = static_cast<std::size_t>(day) * data::kSamplesPerDay;
        auto cut = [&](const series::TimeSeries& x) { return x.span().subspan(a, data::kSamplesPerDay); };
        const cnn::InputMatrix window(cut(part.price), cut(part.calendar), cut(part.aggregate));
        const auto e = model::model_forward(window, m);
        for (std::size_t d = 0; d < d_count; ++d)
            for (Eigen::Index t = 0; t < e.power.cols(); ++t) est[d].push_back(e.power(static_cast<Eigen::Index>(d), t));
    }
    part.device_names = m.device_names;
    part.devices.clear();
    for (auto& v : est) part.devices.emplace_back(std::move(v), data::kIntervalMinutes);
    write_park(part, out_path);
    ctx.out << "disaggregated " << count << " days into " << d_count << " devices; wrote " << out_path << "\n";
}

void cmd_evaluate(Context& ctx, const std::string& est_path, const std::string& truth_path, const std::string& out_path) {
    const auto est = read_park(est_path);
    const auto truth = read_park(truth_path);
    const auto offset = (est.start - truth.start).count();
    if (offset < 0 || offset + est.days > truth.days) {
        throw DataError(est_path + " covers days outside " + truth_path);
    }
    const auto part = truth.slice_days(static_cast<int>(offset), est.days);
    model::DeviceEstimate e;
    e.device_ids = est.device_names;
    e.power.resize(static_cast<Eigen::Index>(est.devices.size()), static_cast<Eigen::Index>(est.size()));
    for (std::size_t d = 0; d < est.devices.size(); ++d)
        for (std::size_t i = 0; i < est.size(); ++i) e.power(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) = est.devices[d][i];
    evalx::EvalReport report;
    try {
        report = evalx::evaluate_disaggregation(e, part, ctx.settings.threshold_fraction);
    } catch (const std::exception& ex) {
        throw DataError(std::string("evaluate: ") + ex.what());
    }
    ctx.out << evalx::format_table(report);
    if (!out_path.empty()) {
        evalx::write_report(report, out_path);
        ctx.out << "wrote " << out_path << "\n";
    }
}

struct GradcheckArgs {
    std::uint64_t seed = 0;
    int batches = 1;
    int batch_size = 2;
    double step = 1e-5;
    double tolerance = 1e-4;
};

int cmd_gradcheck(Context& ctx, const GradcheckArgs& a) {
    if (a.batches < 1 || a.batch_size < 1) throw UsageError("--batches and --batch-size must be positive");
    model::ModelShape shape;
    shape.window = 16;
    shape.devices = 2;
    shape.conv_channels = 4;
    shape.features = 8;
    shape.sru_hidden = 8;
    shape.head_hidden = 8;
    std::mt19937_64 rng(a.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> label(0, shape.classes - 1);
    double worst = 0.0;
    for (int b = 0; b < a.batches; ++b) {
        const auto m = model::DisaggregationModel::init(shape, rng(), 0.2);
        std::vector<train::Example> batch(static_cast<std::size_t>(a.batch_size));
        for (auto& ex : batch) {
            ex.x = train::Matrix::NullaryExpr(3, shape.window, [&] { return unit(rng); });
            ex.target = train::Matrix::NullaryExpr(shape.devices, shape.window, [&] { return unit(rng); });
            ex.label = label(rng);
        }
        const auto r = train::finite_difference_check(m, batch, a.step);
        worst = std::max(worst, r.max_error);
        char line[256];
        std::snprintf(line, sizeof line, "batch %d: max error %.3e over %zu weights (%zu skipped at kinks), worst %s[%zu]\n",
                      b, r.max_error, r.checked, r.skipped, r.worst_param.c_str(), r.worst_index);
        ctx.out << line;
    }
    const bool ok = worst <= a.tolerance;
    ctx.out << (ok ? "ok" : "FAILED") << ": max error " << fmt("%.3e", worst) << " (tolerance " << fmt("%g", a.tolerance)
            << ")\n";
    return ok ? kExitOk : kExitNumeric;
}

struct PlotArgs {
    std::string input;
    std::string out;
    std::vector<std::string> columns;
    std::string title;
    int smooth = 0;
    std::uint64_t seed = 0;
};

bool parse_number(const std::string& s, double& v) {
    if (s.empty()) return false;
    char* end = nullptr;
    v = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

void cmd_plot(Context& ctx, const PlotArgs& a) {
    std::ifstream in(a.input);
    if (!in) throw DataError("cannot open " + a.input);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        const char sep = line.find(',') != std::string::npos ? ',' : ' ';
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, sep)) {
            if (sep == ' ' && cell.empty()) continue;
            cells.push_back(cell);
        }
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw DataError(a.input + " is empty");

    std::vector<std::string> header;
    double probe = 0.0;
    if (parse_number(rows.front().front(), probe)) {
        header.push_back("iteration");
        for (std::size_t c = 1; c < rows.front().size(); ++c) header.push_back(rows.front().size() == 2 ? "loss" : "col" + std::to_string(c));
    } else {
        header = rows.front();
        rows.erase(rows.begin());
    }
    if (rows.empty()) throw DataError(a.input + " has a header but no rows");

    std::vector<std::vector<double>> cols(header.size(), std::vector<double>(rows.size(), std::nan("")));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() > header.size()) throw DataError(a.input + ": row " + std::to_string(r + 1) + " has extra cells");
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            double v = 0.0;
            if (parse_number(rows[r][c], v)) cols[c][r] = v;
        }
    }
    auto numeric = [&](std::size_t c) {
        return std::any_of(cols[c].begin(), cols[c].end(), [](double v) { return std::isfinite(v); });
    };

    std::vector<double> x(rows.size());
    std::string x_label = header.front();
    if (std::all_of(cols[0].begin(), cols[0].end(), [](double v) { return std::isfinite(v); })) {
        x = cols[0];
    } else {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
        x_label = "row";
    }

    std::vector<plot::Line> lines;
    if (a.columns.empty()) {
        for (std::size_t c = 1; c < header.size(); ++c)
            if (numeric(c)) lines.push_back({header[c], cols[c]});
    } else {
        for (const auto& name : a.columns) {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw DataError(a.input + " has no column '" + name + "'");
            lines.push_back({name, cols[static_cast<std::size_t>(it - header.begin())]});
        }
    }
    if (lines.empty()) throw DataError(a.input + " has no numeric columns to plot");
    if (a.smooth > 1) {
        const auto n = lines.size();
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> filled = lines[i].y;
            for (auto& v : filled)
                if (!std::isfinite(v)) v = 0.0;
            lines.push_back({lines[i].name + " (mean of " + std::to_string(a.smooth) + ")", train::smooth(filled, a.smooth)});
        }
    }
    const plot::Provenance prov{a.input, a.seed, config::hash(ctx.kv)};
    const auto paths = plot::write_line_chart(a.out, a.title.empty() ? a.input : a.title, x_label, x, lines, prov);
    ctx.out << "wrote " << paths[0].string() << " and " << paths[1].string() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Industrial park load decomposition: denoising, K selection, training and evaluation", "ipld"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "help for every subcommand");
    Context ctx{out, {}, {}, {}, {}, {}};
    std::function<int()> action;

    auto* synth = app.add_subcommand("synth", "generate a synthetic park CSV");
    std::string synth_out;
    synth->add_option("--out", synth_out, "output CSV")->required();
    bind(synth, ctx, "--days", "synth.days");
    bind(synth, ctx, "--devices", "synth.devices");
    bind(synth, ctx, "--seed", "synth.seed");
    bind(synth, ctx, "--start", "synth.start");
    bind(synth, ctx, "--snr-db", "synth.snr_db");
    bind(synth, ctx, "--festivals", "synth.festivals");
    add_common(synth, ctx);
    synth->callback([&] { action = [&] { cmd_synth(ctx, synth_out); return kExitOk; }; });

    auto* den = app.add_subcommand("denoise", "denoise the load column day by day, or tabulate CC against SNR");
    DenoiseArgs den_args;
    den->add_option("--data", den_args.data, "park CSV");
    den->add_option("--out", den_args.out, "denoised park CSV, or the sweep table with --snr-sweep");
    den->add_option("--report", den_args.report, "K selection report CSV (default <out>.k.csv)");
    den->add_option("--snr-sweep", den_args.snr_sweep, "comma-separated SNRs in dB; add noise to the clean load and report CC")
        ->delimiter(',');
    den->add_option("--sweep-seeds", den_args.sweep_seeds, "noise seeds per SNR")->capture_default_str();
    den->add_option("--sweep-days", den_args.sweep_days, "days of the load used by the sweep")->capture_default_str();
    add_vmd_flags(den, ctx);
    add_k_flags(den, ctx);
    bind(den, ctx, "--cc-threshold", "ivmd.cc_threshold");
    bind_flag(den, ctx, "--no-auto-k", "ivmd.auto_k", "false", "use the fixed mode count --k instead of the curvature elbow");
    bind(den, ctx, "--seed", "synth.seed");
    add_common(den, ctx);
    den->callback([&] { action = [&] { cmd_denoise(ctx, den_args); return kExitOk; }; });

    auto* sel = app.add_subcommand("select-k", "report the K selection curve for one day of load");
    std::string sel_data, sel_out;
    int sel_day = 0;
    sel->add_option("--data", sel_data, "park CSV")->required();
    sel->add_option("--day", sel_day, "day index")->capture_default_str();
    sel->add_option("--out", sel_out, "curve as CSV");
    add_vmd_flags(sel, ctx);
    add_k_flags(sel, ctx);
    add_common(sel, ctx);
    sel->callback([&] { action = [&] { cmd_select_k(ctx, sel_data, sel_day, sel_out); return kExitOk; }; });

    auto* tr = app.add_subcommand("train", "fit a disaggregation model");
    TrainArgs tr_args;
    tr->add_option("--data", tr_args.data, "park CSV with device columns")->required();
    tr->add_option("--out", tr_args.out, "model file")->required();
    tr->add_option("--history", tr_args.history, "per-iteration regression loss (default <out>.loss.txt)");
    bind(tr, ctx, "--days", "train.days");
    bind(tr, ctx, "--lr", "train.learning_rate");
    bind(tr, ctx, "--batch-size", "train.batch_size");
    bind(tr, ctx, "--iterations", "train.iterations");
    bind(tr, ctx, "--seed", "train.seed");
    bind(tr, ctx, "--optimizer", "train.optimizer");
    bind(tr, ctx, "--clip-norm", "train.clip_norm");
    bind(tr, ctx, "--aux-weight", "train.aux_weight");
    bind(tr, ctx, "--dropout", "train.dropout");
    bind_flag(tr, ctx, "--denoise", "train.denoise", "true");
    bind(tr, ctx, "--conv-channels", "model.conv_channels");
    bind(tr, ctx, "--kernel", "model.kernel");
    bind(tr, ctx, "--features", "model.features");
    bind(tr, ctx, "--classes", "model.classes");
    bind(tr, ctx, "--sru-hidden", "model.sru_hidden");
    bind(tr, ctx, "--head-hidden", "model.head_hidden");
    add_vmd_flags(tr, ctx);
    add_k_flags(tr, ctx);
    add_common(tr, ctx);
    tr->callback([&] { action = [&] { cmd_train(ctx, tr_args); return kExitOk; }; });

    auto* dis = app.add_subcommand("disaggregate", "estimate per-device power with a trained model");
    std::string dis_data, dis_model, dis_out;
    int dis_skip = 0, dis_days = 0;
    dis->add_option("--data", dis_data, "park CSV")->required();
    dis->add_option("--model", dis_model, "model file")->required();
    dis->add_option("--out", dis_out, "park CSV whose device columns are the estimates")->required();
    dis->add_option("--skip-days", dis_skip, "days skipped at the start")->capture_default_str();
    dis->add_option("--days", dis_days, "days processed, 0 for the rest")->capture_default_str();
    add_common(dis, ctx);
    dis->callback([&] {
        action = [&] {
            cmd_disaggregate(ctx, dis_data, dis_model, dis_out, dis_skip, dis_days);
            return kExitOk;
        };
    });

    auto* ev = app.add_subcommand("evaluate", "score estimates against the true device traces");
    std::string ev_est, ev_truth, ev_out;
    ev->add_option("--estimates", ev_est, "output of disaggregate")->required();
    ev->add_option("--truth", ev_truth, "park CSV with the true device traces")->required();
    ev->add_option("--out", ev_out, "report file; .csv for CSV, otherwise a text table");
    bind(ev, ctx, "--threshold-fraction", "eval.threshold_fraction");
    add_common(ev, ctx);
    ev->callback([&] { action = [&] { cmd_evaluate(ctx, ev_est, ev_truth, ev_out); return kExitOk; }; });

    auto* gc = app.add_subcommand("gradcheck", "compare backpropagation with finite differences on a small random model");
    GradcheckArgs gc_args;
    gc->add_option("--seed", gc_args.seed, "seed")->capture_default_str();
    gc->add_option("--batches", gc_args.batches, "random batches")->capture_default_str();
    gc->add_option("--batch-size", gc_args.batch_size, "windows per batch")->capture_default_str();
    gc->add_option("--step", gc_args.step, "central difference step")->capture_default_str();
    gc->add_option("--tolerance", gc_args.tolerance, "largest accepted relative error")->capture_default_str();
    add_common(gc, ctx);
    gc->callback([&] { action = [&] { return cmd_gradcheck(ctx, gc_args); }; });

    auto* pl = app.add_subcommand("plot", "line chart of a CSV, a loss history or a report, as CSV and SVG");
    PlotArgs pl_args;
    pl->add_option("--input", pl_args.input, "CSV with a header, or an 'iteration loss' history")->required();
    pl->add_option("--out", pl_args.out, "output path without extension")->required();
    pl->add_option("--columns", pl_args.columns, "columns to draw (default all numeric)")->delimiter(',');
    pl->add_option("--title", pl_args.title, "chart title (default the input path)");
    pl->add_option("--smooth", pl_args.smooth, "also draw a trailing mean over this many points")->capture_default_str();
    pl->add_option("--seed", pl_args.seed, "seed recorded in the provenance block")->capture_default_str();
    add_common(pl, ctx);
    pl->callback([&] { action = [&] { cmd_plot(ctx, pl_args); return kExitOk; }; });

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        err << "ipld: " << e.what() << "\n\n";
        const auto selected = app.get_subcommands();
        err << (selected.empty() ? app.help() : selected.front()->help());
        return kExitUsage;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        build_config(ctx);
        return action();
    } catch (const UsageError& e) {
        err << "ipld " << stage << ": " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericFailure& e) {
        err << "ipld " << stage << ": numeric failure in " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Diverged& e) {
        err << "ipld " << stage << ": " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "ipld " << stage << ": " << e.what() << "\n";
        return kExitData;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

}  // namespace ipld::cli
