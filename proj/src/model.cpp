#include "ipld/model.hpp"

#include "ipld/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ipld::model {

namespace {

constexpr char kMagic[8] = {'I', 'P', 'L', 'D', 'M', 'D', 'L', '\0'};
constexpr std::uint32_t kVersion = 1;

Matrix glorot(int rows, int cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    return m;
}

template <typename M>
std::span<double> view(M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename M>
std::span<const double> view(const M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename P, typename V>
void visit_all(P& p, const V& visit) {
    visit("cnn.conv_w", view(p.cnn.conv_w));
    visit("cnn.conv_b", view(p.cnn.conv_b));
    visit("cnn.dense_w", view(p.cnn.dense_w));
    visit("cnn.dense_b", view(p.cnn.dense_b));
    visit("cnn.cls_w", view(p.cnn.cls_w));
    visit("cnn.cls_b", view(p.cnn.cls_b));
    auto sru = [&](auto& w, const std::string& prefix) {
        visit(prefix + ".w_s", view(w.w_s));
        visit(prefix + ".w_f", view(w.w_f));
        visit(prefix + ".b_f", view(w.b_f));
        visit(prefix + ".w_r", view(w.w_r));
        visit(prefix + ".b_r", view(w.b_r));
        if (w.has_skip()) visit(prefix + ".w_skip", view(w.w_skip));
    };
    sru(p.forward, "sru_fwd");
    sru(p.reverse, "sru_rev");
    visit("head.w1", view(p.head.w1));
    visit("head.b1", view(p.head.b1));
    visit("head.w2", view(p.head.w2));
    visit("head.b2", view(p.head.b2));
    visit("head.w_out", view(p.head.w_out));
    visit("head.b_out", view(p.head.b_out));
}

// Input-side SRU products for S_t = [load_t; z]: the z part is the same for every step.
sru::Projections project(const sru::SruWeights& w, const Vector& load, const Vector& z) {
    const auto steps = load.size();
    const auto features = z.size();
    auto expand = [&](const Matrix& m, const Vector* bias) {
        Vector shared = m.rightCols(features) * z;
        if (bias) shared += *bias;
        Matrix out = m.col(0) * load.transpose();
        out.colwise() += shared;
        return out;
    };
    sru::Projections p;
    p.s_tilde = expand(w.w_s, nullptr);
    p.f_pre = expand(w.w_f, &w.b_f);
    p.r_pre = expand(w.w_r, &w.b_r);
    if (w.has_skip()) {
        p.skip = expand(w.w_skip, nullptr);
    } else {
        p.skip.resize(features + 1, steps);
        p.skip.row(0) = load.transpose();
        p.skip.bottomRows(features) = z.replicate(1, steps);
    }
    return p;
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw InvalidArgument("model file truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw InvalidArgument("model file truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

cnn::CnnShape ModelShape::cnn() const {
    cnn::CnnShape s;
    s.window = window;
    s.conv_channels = conv_channels;
    s.kernel = kernel;
    s.features = features;
    s.classes = classes;
    return s;
}

void ModelShape::validate() const {
    if (devices < 1) throw InvalidArgument("ModelShape: need at least one device");
    if (sru_hidden < 1 || head_hidden < 1) throw InvalidArgument("ModelShape: hidden sizes must be positive");
    cnn().validate();
}

Parameters Parameters::zeros_like() const {
    Parameters z = *this;
    for_each_param(z, [](const std::string&, std::span<double> v) { std::fill(v.begin(), v.end(), 0.0); });
    return z;
}

std::size_t Parameters::count() const {
    std::size_t n = 0;
    for_each_param(*this, [&](const std::string&, std::span<const double> v) { n += v.size(); });
    return n;
}

void for_each_param(Parameters& p, const ParamVisitor& visit) { visit_all(p, visit); }
void for_each_param(const Parameters& p, const ConstParamVisitor& visit) { visit_all(p, visit); }

DisaggregationModel DisaggregationModel::init(const ModelShape& shape, std::uint64_t seed, double dropout_rate) {
    shape.validate();
    std::mt19937_64 rng(seed);
    DisaggregationModel m;
    m.shape = shape;
    m.params.cnn = cnn::CnnWeights::glorot(shape.cnn(), rng, dropout_rate);
    m.params.forward = sru::SruWeights::glorot(shape.sru_input(), shape.sru_hidden, rng);
    m.params.reverse = sru::SruWeights::glorot(shape.sru_input(), shape.sru_hidden, rng);
    auto& h = m.params.head;
    h.w1 = glorot(shape.head_hidden, 2 * shape.sru_hidden, rng);
    h.b1 = Vector::Zero(shape.head_hidden);
    h.w2 = glorot(shape.head_hidden, shape.head_hidden, rng);
    h.b2 = Vector::Zero(shape.head_hidden);
    h.w_out = glorot(shape.devices, shape.head_hidden, rng);
    h.b_out = Vector::Zero(shape.devices);
    m.norm.out_min.assign(static_cast<std::size_t>(shape.devices), 0.0);
    m.norm.out_max.assign(static_cast<std::size_t>(shape.devices), 1.0);
    for (int d = 0; d < shape.devices; ++d) m.device_names.push_back("dev" + std::to_string(d));
    return m;
}

void DisaggregationModel::validate() const {
    shape.validate();
    const auto& s = shape;
    params.cnn.validate();
    const auto& c = params.cnn;
    const auto cs = s.cnn();
    if (c.conv_w.rows() != s.conv_channels || c.conv_w.cols() != 3 * s.kernel || c.dense_w.cols() != cs.flat_size() ||
        c.dense_w.rows() != s.features || c.cls_w.rows() != s.classes) {
        throw InvalidArgument("model: CNN weights disagree with the shape header");
    }
    for (const auto* w : {&params.forward, &params.reverse}) {
        w->validate();
        if (w->input_dim() != s.sru_input() || w->hidden() != s.sru_hidden) {
            throw InvalidArgument("model: SRU weights disagree with the shape header");
        }
    }
    const auto& h = params.head;
    if (h.w1.rows() != s.head_hidden || h.w1.cols() != 2 * s.sru_hidden || h.b1.size() != s.head_hidden ||
        h.w2.rows() != s.head_hidden || h.w2.cols() != s.head_hidden || h.b2.size() != s.head_hidden ||
        h.w_out.rows() != s.devices || h.w_out.cols() != s.head_hidden || h.b_out.size() != s.devices) {
        throw InvalidArgument("model: head weights disagree with the shape header");
    }
    if (!h.w1.allFinite() || !h.b1.allFinite() || !h.w2.allFinite() || !h.b2.allFinite() || !h.w_out.allFinite() ||
        !h.b_out.allFinite()) {
        throw InvalidArgument("model: non-finite head weight");
    }
    const auto d = static_cast<std::size_t>(s.devices);
    if (norm.out_min.size() != d || norm.out_max.size() != d || device_names.size() != d) {
        throw InvalidArgument("model: per-device constants do not match the device count");
    }
    for (int i = 0; i < 3; ++i) {
        if (!(norm.in_max[i] > norm.in_min[i])) throw InvalidArgument("model: input scaling range is empty");
    }
    for (std::size_t i = 0; i < d; ++i) {
        if (!(norm.out_max[i] > norm.out_min[i])) throw InvalidArgument("model: output scaling range is empty");
    }
}

Matrix forward_normalized(const DisaggregationModel& m, const Matrix& x, bool training, std::mt19937_64* rng,
                          ForwardTrace* trace) {
    if (x.rows() != 3 || x.cols() != m.shape.window) {
        throw InvalidArgument("model: window must be 3 x " + std::to_string(m.shape.window));
    }
    ForwardTrace local;
    ForwardTrace& tr = trace ? *trace : local;
    const auto fv = cnn::cnn_forward(x, m.params.cnn, training, rng, &tr.cnn);
    tr.load = x.row(cnn::kLoadRow).transpose();

    const Vector c0 = Vector::Zero(m.shape.sru_hidden);
    tr.fwd_proj = project(m.params.forward, tr.load, fv.z);
    tr.rev_proj = project(m.params.reverse, tr.load, fv.z);
    sru::recurrence(tr.fwd_proj, false, c0, &tr.fwd);
    sru::recurrence(tr.rev_proj, true, c0, &tr.rev);

    const auto hidden = m.shape.sru_hidden;
    tr.hcat.resize(2 * hidden, x.cols());
    tr.hcat.topRows(hidden) = tr.fwd.h;
    tr.hcat.bottomRows(hidden) = tr.rev.h;

    const auto& h = m.params.head;
    tr.z1 = h.w1 * tr.hcat;
    tr.z1.colwise() += h.b1;
    tr.a1 = tr.z1.cwiseMax(0.0);
    tr.z2 = h.w2 * tr.a1;
    tr.z2.colwise() += h.b2;
    tr.a2 = tr.z2.cwiseMax(0.0);
    tr.y = h.w_out * tr.a2;
    tr.y.colwise() += h.b_out;
    if (!tr.y.allFinite()) throw NumericFailure("head", "non-finite output");
    return tr.y;
}

Matrix normalize_window(const DisaggregationModel& m, const cnn::InputMatrix& window) {
    Matrix x = window.rows();
    for (int i = 0; i < 3; ++i) {
        x.row(i) = (x.row(i).array() - m.norm.in_min[i]) / (m.norm.in_max[i] - m.norm.in_min[i]);
    }
    return x;
}

DeviceEstimate model_forward(const cnn::InputMatrix& window, const DisaggregationModel& m) {
    if (window.length() != m.shape.window) {
        throw InvalidArgument("model_forward: window has " + std::to_string(window.length()) + " samples, model expects " +
                              std::to_string(m.shape.window));
    }
    const Matrix y = forward_normalized(m, normalize_window(m, window), false, nullptr);
    DeviceEstimate out;
    out.device_ids = m.device_names;
    out.power = y.cwiseMax(0.0);
    for (int d = 0; d < m.shape.devices; ++d) {
        const auto i = static_cast<std::size_t>(d);
        out.power.row(d) = m.norm.out_min[i] + out.power.row(d).array() * (m.norm.out_max[i] - m.norm.out_min[i]);
    }
    return out;
}

void save_model(const DisaggregationModel& m, const std::filesystem::path& path) {
    m.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
    out.write(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    const auto& s = m.shape;
    for (int v : {s.window, s.devices, s.conv_channels, s.kernel, s.features, s.classes, s.sru_hidden, s.head_hidden}) {
        put_u32(out, static_cast<std::uint32_t>(v));
    }
    put_u32(out, m.params.cnn.pool_mode == cnn::PoolMode::max ? 0u : 1u);
    put_f64(out, m.params.cnn.dropout_rate);
    for (int i = 0; i < 3; ++i) put_f64(out, m.norm.in_min[i]);
    for (int i = 0; i < 3; ++i) put_f64(out, m.norm.in_max[i]);
    for (double v : m.norm.out_min) put_f64(out, v);
    for (double v : m.norm.out_max) put_f64(out, v);
    for (const auto& name : m.device_names) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    for_each_param(m.params, [&](const std::string&, std::span<const double> v) {
        for (double x : v) put_f64(out, x);
    });
    if (!out) throw InvalidArgument("write failed: " + path.string());
}

DisaggregationModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open model file " + path.string());
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw InvalidArgument(path.string() + " is not a model file");
    }
    const auto version = get_u32(in);
    if (version != kVersion) throw InvalidArgument("unsupported model file version " + std::to_string(version));

    ModelShape s;
    for (int* field : {&s.window, &s.devices, &s.conv_channels, &s.kernel, &s.features, &s.classes, &s.sru_hidden,
                       &s.head_hidden}) {
        const auto v = get_u32(in);
        if (v > 1u << 20) throw InvalidArgument("model file: implausible layer size " + std::to_string(v));
        *field = static_cast<int>(v);
    }
    const auto pool = get_u32(in);
    if (pool > 1) throw InvalidArgument("model file: unknown pooling mode");
    const double dropout = get_f64(in);

    auto m = DisaggregationModel::init(s, 0, dropout);
    m.params.cnn.pool_mode = pool == 0 ? cnn::PoolMode::max : cnn::PoolMode::avg;
    for (int i = 0; i < 3; ++i) m.norm.in_min[i] = get_f64(in);
    for (int i = 0; i < 3; ++i) m.norm.in_max[i] = get_f64(in);
    for (auto& v : m.norm.out_min) v = get_f64(in);
    for (auto& v : m.norm.out_max) v = get_f64(in);
    for (auto& name : m.device_names) {
        const auto len = get_u32(in);
        if (len > 4096) throw InvalidArgument("model file: device name too long");
        name.assign(len, '\0');
        if (!in.read(name.data(), len)) throw InvalidArgument("model file truncated");
    }
    for_each_param(m.params, [&](const std::string&, std::span<double> v) {
        for (double& x : v) x = get_f64(in);
    });
    if (in.peek() != std::char_traits<char>::eof()) throw InvalidArgument("model file has trailing bytes");
    m.validate();
    return m;
}

}  // namespace ipld::model
