#include "ipld/train.hpp"

#include "ipld/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace ipld::train {

namespace {

using model::DisaggregationModel;
using model::ForwardTrace;
using model::Parameters;

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<std::span<double>> spans(Parameters& p) {
    std::vector<std::span<double>> out;
    model::for_each_param(p, [&](const std::string&, std::span<double> v) { out.push_back(v); });
    return out;
}

Matrix step_mask(const Matrix& m) { return (m.array() > 0.0).cast<double>().matrix(); }

void require_finite(const Matrix& m, const char* layer) {
    if (!m.allFinite()) throw NumericFailure(layer, "non-finite gradient");
}

Vector softmax(const Vector& logits) {
    const double top = logits.maxCoeff();
    Vector e = (logits.array() - top).exp().matrix();
    return e / e.sum();
}

// Weight gradients of one SRU layer whose inputs are S_t = [load_t; z]. Returns dL/dz.
Vector sru_weight_grads(const sru::SruWeights& w, const sru::RecurrenceGrad& rg, const Vector& load, const Vector& z,
                        sru::SruWeights& g) {
    const auto features = z.size();
    Vector dz = Vector::Zero(features);
    auto apply = [&](const Matrix& weight, const Matrix& d, Matrix& gw, Vector* gb) {
        const Vector total = d.rowwise().sum();
        gw.col(0) += d * load;
        gw.rightCols(features) += total * z.transpose();
        if (gb) *gb += total;
        dz += weight.rightCols(features).transpose() * total;
    };
    apply(w.w_s, rg.d.s_tilde, g.w_s, nullptr);
    apply(w.w_f, rg.d.f_pre, g.w_f, &g.b_f);
    apply(w.w_r, rg.d.r_pre, g.w_r, &g.b_r);
    if (w.has_skip()) {
        apply(w.w_skip, rg.d.skip, g.w_skip, nullptr);
    } else {
        dz += rg.d.skip.bottomRows(features).rowwise().sum();
    }
    return dz;
}

LossParts backward_one(const DisaggregationModel& m, const Example& ex, Parameters& g, double aux_weight, bool training,
                       std::mt19937_64* rng) {
    ForwardTrace tr;
    const Matrix y = model::forward_normalized(m, ex.x, training, rng, &tr);
    if (ex.target.rows() != y.rows() || ex.target.cols() != y.cols()) {
        throw InvalidArgument("backward: target shape does not match the model output");
    }
    LossParts parts;
    const Matrix diff = y - ex.target;
    parts.regression = diff.squaredNorm() / static_cast<double>(diff.size());
    const Matrix dy = diff * (2.0 / static_cast<double>(diff.size()));

    Vector dlogits = Vector::Zero(tr.cnn.logits.size());
    if (ex.label >= 0) {
        if (ex.label >= tr.cnn.logits.size()) throw InvalidArgument("backward: label outside the class range");
        const Vector p = softmax(tr.cnn.logits);
        parts.auxiliary = cross_entropy(tr.cnn.logits, ex.label);
        dlogits = p * aux_weight;
        dlogits(ex.label) -= aux_weight;
    }

    const auto& h = m.params.head;
    auto& gh = g.head;
    gh.w_out += dy * tr.a2.transpose();
    gh.b_out += dy.rowwise().sum();
    const Matrix dz2 = (h.w_out.transpose() * dy).cwiseProduct(step_mask(tr.z2));
    gh.w2 += dz2 * tr.a1.transpose();
    gh.b2 += dz2.rowwise().sum();
    const Matrix dz1 = (h.w2.transpose() * dz2).cwiseProduct(step_mask(tr.z1));
    gh.w1 += dz1 * tr.hcat.transpose();
    gh.b1 += dz1.rowwise().sum();
    const Matrix dhcat = h.w1.transpose() * dz1;
    require_finite(dhcat, "head");

    const auto hidden = m.shape.sru_hidden;
    const auto& z = tr.cnn.z;
    const auto gf = sru::recurrence_backward(tr.fwd_proj, tr.fwd, false, dhcat.topRows(hidden));
    const auto gr = sru::recurrence_backward(tr.rev_proj, tr.rev, true, dhcat.bottomRows(hidden));
    Vector dz = sru_weight_grads(m.params.forward, gf, tr.load, z, g.forward);
    dz += sru_weight_grads(m.params.reverse, gr, tr.load, z, g.reverse);
    require_finite(dz, "sru");

    const auto& c = m.params.cnn;
    auto& gc = g.cnn;
    gc.cls_w += dlogits * z.transpose();
    gc.cls_b += dlogits;
    dz += c.cls_w.transpose() * dlogits;
    const Vector d_dense = dz.cwiseProduct(tr.cnn.dropout_mask).cwiseProduct(step_mask(tr.cnn.dense_pre)) *
                           tr.cnn.dropout_scale;
    gc.dense_w += d_dense * tr.cnn.flat.transpose();
    gc.dense_b += d_dense;
    const Vector dflat = c.dense_w.transpose() * d_dense;

    const auto& pre = tr.cnn.conv_pre;
    Matrix dconv = Matrix::Zero(pre.rows(), pre.cols());
    const auto pooled = pre.cols() / 2;
    for (Eigen::Index ch = 0; ch < pre.rows(); ++ch) {
        for (Eigen::Index p = 0; p < pooled; ++p) {
            const auto flat = ch * pooled + p;
            if (c.pool_mode == cnn::PoolMode::max) {
                const auto pos = tr.cnn.pool_argmax[static_cast<std::size_t>(flat)] - ch * pre.cols();
                if (pre(ch, pos) > 0.0) dconv(ch, pos) += dflat(flat);
            } else {
                for (Eigen::Index q = 2 * p; q < 2 * p + 2; ++q)
                    if (pre(ch, q) > 0.0) dconv(ch, q) += 0.5 * dflat(flat);
            }
        }
    }
    gc.conv_w += dconv * tr.cnn.cols.transpose();
    gc.conv_b += dconv.rowwise().sum();
    require_finite(gc.conv_w, "cnn");
    return parts;
}

// Which side of every kink the forward pass sits on.
std::vector<int> activation_pattern(const ForwardTrace& tr) {
    std::vector<int> sig;
    auto bits = [&](const Matrix& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) sig.push_back(m.data()[i] > 0.0 ? 1 : 0);
    };
    bits(tr.cnn.conv_pre);
    sig.insert(sig.end(), tr.cnn.pool_argmax.begin(), tr.cnn.pool_argmax.end());
    bits(tr.cnn.dense_pre);
    bits(tr.fwd.c);
    bits(tr.rev.c);
    bits(tr.z1);
    bits(tr.z2);
    return sig;
}

struct Probe {
    std::vector<Matrix> y;
    std::vector<Vector> logits;
    std::vector<std::vector<int>> patterns;
};

Probe probe_batch(const DisaggregationModel& m, std::span<const Example> batch) {
    Probe p;
    for (const auto& ex : batch) {
        ForwardTrace tr;
        p.y.push_back(model::forward_normalized(m, ex.x, false, nullptr, &tr));
        p.logits.push_back(tr.cnn.logits);
        p.patterns.push_back(activation_pattern(tr));
    }
    return p;
}

// L(plus) - L(minus), differenced term by term so that outputs the perturbation leaves untouched
// contribute exactly zero instead of rounding in a large sum.
double loss_difference(const Probe& plus, const Probe& minus, std::span<const Example> batch, double aux_weight) {
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Matrix& yp = plus.y[b];
        const Matrix& ym = minus.y[b];
        const Matrix& t = batch[b].target;
        const double mse = ((yp - ym).array() * (yp + ym - 2.0 * t).array()).sum() / static_cast<double>(t.size());
        total += mse;
        const int label = batch[b].label;
        if (label < 0) continue;
        const Vector& lp = plus.logits[b];
        const Vector& lm = minus.logits[b];
        const double shift = lm.maxCoeff();
        double weight = 0.0, change = 0.0;
        for (Eigen::Index i = 0; i < lm.size(); ++i) {
            const double e = std::exp(lm(i) - shift);
            weight += e;
            change += e * std::expm1(lp(i) - lm(i));
        }
        total += aux_weight * (std::log1p(change / weight) - (lp(label) - lm(label)));
    }
    return total;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("train.learning_rate must be >= 0");
    if (batch_size < 1) throw InvalidArgument("train.batch_size must be positive");
    if (max_iterations < 1) throw InvalidArgument("train.max_iterations must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("train.beta must be in [0,1)");
    if (!(epsilon > 0.0)) throw InvalidArgument("train.epsilon must be positive");
    if (!(clip_norm >= 0.0)) throw InvalidArgument("train.clip_norm must be >= 0");
    if (!(aux_weight >= 0.0)) throw InvalidArgument("train.aux_weight must be >= 0");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("train.dropout must be in [0,1)");
}

double loss_mse(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw InvalidArgument("loss_mse: shape mismatch");
    if (pred.size() == 0) throw InvalidArgument("loss_mse: empty input");
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

double cross_entropy(const Vector& logits, int label) {
    if (label < 0 || label >= logits.size()) throw InvalidArgument("cross_entropy: label outside the class range");
    const double top = logits.maxCoeff();
    const double lse = top + std::log((logits.array() - top).exp().sum());
    return lse - logits(label);
}

LossParts batch_loss(const DisaggregationModel& m, std::span<const Example> batch, double aux_weight) {
    (void)aux_weight;
    LossParts parts;
    for (const auto& ex : batch) {
        model::ForwardTrace tr;
        const Matrix y = model::forward_normalized(m, ex.x, false, nullptr, &tr);
        parts.regression += loss_mse(y, ex.target);
        if (ex.label >= 0) parts.auxiliary += cross_entropy(tr.cnn.logits, ex.label);
    }
    return parts;
}

LossParts backward(const DisaggregationModel& m, std::span<const Example> batch, Parameters& grad, double aux_weight,
                   bool training, std::mt19937_64* rng) {
    LossParts total;
    for (const auto& ex : batch) {
        const auto p = backward_one(m, ex, grad, aux_weight, training, rng);
        total.regression += p.regression;
        total.auxiliary += p.auxiliary;
    }
    return total;
}

GradCheckReport finite_difference_check(const DisaggregationModel& m, std::span<const Example> batch, double step,
                                        double aux_weight) {
    const double h = std::abs(step);
    if (!(h >= 1e-7 && h <= 1e-3)) throw InvalidArgument("finite_difference_check: |step| must be in [1e-7, 1e-3]");
    if (batch.empty()) throw InvalidArgument("finite_difference_check: empty batch");

    Parameters analytic = m.params.zeros_like();
    backward(m, batch, analytic, aux_weight, false, nullptr);
    std::vector<std::span<const double>> grads;
    std::vector<std::string> names;
    model::for_each_param(std::as_const(analytic), [&](const std::string& name, std::span<const double> v) {
        grads.push_back(v);
        names.push_back(name);
    });

    const auto base = probe_batch(m, batch).patterns;

    DisaggregationModel probe = m;
    GradCheckReport report;
    std::size_t array = 0;
    model::for_each_param(probe.params, [&](const std::string& name, std::span<double> v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double orig = v[i];
            v[i] = orig + step;
            const auto plus = probe_batch(probe, batch);
            v[i] = orig - step;
            const auto minus = probe_batch(probe, batch);
            v[i] = orig;
            if (plus.patterns != base || minus.patterns != base) {
                ++report.skipped;
                continue;
            }
            const double numeric = loss_difference(plus, minus, batch, aux_weight) / (2.0 * step);
            const double a = grads[array][i];
            const double scale = std::max(std::abs(a), std::abs(numeric));
            const double err = scale < 1e-8 ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
            ++report.checked;
            if (err > report.max_error) {
                report.max_error = err;
                report.worst_param = name;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
        ++array;
    });
    return report;
}

model::NormConstants fit_norm(const data::ParkDataset& ds) {
    model::NormConstants n;
    auto range = [](const series::TimeSeries& s, double& lo, double& hi) {
        const auto [a, b] = std::minmax_element(s.values().begin(), s.values().end());
        lo = *a;
        hi = *b > *a ? *b : *a + 1.0;
    };
    range(ds.price, n.in_min[cnn::kPriceRow], n.in_max[cnn::kPriceRow]);
    n.in_min[cnn::kCalendarRow] = 1.0;
    n.in_max[cnn::kCalendarRow] = 3.0;
    range(ds.aggregate, n.in_min[cnn::kLoadRow], n.in_max[cnn::kLoadRow]);
    for (const auto& d : ds.devices) {
        const double top = *std::max_element(d.values().begin(), d.values().end());
        n.out_min.push_back(0.0);
        n.out_max.push_back(top > 0.0 ? top : 1.0);
    }
    return n;
}

std::vector<Example> make_examples(const DisaggregationModel& m, const data::ParkDataset& ds, const std::vector<int>& labels) {
    const int j = m.shape.window;
    if (ds.devices.size() != static_cast<std::size_t>(m.shape.devices)) {
        throw InvalidArgument("dataset has " + std::to_string(ds.devices.size()) + " devices, model expects " +
                              std::to_string(m.shape.devices));
    }
    const std::size_t windows = ds.size() / static_cast<std::size_t>(j);
    std::vector<Example> out;
    for (std::size_t w = 0; w < windows; ++w) {
        const std::size_t a = w * static_cast<std::size_t>(j);
        auto cut = [&](const series::TimeSeries& s) { return s.span().subspan(a, static_cast<std::size_t>(j)); };
        const cnn::InputMatrix window(cut(ds.price), cut(ds.calendar), cut(ds.aggregate));
        Example ex;
        ex.x = model::normalize_window(m, window);
        ex.target.resize(m.shape.devices, j);
        for (int d = 0; d < m.shape.devices; ++d) {
            const auto i = static_cast<std::size_t>(d);
            const auto v = cut(ds.devices[i]);
            for (int t = 0; t < j; ++t) {
                ex.target(d, t) = (v[static_cast<std::size_t>(t)] - m.norm.out_min[i]) / (m.norm.out_max[i] - m.norm.out_min[i]);
            }
        }
        ex.label = w < labels.size() ? labels[w] : -1;
        out.push_back(std::move(ex));
    }
    return out;
}

TrainResult train(const data::ParkDataset& ds, const TrainConfig& config) {
    config.validate();
    ds.validate();
    auto shape = config.shape;
    shape.window = data::kSamplesPerDay;
    shape.devices = static_cast<int>(ds.devices.size());
    if (ds.days < 2) throw InvalidArgument("train: need at least 2 daily windows");

    auto model = DisaggregationModel::init(shape, derive_seed(config.seed, 1), config.dropout_rate);
    model.norm = fit_norm(ds);
    model.device_names = ds.device_names;

    std::vector<int> labels(static_cast<std::size_t>(ds.days), -1);
    if (ds.days >= shape.classes) {
        labels = data::cluster_profiles(data::daily_profiles(ds), shape.classes, derive_seed(config.seed, 2)).labels;
    }
    const auto examples = make_examples(model, ds, labels);

    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 3));
    std::mt19937_64 dropout_rng(derive_seed(config.seed, 4));
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t cursor = 0;

    auto weights = spans(model.params);
    Parameters first_moment = model.params.zeros_like();
    Parameters second_moment = model.params.zeros_like();
    auto m1 = spans(first_moment);
    auto m2 = spans(second_moment);

    const int batch_size = std::min<int>(config.batch_size, static_cast<int>(examples.size()));
    LossHistory history;
    std::vector<Example> batch;
    for (int it = 0; it < config.max_iterations; ++it) {
        batch.clear();
        for (int b = 0; b < batch_size; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), shuffle_rng);
                cursor = 0;
            }
            batch.push_back(examples[order[cursor++]]);
        }

        Parameters grad = model.params.zeros_like();
        LossParts parts;
        try {
            parts = backward(model, batch, grad, config.aux_weight, true, &dropout_rng);
        } catch (const NumericFailure& e) {
            throw Diverged(std::string("training diverged at iteration ") + std::to_string(it + 1) + ": " + e.what(),
                           history.regression, history.auxiliary);
        }
        const double inv = 1.0 / static_cast<double>(batch_size);
        history.regression.push_back(parts.regression * inv);
        history.auxiliary.push_back(parts.auxiliary * inv);
        const double total = (parts.regression + config.aux_weight * parts.auxiliary) * inv;
        if (!std::isfinite(total) || total > 1e6) {
            throw Diverged("training diverged at iteration " + std::to_string(it + 1) + " (loss " + std::to_string(total) + ")",
                           history.regression, history.auxiliary);
        }

        auto g = spans(grad);
        double norm2 = 0.0;
        for (auto& s : g)
            for (double& v : s) {
                v *= inv;
                norm2 += v * v;
            }
        const double norm = std::sqrt(norm2);
        const double clip = (config.clip_norm > 0.0 && norm > config.clip_norm) ? config.clip_norm / norm : 1.0;

        const double t = static_cast<double>(it + 1);
        const double c1 = 1.0 - std::pow(config.beta1, t);
        const double c2 = 1.0 - std::pow(config.beta2, t);
        for (std::size_t a = 0; a < weights.size(); ++a) {
            for (std::size_t i = 0; i < weights[a].size(); ++i) {
                const double gi = g[a][i] * clip;
                if (config.optimizer == Optimizer::sgd) {
                    weights[a][i] -= config.learning_rate * gi;
                    continue;
                }
                m1[a][i] = config.beta1 * m1[a][i] + (1.0 - config.beta1) * gi;
                m2[a][i] = config.beta2 * m2[a][i] + (1.0 - config.beta2) * gi * gi;
                weights[a][i] -= config.learning_rate * (m1[a][i] / c1) / (std::sqrt(m2[a][i] / c2) + config.epsilon);
            }
        }
    }
    return TrainResult{std::move(model), std::move(history), std::move(labels)};
}

std::vector<double> smooth(const std::vector<double>& values, int window) {
    if (window < 1) throw InvalidArgument("smooth: window must be positive");
    std::vector<double> out(values.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        acc += values[i];
        if (i >= static_cast<std::size_t>(window)) acc -= values[i - static_cast<std::size_t>(window)];
        out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
    }
    return out;
}

void write_history(const std::vector<double>& losses, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
    char buf[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu %.17g\n", i + 1, losses[i]);
        out << buf;
    }
}

}  // namespace ipld::train
