#include "ipld/sru.hpp"

#include "ipld/error.hpp"

#include <cmath>

namespace ipld::sru {

namespace {

Matrix glorot(int rows, int cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    return m;
}

Vector sigmoid(const Vector& x) { return x.unaryExpr([](double v) { return sru::sigmoid(v); }); }

}  // namespace

SruWeights SruWeights::zeros(int input_dim, int hidden) {
    if (input_dim < 1 || hidden < 1) throw InvalidArgument("SruWeights: sizes must be positive");
    SruWeights w;
    w.w_s = Matrix::Zero(hidden, input_dim);
    w.w_f = Matrix::Zero(hidden, input_dim);
    w.b_f = Vector::Zero(hidden);
    w.w_r = Matrix::Zero(hidden, input_dim);
    w.b_r = Vector::Zero(hidden);
    if (input_dim != hidden) w.w_skip = Matrix::Zero(hidden, input_dim);
    return w;
}

SruWeights SruWeights::glorot(int input_dim, int hidden, std::mt19937_64& rng) {
    auto w = zeros(input_dim, hidden);
    w.w_s = sru::glorot(hidden, input_dim, rng);
    w.w_f = sru::glorot(hidden, input_dim, rng);
    w.w_r = sru::glorot(hidden, input_dim, rng);
    if (input_dim != hidden) w.w_skip = sru::glorot(hidden, input_dim, rng);
    return w;
}

void SruWeights::validate() const {
    const auto h = w_s.rows();
    const auto in = w_s.cols();
    if (h == 0 || in == 0) throw InvalidArgument("SruWeights: empty projection");
    if (w_f.rows() != h || w_f.cols() != in || w_r.rows() != h || w_r.cols() != in) {
        throw InvalidArgument("SruWeights: gate matrices disagree with w_s");
    }
    if (b_f.size() != h || b_r.size() != h) throw InvalidArgument("SruWeights: gate bias size");
    if (has_skip()) {
        if (w_skip.rows() != h || w_skip.cols() != in) throw InvalidArgument("SruWeights: skip projection shape");
    } else if (in != h) {
        throw InvalidArgument("SruWeights: skip projection required when input and hidden sizes differ");
    }
    if (!w_s.allFinite() || !w_f.allFinite() || !b_f.allFinite() || !w_r.allFinite() || !b_r.allFinite() ||
        !w_skip.allFinite()) {
        throw InvalidArgument("SruWeights: non-finite weight");
    }
}

SruStep sru_cell_step(const Vector& s_t, const Vector& c_prev, const SruWeights& w) {
    if (s_t.size() != w.input_dim()) throw InvalidArgument("sru_cell_step: input size mismatch");
    if (c_prev.size() != w.hidden()) throw InvalidArgument("sru_cell_step: state size mismatch");
    SruStep out;
    const Vector s_tilde = w.w_s * s_t;
    out.f = sigmoid(w.w_f * s_t + w.b_f);
    out.r = sigmoid(w.w_r * s_t + w.b_r);
    out.c = out.f.cwiseProduct(c_prev) + (Vector::Ones(w.hidden()) - out.f).cwiseProduct(s_tilde);
    const Vector skip = w.has_skip() ? Vector(w.w_skip * s_t) : s_t;
    out.h = out.r.cwiseProduct(out.c.cwiseMax(0.0)) + (Vector::Ones(w.hidden()) - out.r).cwiseProduct(skip);
    return out;
}

Projections project(const Matrix& inputs, const SruWeights& w) {
    if (inputs.rows() != w.input_dim()) throw InvalidArgument("sru: input size mismatch");
    Projections p;
    p.s_tilde = w.w_s * inputs;
    p.f_pre = w.w_f * inputs;
    p.f_pre.colwise() += w.b_f;
    p.r_pre = w.w_r * inputs;
    p.r_pre.colwise() += w.b_r;
    p.skip = w.has_skip() ? Matrix(w.w_skip * inputs) : inputs;
    return p;
}

Matrix recurrence(const Projections& p, bool reverse, const Vector& c0, LayerTrace* trace) {
    const auto hidden = p.s_tilde.rows();
    const auto steps = p.s_tilde.cols();
    if (steps < 1) throw InvalidArgument("sru: need at least one time step");
    if (c0.size() != hidden) throw InvalidArgument("sru: initial state size mismatch");

    Matrix f(hidden, steps), r(hidden, steps), c(hidden, steps), h(hidden, steps);
    Vector state = c0;
    for (Eigen::Index i = 0; i < steps; ++i) {
        const Eigen::Index t = reverse ? steps - 1 - i : i;
        for (Eigen::Index j = 0; j < hidden; ++j) {
            const double fj = sigmoid(p.f_pre(j, t));
            const double rj = sigmoid(p.r_pre(j, t));
            const double cj = fj * state(j) + (1.0 - fj) * p.s_tilde(j, t);
            f(j, t) = fj;
            r(j, t) = rj;
            c(j, t) = cj;
            h(j, t) = rj * (cj > 0.0 ? cj : 0.0) + (1.0 - rj) * p.skip(j, t);
            state(j) = cj;
        }
    }
    if (!h.allFinite()) throw NumericFailure("sru", "non-finite hidden state");
    if (trace) {
        trace->f = std::move(f);
        trace->r = std::move(r);
        trace->c = std::move(c);
        trace->h = h;
        trace->c0 = c0;
    }
    return h;
}

RecurrenceGrad recurrence_backward(const Projections& p, const LayerTrace& tr, bool reverse, const Matrix& dh) {
    const auto hidden = p.s_tilde.rows();
    const auto steps = p.s_tilde.cols();
    if (dh.rows() != hidden || dh.cols() != steps) throw InvalidArgument("sru backward: gradient shape mismatch");
    RecurrenceGrad g;
    g.d.s_tilde.resize(hidden, steps);
    g.d.f_pre.resize(hidden, steps);
    g.d.r_pre.resize(hidden, steps);
    g.d.skip.resize(hidden, steps);
    Vector carry = Vector::Zero(hidden);
    for (Eigen::Index k = steps - 1; k >= 0; --k) {
        const Eigen::Index t = reverse ? steps - 1 - k : k;
        const Eigen::Index prev = reverse ? t + 1 : t - 1;
        for (Eigen::Index j = 0; j < hidden; ++j) {
            const double f = tr.f(j, t);
            const double r = tr.r(j, t);
            const double c = tr.c(j, t);
            const double c_prev = k == 0 ? tr.c0(j) : tr.c(j, prev);
            const double g_h = dh(j, t);
            const double g_c = carry(j) + (c > 0.0 ? g_h * r : 0.0);
            g.d.r_pre(j, t) = g_h * ((c > 0.0 ? c : 0.0) - p.skip(j, t)) * r * (1.0 - r);
            g.d.skip(j, t) = g_h * (1.0 - r);
            g.d.f_pre(j, t) = g_c * (c_prev - p.s_tilde(j, t)) * f * (1.0 - f);
            g.d.s_tilde(j, t) = g_c * (1.0 - f);
            carry(j) = g_c * f;
        }
    }
    g.dc0 = carry;
    return g;
}

Matrix sru_layer_forward(const Matrix& inputs, const SruWeights& w, bool reverse, const Vector& c0) {
    const Vector start = c0.size() == 0 ? Vector::Zero(w.hidden()) : c0;
    return recurrence(project(inputs, w), reverse, start);
}

}  // namespace ipld::sru
