#include "ipld/error.hpp"
#include "ipld/sru.hpp"

#include <doctest.h>

#include <random>

using namespace ipld;
using namespace ipld::sru;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    return Matrix::NullaryExpr(r, c, [&] { return u(rng); });
}

SruWeights random_weights(int in, int hidden, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto w = SruWeights::glorot(in, hidden, rng);
    w.b_f = random_matrix(hidden, 1, rng);
    w.b_r = random_matrix(hidden, 1, rng);
    return w;
}

}  // namespace

TEST_CASE("saturated forget gate keeps or replaces the state") {
    auto w = SruWeights::zeros(1, 1);
    w.w_s(0, 0) = 1.0;
    const Vector s = Vector::Constant(1, 4.0);
    const Vector c_prev = Vector::Constant(1, 2.0);

    w.b_f(0) = 800.0;
    CHECK(sru_cell_step(s, c_prev, w).c(0) == 2.0);
    w.b_f(0) = -800.0;
    CHECK(sru_cell_step(s, c_prev, w).c(0) == 4.0);
    w.b_f(0) = 0.0;
    const auto half = sru_cell_step(s, c_prev, w);
    CHECK(half.f(0) == 0.5);
    CHECK(half.c(0) == 3.0);
}

TEST_CASE("closed highway gate passes the input through") {
    auto w = SruWeights::zeros(1, 1);
    w.w_s(0, 0) = 1.0;
    w.b_r(0) = -800.0;
    const auto step = sru_cell_step(Vector::Constant(1, -7.5), Vector::Constant(1, 3.0), w);
    CHECK(step.r(0) == 0.0);
    CHECK(step.h(0) == -7.5);

    std::mt19937_64 rng(1);
    auto p = SruWeights::glorot(5, 3, rng);
    p.b_r.setConstant(-800.0);
    const Vector s = random_matrix(5, 1, rng);
    CHECK((sru_cell_step(s, Vector::Zero(3), p).h - p.w_skip * s).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gates ignore the previous state") {
    const auto w = random_weights(6, 4, 2);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector s = random_matrix(6, 1, rng, 3.0);
        const auto a = sru_cell_step(s, random_matrix(4, 1, rng, 10.0), w);
        const auto b = sru_cell_step(s, random_matrix(4, 1, rng, 10.0), w);
        CHECK(a.f == b.f);
        CHECK(a.r == b.r);
    }
}

TEST_CASE("gates stay strictly inside the unit interval and the state stays bounded") {
    const auto w = random_weights(5, 5, 4);
    std::mt19937_64 rng(5);
    const Matrix x = random_matrix(5, 200, rng, 2.0);
    const auto p = project(x, w);
    const double bound = p.s_tilde.cwiseAbs().maxCoeff();
    LayerTrace tr;
    recurrence(p, false, Vector::Constant(5, bound), &tr);
    CHECK((tr.f.array() > 0.0).all());
    CHECK((tr.f.array() < 1.0).all());
    CHECK((tr.r.array() > 0.0).all());
    CHECK((tr.r.array() < 1.0).all());
    CHECK(tr.c.cwiseAbs().maxCoeff() <= bound * (1 + 1e-15));
}

TEST_CASE("one step sequence equals one cell step") {
    const auto w = random_weights(7, 4, 6);
    std::mt19937_64 rng(7);
    const Matrix x = random_matrix(7, 1, rng);
    const Matrix h = sru_layer_forward(x, w, false);
    const auto step = sru_cell_step(x.col(0), Vector::Zero(4), w);
    CHECK((h.col(0) - step.h).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((sru_layer_forward(x, w, true) - h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sequence matches repeated cell steps") {
    const auto w = random_weights(7, 4, 8);
    std::mt19937_64 rng(9);
    const Matrix x = random_matrix(7, 12, rng);
    const Matrix h = sru_layer_forward(x, w, false);
    Vector c = Vector::Zero(4);
    for (Eigen::Index t = 0; t < 12; ++t) {
        const auto step = sru_cell_step(x.col(t), c, w);
        CHECK((h.col(t) - step.h).cwiseAbs().maxCoeff() <= 1e-14);
        c = step.c;
    }
}

TEST_CASE("reverse pass on a palindrome mirrors the forward pass") {
    const auto w = random_weights(3, 5, 10);
    std::mt19937_64 rng(11);
    Matrix x(3, 9);
    const Matrix half = random_matrix(3, 5, rng);
    for (Eigen::Index t = 0; t < 9; ++t) x.col(t) = half.col(t < 5 ? t : 8 - t);
    const Matrix fwd = sru_layer_forward(x, w, false);
    const Matrix rev = sru_layer_forward(x, w, true);
    for (Eigen::Index t = 0; t < 9; ++t) CHECK((fwd.col(t) - rev.col(8 - t)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("time reversal swaps the two directions") {
    const auto wf = random_weights(4, 3, 12);
    const auto wr = random_weights(4, 3, 13);
    std::mt19937_64 rng(14);
    const Matrix x = random_matrix(4, 10, rng);
    const Matrix xr = x.rowwise().reverse();
    Matrix cat(6, 10), cat_r(6, 10);
    cat << sru_layer_forward(x, wf, false), sru_layer_forward(x, wr, true);
    cat_r << sru_layer_forward(xr, wr, false), sru_layer_forward(xr, wf, true);
    for (Eigen::Index t = 0; t < 10; ++t) {
        CHECK((cat.col(t).head(3) - cat_r.col(9 - t).tail(3)).cwiseAbs().maxCoeff() <= 1e-15);
        CHECK((cat.col(t).tail(3) - cat_r.col(9 - t).head(3)).cwiseAbs().maxCoeff() <= 1e-15);
    }
}

TEST_CASE("zero weights give closed-form outputs") {
    const auto w = SruWeights::zeros(3, 3);
    Matrix x(3, 4);
    x << 1, -2, 3, 0, 4, 5, -6, 1, 0, 0, 2, -1;
    LayerTrace tr;
    const Matrix h = recurrence(project(x, w), false, Vector::Zero(3), &tr);
    CHECK((tr.f.array() == 0.5).all());
    CHECK((tr.r.array() == 0.5).all());
    CHECK(tr.c.isZero());
    CHECK((h - 0.5 * x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("recurrence backward matches finite differences") {
    const auto w = random_weights(4, 3, 15);
    std::mt19937_64 rng(16);
    const Matrix x = random_matrix(4, 6, rng);
    const Matrix dh = random_matrix(3, 6, rng);
    for (bool reverse : {false, true}) {
        auto p = project(x, w);
        LayerTrace tr;
        recurrence(p, reverse, Vector::Zero(3), &tr);
        const auto g = recurrence_backward(p, tr, reverse, dh);
        auto loss = [&](const Projections& q) { return (recurrence(q, reverse, Vector::Zero(3)).cwiseProduct(dh)).sum(); };
        auto probe = [&](Matrix Projections::*field, const Matrix& grad) {
            for (Eigen::Index i = 0; i < grad.size(); ++i) {
                auto q = p;
                (q.*field).data()[i] += 1e-6;
                const double up = loss(q);
                (q.*field).data()[i] -= 2e-6;
                const double down = loss(q);
                CHECK(grad.data()[i] == doctest::Approx((up - down) / 2e-6).epsilon(1e-6));
            }
        };
        probe(&Projections::s_tilde, g.d.s_tilde);
        probe(&Projections::f_pre, g.d.f_pre);
        probe(&Projections::r_pre, g.d.r_pre);
        probe(&Projections::skip, g.d.skip);
    }
}

TEST_CASE("weight validation") {
    CHECK_THROWS_AS(SruWeights::zeros(0, 3), InvalidArgument);
    auto w = SruWeights::zeros(4, 3);
    CHECK(w.has_skip());
    CHECK_NOTHROW(w.validate());
    w.w_skip.resize(0, 0);
    CHECK_THROWS_AS(w.validate(), InvalidArgument);
    CHECK_FALSE(SruWeights::zeros(3, 3).has_skip());
    CHECK_THROWS_AS(sru_cell_step(Vector::Zero(2), Vector::Zero(3), SruWeights::zeros(4, 3)), InvalidArgument);
}
