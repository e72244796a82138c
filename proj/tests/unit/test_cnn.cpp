#include "ipld/cnn.hpp"
#include "ipld/error.hpp"

#include <doctest.h>

#include <random>

using namespace ipld;
using namespace ipld::cnn;

namespace {

Matrix row(std::initializer_list<double> v) {
    Matrix m(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) m(0, i++) = x;
    return m;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    return Matrix::NullaryExpr(r, c, [&] { return u(rng); });
}

}  // namespace

TEST_CASE("conv_forward examples") {
    const Matrix x = row({1, 2, 3, 4});
    CHECK(conv_forward(x, row({2}), Vector::Zero(1), 1) == row({2, 4, 6, 8}));
    CHECK(conv_forward(x, row({1, 1}), Vector::Zero(1), 2) == row({3, 5, 7}));
    const Matrix flat = conv_forward(x, Matrix::Zero(3, 2), Vector::Constant(3, 0.5), 2);
    CHECK(flat.rows() == 3);
    CHECK(flat.cols() == 3);
    CHECK((flat.array() == 0.5).all());
    CHECK_THROWS_AS(conv_forward(x, row({1, 1, 1, 1, 1}), Vector::Zero(1), 5), InvalidArgument);
}

TEST_CASE("conv_forward sums over input channels") {
    Matrix x(2, 3);
    x << 1, 2, 3, 10, 20, 30;
    Matrix k(1, 4);
    k << 1, 0, 0, 1;  // channel 0 tap 0, channel 1 tap 1
    const Matrix y = conv_forward(x, k, Vector::Constant(1, 1.0), 2);
    CHECK(y == row({1 + 20 + 1, 2 + 30 + 1}));
}

TEST_CASE("relu examples") {
    CHECK(relu(2.0) == 2.0);
    CHECK(relu(0.0) == 0.0);
    CHECK(relu(-3.0) == 0.0);
    CHECK(relu(row({-1, 0, 5})) == row({0, 0, 5}));
}

TEST_CASE("pool examples") {
    CHECK(pool(row({1, 3, 2, 4}), PoolMode::max) == row({3, 4}));
    CHECK(pool(row({1, 3, 2, 4}), PoolMode::avg) == row({2, 3}));
    const Matrix c = Matrix::Constant(2, 6, 1.75);
    CHECK(pool(c, PoolMode::max) == Matrix::Constant(2, 3, 1.75));
    CHECK(pool(c, PoolMode::avg) == Matrix::Constant(2, 3, 1.75));
    CHECK(pool(row({1, 2, 3, 4, 5}), PoolMode::max).cols() == 2);
}

TEST_CASE("dense_forward examples") {
    CHECK(dense_forward(Vector::Constant(2, 0) + Eigen::Vector2d(2, 3), row({1, 1}), Vector::Constant(1, 1), Activation::identity)(0) == 6);
    CHECK(dense_forward(Eigen::Vector2d(1, 1), row({1, -2}), Vector::Zero(1), Activation::relu)(0) == 0);
    CHECK(dense_forward(Eigen::Vector3d(4, 5, 6), Matrix::Zero(1, 3), Vector::Constant(1, 2.5), Activation::identity)(0) == 2.5);
    CHECK_THROWS_AS(dense_forward(Eigen::Vector2d(1, 1), row({1, 1, 1}), Vector::Zero(1), Activation::identity), InvalidArgument);
}

TEST_CASE("input matrix validation") {
    const std::vector<double> price(96, 0.6), cal(96, 1.0), load(96, 100.0);
    const InputMatrix ok(price, cal, load);
    CHECK(ok.length() == 96);
    CHECK(ok.rows()(kLoadRow, 5) == 100.0);
    std::vector<double> bad_cal = cal;
    bad_cal[3] = 4.0;
    CHECK_THROWS_AS(InputMatrix(price, bad_cal, load), InvalidArgument);
    std::vector<double> neg = load;
    neg[0] = -1.0;
    CHECK_THROWS_AS(InputMatrix(price, cal, neg), InvalidArgument);
    CHECK_THROWS_AS(InputMatrix(std::vector<double>(4, 0.6), std::vector<double>(4, 1.0), std::vector<double>(4, 1.0)), InvalidArgument);
    CHECK_THROWS_AS(InputMatrix(price, cal, std::vector<double>(95, 1.0)), InvalidArgument);
}

TEST_CASE("zero input and zero biases give zero features") {
    CnnShape shape;
    std::mt19937_64 rng(1);
    auto w = CnnWeights::glorot(shape, rng);
    const auto f = cnn_forward(Matrix::Zero(3, 96), w, false, nullptr);
    CHECK(f.z.isZero());
}

TEST_CASE("inference is deterministic and sized by the shape") {
    CnnShape shape;
    shape.window = 32;
    std::mt19937_64 rng(2);
    const auto w = CnnWeights::glorot(shape, rng);
    const Matrix x = random_matrix(3, 32, rng).cwiseAbs();
    const auto a = cnn_forward(x, w, false, nullptr);
    const auto b = cnn_forward(x, w, false, nullptr);
    CHECK(a.z.size() == 128);
    CHECK(a.class_logits.size() == 4);
    CHECK(a.z == b.z);
    CHECK(a.class_logits == b.class_logits);
}

TEST_CASE("training dropout is seeded") {
    CnnShape shape;
    std::mt19937_64 rng(3);
    const auto w = CnnWeights::glorot(shape, rng, 0.5);
    const Matrix x = random_matrix(3, 96, rng).cwiseAbs();
    std::mt19937_64 d1(9), d2(9);
    CnnTrace t1;
    const auto a = cnn_forward(x, w, true, &d1, &t1);
    const auto b = cnn_forward(x, w, true, &d2);
    CHECK(a.z == b.z);
    const auto zeros = (t1.dropout_mask.array() == 0.0).count();
    CHECK(zeros > 20);
    CHECK(zeros < 108);
    CHECK(t1.dropout_scale == 1.0);
    CnnTrace t2;
    cnn_forward(x, w, false, nullptr, &t2);
    CHECK(t2.dropout_scale == doctest::Approx(0.5));
    CHECK(t2.dropout_mask.isOnes());
}

TEST_CASE("convolution is translation covariant") {
    std::mt19937_64 rng(4);
    const Matrix x = random_matrix(3, 64, rng);
    const Matrix k = random_matrix(16, 15, rng);
    const Vector b = random_matrix(16, 1, rng);
    const Matrix y = conv_forward(x, k, b, 5);
    for (int s : {1, 3, 7}) {
        Matrix shifted = Matrix::Zero(3, 64);
        shifted.rightCols(64 - s) = x.leftCols(64 - s);
        const Matrix ys = conv_forward(shifted, k, b, 5);
        for (Eigen::Index t = s; t < y.cols(); ++t)
            for (Eigen::Index c = 0; c < 16; ++c) CHECK(ys(c, t) == doctest::Approx(y(c, t - s)).epsilon(1e-12));
    }
}

TEST_CASE("average pooling never exceeds max pooling") {
    std::mt19937_64 rng(5);
    const Matrix x = random_matrix(8, 40, rng);
    CHECK((pool(x, PoolMode::avg).array() <= pool(x, PoolMode::max).array()).all());
}

TEST_CASE("features scale with the load channel") {
    CnnShape shape;
    std::mt19937_64 rng(6);
    auto w = CnnWeights::glorot(shape, rng, 0.0);
    Matrix x = Matrix::Zero(3, 96);
    x.row(kLoadRow) = random_matrix(1, 96, rng).cwiseAbs();
    for (auto mode : {PoolMode::max, PoolMode::avg}) {
        w.pool_mode = mode;
        const auto base = cnn_forward(x, w, false, nullptr);
        for (double a : {0.5, 3.0}) {
            const auto scaled = cnn_forward(Matrix(a * x), w, false, nullptr);
            CHECK((scaled.z - a * base.z).cwiseAbs().maxCoeff() <= 1e-12 * (1 + base.z.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("weight validation") {
    CnnShape shape;
    auto w = CnnWeights::zeros(shape);
    CHECK_NOTHROW(w.validate());
    w.dropout_rate = 1.0;
    CHECK_THROWS_AS(w.validate(), InvalidArgument);
    w = CnnWeights::zeros(shape);
    w.dense_w(0, 0) = NAN;
    CHECK_THROWS_AS(w.validate(), InvalidArgument);
    w = CnnWeights::zeros(shape);
    w.conv_b.resize(3);
    CHECK_THROWS_AS(w.validate(), InvalidArgument);
    CnnShape tiny;
    tiny.window = 4;
    CHECK_THROWS_AS(tiny.validate(), InvalidArgument);
}
