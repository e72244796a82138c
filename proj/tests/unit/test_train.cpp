#include "ipld/data.hpp"
#include "ipld/error.hpp"
#include "ipld/train.hpp"

#include <doctest.h>

#include <limits>
#include <random>

using namespace ipld;
using namespace ipld::train;
using model::DisaggregationModel;
using model::ModelShape;
using model::Parameters;

namespace {

ModelShape tiny_shape() {
    ModelShape s;
    s.window = 16;
    s.devices = 2;
    s.conv_channels = 4;
    s.features = 8;
    s.sru_hidden = 8;
    s.head_hidden = 8;
    return s;
}

std::vector<Example> random_batch(const ModelShape& s, std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> label(0, s.classes - 1);
    std::vector<Example> out(n);
    for (auto& ex : out) {
        ex.x = Matrix::NullaryExpr(3, s.window, [&] { return u(rng); });
        ex.target = Matrix::NullaryExpr(s.devices, s.window, [&] { return u(rng); });
        ex.label = label(rng);
    }
    return out;
}

std::vector<double> flatten(const Parameters& p) {
    std::vector<double> out;
    model::for_each_param(p, [&](const std::string&, std::span<const double> v) { out.insert(out.end(), v.begin(), v.end()); });
    return out;
}

using TracePick = Vector (*)(const model::ForwardTrace&);

// Shifts a bias so that the smallest pre-activation it feeds over the batch equals margin.
void lift_bias(const DisaggregationModel& m, std::span<const Example> batch, Vector& bias, TracePick pick, double margin) {
    Vector lowest = Vector::Constant(bias.size(), std::numeric_limits<double>::infinity());
    for (const auto& ex : batch) {
        model::ForwardTrace tr;
        model::forward_normalized(m, ex.x, false, nullptr, &tr);
        lowest = lowest.cwiseMin(pick(tr));
    }
    bias.array() += margin - lowest.array();
}

// Average pooling, positive SRU input weights over non-negative inputs, and every ReLU input
// lifted to at least 0.5 on the batch.
DisaggregationModel kink_free_model(std::uint64_t seed, std::span<const Example> batch) {
    auto m = DisaggregationModel::init(tiny_shape(), seed);
    auto& p = m.params;
    p.cnn.pool_mode = cnn::PoolMode::avg;
    for (auto* w : {&p.forward, &p.reverse}) w->w_s = w->w_s.cwiseAbs().array() + 0.1;
    lift_bias(m, batch, p.cnn.conv_b, [](const model::ForwardTrace& t) -> Vector { return t.cnn.conv_pre.rowwise().minCoeff(); }, 0.5);
    lift_bias(m, batch, p.cnn.dense_b, [](const model::ForwardTrace& t) -> Vector { return t.cnn.dense_pre; }, 0.5);
    lift_bias(m, batch, p.head.b1, [](const model::ForwardTrace& t) -> Vector { return t.z1.rowwise().minCoeff(); }, 0.5);
    lift_bias(m, batch, p.head.b2, [](const model::ForwardTrace& t) -> Vector { return t.z2.rowwise().minCoeff(); }, 0.5);
    return m;
}

data::ParkDataset small_park(int days, std::uint64_t seed) {
    auto specs = data::default_devices();
    specs.resize(2);
    return data::generate_park(specs, days, seed);
}

TrainConfig quick_config() {
    TrainConfig c;
    c.shape = tiny_shape();
    c.max_iterations = 15;
    c.batch_size = 4;
    c.seed = 11;
    return c;
}

}  // namespace

TEST_CASE("loss_mse examples") {
    Matrix a(2, 3);
    a << 1, 2, 3, 4, 5, 6;
    CHECK(loss_mse(a, a) == 0.0);
    CHECK(loss_mse(Matrix(a.array() + 1.0), a) == 1.0);
    Matrix p(1, 2), t(1, 2);
    p << 0, 2;
    t << 1, 0;
    CHECK(loss_mse(p, t) == 2.5);
    CHECK_THROWS_AS(loss_mse(p, a), InvalidArgument);
}

TEST_CASE("cross entropy of uniform logits is log of the class count") {
    CHECK(cross_entropy(Vector::Zero(4), 2) == doctest::Approx(std::log(4.0)));
    CHECK_THROWS_AS(cross_entropy(Vector::Zero(4), 4), InvalidArgument);
}

TEST_CASE("targets equal to the predictions give a zero gradient") {
    const auto m = DisaggregationModel::init(tiny_shape(), 5);
    std::mt19937_64 rng(6);
    auto batch = random_batch(m.shape, 3, rng);
    for (auto& ex : batch) ex.target = model::forward_normalized(m, ex.x, false, nullptr);
    auto grad = m.params.zeros_like();
    const auto parts = backward(m, batch, grad, 0.0);
    CHECK(parts.regression == 0.0);
    for (double g : flatten(grad)) REQUIRE(g == 0.0);
}

TEST_CASE("duplicating a batch element doubles its contribution") {
    const auto m = DisaggregationModel::init(tiny_shape(), 7);
    std::mt19937_64 rng(8);
    const auto batch = random_batch(m.shape, 2, rng);
    auto g_one = m.params.zeros_like();
    auto g_pair = m.params.zeros_like();
    auto g_triple = m.params.zeros_like();
    const std::vector<Example> one{batch[1]}, pair{batch[0], batch[1]}, triple{batch[0], batch[1], batch[1]};
    backward(m, one, g_one);
    backward(m, pair, g_pair);
    backward(m, triple, g_triple);
    const auto a = flatten(g_one), b = flatten(g_pair), c = flatten(g_triple);
    double scale = 0.0;
    for (double v : c) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(std::abs((c[i] - b[i]) - a[i]) <= 1e-12 * scale);

    const std::vector<Example> twice{batch[1], batch[1]};
    auto g_twice = m.params.zeros_like();
    backward(m, twice, g_twice);
    const auto d = flatten(g_twice);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(d[i] == doctest::Approx(2.0 * a[i]).epsilon(1e-12));
}

TEST_CASE("backward matches central differences on random batches") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = DisaggregationModel::init(tiny_shape(), 100 + static_cast<std::uint64_t>(trial));
        const auto batch = random_batch(m.shape, 2, rng);
        const auto report = finite_difference_check(m, batch, 1e-5);
        CAPTURE(trial);
        CAPTURE(report.worst_param);
        CHECK(report.max_error <= 1e-4);
        CHECK(report.checked + report.skipped == m.params.count());
        CHECK(report.skipped * 10 < m.params.count());
    }
}

TEST_CASE("kink-free models match central differences tightly") {
    int tight = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(10 + seed);
        const auto batch = random_batch(tiny_shape(), 2, rng);
        const auto m = kink_free_model(seed, batch);
        const auto report = finite_difference_check(m, batch, 1e-5);
        CAPTURE(seed);
        CAPTURE(report.worst_param);
        CHECK(report.skipped == 0);
        CHECK(report.max_error <= 1e-5);
        if (report.max_error <= 1e-6) ++tight;
    }
    CHECK(tight >= 9);
}

TEST_CASE("finite difference check is symmetric in the step sign") {
    const auto m = DisaggregationModel::init(tiny_shape(), 12);
    std::mt19937_64 rng(13);
    const auto batch = random_batch(m.shape, 2, rng);
    const auto a = finite_difference_check(m, batch, 1e-5);
    const auto b = finite_difference_check(m, batch, -1e-5);
    CHECK(a.max_error == b.max_error);
    CHECK(a.checked == b.checked);
    CHECK_THROWS_AS(finite_difference_check(m, batch, 1e-2), InvalidArgument);
    CHECK_THROWS_AS(finite_difference_check(m, batch, 1e-9), InvalidArgument);
}

TEST_CASE("a constant target is learned") {
    data::DeviceSpec flat;
    flat.name = "pump";
    flat.rated_kw = 100.0;
    const auto ds = data::generate_park({flat}, 3, 1);
    TrainConfig c;
    c.max_iterations = 200;
    c.batch_size = 3;
    c.dropout_rate = 0.0;
    const auto result = train::train(ds, c);
    CHECK(result.history.regression.size() == 200);
    CHECK(result.history.regression.back() <= 1e-3);
}

TEST_CASE("training is deterministic per seed") {
    const auto ds = small_park(6, 3);
    const auto a = train::train(ds, quick_config());
    const auto b = train::train(ds, quick_config());
    CHECK(a.history.regression == b.history.regression);
    CHECK(a.history.auxiliary == b.history.auxiliary);
    CHECK(flatten(a.model.params) == flatten(b.model.params));
    CHECK(a.labels == b.labels);
    auto other = quick_config();
    other.seed = 12;
    CHECK(train::train(ds, other).history.regression != a.history.regression);
}

TEST_CASE("a zero learning rate leaves the weights untouched") {
    const auto ds = small_park(4, 4);
    auto c = quick_config();
    c.learning_rate = 0.0;
    c.max_iterations = 1;
    const auto one = train::train(ds, c);
    c.max_iterations = 8;
    const auto many = train::train(ds, c);
    CHECK(flatten(one.model.params) == flatten(many.model.params));
    c.optimizer = Optimizer::sgd;
    CHECK(flatten(train::train(ds, c).model.params) == flatten(one.model.params));
}

TEST_CASE("invalid configurations are rejected") {
    const auto ds = small_park(4, 4);
    auto c = quick_config();
    c.batch_size = 0;
    CHECK_THROWS_AS(train::train(ds, c), InvalidArgument);
    c = quick_config();
    c.dropout_rate = 1.0;
    CHECK_THROWS_AS(train::train(ds, c), InvalidArgument);
    CHECK_THROWS_AS(train::train(ds.slice_days(0, 1), quick_config()), InvalidArgument);
}

TEST_CASE("an exploding learning rate reports divergence with the history so far") {
    const auto ds = small_park(4, 4);
    auto c = quick_config();
    c.optimizer = Optimizer::sgd;
    c.learning_rate = 1e6;
    c.clip_norm = 0.0;
    c.max_iterations = 200;
    try {
        train::train(ds, c);
        FAIL("expected divergence");
    } catch (const Diverged& e) {
        CHECK(e.regression_history().size() < 200);
        CHECK(e.regression_history().size() == e.auxiliary_history().size());
    }
}

TEST_CASE("smoothing is a trailing mean") {
    const auto s = smooth({1, 2, 3, 4, 5}, 2);
    CHECK(s == std::vector<double>{1, 1.5, 2.5, 3.5, 4.5});
    CHECK(smooth({4, 8}, 1) == std::vector<double>{4, 8});
}

TEST_CASE("smoothed loss falls on the synthetic park") {
    const auto ds = data::generate_park(data::default_devices(), 30, 42);
    TrainConfig c;
    c.max_iterations = 500;
    const auto result = train::train(ds, c);
    const auto s = smooth(result.history.regression, 50);
    MESSAGE("smoothed loss at 50: " << s[49] << ", at 500: " << s[499]);
    CHECK(s[499] < s[49]);
}
