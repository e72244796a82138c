#include "ipld/cnn.hpp"

#include "ipld/error.hpp"

#include <cmath>
#include <string>

namespace ipld::cnn {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix glorot_matrix(int rows, int cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    // Column-major fill order keeps the draw sequence tied to the storage layout.
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    return m;
}

Matrix im2col(const Matrix& input, int kernel_len) {
    const auto channels = input.rows();
    const auto out_len = input.cols() - kernel_len + 1;
    Matrix cols(channels * kernel_len, out_len);
    for (Eigen::Index c = 0; c < channels; ++c)
        for (int q = 0; q < kernel_len; ++q) cols.row(c * kernel_len + q) = input.row(c).segment(q, out_len);
    return cols;
}

}  // namespace

InputMatrix::InputMatrix(std::span<const double> price, std::span<const double> calendar, std::span<const double> load) {
    const std::size_t j = load.size();
    if (price.size() != j || calendar.size() != j) throw InvalidArgument("InputMatrix: rows differ in length");
    if (j < 8) throw InvalidArgument("InputMatrix: window must hold at least 8 samples");
    rows_.resize(3, static_cast<Eigen::Index>(j));
    for (std::size_t t = 0; t < j; ++t) {
        const double cal = calendar[t];
        if (cal != 1.0 && cal != 2.0 && cal != 3.0) {
            throw InvalidArgument("InputMatrix: calendar value at " + std::to_string(t) + " is not 1, 2 or 3");
        }
        if (!std::isfinite(price[t]) || !std::isfinite(load[t])) throw InvalidArgument("InputMatrix: non-finite value");
        if (load[t] < 0.0) throw InvalidArgument("InputMatrix: negative load at " + std::to_string(t));
        const auto col = static_cast<Eigen::Index>(t);
        rows_(kPriceRow, col) = price[t];
        rows_(kCalendarRow, col) = cal;
        rows_(kLoadRow, col) = load[t];
    }
}

void CnnShape::validate() const {
    if (in_channels < 1 || conv_channels < 1 || kernel < 1 || features < 1 || classes < 1) {
        throw InvalidArgument("CnnShape: all layer sizes must be positive");
    }
    if (window < 8) throw InvalidArgument("CnnShape: window must be at least 8");
    if (conv_length() < 2) throw InvalidArgument("CnnShape: window too short for the kernel and pooling");
}

CnnWeights CnnWeights::zeros(const CnnShape& s, double dropout_rate) {
    s.validate();
    CnnWeights w;
    w.conv_w = Matrix::Zero(s.conv_channels, s.in_channels * s.kernel);
    w.conv_b = Vector::Zero(s.conv_channels);
    w.dense_w = Matrix::Zero(s.features, s.flat_size());
    w.dense_b = Vector::Zero(s.features);
    w.cls_w = Matrix::Zero(s.classes, s.features);
    w.cls_b = Vector::Zero(s.classes);
    w.dropout_rate = dropout_rate;
    return w;
}

CnnWeights CnnWeights::glorot(const CnnShape& s, std::mt19937_64& rng, double dropout_rate) {
    auto w = zeros(s, dropout_rate);
    // Fan sizes of a conv layer count the receptive field.
    {
        const int fan_in = s.in_channels * s.kernel;
        const int fan_out = s.conv_channels * s.kernel;
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index j = 0; j < w.conv_w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.conv_w.rows(); ++i) w.conv_w(i, j) = dist(rng);
    }
    w.dense_w = glorot_matrix(s.features, s.flat_size(), rng);
    w.cls_w = glorot_matrix(s.classes, s.features, rng);
    return w;
}

void CnnWeights::validate() const {
    if (conv_w.cols() % 3 != 0 || conv_w.cols() == 0) throw InvalidArgument("CnnWeights: conv kernel width must be 3 * kernel");
    if (conv_b.size() != conv_w.rows()) throw InvalidArgument("CnnWeights: conv bias size");
    if (dense_w.cols() == 0 || dense_w.cols() % conv_w.rows() != 0) throw InvalidArgument("CnnWeights: dense input size");
    if (dense_b.size() != dense_w.rows()) throw InvalidArgument("CnnWeights: dense bias size");
    if (cls_w.cols() != dense_w.rows()) throw InvalidArgument("CnnWeights: classifier input size");
    if (cls_b.size() != cls_w.rows()) throw InvalidArgument("CnnWeights: classifier bias size");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("CnnWeights: dropout_rate must be in [0,1)");
    if (!all_finite(conv_w) || !all_finite(conv_b) || !all_finite(dense_w) || !all_finite(dense_b) ||
        !all_finite(cls_w) || !all_finite(cls_b)) {
        throw InvalidArgument("CnnWeights: non-finite weight");
    }
}

Matrix conv_forward(const Matrix& input, const Matrix& kernels, const Vector& biases, int kernel_len) {
    if (kernel_len < 1) throw InvalidArgument("conv_forward: kernel length must be positive");
    if (input.cols() < kernel_len) throw InvalidArgument("conv_forward: input shorter than kernel");
    if (kernels.cols() != input.rows() * kernel_len) throw InvalidArgument("conv_forward: kernel width does not match channels");
    if (biases.size() != kernels.rows()) throw InvalidArgument("conv_forward: one bias per output channel");
    Matrix out = kernels * im2col(input, kernel_len);
    out.colwise() += biases;
    return out;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix pool(const Matrix& input, PoolMode mode, int window, int stride) {
    if (window < 1 || stride < 1) throw InvalidArgument("pool: window and stride must be positive");
    if (input.cols() < window) throw InvalidArgument("pool: input shorter than window");
    const auto out_len = (input.cols() - window) / stride + 1;
    Matrix out(input.rows(), out_len);
    for (Eigen::Index p = 0; p < out_len; ++p) {
        const auto block = input.middleCols(p * stride, window);
        if (mode == PoolMode::max) {
            out.col(p) = block.rowwise().maxCoeff();
        } else {
            out.col(p) = block.rowwise().mean();
        }
    }
    return out;
}

Vector dense_forward(const Vector& d, const Matrix& w, const Vector& b, Activation activation) {
    if (w.cols() != d.size() || w.rows() != b.size()) throw InvalidArgument("dense_forward: shape mismatch");
    Vector out = w * d + b;
    if (activation == Activation::relu) out = out.cwiseMax(0.0);
    return out;
}

FeatureVector cnn_forward(const Matrix& x, const CnnWeights& w, bool training, std::mt19937_64* rng, CnnTrace* trace) {
    const auto channels = w.conv_w.rows();
    const int kernel = static_cast<int>(w.conv_w.cols() / 3);
    if (x.rows() != 3) throw InvalidArgument("cnn_forward: input must have 3 rows");
    if (x.cols() < kernel + 1) throw InvalidArgument("cnn_forward: window shorter than kernel");
    const auto conv_len = x.cols() - kernel + 1;
    const auto pooled = conv_len / 2;
    if (channels * pooled != w.dense_w.cols()) {
        throw InvalidArgument("cnn_forward: window length " + std::to_string(x.cols()) + " does not match weights");
    }
    if (training && w.dropout_rate > 0.0 && rng == nullptr) throw InvalidArgument("cnn_forward: training needs an rng");

    CnnTrace local;
    CnnTrace& tr = trace ? *trace : local;
    tr.cols = im2col(x, kernel);
    tr.conv_pre = w.conv_w * tr.cols;
    tr.conv_pre.colwise() += w.conv_b;

    // ReLU then 2/2 pooling. ReLU is monotone, so for max pooling clipping the winner is the same as clipping first.
    tr.flat.resize(channels * pooled);
    tr.pool_argmax.assign(static_cast<std::size_t>(channels * pooled), 0);
    for (Eigen::Index c = 0; c < channels; ++c) {
        for (Eigen::Index p = 0; p < pooled; ++p) {
            const Eigen::Index a = 2 * p;
            const auto flat = c * pooled + p;
            if (w.pool_mode == PoolMode::avg) {
                tr.flat(flat) = 0.5 * (relu(tr.conv_pre(c, a)) + relu(tr.conv_pre(c, a + 1)));
                continue;
            }
            const Eigen::Index pick = tr.conv_pre(c, a + 1) > tr.conv_pre(c, a) ? a + 1 : a;
            tr.flat(flat) = relu(tr.conv_pre(c, pick));
            tr.pool_argmax[static_cast<std::size_t>(flat)] = static_cast<int>(c * conv_len + pick);
        }
    }

    tr.dense_pre = w.dense_w * tr.flat + w.dense_b;
    const auto features = tr.dense_pre.size();
    tr.dropout_mask = Vector::Ones(features);
    tr.dropout_scale = 1.0;
    if (training && w.dropout_rate > 0.0) {
        std::bernoulli_distribution keep(1.0 - w.dropout_rate);
        for (Eigen::Index i = 0; i < features; ++i) tr.dropout_mask(i) = keep(*rng) ? 1.0 : 0.0;
    } else if (!training) {
        tr.dropout_scale = 1.0 - w.dropout_rate;
    }
    tr.z = tr.dense_pre.cwiseMax(0.0).cwiseProduct(tr.dropout_mask) * tr.dropout_scale;
    tr.logits = w.cls_w * tr.z + w.cls_b;
    if (!tr.z.allFinite() || !tr.logits.allFinite()) throw NumericFailure("cnn", "non-finite activation");
    return FeatureVector{tr.z, tr.logits};
}

FeatureVector cnn_forward(const InputMatrix& m, const CnnWeights& w, bool training, std::uint64_t dropout_seed) {
    std::mt19937_64 rng(dropout_seed);
    return cnn_forward(m.rows(), w, training, &rng);
}

}  // namespace ipld::cnn
