#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace ipld::cnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kPriceRow = 0;
inline constexpr int kCalendarRow = 1;
inline constexpr int kLoadRow = 2;

/// Price, calendar and aggregate load over one window of J samples, one row each.
class InputMatrix {
public:
    InputMatrix(std::span<const double> price, std::span<const double> calendar, std::span<const double> load);

    const Matrix& rows() const noexcept { return rows_; }
    int length() const noexcept { return static_cast<int>(rows_.cols()); }

private:
    Matrix rows_;
};

enum class PoolMode { max, avg };
enum class Activation { identity, relu };

/// Layer sizes of the feature extractor. The defaults are the desk-scale network.
struct CnnShape {
    int window = 96;
    int in_channels = 3;
    int conv_channels = 16;
    int kernel = 5;
    int features = 128;
    int classes = 4;

    int conv_length() const { return window - kernel + 1; }
    int pooled_length() const { return conv_length() / 2; }
    int flat_size() const { return conv_channels * pooled_length(); }
    void validate() const;
};

struct CnnWeights {
    Matrix conv_w;  // conv_channels x (in_channels * kernel), column = in_channel * kernel + tap
    Vector conv_b;
    Matrix dense_w;  // features x flat_size, flat index = channel * pooled_length + position
    Vector dense_b;
    Matrix cls_w;  // classes x features
    Vector cls_b;
    double dropout_rate = 0.2;
    PoolMode pool_mode = PoolMode::max;

    static CnnWeights zeros(const CnnShape& shape, double dropout_rate = 0.2);
    /// Glorot-uniform weights, zero biases.
    static CnnWeights glorot(const CnnShape& shape, std::mt19937_64& rng, double dropout_rate = 0.2);

    /// Throws InvalidArgument on inconsistent shapes, non-finite values or a bad dropout rate.
    void validate() const;
};

struct FeatureVector {
    Vector z;
    Vector class_logits;
};

/// Valid cross-correlation summed over input channels, stride 1, plus bias.
/// kernels is out_channels x (in_channels * kernel_len).
Matrix conv_forward(const Matrix& input, const Matrix& kernels, const Vector& biases, int kernel_len);

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
Matrix relu(const Matrix& x);

/// Non-overlapping pooling along time. A trailing element that does not fill a window is dropped.
Matrix pool(const Matrix& input, PoolMode mode, int window = 2, int stride = 2);

/// act(w * d + b). w holds one row per output unit.
Vector dense_forward(const Vector& d, const Matrix& w, const Vector& b, Activation activation);

/// Everything the backward pass needs from one forward evaluation.
struct CnnTrace {
    Matrix cols;                   // im2col of the input, (in_channels * kernel) x conv_length
    Matrix conv_pre;               // conv_channels x conv_length, before ReLU
    std::vector<int> pool_argmax;  // max pooling: flat index into the conv output for every pooled cell
    Vector flat;
    Vector dense_pre;
    Vector dropout_mask;  // ones when dropout is off
    double dropout_scale = 1.0;  // 1 - rate at inference, 1 in training
    Vector z;
    Vector logits;
};

/// Forward pass on an already-scaled 3 x J matrix. With training set, dense activations
/// are zeroed with probability dropout_rate using rng; otherwise they are scaled by 1 - rate.
FeatureVector cnn_forward(const Matrix& x, const CnnWeights& w, bool training, std::mt19937_64* rng,
                          CnnTrace* trace = nullptr);

/// Forward pass on a raw input matrix. Dropout masks in training mode come from dropout_seed.
FeatureVector cnn_forward(const InputMatrix& m, const CnnWeights& w, bool training, std::uint64_t dropout_seed = 0);

}  // namespace ipld::cnn
