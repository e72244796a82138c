#pragma once

#include "ipld/cnn.hpp"
#include "ipld/sru.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ipld::model {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ModelShape {
    int window = 96;
    int devices = 4;
    int conv_channels = 16;
    int kernel = 5;
    int features = 128;
    int classes = 4;
    int sru_hidden = 64;
    int head_hidden = 128;

    cnn::CnnShape cnn() const;
    int sru_input() const { return features + 1; }
    void validate() const;
};

/// Two ReLU layers over the concatenated forward/reverse states, then a linear output per device.
struct Head {
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;
    Matrix w_out;
    Vector b_out;
};

struct Parameters {
    cnn::CnnWeights cnn;
    sru::SruWeights forward;
    sru::SruWeights reverse;
    Head head;

    /// Same shapes, all zeros. Used as a gradient accumulator.
    Parameters zeros_like() const;
    std::size_t count() const;
};

using ParamVisitor = std::function<void(const std::string& name, std::span<double> values)>;
using ConstParamVisitor = std::function<void(const std::string& name, std::span<const double> values)>;

/// Visits every weight array in declaration order. This order is also the file order.
void for_each_param(Parameters& p, const ParamVisitor& visit);
void for_each_param(const Parameters& p, const ConstParamVisitor& visit);

/// Min-max constants. Inputs are price, calendar, load; outputs one pair per device.
struct NormConstants {
    std::array<double, 3> in_min{0.0, 1.0, 0.0};
    std::array<double, 3> in_max{1.0, 3.0, 1.0};
    std::vector<double> out_min;
    std::vector<double> out_max;
};

struct DisaggregationModel {
    ModelShape shape;
    Parameters params;
    NormConstants norm;
    std::vector<std::string> device_names;

    /// Glorot weights from seed, identity normalization, devices named dev0..devD-1.
    static DisaggregationModel init(const ModelShape& shape, std::uint64_t seed, double dropout_rate = 0.2);
    void validate() const;
};

struct DeviceEstimate {
    std::vector<std::string> device_ids;
    Matrix power;  // devices x T, kW
};

struct ForwardTrace {
    cnn::CnnTrace cnn;
    Vector load;  // scaled load row, the per-step SRU input next to z
    sru::Projections fwd_proj;
    sru::Projections rev_proj;
    sru::LayerTrace fwd;
    sru::LayerTrace rev;
    Matrix hcat;  // 2 * hidden x T
    Matrix z1, a1, z2, a2;
    Matrix y;  // devices x T, scaled units, before the output clamp
};

/// Full network on a scaled 3 x J input. Returns the unclamped output in scaled units.
Matrix forward_normalized(const DisaggregationModel& m, const Matrix& x, bool training, std::mt19937_64* rng,
                          ForwardTrace* trace = nullptr);

Matrix normalize_window(const DisaggregationModel& m, const cnn::InputMatrix& window);

/// Inference: scale the window, run the network, clamp at zero, convert to kW.
DeviceEstimate model_forward(const cnn::InputMatrix& window, const DisaggregationModel& m);

void save_model(const DisaggregationModel& m, const std::filesystem::path& path);
DisaggregationModel load_model(const std::filesystem::path& path);

}  // namespace ipld::model
