#pragma once

#include "ipld/data.hpp"
#include "ipld/model.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ipld::train {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class LossKind { mse };
enum class Optimizer { adam, sgd };

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 16;
    int max_iterations = 1000;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::mse;
    Optimizer optimizer = Optimizer::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 5.0;   // global L2 norm; 0 disables clipping
    double aux_weight = 0.1;  // cross-entropy weight of the category head
    double dropout_rate = 0.2;
    model::ModelShape shape;  // window and devices are taken from the dataset

    void validate() const;
};

/// One training window in scaled units. label < 0 means no category target.
struct Example {
    Matrix x;       // 3 x J
    Matrix target;  // D x J
    int label = -1;
};

struct LossParts {
    double regression = 0.0;
    double auxiliary = 0.0;
};

struct LossHistory {
    std::vector<double> regression;  // per iteration, mean over the batch
    std::vector<double> auxiliary;
};

/// Mean squared error over all entries.
double loss_mse(const Matrix& pred, const Matrix& target);
double cross_entropy(const Vector& logits, int label);

/// Loss summed over the batch, inference mode.
LossParts batch_loss(const model::DisaggregationModel& m, std::span<const Example> batch, double aux_weight = 0.1);

/// Adds the gradient of sum_b [mse_b + aux_weight * ce_b] to grad and returns the summed parts.
/// With training set, dropout masks are drawn from rng.
LossParts backward(const model::DisaggregationModel& m, std::span<const Example> batch, model::Parameters& grad,
                   double aux_weight = 0.1, bool training = false, std::mt19937_64* rng = nullptr);

struct GradCheckReport {
    double max_error = 0.0;  // relative, or absolute where both values are below 1e-8
    std::size_t checked = 0;
    std::size_t skipped = 0;  // coordinates whose perturbation crossed a ReLU or max-pool boundary
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Central differences over every weight against backward(), inference mode.
GradCheckReport finite_difference_check(const model::DisaggregationModel& m, std::span<const Example> batch,
                                        double step = 1e-5, double aux_weight = 0.1);

/// Scaled windows (one per day) and category labels for a dataset under the model's constants.
std::vector<Example> make_examples(const model::DisaggregationModel& m, const data::ParkDataset& ds,
                                   const std::vector<int>& labels);

/// Fits the model's input and output scaling on a dataset.
model::NormConstants fit_norm(const data::ParkDataset& ds);

struct TrainResult {
    model::DisaggregationModel model;
    LossHistory history;
    std::vector<int> labels;  // category of each training day
};

TrainResult train(const data::ParkDataset& ds, const TrainConfig& config);

/// Trailing moving average; entry i averages [i - window + 1, i].
std::vector<double> smooth(const std::vector<double>& values, int window);

/// "iteration loss" per line, iterations counted from 1.
void write_history(const std::vector<double>& losses, const std::filesystem::path& path);

}  // namespace ipld::train
