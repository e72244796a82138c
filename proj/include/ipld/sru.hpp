#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace ipld::sru {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct SruWeights {
    Matrix w_s;  // hidden x input
    Matrix w_f;
    Vector b_f;
    Matrix w_r;
    Vector b_r;
    Matrix w_skip;  // hidden x input; empty means identity (input == hidden)

    static SruWeights zeros(int input_dim, int hidden);
    /// Glorot-uniform matrices, zero biases. The skip projection exists iff input_dim != hidden.
    static SruWeights glorot(int input_dim, int hidden, std::mt19937_64& rng);

    int input_dim() const { return static_cast<int>(w_s.cols()); }
    int hidden() const { return static_cast<int>(w_s.rows()); }
    bool has_skip() const { return w_skip.size() > 0; }
    void validate() const;
};

struct SruStep {
    Vector h;
    Vector c;
    Vector f;  // forget gate
    Vector r;  // highway gate
};

/// One cell update. Gates read only s_t, never the previous state.
SruStep sru_cell_step(const Vector& s_t, const Vector& c_prev, const SruWeights& w);

/// Every step's input-side products, one column per time step.
struct Projections {
    Matrix s_tilde;  // w_s * S
    Matrix f_pre;    // w_f * S + b_f
    Matrix r_pre;    // w_r * S + b_r
    Matrix skip;     // skip(S)
};

Projections project(const Matrix& inputs, const SruWeights& w);

struct LayerTrace {
    Matrix f, r, c, h;  // hidden x T, stored in input time order
    Vector c0;
};

/// The sequential part of a layer. Columns are visited back to front when reverse is set;
/// outputs stay in input order.
Matrix recurrence(const Projections& p, bool reverse, const Vector& c0, LayerTrace* trace = nullptr);

/// Gradients with respect to every projection column and the initial state,
/// given the loss gradient dh on the layer outputs.
struct RecurrenceGrad {
    Projections d;
    Vector dc0;
};

RecurrenceGrad recurrence_backward(const Projections& p, const LayerTrace& trace, bool reverse, const Matrix& dh);

/// inputs is input_dim x T. c0 defaults to zeros when empty.
Matrix sru_layer_forward(const Matrix& inputs, const SruWeights& w, bool reverse, const Vector& c0 = Vector());

}  // namespace ipld::sru
