#pragma once

// Dense / residual feed-forward networks with explicit reverse-mode gradients
// for both the parameters and the network input.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tabdiff/rng.hpp"

namespace tabdiff {

using Vector = std::vector<double>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { SiLU, Sigmoid, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// One layer. A residual layer is the block y = act(x + W2 * silu(W1 x + b1) + b2)
/// and requires in_dim == out_dim.
struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::Identity;
  bool residual = false;
};

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<LayerSpec> layers;

  /// Throws ShapeError when the dims do not chain or a residual block is not square.
  void validate() const;
};

/// Flat row-major weights of one layer. weight2/bias2 are only present for residual blocks.
struct LayerParams {
  Vector weight;  // out_dim x in_dim
  Vector bias;    // out_dim
  Vector weight2;
  Vector bias2;

  std::array<Vector*, 4> tensors() { return {&weight, &bias, &weight2, &bias2}; }
  std::array<const Vector*, 4> tensors() const { return {&weight, &bias, &weight2, &bias2}; }
};

struct ParameterSet {
  std::vector<LayerParams> layers;
  /// Bumped on every in-place update so traces taken before the update are rejected.
  std::uint64_t revision = 0;

  static ParameterSet zeros(const NetworkSpec& spec);
  /// Uniform in +-sqrt(6/(in+out)), zero biases.
  static ParameterSet glorot(const NetworkSpec& spec, Rng& rng);

  std::size_t size() const;
  bool all_finite() const;
  /// Throws ShapeError when the tensor shapes do not match `spec`.
  void check_shape(const NetworkSpec& spec) const;
  /// Flattened copy of all tensors in layer order (weight, bias, weight2, bias2).
  Vector flatten() const;
  void assign_flat(std::span<const double> flat);
};

struct Network {
  NetworkSpec spec;
  ParameterSet params;
};

struct LayerTrace {
  Matrix input;   // batch x in_dim
  Matrix hidden;  // residual only: W1 x + b1
  Matrix pre;     // pre-activation of the layer output
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  Matrix output;
  std::uint64_t revision = 0;
};

struct Gradients {
  ParameterSet params;
  Matrix input;
};

// Batched evaluation: every row of `input` is one sample. Gradients are summed over rows.
Matrix forward(const NetworkSpec& spec, const ParameterSet& params, const Matrix& input,
               ForwardTrace* trace);
Gradients backward(const NetworkSpec& spec, const ParameterSet& params, const ForwardTrace& trace,
                   const Matrix& grad_output);

struct VectorForward {
  Vector output;
  ForwardTrace trace;
};

struct VectorGradients {
  ParameterSet params;
  Vector input;
};

VectorForward forward(const NetworkSpec& spec, const ParameterSet& params,
                      std::span<const double> input);
Vector predict(const NetworkSpec& spec, const ParameterSet& params, std::span<const double> input);
VectorGradients backward(const NetworkSpec& spec, const ParameterSet& params,
                         const ForwardTrace& trace, std::span<const double> grad_output);

enum class OptimizerKind { SGD, Adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  ParameterSet first_moment;
  ParameterSet second_moment;

  static OptimizerState make(const NetworkSpec& spec, OptimizerKind kind, double learning_rate);
};

/// SGD: p -= lr g. Adam: bias-corrected moments. Throws NumericError (with the layer
/// index) on a non-finite gradient before touching any parameter.
void optimizer_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state);

/// Interleaved [sin(t w_0), cos(t w_0), sin(t w_1), ...] with w_i = 10000^(-2i/dim).
Vector time_embed(double t, std::size_t dim);

// Convenience builders used by the model shapes.
NetworkSpec mlp_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t output_dim, Activation hidden_act, Activation output_act);
/// Dense input layer to `width`, (layers - 2) residual blocks, dense output layer.
NetworkSpec resnet_spec(std::size_t input_dim, std::size_t width, std::size_t layers,
                        std::size_t output_dim, Activation output_act = Activation::Identity);

double silu(double z);
double sigmoid(double z);

}  // namespace tabdiff
