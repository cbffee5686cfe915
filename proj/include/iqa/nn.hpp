#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "iqa/rng.hpp"

namespace iqa::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Fully connected layer, y = W x + b with W of shape (out, in).
struct Dense {
  Matrix weight;
  Vector bias;

  Eigen::Index inputs() const { return weight.cols(); }
  Eigen::Index outputs() const { return weight.rows(); }
};

/// Stack of dense layers with max(0, x) between them and a linear output.
/// Batches are column-major: one sample per column.
struct Network {
  std::vector<Dense> layers;

  Eigen::Index inputs() const { return layers.front().inputs(); }
  Eigen::Index outputs() const { return layers.back().outputs(); }
  std::size_t parameter_count() const;
};

/// Hidden layers use He-uniform weights (scaled uniform), the output layer Glorot-uniform;
/// all biases start at zero.
Network make_network(Eigen::Index inputs, const std::vector<int>& hidden, Eigen::Index outputs, Rng& rng);

/// Activations of every layer for one batch; `activations[0]` is the input.
struct ForwardCache {
  std::vector<Matrix> activations;
  std::vector<Matrix> pre_activations;

  const Matrix& output() const { return activations.back(); }
};

ForwardCache forward(const Network& net, const Matrix& input);
Matrix predict(const Network& net, const Matrix& input);

/// Gradients in the same layout as the network.
struct Gradients {
  std::vector<Dense> layers;
  Matrix input;  // d loss / d input
};

Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& d_output);

std::vector<double> flatten(const Network& net);
void unflatten(Network& net, const std::vector<double>& params);
std::vector<double> flatten(const Gradients& grads);

/// Adam optimizer state over a network's parameters.
class Adam {
 public:
  Adam() = default;
  Adam(const Network& net, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void step(Network& net, const Gradients& grads);

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<Dense> m_, v_;
};

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

/// Largest |ga - gn| / max(1e-8, |ga| + |gn|) over all entries.
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

}  // namespace iqa::nn
