#include "iqa/nn.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/error.hpp"

namespace iqa::nn {

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Network make_network(Eigen::Index inputs, const std::vector<int>& hidden, Eigen::Index outputs, Rng& rng) {
  if (inputs <= 0 || outputs <= 0) throw Error("invalid_argument", "network dimensions must be positive");
  Network net;
  Eigen::Index fan_in = inputs;
  auto add = [&](Eigen::Index fan_out, bool last) {
    const double limit = last ? std::sqrt(6.0 / static_cast<double>(fan_in + fan_out))
                              : std::sqrt(6.0 / static_cast<double>(fan_in));
    Dense d{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (Eigen::Index c = 0; c < fan_in; ++c)
      for (Eigen::Index r = 0; r < fan_out; ++r) d.weight(r, c) = rng.uniform(-limit, limit);
    net.layers.push_back(std::move(d));
    fan_in = fan_out;
  };
  for (int h : hidden) {
    if (h <= 0) throw Error("invalid_argument", "hidden layer widths must be positive");
    add(h, false);
  }
  add(outputs, true);
  return net;
}

ForwardCache forward(const Network& net, const Matrix& input) {
  if (input.rows() != net.inputs())
    throw Error("shape", fmt::format("network expects {} inputs, got {}", net.inputs(), input.rows()));
  ForwardCache cache;
  cache.activations.reserve(net.layers.size() + 1);
  cache.pre_activations.reserve(net.layers.size());
  cache.activations.push_back(input);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    Matrix z = l.weight * cache.activations.back();
    z.colwise() += l.bias;
    cache.pre_activations.push_back(z);
    if (i + 1 < net.layers.size()) cache.activations.push_back(z.cwiseMax(0.0));
    else cache.activations.push_back(std::move(z));
  }
  return cache;
}

Matrix predict(const Network& net, const Matrix& input) { return forward(net, input).output(); }

Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& d_output) {
  Gradients g;
  g.layers.resize(net.layers.size());
  Matrix delta = d_output;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    if (k + 1 < net.layers.size()) {
      delta = delta.cwiseProduct((cache.pre_activations[k].array() > 0.0).cast<double>().matrix());
    }
    g.layers[k].weight = delta * cache.activations[k].transpose();
    g.layers[k].bias = delta.rowwise().sum();
    delta = net.layers[k].weight.transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

namespace {

template <typename Layers>
std::vector<double> flatten_layers(const Layers& layers) {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

}  // namespace

std::vector<double> flatten(const Network& net) { return flatten_layers(net.layers); }
std::vector<double> flatten(const Gradients& grads) { return flatten_layers(grads.layers); }

void unflatten(Network& net, const std::vector<double>& params) {
  if (params.size() != net.parameter_count())
    throw Error("shape", fmt::format("parameter vector has {} entries, network has {}", params.size(), net.parameter_count()));
  std::size_t at = 0;
  for (auto& l : net.layers) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(at), l.weight.size(), l.weight.data());
    at += static_cast<std::size_t>(l.weight.size());
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(at), l.bias.size(), l.bias.data());
    at += static_cast<std::size_t>(l.bias.size());
  }
}

Adam::Adam(const Network& net, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  for (const auto& l : net.layers) {
    m_.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    v_.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
}

void Adam::step(Network& net, const Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = beta1_ * m + (1.0 - beta1_) * grad;
    v = beta2_ * v + (1.0 - beta2_) * grad.cwiseProduct(grad);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    update(net.layers[k].weight, grads.layers[k].weight, m_[k].weight, v_[k].weight);
    update(net.layers[k].bias, grads.layers[k].bias, m_[k].bias, v_[k].bias);
  }
}

nlohmann::json network_to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers) {
    layers.push_back({{"inputs", l.inputs()},
                      {"outputs", l.outputs()},
                      {"weight", std::vector<double>(l.weight.data(), l.weight.data() + l.weight.size())},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"activation", "relu"}, {"layout", "column-major weight (outputs x inputs)"}, {"layers", layers}};
}

Network network_from_json(const nlohmann::json& j) {
  Network net;
  for (const auto& lj : j.at("layers")) {
    const auto in = lj.at("inputs").get<Eigen::Index>();
    const auto out = lj.at("outputs").get<Eigen::Index>();
    const auto w = lj.at("weight").get<std::vector<double>>();
    const auto b = lj.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out)
      throw Error("shape", "layer parameter arrays do not match declared shape");
    Dense d{Eigen::Map<const Matrix>(w.data(), out, in), Eigen::Map<const Vector>(b.data(), out)};
    if (!net.layers.empty() && net.layers.back().outputs() != in)
      throw Error("shape", "consecutive layer shapes do not chain");
    net.layers.push_back(std::move(d));
  }
  if (net.layers.empty()) throw Error("shape", "network has no layers");
  return net;
}

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size()) throw Error("shape", "gradient vectors differ in length");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double err = std::abs(analytic[i] - numeric[i]) /
                       std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace iqa::nn
