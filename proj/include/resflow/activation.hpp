#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "resflow/errors.hpp"

namespace resflow {

/// Scalar activation applied component-wise to the pre-activation w*x + b.
enum class Activation { identity, relu, sigmoid, tanh, gcu };

inline constexpr std::array<Activation, 5> kAllActivations = {
    Activation::identity, Activation::relu, Activation::sigmoid,
    Activation::tanh, Activation::gcu};

inline double activate(Activation act, double z) {
  switch (act) {
    case Activation::identity:
      return z;
    case Activation::relu:
      return std::max(0.0, z);
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case Activation::tanh:
      return std::tanh(z);
    case Activation::gcu:
      return z * std::cos(z);
  }
  return z;
}

inline Eigen::VectorXd activate(Activation act, const Eigen::VectorXd& z) {
  return z.unaryExpr([act](double v) { return activate(act, v); });
}

inline std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::tanh:
      return "tanh";
    case Activation::gcu:
      return "gcu";
  }
  return "unknown";
}

inline Activation parse_activation(std::string_view name) {
  for (Activation act : kAllActivations) {
    if (to_string(act) == name) return act;
  }
  throw ConfigurationError("unknown activation '" + std::string(name) +
                           "' (expected identity, relu, sigmoid, tanh or gcu)");
}

}  // namespace resflow
