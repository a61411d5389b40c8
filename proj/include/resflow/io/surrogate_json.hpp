#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "resflow/surrogate.hpp"

namespace resflow::io {

namespace detail {

/// Hex-float text; exact for double and 80-bit long double.
template <class Real>
std::string hexfloat(Real v) {
  char buf[64];
  if constexpr (std::is_same_v<Real, long double>) {
    std::snprintf(buf, sizeof buf, "%La", v);
  } else {
    std::snprintf(buf, sizeof buf, "%a", static_cast<double>(v));
  }
  return buf;
}

template <class Real>
Real parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  Real v;
  if constexpr (std::is_same_v<Real, long double>) {
    v = std::strtold(s.c_str(), &end);
  } else {
    v = static_cast<Real>(std::strtod(s.c_str(), &end));
  }
  if (end == s.c_str() || *end != '\0') {
    throw ConfigurationError("invalid coefficient '" + s + "' in surrogate document");
  }
  return v;
}

}  // namespace detail

template <class Real>
nlohmann::json surrogate_to_json(const BasicKernelSurrogate<Real>& s) {
  nlohmann::json j;
  j["kernel"] = "gaussian";
  j["gamma"] = s.gamma();
  j["jitter"] = s.jitter();
  j["shift"] = s.shift();
  j["condition"] = s.condition();
  j["coefficient_precision_bits"] = std::numeric_limits<Real>::digits;
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : s.nodes()) nodes.push_back(std::vector<double>(n.data(), n.data() + n.size()));
  j["nodes"] = nodes;
  nlohmann::json coeffs = nlohmann::json::array();
  for (const Real& a : s.coeffs()) coeffs.push_back(detail::hexfloat(a));
  j["coeffs"] = coeffs;
  return j;
}

template <class Real = long double>
BasicKernelSurrogate<Real> surrogate_from_json(const nlohmann::json& j) {
  try {
    std::vector<Eigen::VectorXd> nodes;
    for (const auto& n : j.at("nodes")) {
      const auto v = n.get<std::vector<double>>();
      nodes.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    std::vector<Real> coeffs;
    for (const auto& c : j.at("coeffs")) coeffs.push_back(detail::parse_hexfloat<Real>(c.get<std::string>()));
    return BasicKernelSurrogate<Real>(j.at("gamma").get<double>(), std::move(nodes),
                                      std::move(coeffs), j.value("jitter", 0.0),
                                      j.value("shift", 0.0), j.value("condition", 1.0));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("malformed surrogate document: ") + e.what());
  }
}

}  // namespace resflow::io
