#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "qlc/errors.hpp"

namespace qlc {

// Univariate link g with first two derivatives.
struct Link {
  std::string name;
  std::function<double(double)> g, g_dot, g_ddot;

  static Link identity() {
    return {"identity", [](double u) { return u; }, [](double) { return 1.0; },
            [](double) { return 0.0; }};
  }

  static Link logistic() {
    auto sig = [](double u) { return 1.0 / (1.0 + std::exp(-u)); };
    return {"logistic", sig,
            [sig](double u) {
              const double s = sig(u);
              return s * (1.0 - s);
            },
            [sig](double u) {
              const double s = sig(u);
              return s * (1.0 - s) * (1.0 - 2.0 * s);
            }};
  }

  static Link tanh_link() {
    return {"tanh", [](double u) { return std::tanh(u); },
            [](double u) {
              const double c = std::cosh(u);
              return 1.0 / (c * c);
            },
            [](double u) {
              const double t = std::tanh(u);
              const double c = std::cosh(u);
              return -2.0 * t / (c * c);
            }};
  }

  static Link sine() {
    return {"sin", [](double u) { return std::sin(u); }, [](double u) { return std::cos(u); },
            [](double u) { return -std::sin(u); }};
  }

  static Link parse(const std::string& token) {
    if (token == "identity") return identity();
    if (token == "logistic") return logistic();
    if (token == "tanh") return tanh_link();
    if (token == "sin") return sine();
    throw config_error("unknown link token: " + token);
  }
};

}  // namespace qlc
