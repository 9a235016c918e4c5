/*
 * Copyright (c) 2026, The ogamlss Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include "common.hpp"

#include <string>

namespace ogamlss {

/// Monotone map between a distribution parameter theta and its linear
/// predictor eta = g(theta).
class LinkFunction {
 public:
  enum class Kind { Identity, Log, LogShifted };

  static LinkFunction identity() { return LinkFunction(Kind::Identity, 0.0); }
  static LinkFunction log() { return LinkFunction(Kind::Log, 0.0); }
  /// theta = shift + exp(eta), so theta > shift.
  static LinkFunction log_shifted(double shift) { return LinkFunction(Kind::LogShifted, shift); }

  Kind kind() const { return kind_; }
  double shift() const { return shift_; }

  /// Infimum of the valid theta range (-inf for identity).
  double lower() const { return kind_ == Kind::Identity ? -kInf : shift_; }

  double link(double theta) const {
    switch (kind_) {
      case Kind::Identity:
        return theta;
      case Kind::Log:
        return std::log(theta);
      case Kind::LogShifted:
        return std::log(theta - shift_);
    }
    return theta;
  }

  double inverse(double eta) const {
    switch (kind_) {
      case Kind::Identity:
        return eta;
      case Kind::Log:
        return std::exp(std::min(eta, kMaxEta));
      case Kind::LogShifted:
        return shift_ + std::exp(std::min(eta, kMaxEta));
    }
    return eta;
  }

  /// d theta / d eta
  double inverse_derivative(double eta) const {
    return kind_ == Kind::Identity ? 1.0 : std::exp(std::min(eta, kMaxEta));
  }

  /// d^2 theta / d eta^2
  double inverse_second_derivative(double eta) const {
    return kind_ == Kind::Identity ? 0.0 : std::exp(std::min(eta, kMaxEta));
  }

  std::string name() const {
    switch (kind_) {
      case Kind::Identity:
        return "identity";
      case Kind::Log:
        return "log";
      case Kind::LogShifted:
        return "log-shifted(" + std::to_string(shift_) + ")";
    }
    return "?";
  }

 private:
  // exp(700) is still finite in double precision.
  static constexpr double kMaxEta = 700.0;

  LinkFunction(Kind k, double shift) : kind_(k), shift_(shift) {}

  Kind kind_;
  double shift_;
};

}  // namespace ogamlss
