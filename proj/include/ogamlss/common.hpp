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

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ogamlss {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using BoolVec = Eigen::Matrix<bool, Eigen::Dynamic, 1>;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Wrong vector or matrix size.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation
/// (non-finite data, non-positive weight, parameter out of range).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A numerical procedure could not produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Object used before it holds the state the call needs.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

inline void require(bool cond, const char* what) {
  if (!cond) throw DomainError(what);
}

inline void require_size(Index got, Index want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected size " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

inline void symmetrize(Mat& a) { a = 0.5 * (a + a.transpose()).eval(); }

}  // namespace detail

}  // namespace ogamlss
