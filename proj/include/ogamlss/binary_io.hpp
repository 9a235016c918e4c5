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

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace ogamlss::io {

/// Snapshot payload could not be decoded.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

}  // namespace detail

// Little-endian writer for fixed-width scalars and Eigen payloads.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void magic(const char (&tag)[5]) { out_.write(tag, 4); }

  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    T le = detail::to_little(v);
    out_.write(reinterpret_cast<const char*>(&le), sizeof(T));
  }

  void f64(double v) { put<double>(v); }
  void u32(std::uint32_t v) { put<std::uint32_t>(v); }
  void u64(std::uint64_t v) { put<std::uint64_t>(v); }

  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  // Row-major doubles, dimensions written first.
  void matrix(const Mat& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }

  void vector(const Vec& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Index i = 0; i < v.size(); ++i) f64(v[i]);
  }

  void mask(const BoolVec& b) {
    u64(static_cast<std::uint64_t>(b.size()));
    for (Index i = 0; i < b.size(); ++i) put<std::uint8_t>(b[i] ? 1 : 0);
  }

  void ok() const {
    if (!out_) throw FormatError("snapshot write failed");
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void expect_magic(const char (&tag)[5]) {
    char got[4];
    in_.read(got, 4);
    if (!in_ || std::memcmp(got, tag, 4) != 0)
      throw FormatError(std::string("bad magic, expected ") + tag);
  }

  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw FormatError("truncated snapshot");
    return detail::to_little(v);
  }

  double f64() { return get<double>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }

  std::string str() {
    auto n = length();
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError("truncated snapshot");
    return s;
  }

  Mat matrix() {
    auto r = length();
    auto c = length();
    Mat m(static_cast<Index>(r), static_cast<Index>(c));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
    return m;
  }

  Vec vector() {
    Vec v(static_cast<Index>(length()));
    for (Index i = 0; i < v.size(); ++i) v[i] = f64();
    return v;
  }

  BoolVec mask() {
    BoolVec b(static_cast<Index>(length()));
    for (Index i = 0; i < b.size(); ++i) b[i] = get<std::uint8_t>() != 0;
    return b;
  }

  std::uint64_t length() {
    auto n = u64();
    if (n > (std::uint64_t{1} << 32)) throw FormatError("implausible length in snapshot");
    return n;
  }

 private:
  std::istream& in_;
};

}  // namespace ogamlss::io
