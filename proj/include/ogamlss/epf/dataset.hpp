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

// Day-ahead market data: hourly CSV ingestion with calendar repair.
//
// Input header: timestamp,price,load_fc,res_fc,eua,gas,coal,oil
// Timestamps are naive market local time ("YYYY-MM-DD HH:MM[:SS]" or with a
// 'T' separator). A duplicated hour (autumn clock change) is averaged, runs
// of up to three missing hours (spring clock change, outages) are linearly
// interpolated, and empty fuel cells are forward-filled.

#include "../binary_io.hpp"
#include "../common.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

namespace ogamlss::epf {

using Day = std::chrono::sys_days;

/// Malformed or unusable market data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kHours = 24;
inline constexpr int kMaxGapHours = 3;

struct IngestionReport {
  std::vector<std::string> interpolated;  // timestamps filled in
  std::vector<std::string> averaged;      // duplicated timestamps
  Index fuel_forward_filled = 0;
};

struct MarketDataset {
  std::vector<Day> days;  // consecutive calendar days
  Mat price;              // days x 24, NaN where unknown (prediction targets)
  Mat load_fc;
  Mat res_fc;
  Vec eua, gas, coal, oil;  // value available at 12:00 of each day
  IngestionReport report;

  Index day_count() const { return static_cast<Index>(days.size()); }

  /// Index of a calendar day, or -1.
  Index index_of(Day d) const {
    if (days.empty()) return -1;
    const auto off = (d - days.front()).count();
    return off >= 0 && off < day_count() ? static_cast<Index>(off) : -1;
  }

  /// Weekday of day d: 0 = Sunday ... 6 = Saturday.
  unsigned weekday(Index d) const {
    return std::chrono::weekday(days[static_cast<std::size_t>(d)]).c_encoding();
  }

  /// Days [first, first + count) as a new dataset.
  MarketDataset slice(Index first, Index count) const {
    if (first < 0 || count < 0 || first + count > day_count())
      throw DataError("dataset slice out of range");
    MarketDataset out;
    out.days.assign(days.begin() + first, days.begin() + first + count);
    out.price = price.middleRows(first, count);
    out.load_fc = load_fc.middleRows(first, count);
    out.res_fc = res_fc.middleRows(first, count);
    out.eua = eua.segment(first, count);
    out.gas = gas.segment(first, count);
    out.coal = coal.segment(first, count);
    out.oil = oil.segment(first, count);
    return out;
  }

  /// Appends `next`; its days must continue this calendar (overlapping days
  /// are replaced).
  void append(const MarketDataset& next) {
    if (next.days.empty()) return;
    if (days.empty()) {
      *this = next;
      return;
    }
    const auto start = (next.days.front() - days.front()).count();
    if (start < 0 || start > day_count())
      throw DataError("appended data does not continue the calendar");
    const Index keep = static_cast<Index>(start);
    MarketDataset head = slice(0, keep);
    const Index n = keep + next.day_count();
    auto cat_m = [&](const Mat& a, const Mat& b) {
      Mat m(n, kHours);
      m << a, b;
      return m;
    };
    auto cat_v = [&](const Vec& a, const Vec& b) {
      Vec v(n);
      v << a, b;
      return v;
    };
    head.days.insert(head.days.end(), next.days.begin(), next.days.end());
    head.price = cat_m(head.price, next.price);
    head.load_fc = cat_m(head.load_fc, next.load_fc);
    head.res_fc = cat_m(head.res_fc, next.res_fc);
    head.eua = cat_v(head.eua, next.eua);
    head.gas = cat_v(head.gas, next.gas);
    head.coal = cat_v(head.coal, next.coal);
    head.oil = cat_v(head.oil, next.oil);
    head.report = report;
    *this = std::move(head);
  }
};

inline std::string format_day(Day d) {
  const std::chrono::year_month_day ymd(d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                unsigned(ymd.day()));
  return buf;
}

inline Day parse_day(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3)
    throw DataError("bad date '" + s + "', expected YYYY-MM-DD");
  const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(m),
                                        std::chrono::day(d)};
  if (!ymd.ok()) throw DataError("invalid date '" + s + "'");
  return Day(ymd);
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Hours since the epoch of a naive local timestamp.
inline std::int64_t parse_hour_stamp(const std::string& s) {
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, se = 0;
  char sep = 0;
  const int got = std::sscanf(s.c_str(), "%d-%u-%u%c%u:%u:%u", &y, &mo, &d, &sep, &h, &mi, &se);
  if (got < 6 || (sep != ' ' && sep != 'T') || h > 23 || mi != 0 || se != 0)
    throw DataError("bad timestamp '" + s + "', expected hourly 'YYYY-MM-DD HH:00'");
  const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(mo),
                                        std::chrono::day(d)};
  if (!ymd.ok()) throw DataError("invalid timestamp '" + s + "'");
  return std::int64_t(Day(ymd).time_since_epoch().count()) * 24 + h;
}

inline std::string format_hour_stamp(std::int64_t hs) {
  const Day d{std::chrono::days(hs >= 0 ? hs / 24 : (hs - 23) / 24)};
  char buf[8];
  std::snprintf(buf, sizeof buf, " %02d:00", int(hs - std::int64_t(d.time_since_epoch().count()) * 24));
  return format_day(d) + buf;
}

inline double parse_cell(const std::string& c, Index line_no) {
  if (c.empty() || c == "NA" || c == "NaN" || c == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(c, &used);
    if (used != c.size() || !std::isfinite(v)) throw std::invalid_argument(c);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": bad number '" + c + "'");
  }
}

}  // namespace detail

struct LoadOptions {
  bool allow_missing_price = false;  // prediction input may leave prices empty
};

inline MarketDataset load_dataset(std::istream& in, const LoadOptions& opt = {}) {
  constexpr int kCols = 8;
  static const char* kHeader[kCols] = {"timestamp", "price", "load_fc", "res_fc",
                                       "eua",       "gas",   "coal",    "oil"};
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty data file");
  const auto head = detail::split_csv(line);
  if (head.size() != kCols) throw DataError("header must be timestamp,price,load_fc,res_fc,eua,gas,coal,oil");
  for (int c = 0; c < kCols; ++c)
    if (head[static_cast<std::size_t>(c)] != kHeader[c])
      throw DataError("header must be timestamp,price,load_fc,res_fc,eua,gas,coal,oil");

  struct Row {
    std::int64_t t;
    double v[kCols - 1];
    int dup;
  };
  std::vector<Row> rows;
  MarketDataset ds;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != kCols)
      throw DataError("line " + std::to_string(line_no) + ": expected 8 fields");
    Row r{detail::parse_hour_stamp(cells[0]), {}, 1};
    for (int c = 1; c < kCols; ++c)
      r.v[c - 1] = detail::parse_cell(cells[static_cast<std::size_t>(c)], line_no);
    if (!rows.empty() && r.t < rows.back().t)
      throw DataError("line " + std::to_string(line_no) + ": timestamps are not increasing");
    if (!rows.empty() && r.t == rows.back().t) {
      Row& prev = rows.back();
      if (prev.dup == 1) ds.report.averaged.push_back(cells[0]);
      for (int c = 0; c < kCols - 1; ++c) {
        if (std::isnan(prev.v[c])) prev.v[c] = r.v[c];
        else if (!std::isnan(r.v[c])) prev.v[c] = (prev.v[c] * prev.dup + r.v[c]) / (prev.dup + 1);
      }
      ++prev.dup;
      continue;
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw DataError("no data rows");
  if (rows.front().t % 24 != 0) throw DataError("first day is incomplete (must start at 00:00)");
  if (rows.back().t % 24 != 23) throw DataError("last day is incomplete (must end at 23:00)");

  // Hourly grid with short gaps interpolated.
  std::vector<Row> grid;
  grid.reserve(static_cast<std::size_t>(rows.back().t - rows.front().t + 1));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) {
      const Row& a = rows[i - 1];
      const Row& b = rows[i];
      const std::int64_t gap = b.t - a.t - 1;
      if (gap > kMaxGapHours)
        throw DataError("gap of " + std::to_string(gap) + " hours before " +
                        detail::format_hour_stamp(b.t));
      for (std::int64_t g = 1; g <= gap; ++g) {
        Row r{a.t + g, {}, 0};
        const double f = double(g) / double(gap + 1);
        for (int c = 0; c < 3; ++c) r.v[c] = a.v[c] + f * (b.v[c] - a.v[c]);
        for (int c = 3; c < kCols - 1; ++c) r.v[c] = std::numeric_limits<double>::quiet_NaN();
        ds.report.interpolated.push_back(detail::format_hour_stamp(r.t));
        grid.push_back(r);
      }
    }
    grid.push_back(rows[i]);
  }

  // Forward fill fuels.
  for (int c = 3; c < kCols - 1; ++c) {
    double last = std::numeric_limits<double>::quiet_NaN();
    for (auto& r : grid) {
      if (std::isnan(r.v[c])) {
        if (std::isnan(last))
          throw DataError(std::string("no ") + kHeader[c + 1] + " value before " +
                          detail::format_hour_stamp(r.t));
        r.v[c] = last;
        ++ds.report.fuel_forward_filled;
      }
      last = r.v[c];
    }
  }

  const Index D = static_cast<Index>(grid.size() / kHours);
  ds.price.resize(D, kHours);
  ds.load_fc.resize(D, kHours);
  ds.res_fc.resize(D, kHours);
  ds.eua.resize(D);
  ds.gas.resize(D);
  ds.coal.resize(D);
  ds.oil.resize(D);
  const Day first{std::chrono::days(grid.front().t / 24)};
  for (Index d = 0; d < D; ++d) {
    ds.days.push_back(first + std::chrono::days(d));
    for (int h = 0; h < kHours; ++h) {
      const Row& r = grid[static_cast<std::size_t>(d * kHours + h)];
      ds.price(d, h) = r.v[0];
      ds.load_fc(d, h) = r.v[1];
      ds.res_fc(d, h) = r.v[2];
      if (std::isnan(r.v[1]) || std::isnan(r.v[2]))
        throw DataError("missing load or renewables forecast at " + detail::format_hour_stamp(r.t));
      if (std::isnan(r.v[0]) && !opt.allow_missing_price)
        throw DataError("missing price at " + detail::format_hour_stamp(r.t));
    }
    const Row& noon = grid[static_cast<std::size_t>(d * kHours + 12)];
    ds.eua[d] = noon.v[3];
    ds.gas[d] = noon.v[4];
    ds.coal[d] = noon.v[5];
    ds.oil[d] = noon.v[6];
  }
  return ds;
}

inline MarketDataset load_dataset(const std::string& path, const LoadOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return load_dataset(in, opt);
}

inline void write_dataset(io::Writer& w, const MarketDataset& ds) {
  w.magic("OGMD");
  w.u64(ds.days.size());
  for (Day d : ds.days) w.put<std::int64_t>(d.time_since_epoch().count());
  w.matrix(ds.price);
  w.matrix(ds.load_fc);
  w.matrix(ds.res_fc);
  w.vector(ds.eua);
  w.vector(ds.gas);
  w.vector(ds.coal);
  w.vector(ds.oil);
}

inline MarketDataset read_dataset(io::Reader& r) {
  r.expect_magic("OGMD");
  MarketDataset ds;
  const std::uint64_t n = r.length();
  for (std::uint64_t i = 0; i < n; ++i)
    ds.days.push_back(Day(std::chrono::days(r.get<std::int64_t>())));
  ds.price = r.matrix();
  ds.load_fc = r.matrix();
  ds.res_fc = r.matrix();
  ds.eua = r.vector();
  ds.gas = r.vector();
  ds.coal = r.vector();
  ds.oil = r.vector();
  const Index D = static_cast<Index>(n);
  if (ds.price.rows() != D || ds.price.cols() != kHours || ds.load_fc.rows() != D ||
      ds.res_fc.rows() != D || ds.eua.size() != D || ds.gas.size() != D || ds.coal.size() != D ||
      ds.oil.size() != D)
    throw io::FormatError("market data block: inconsistent sizes");
  return ds;
}

}  // namespace ogamlss::epf
