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

// Expert design for day-ahead prices: one 38-column row per (day, hour).
//
//   [0]       intercept
//   [1..4]    P(d-1,h), P(d-2,h), P(d-7,h), P(d-14,h)
//   [5..27]   P(d-1,s) for the 23 hours s != h, ascending
//   [28]      0, or P(d-1,h) again when duplicate_own_hour is set
//   [29..30]  load and renewables forecasts for (d,h)
//   [31..34]  EUA, gas, coal, oil as known at 12:00 of day d-1
//   [35..37]  Monday, Saturday, Sunday dummies of day d

#include "dataset.hpp"

namespace ogamlss::epf {

inline constexpr Index kExpertColumns = 38;
inline constexpr Index kMinHistoryDays = 14;

struct FeatureOptions {
  bool duplicate_own_hour = false;
};

inline bool has_history(const MarketDataset& ds, Index d, int h) {
  if (d < kMinHistoryDays || d >= ds.day_count()) return false;
  for (Index lag : {1, 2, 7, 14})
    if (std::isnan(ds.price(d - lag, h))) return false;
  return !ds.price.row(d - 1).hasNaN();
}

inline Vec build_feature_row(const MarketDataset& ds, Index d, int h, const FeatureOptions& opt = {}) {
  if (h < 0 || h >= kHours) throw DimensionError("hour out of range");
  if (d < kMinHistoryDays || d >= ds.day_count())
    throw DataError("day " + std::to_string(d) + ": needs 14 days of price history");
  if (!has_history(ds, d, h)) throw DataError("day " + format_day(ds.days[std::size_t(d)]) +
                                              ": lagged prices are missing");
  Vec x(kExpertColumns);
  x[0] = 1.0;
  x[1] = ds.price(d - 1, h);
  x[2] = ds.price(d - 2, h);
  x[3] = ds.price(d - 7, h);
  x[4] = ds.price(d - 14, h);
  Index c = 5;
  for (int s = 0; s < kHours; ++s)
    if (s != h) x[c++] = ds.price(d - 1, s);
  x[28] = opt.duplicate_own_hour ? ds.price(d - 1, h) : 0.0;
  x[29] = ds.load_fc(d, h);
  x[30] = ds.res_fc(d, h);
  x[31] = ds.eua[d - 1];
  x[32] = ds.gas[d - 1];
  x[33] = ds.coal[d - 1];
  x[34] = ds.oil[d - 1];
  const unsigned wd = ds.weekday(d);
  x[35] = wd == 1 ? 1.0 : 0.0;
  x[36] = wd == 6 ? 1.0 : 0.0;
  x[37] = wd == 0 ? 1.0 : 0.0;
  return x;
}

/// Rows for days [first, last] of hour h, one per day.
inline Mat build_feature_block(const MarketDataset& ds, Index first, Index last, int h,
                               const FeatureOptions& opt = {}) {
  const Index n = std::max<Index>(last - first + 1, 0);
  Mat X(n, kExpertColumns);
  for (Index i = 0; i < n; ++i) X.row(i) = build_feature_row(ds, first + i, h, opt).transpose();
  return X;
}

}  // namespace ogamlss::epf
