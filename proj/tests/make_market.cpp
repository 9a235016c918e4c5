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

// Writes a synthetic market CSV for the command line tests.

#include "support/testing.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"synthetic market generator"};
  ogamlss::Index days = 120, from = 0, count = -1;
  std::uint64_t seed = 1;
  std::string out, first = "2019-01-07";
  bool blank = false;
  app.add_option("--days", days, "days to simulate")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "random seed");
  app.add_option("--first-day", first, "first calendar day");
  app.add_option("--from", from, "first day written")->check(CLI::NonNegativeNumber);
  app.add_option("--count", count, "days written (default: the rest)");
  app.add_flag("--blank-prices", blank, "leave the price column empty");
  app.add_option("--out", out, "output CSV")->required();
  CLI11_PARSE(app, argc, argv);

  auto ds = ogamlss::testing::synthetic_market(days, seed, first);
  if (count < 0) count = days - from;
  ds = ds.slice(from, count);
  if (blank) ds.price.setConstant(std::numeric_limits<double>::quiet_NaN());
  std::ofstream f(out);
  if (!f) {
    std::cerr << "cannot write " << out << '\n';
    return 1;
  }
  f << ogamlss::testing::market_csv(ds);
  return f ? 0 : 1;
}
