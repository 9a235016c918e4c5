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

// ogamlss: fit, update, predict and run day-ahead price forecasting studies.
//
// Exit codes: 0 ok, 1 usage, 2 config error, 3 data error, 4 estimation failure.

#include <ogamlss.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

namespace epf = ogamlss::epf;

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kEstimation = 4 };

epf::Bundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw epf::DataError("cannot open snapshot '" + path + "'");
  try {
    return epf::read_bundle(in);
  } catch (const ogamlss::io::FormatError& e) {
    throw epf::DataError(std::string("snapshot '") + path + "': " + e.what());
  }
}

void save_bundle(const epf::Bundle& b, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw epf::DataError("cannot write snapshot '" + path + "'");
  epf::write_bundle(out, b);
}

int run(int argc, char** argv) {
  CLI::App app{"Online distributional regression for day-ahead electricity prices"};
  app.require_subcommand(1);

  std::vector<std::string> configs;
  std::string data, snapshot, output;
  int threads = 1;

  auto* fit = app.add_subcommand("fit", "fit the 24 hourly models on the training window");
  fit->add_option("--config", configs, "key=value configuration file")->required()->expected(1);
  fit->add_option("--data", data, "market data CSV")->required();
  fit->add_option("--snapshot", snapshot, "snapshot file to write")->required();
  fit->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 24));

  auto* upd = app.add_subcommand("update", "absorb the days of a CSV into a snapshot");
  upd->add_option("--data", data, "CSV with the days following the snapshot")->required();
  upd->add_option("--snapshot", snapshot, "snapshot file, rewritten in place")->required();
  upd->add_option("--config", configs, "ignored; the snapshot carries its configuration");
  upd->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 24));

  auto* pred = app.add_subcommand("predict", "emit predictive quantiles from a snapshot");
  pred->add_option("--data", data, "CSV with the days to forecast (prices may be empty)")->required();
  pred->add_option("--snapshot", snapshot, "snapshot file")->required();
  pred->add_option("--output", output, "output CSV (default: standard output)");
  pred->add_option("--config", configs, "ignored; the snapshot carries its configuration");
  pred->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 24));

  auto* study = app.add_subcommand("study", "run a full forecasting study");
  study->add_option("--config", configs, "configuration file, repeat for several models")->required();
  study->add_option("--data", data, "market data CSV")->required();
  study->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 24));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (fit->parsed()) {
      const auto cfg = epf::load_config(configs.front());
      const auto ds = epf::load_dataset(data);
      save_bundle(epf::fit_bundle(ds, cfg, threads), snapshot);
    } else if (upd->parsed()) {
      auto b = load_bundle(snapshot);
      const auto next = epf::load_dataset(data);
      const auto n = epf::update_bundle(b, next);
      save_bundle(b, snapshot);
      std::cerr << "absorbed " << n << " day(s)\n";
    } else if (pred->parsed()) {
      const auto b = load_bundle(snapshot);
      const auto next = epf::load_dataset(data, {.allow_missing_price = true});
      const auto recs = epf::predict_bundle(b, next);
      const auto probs = ogamlss::quantile_grid(99);
      const auto fam = ogamlss::make_family(b.config.family);
      std::ofstream file;
      if (!output.empty()) {
        file.open(output);
        if (!file) throw epf::DataError("cannot write '" + output + "'");
      }
      std::ostream& out = output.empty() ? std::cout : file;
      epf::write_forecast_header(out, probs);
      epf::write_forecast_rows(out, b.config.name, *fam, recs, probs);
    } else if (study->parsed()) {
      std::vector<epf::StudyConfig> cfgs;
      for (const auto& c : configs) cfgs.push_back(epf::load_config(c));
      for (std::size_t i = 1; i < cfgs.size(); ++i) {
        const auto& a = cfgs.front();
        const auto& b = cfgs[i];
        if (a.train_start != b.train_start || a.train_end != b.train_end ||
            a.test_start != b.test_start || a.test_end != b.test_end)
          throw epf::ConfigError("all models of a study must share the same windows");
        for (std::size_t j = 0; j < i; ++j)
          if (cfgs[j].name == b.name) throw epf::ConfigError("duplicate model name '" + b.name + "'");
      }
      const auto ds = epf::load_dataset(data);
      const auto result = epf::run_study(ds, cfgs, threads);
      epf::write_study(result, ds, cfgs.front().out_dir);
    }
  } catch (const epf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const epf::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const epf::EstimationError& e) {
    std::cerr << "estimation failure: " << e.what() << '\n';
    return kEstimation;
  } catch (const ogamlss::NumericalError& e) {
    std::cerr << "estimation failure: " << e.what() << '\n';
    return kEstimation;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
