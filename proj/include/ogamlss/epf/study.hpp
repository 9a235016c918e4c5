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

// Forecasting studies: 24 hourly models per configuration, one-day-ahead
// predictive distributions over a test window, scored and compared.

#include "../estimator.hpp"
#include "../scoring.hpp"
#include "config.hpp"
#include "features.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace ogamlss::epf {

/// Estimation failed in a way the study cannot carry over.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Windows {
  Index train_first = 0;
  Index train_last = -1;
  Index test_first = 0;
  Index test_last = -1;
  Index test_days() const { return std::max<Index>(test_last - test_first + 1, 0); }
};

inline Windows resolve_windows(const MarketDataset& ds, const StudyConfig& c) {
  if (ds.days.empty()) throw DataError("empty dataset");
  Windows w;
  const Day first = ds.days.front(), last = ds.days.back();
  const Day earliest = first + std::chrono::days(kMinHistoryDays);
  const Day tr0 = std::max(c.train_start, earliest);
  if (c.train_end < tr0) throw DataError("training window ends before 14 days of history exist");
  if (last < c.train_end) throw DataError("dataset ends before the training window does");
  w.train_first = ds.index_of(tr0);
  w.train_last = ds.index_of(c.train_end);
  if (w.train_first < 0) throw DataError("dataset starts after the training window");
  w.test_first = ds.index_of(c.test_start);
  if (c.test_end < c.test_start) {
    w.test_first = w.train_last + 1;
    w.test_last = w.train_last;
    return w;
  }
  if (w.test_first < 0 || last < c.test_end) throw DataError("dataset does not cover the test window");
  w.test_last = ds.index_of(c.test_end);
  return w;
}

/// Design matrices for one hour over days [first, last].
inline Design hour_design(const MarketDataset& ds, const StudyConfig& c, Index first, Index last,
                          int h) {
  FeatureOptions fo{c.duplicate_own_hour};
  const Mat full = build_feature_block(ds, first, last, h, fo);
  Design X;
  for (DesignKind d : c.design)
    X.push_back(d == DesignKind::Full ? full : Mat(Mat::Ones(full.rows(), 1)));
  return X;
}

inline Design slice_design(const Design& X, Index first, Index count) {
  Design out;
  for (const auto& m : X) out.push_back(m.middleRows(first, count));
  return out;
}

struct HourRun {
  int hour = 0;
  std::vector<ForecastRecord> records;
  std::vector<bool> flagged;         // estimator failed on the step after the forecast
  double fit_seconds = 0.0;
  std::vector<double> step_seconds;  // update or refit after each test day
  EstimatorState final_state;
};

struct ModelRun {
  StudyConfig config;
  std::vector<HourRun> hours;  // 24, in hour order
  double total_seconds = 0.0;
};

inline HourRun run_hour(const MarketDataset& ds, const StudyConfig& c, const Windows& w, int h) {
  using clock = std::chrono::steady_clock;
  HourRun out;
  out.hour = h;
  const Index last = std::max(w.train_last, w.test_last);
  const Design all = hour_design(ds, c, w.train_first, last, h);
  const Vec y_all = ds.price.col(h).segment(w.train_first, last - w.train_first + 1);
  const Index n_train = w.train_last - w.train_first + 1;
  const EstimatorConfig ec = c.estimator();

  auto t0 = clock::now();
  EstimatorState state;
  try {
    state = fit_batch(ec, slice_design(all, 0, n_train), y_all.head(n_train));
  } catch (const std::exception& e) {
    throw EstimationError("hour " + std::to_string(h) + ": initial fit failed: " + e.what());
  }
  out.fit_seconds = std::chrono::duration<double>(clock::now() - t0).count();

  for (Index d = w.test_first; d <= w.test_last; ++d) {
    const Index i = d - w.train_first;
    const Design xd = slice_design(all, i, 1);
    ForecastRecord r;
    r.day = ds.days[static_cast<std::size_t>(d)].time_since_epoch().count();
    r.hour = h;
    r.family = c.family;
    r.theta = predict(state, xd).row(0).transpose();
    r.realized = y_all[i];
    out.records.push_back(r);

    const auto s0 = clock::now();
    bool flag = false;
    try {
      if (c.mode == StudyMode::Online) {
        state = update_minibatch(state, xd, y_all.segment(i, 1));
        flag = state.report.diverged;
      } else {
        const Index start = c.window > 0 ? std::max<Index>(0, i + 1 - c.window) : 0;
        state = fit_batch(ec, slice_design(all, start, i + 1 - start), y_all.segment(start, i + 1 - start));
      }
    } catch (const std::exception&) {
      flag = true;  // previous state carried forward
    }
    out.flagged.push_back(flag);
    out.step_seconds.push_back(std::chrono::duration<double>(clock::now() - s0).count());
  }
  out.final_state = std::move(state);
  return out;
}

/// Runs one configuration over all 24 hours on `threads` workers. Results do
/// not depend on the thread count or scheduling order.
inline ModelRun run_model(const MarketDataset& ds, const StudyConfig& c, int threads = 1) {
  const Windows w = resolve_windows(ds, c);
  ModelRun run;
  run.config = c;
  run.hours.resize(kHours);
  const auto t0 = std::chrono::steady_clock::now();
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (int h = next++; h < kHours; h = next++) {
      try {
        run.hours[static_cast<std::size_t>(h)] = run_hour(ds, c, w, h);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::clamp(threads, 1, kHours);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  run.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

inline std::vector<ForecastRecord> all_records(const ModelRun& run) {
  std::vector<ForecastRecord> out;
  for (const auto& h : run.hours) out.insert(out.end(), h.records.begin(), h.records.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.day != b.day ? a.day < b.day : a.hour < b.hour;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Output files

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string day_string(std::int64_t day) { return format_day(Day(std::chrono::days(day))); }

inline void write_forecast_header(std::ostream& out, const Vec& probs) {
  out << "day,hour,model,theta1,theta2,theta3,theta4";
  for (Index j = 0; j < probs.size(); ++j) {
    char buf[16];
    std::snprintf(buf, sizeof buf, ",q%02d", int(std::lround(probs[j] * 100)));
    out << buf;
  }
  out << '\n';
}

inline void write_forecast_rows(std::ostream& out, const std::string& model, const Family& fam,
                                const std::vector<ForecastRecord>& recs, const Vec& probs) {
  for (const auto& r : recs) {
    out << day_string(r.day) << ',' << r.hour << ',' << model;
    for (int k = 0; k < 4; ++k) out << ',' << (k < r.theta.size() ? fmt_num(r.theta[k]) : "");
    for (Index j = 0; j < probs.size(); ++j) out << ',' << fmt_num(fam.quantile(r.theta, probs[j]));
    out << '\n';
  }
}

struct StudyResult {
  std::vector<ModelRun> runs;
  std::vector<ModelScores> scores;  // per run, empty panel when no records
  Mat dm_p;                         // CRPS-based p-values, NaN on the diagonal
};

inline StudyResult score_study(std::vector<ModelRun> runs) {
  StudyResult res;
  for (const auto& run : runs) {
    const ScoreOptions opt = run.config.scoring();
    const auto recs = all_records(run);
    const FamilyPtr fam = make_family(run.config.family);
    res.scores.push_back(aggregate(run.config.name, score_records(*fam, recs, opt), opt));
  }
  const Index m = static_cast<Index>(runs.size());
  res.dm_p = Mat::Constant(m, m, std::numeric_limits<double>::quiet_NaN());
  std::vector<Mat> panels;
  for (const auto& s : res.scores) panels.push_back(daily_panel(s.panel, s.panel.crps));
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) {
      const Mat& pa = panels[static_cast<std::size_t>(a)];
      const Mat& pb = panels[static_cast<std::size_t>(b)];
      if (a == b || pa.rows() != pb.rows() || pa.rows() < 30) continue;
      res.dm_p(a, b) = dm_test(pa, pb).p_value;
    }
  res.runs = std::move(runs);
  return res;
}

inline void write_scores(std::ostream& out, const std::vector<ModelScores>& scores) {
  out << "model,rmse,mae,cr50,cr75,cr90,cr95,is50,is75,is90,is95,crps,ls\n";
  for (const auto& s : scores) {
    if (s.records == 0) continue;
    out << s.model << ',' << fmt_num(s.rmse) << ',' << fmt_num(s.mae);
    for (Index a = 0; a < s.coverage.size(); ++a) out << ',' << fmt_num(s.coverage[a]);
    for (Index a = 0; a < s.interval.size(); ++a) out << ',' << fmt_num(s.interval[a]);
    out << ',' << fmt_num(s.crps) << ',' << fmt_num(s.log_score) << '\n';
  }
}

inline void write_dm(std::ostream& out, const StudyResult& r) {
  out << "model";
  for (const auto& s : r.scores) out << ',' << s.model;
  out << '\n';
  for (Index a = 0; a < r.dm_p.rows(); ++a) {
    out << r.scores[static_cast<std::size_t>(a)].model;
    for (Index b = 0; b < r.dm_p.cols(); ++b) out << ',' << fmt_num(r.dm_p(a, b));
    out << '\n';
  }
}

inline nlohmann::json timing_json(const StudyResult& r) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& run : r.runs) {
    nlohmann::json hours = nlohmann::json::array();
    for (const auto& h : run.hours)
      hours.push_back({{"hour", h.hour}, {"fit_seconds", h.fit_seconds}, {"step_seconds", h.step_seconds}});
    models.push_back({{"model", run.config.name},
                      {"mode", run.config.mode == StudyMode::Online ? "online" : "batch"},
                      {"total_seconds", run.total_seconds},
                      {"hours", hours}});
  }
  return {{"models", models}};
}

inline nlohmann::json manifest_json(const StudyResult& r, const MarketDataset& ds) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& run : r.runs) {
    Index flagged = 0;
    for (const auto& h : run.hours)
      for (bool f : h.flagged) flagged += f;
    models.push_back(
        {{"model", run.config.name},
         {"family", run.config.family},
         {"config", run.config.source},
         {"column_28", run.config.duplicate_own_hour
                           ? "previous-day price of the delivery hour (duplicates column 1)"
                           : "zero; the expert design has 37 distinct regressors"},
         {"flagged_steps", flagged}});
  }
  return {{"models", models},
          {"data",
           {{"first_day", ds.days.empty() ? "" : format_day(ds.days.front())},
            {"last_day", ds.days.empty() ? "" : format_day(ds.days.back())},
            {"interpolated_hours", ds.report.interpolated},
            {"averaged_hours", ds.report.averaged},
            {"fuel_forward_filled", ds.report.fuel_forward_filled}}}};
}

inline void write_study(const StudyResult& r, const MarketDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const Vec probs = quantile_grid(99);
  {
    std::ofstream f(fs::path(dir) / "forecasts.csv");
    write_forecast_header(f, probs);
    for (const auto& run : r.runs)
      write_forecast_rows(f, run.config.name, *make_family(run.config.family), all_records(run), probs);
  }
  {
    std::ofstream f(fs::path(dir) / "scores.csv");
    write_scores(f, r.scores);
  }
  {
    std::ofstream f(fs::path(dir) / "dm.csv");
    write_dm(f, r);
  }
  {
    std::ofstream f(fs::path(dir) / "timing.json");
    f << timing_json(r).dump(2) << '\n';
  }
  {
    std::ofstream f(fs::path(dir) / "manifest.json");
    f << manifest_json(r, ds).dump(2) << '\n';
  }
}

inline StudyResult run_study(const MarketDataset& ds, const std::vector<StudyConfig>& configs,
                             int threads = 1) {
  std::vector<ModelRun> runs;
  for (const auto& c : configs) runs.push_back(run_model(ds, c, threads));
  return score_study(std::move(runs));
}

// ---------------------------------------------------------------------------
// Snapshot bundle: 24 hourly estimators plus the price history the next
// feature rows need.

struct Bundle {
  StudyConfig config;
  MarketDataset history;  // last 14 days absorbed
  std::vector<EstimatorState> hours;
};

inline void write_bundle(std::ostream& out, const Bundle& b) {
  io::Writer w(out);
  w.magic("OGSB");
  w.u32(1);
  w.str(b.config.source);
  write_dataset(w, b.history);
  w.u32(static_cast<std::uint32_t>(b.hours.size()));
  w.ok();
  for (const auto& s : b.hours) write_snapshot(out, s);
  w.ok();
}

inline Bundle read_bundle(std::istream& in) {
  io::Reader r(in);
  r.expect_magic("OGSB");
  if (r.u32() != 1) throw io::FormatError("snapshot bundle: unsupported version");
  Bundle b;
  b.config = parse_config(r.str());
  b.history = read_dataset(r);
  const std::uint32_t n = r.u32();
  if (n != kHours) throw io::FormatError("snapshot bundle: expected 24 hourly models");
  for (std::uint32_t h = 0; h < n; ++h) b.hours.push_back(read_snapshot(in));
  return b;
}

inline MarketDataset history_tail(const MarketDataset& ds, Index last_day) {
  const Index first = std::max<Index>(0, last_day - kMinHistoryDays + 1);
  return ds.slice(first, last_day - first + 1);
}

/// Initial fit on the configured training window.
inline Bundle fit_bundle(const MarketDataset& ds, const StudyConfig& c, int threads = 1) {
  StudyConfig fit_only = c;
  fit_only.test_start = c.train_end + std::chrono::days(1);
  fit_only.test_end = c.train_end;
  const ModelRun run = run_model(ds, fit_only, threads);
  const Windows w = resolve_windows(ds, fit_only);
  Bundle b;
  b.config = c;
  b.history = history_tail(ds, w.train_last);
  for (const auto& h : run.hours) b.hours.push_back(h.final_state);
  return b;
}

/// Absorbs every complete day of `next` that follows the bundle's history.
/// Returns the number of days absorbed.
inline Index update_bundle(Bundle& b, const MarketDataset& next) {
  MarketDataset ds = b.history;
  const Index before = ds.day_count();
  ds.append(next);
  Index absorbed = 0;
  for (Index d = before; d < ds.day_count(); ++d) {
    if (ds.price.row(d).hasNaN()) throw DataError("update data has missing prices on " + format_day(ds.days[std::size_t(d)]));
    for (int h = 0; h < kHours; ++h) {
      const Design x = hour_design(ds, b.config, d, d, h);
      auto& s = b.hours[static_cast<std::size_t>(h)];
      s = update_minibatch(s, x, Vec::Constant(1, ds.price(d, h)));
    }
    ++absorbed;
  }
  b.history = history_tail(ds, ds.day_count() - 1);
  return absorbed;
}

/// Predictive parameters for each day of `next` whose lagged prices are known.
inline std::vector<ForecastRecord> predict_bundle(const Bundle& b, const MarketDataset& next) {
  MarketDataset ds = b.history;
  const Index before = ds.day_count();
  ds.append(next);
  std::vector<ForecastRecord> out;
  for (Index d = before; d < ds.day_count(); ++d) {
    for (int h = 0; h < kHours; ++h) {
      if (!has_history(ds, d, h)) continue;
      const Design x = hour_design(ds, b.config, d, d, h);
      ForecastRecord r;
      r.day = ds.days[static_cast<std::size_t>(d)].time_since_epoch().count();
      r.hour = h;
      r.family = b.config.family;
      r.theta = predict(b.hours[static_cast<std::size_t>(h)], x).row(0).transpose();
      r.realized = ds.price(d, h);
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace ogamlss::epf
