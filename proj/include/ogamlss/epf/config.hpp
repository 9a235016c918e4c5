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

// Plain-text study configuration: one key=value per line, '#' comments.

#include "../estimator.hpp"
#include "../scoring.hpp"
#include "dataset.hpp"

#include <map>

namespace ogamlss::epf {

/// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StudyMode { Online, Batch };
enum class DesignKind { Full, Intercept };

struct StudyConfig {
  std::string name = "model";
  std::string family = "normal";
  Estimation estimation = Estimation::Lasso;
  Curvature curvature = Curvature::Expected;
  StudyMode mode = StudyMode::Online;
  std::vector<double> gamma;       // per parameter
  std::vector<double> eps_lambda;  // per parameter
  std::vector<DesignKind> design;  // per parameter
  Index grid_count = 100;
  ICSpec ic = ICSpec::bic();
  double eps_rss = 1.5;
  Day train_start = parse_day("2015-01-15");
  Day train_end = parse_day("2018-12-26");
  Day test_start = parse_day("2018-12-27");
  Day test_end = parse_day("2020-12-31");
  Index window = 0;  // batch refits: 0 expanding, else rolling window in days
  bool duplicate_own_hour = false;
  double crps_factor = 2.0;
  IntervalPenalty is_penalty = IntervalPenalty::TwoOverAlpha;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string source;  // the text this was parsed from

  int param_count() const { return make_family(family)->param_count(); }

  EstimatorConfig estimator() const {
    EstimatorConfig c = EstimatorConfig::for_family(family);
    c.estimation = estimation;
    c.curvature = curvature;
    c.ic = ic;
    c.eps_rss = eps_rss;
    c.path.seed = seed;
    for (std::size_t k = 0; k < c.params.size(); ++k) {
      c.params[k].gamma = gamma[k];
      c.params[k].eps_lambda = eps_lambda[k];
      c.params[k].grid_count = grid_count;
    }
    return c;
  }

  ScoreOptions scoring() const {
    ScoreOptions o;
    o.crps_factor = crps_factor;
    o.is_penalty = is_penalty;
    return o;
  }
};

inline const char* param_key(int k) {
  static const char* names[] = {"location", "scale", "tail", "skew"};
  return names[k];
}

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config '" + key + "': expected a number, got '" + v + "'");
  }
}

inline std::uint64_t to_count(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (!(x >= 0.0) || x != std::floor(x) || x > 9.0e15)
    throw ConfigError("config '" + key + "': expected a nonnegative integer");
  return static_cast<std::uint64_t>(x);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config '" + key + "': expected true or false");
}

inline Day to_day(const std::string& key, const std::string& v) {
  try {
    return parse_day(v);
  } catch (const DataError& e) {
    throw ConfigError("config '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(no) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(no) + ": empty key");
    kv[key] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

inline StudyConfig parse_config(const std::string& text) {
  const auto kv = parse_key_values(text);
  StudyConfig c;
  c.source = text;
  if (auto it = kv.find("family"); it != kv.end()) c.family = it->second;
  FamilyPtr fam;
  try {
    fam = make_family(c.family);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  const int p = fam->param_count();
  c.gamma.assign(static_cast<std::size_t>(p), 1.0);
  c.eps_lambda.assign(static_cast<std::size_t>(p), 1e-4);
  c.eps_lambda[0] = 1e-3;
  c.design.assign(static_cast<std::size_t>(p), DesignKind::Intercept);
  c.design[0] = DesignKind::Full;
  if (p > 1) c.design[1] = DesignKind::Full;

  auto param_index = [&](const std::string& key, const std::string& suffix) {
    for (int k = 0; k < 4; ++k)
      if (suffix == param_key(k)) {
        if (k >= p)
          throw ConfigError("config '" + key + "': family " + c.family + " has no " + suffix +
                            " parameter");
        return k;
      }
    throw ConfigError("config '" + key + "': unknown parameter '" + suffix + "'");
  };

  for (const auto& [key, v] : kv) {
    const auto dot = key.find('.');
    const std::string base = key.substr(0, dot);
    const std::string sub = dot == std::string::npos ? "" : key.substr(dot + 1);
    if (key == "family") continue;
    if (key == "name") {
      if (v.empty() || v.find(',') != std::string::npos)
        throw ConfigError("config 'name': must be nonempty without commas");
      c.name = v;
    } else if (key == "mode") {
      if (v == "online") c.mode = StudyMode::Online;
      else if (v == "batch" || v == "batch-refit") c.mode = StudyMode::Batch;
      else throw ConfigError("config 'mode': expected online or batch");
    } else if (key == "estimation") {
      if (v == "ols") c.estimation = Estimation::Ols;
      else if (v == "lasso") c.estimation = Estimation::Lasso;
      else throw ConfigError("config 'estimation': expected ols or lasso");
    } else if (key == "curvature") {
      if (v == "expected") c.curvature = Curvature::Expected;
      else if (v == "observed") c.curvature = Curvature::Observed;
      else throw ConfigError("config 'curvature': expected expected or observed");
    } else if (base == "gamma" || base == "eps_lambda") {
      const double x = detail::to_double(key, v);
      auto& target = base == "gamma" ? c.gamma : c.eps_lambda;
      if (base == "gamma" && !(x > 0.0 && x <= 1.0))
        throw ConfigError("config '" + key + "': forget factor must lie in (0, 1]");
      if (base == "eps_lambda" && !(x > 0.0 && x < 1.0))
        throw ConfigError("config '" + key + "': must lie in (0, 1)");
      if (sub.empty() || sub == "*") std::fill(target.begin(), target.end(), x);
      else target[static_cast<std::size_t>(param_index(key, sub))] = x;
    } else if (base == "design" && !sub.empty()) {
      DesignKind d;
      if (v == "full") d = DesignKind::Full;
      else if (v == "intercept") d = DesignKind::Intercept;
      else throw ConfigError("config '" + key + "': expected full or intercept");
      c.design[static_cast<std::size_t>(param_index(key, sub))] = d;
    } else if (key == "ic") {
      try {
        c.ic = ICSpec::parse(v);
      } catch (const DomainError& e) {
        throw ConfigError(std::string("config 'ic': ") + e.what());
      }
    } else if (key == "grid_count") {
      c.grid_count = static_cast<Index>(detail::to_count(key, v));
      if (c.grid_count < 1) throw ConfigError("config 'grid_count': must be positive");
    } else if (key == "eps_rss") {
      c.eps_rss = v == "inf" ? kInf : detail::to_double(key, v);
      if (!(c.eps_rss > 1.0)) throw ConfigError("config 'eps_rss': must exceed 1");
    } else if (key == "train_start") {
      c.train_start = detail::to_day(key, v);
    } else if (key == "train_end") {
      c.train_end = detail::to_day(key, v);
    } else if (key == "test_start") {
      c.test_start = detail::to_day(key, v);
    } else if (key == "test_end") {
      c.test_end = detail::to_day(key, v);
    } else if (key == "window") {
      c.window = static_cast<Index>(detail::to_count(key, v));
    } else if (key == "duplicate_own_hour") {
      c.duplicate_own_hour = detail::to_bool(key, v);
    } else if (key == "crps_factor") {
      c.crps_factor = detail::to_double(key, v);
      if (!(c.crps_factor > 0.0)) throw ConfigError("config 'crps_factor': must be positive");
    } else if (key == "is_factor") {
      if (v == "2/alpha") c.is_penalty = IntervalPenalty::TwoOverAlpha;
      else if (v == "alpha/2") c.is_penalty = IntervalPenalty::AlphaOverTwo;
      else throw ConfigError("config 'is_factor': expected 2/alpha or alpha/2");
    } else if (key == "seed") {
      c.seed = detail::to_count(key, v);
    } else if (key == "out_dir") {
      if (v.empty()) throw ConfigError("config 'out_dir': empty");
      c.out_dir = v;
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  if (c.train_end < c.train_start) throw ConfigError("config: train_end precedes train_start");
  if (!(c.train_end < c.test_start)) throw ConfigError("config: test window must follow the training window");
  if (c.test_end < c.test_start && c.test_end + std::chrono::days(1) != c.test_start)
    throw ConfigError("config: test_end precedes test_start");
  return c;
}

inline StudyConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace ogamlss::epf
