// Copyright 2026 The orthokws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Flat `key = value` configuration. `#` starts a comment, blank lines are
// ignored, lists are comma separated. Reals are written with 17 significant
// digits so a written file parses back to identical bits.

#ifndef ORTHOKWS_CONFIG_HPP_
#define ORTHOKWS_CONFIG_HPP_

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "orthokws/dataset.hpp"
#include "orthokws/losses.hpp"
#include "orthokws/tensor.hpp"

namespace orthokws {

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t total_steps = 30000;
  double lr = 0.001;
  double lr_decay = 0.1;
  std::size_t lr_decay_every = 10000;
  double margin = 1.0;
  double lambda_metric = 0.25;
  double lambda_intra = 0.01;
  double lambda_ortho = 0.01;
  int power_iters = 10;
  bool ce_only = false;
  std::uint64_t seed = 0;
  std::string model = "ldy-tenet12";
  std::vector<std::string> keywords = ClassMap::default_keywords();
  std::string data_root;
  std::string index;  // optional cache written by `prepare`
  std::vector<std::string> noise_dirs;
  std::string checkpoint_dir = "checkpoints";
  std::size_t checkpoint_every = 1000;
  double silence_fraction = 0.1;
  double unknown_fraction = 0.1;
  bool augment = true;
  double time_shift_ms = 100.0;
  double noise_prob = 0.8;
  double noise_volume = 0.1;
  std::vector<double> snr_grid = {20, 15, 10, 5, 0};
  std::size_t eval_batch_size = 100;
  std::string eval_split = "test";

  LossWeights loss_weights() const { return {margin, lambda_metric, lambda_intra, lambda_ortho}; }

  AugmentPolicy augment_policy() const {
    return {silence_fraction, unknown_fraction, augment, time_shift_ms, noise_prob, noise_volume};
  }

  /// Learning rate in effect for 1-based `step`: lr * decay^floor((step-1) / every).
  double lr_at(std::size_t step) const {
    double r = lr;
    if (lr_decay_every == 0) return r;
    for (std::size_t k = (step - 1) / lr_decay_every; k > 0; --k) r *= lr_decay;
    return r;
  }

  bool operator==(const TrainConfig&) const = default;
};

namespace detail {

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || (errno == ERANGE && std::isinf(d))) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return d;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE || v[0] == '-') {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return n;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

}  // namespace detail

inline std::string write_config(const TrainConfig& c) {
  using detail::format_real;
  std::ostringstream o;
  std::vector<std::string> snr;
  for (double s : c.snr_grid) snr.push_back(format_real(s));
  o << "batch_size = " << c.batch_size << '\n'
    << "total_steps = " << c.total_steps << '\n'
    << "lr = " << format_real(c.lr) << '\n'
    << "lr_decay = " << format_real(c.lr_decay) << '\n'
    << "lr_decay_every = " << c.lr_decay_every << '\n'
    << "margin = " << format_real(c.margin) << '\n'
    << "lambda_metric = " << format_real(c.lambda_metric) << '\n'
    << "lambda_intra = " << format_real(c.lambda_intra) << '\n'
    << "lambda_ortho = " << format_real(c.lambda_ortho) << '\n'
    << "power_iters = " << c.power_iters << '\n'
    << "ce_only = " << (c.ce_only ? "true" : "false") << '\n'
    << "seed = " << c.seed << '\n'
    << "model = " << c.model << '\n'
    << "keywords = " << detail::join(c.keywords) << '\n'
    << "data_root = " << c.data_root << '\n'
    << "index = " << c.index << '\n'
    << "noise_dirs = " << detail::join(c.noise_dirs) << '\n'
    << "checkpoint_dir = " << c.checkpoint_dir << '\n'
    << "checkpoint_every = " << c.checkpoint_every << '\n'
    << "silence_fraction = " << format_real(c.silence_fraction) << '\n'
    << "unknown_fraction = " << format_real(c.unknown_fraction) << '\n'
    << "augment = " << (c.augment ? "true" : "false") << '\n'
    << "time_shift_ms = " << format_real(c.time_shift_ms) << '\n'
    << "noise_prob = " << format_real(c.noise_prob) << '\n'
    << "noise_volume = " << format_real(c.noise_volume) << '\n'
    << "snr_grid = " << detail::join(snr) << '\n'
    << "eval_batch_size = " << c.eval_batch_size << '\n'
    << "eval_split = " << c.eval_split << '\n';
  return o.str();
}

inline void validate_config(const TrainConfig& c) {
  if (c.batch_size == 0) throw ConfigError("config: batch_size must be positive");
  if (!(c.lr > 0)) throw ConfigError("config: lr must be positive");
  if (c.power_iters < 1) throw ConfigError("config: power_iters must be at least 1");
  if (c.keywords.empty()) throw ConfigError("config: keywords must not be empty");
  if (c.silence_fraction < 0 || c.unknown_fraction < 0 ||
      c.silence_fraction + c.unknown_fraction > 1) {
    throw ConfigError("config: silence_fraction + unknown_fraction must lie in [0, 1]");
  }
  if (c.eval_batch_size == 0) throw ConfigError("config: eval_batch_size must be positive");
  if (c.eval_split != "train" && c.eval_split != "val" && c.eval_split != "test") {
    throw ConfigError("config: eval_split must be train, val or test");
  }
}

/// Keys not present keep their defaults; unknown keys are an error.
inline TrainConfig parse_config(const std::string& text) {
  using namespace detail;
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (k == "batch_size") c.batch_size = parse_uint(k, v);
    else if (k == "total_steps") c.total_steps = parse_uint(k, v);
    else if (k == "lr") c.lr = parse_real(k, v);
    else if (k == "lr_decay") c.lr_decay = parse_real(k, v);
    else if (k == "lr_decay_every") c.lr_decay_every = parse_uint(k, v);
    else if (k == "margin") c.margin = parse_real(k, v);
    else if (k == "lambda_metric") c.lambda_metric = parse_real(k, v);
    else if (k == "lambda_intra") c.lambda_intra = parse_real(k, v);
    else if (k == "lambda_ortho") c.lambda_ortho = parse_real(k, v);
    else if (k == "power_iters") c.power_iters = static_cast<int>(parse_uint(k, v));
    else if (k == "ce_only") c.ce_only = parse_bool(k, v);
    else if (k == "seed") c.seed = parse_uint(k, v);
    else if (k == "model") c.model = v;
    else if (k == "keywords") c.keywords = split_list(v);
    else if (k == "data_root") c.data_root = v;
    else if (k == "index") c.index = v;
    else if (k == "noise_dirs") c.noise_dirs = split_list(v);
    else if (k == "checkpoint_dir") c.checkpoint_dir = v;
    else if (k == "checkpoint_every") c.checkpoint_every = parse_uint(k, v);
    else if (k == "silence_fraction") c.silence_fraction = parse_real(k, v);
    else if (k == "unknown_fraction") c.unknown_fraction = parse_real(k, v);
    else if (k == "augment") c.augment = parse_bool(k, v);
    else if (k == "time_shift_ms") c.time_shift_ms = parse_real(k, v);
    else if (k == "noise_prob") c.noise_prob = parse_real(k, v);
    else if (k == "noise_volume") c.noise_volume = parse_real(k, v);
    else if (k == "snr_grid") {
      c.snr_grid.clear();
      for (const auto& s : split_list(v)) c.snr_grid.push_back(parse_real(k, s));
    } else if (k == "eval_batch_size") c.eval_batch_size = parse_uint(k, v);
    else if (k == "eval_split") c.eval_split = v;
    else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + k + "'");
  }
  validate_config(c);
  return c;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

inline void save_config(const TrainConfig& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write config '" + path + "'");
  f << write_config(c);
}

}  // namespace orthokws

#endif  // ORTHOKWS_CONFIG_HPP_
