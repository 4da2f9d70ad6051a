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

#ifndef ORTHOKWS_EVALUATE_HPP_
#define ORTHOKWS_EVALUATE_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "orthokws/audio.hpp"
#include "orthokws/config.hpp"
#include "orthokws/dataset.hpp"
#include "orthokws/models.hpp"
#include "orthokws/random.hpp"

namespace orthokws {

/// One labelled waveform of the evaluation set.
struct EvalInput {
  int label = 0;
  Clip clip;
};

/// A named noise condition. An unset pool marks every cell of the set absent.
struct NoiseSet {
  std::string name;
  std::optional<NoisePool> pool;
};

struct EvalCell {
  std::string noise;  // "clean" or a noise set name
  double snr_db = std::numeric_limits<double>::infinity();
  std::optional<double> accuracy_pct;
};

struct EvalReport {
  std::vector<EvalCell> cells;  // clean first, then noise sets by SNR grid order
  double average_pct = 0.0;     // mean over cells that were evaluated
  std::uint64_t seed = 0;
  std::string checkpoint;
};

struct EvalOptions {
  std::vector<double> snr_grid = {20, 15, 10, 5, 0};
  std::size_t batch_size = 100;
  std::uint64_t seed = 0;
  std::string checkpoint;
};

/// Index of the largest logit; ties go to the lowest class.
inline std::vector<int> predict(const KwsModel& model, const std::vector<Clip>& clips,
                                std::size_t batch_size) {
  std::vector<int> out;
  out.reserve(clips.size());
  for (std::size_t s = 0; s < clips.size(); s += batch_size) {
    const std::size_t e = std::min(clips.size(), s + batch_size);
    std::vector<FeatureMap> maps;
    for (std::size_t i = s; i < e; ++i) maps.push_back(mfcc(clips[i]));
    const Tensor logits = model.forward(stack_features(maps)).logits;
    const std::size_t c = logits.shape()[1];
    auto v = logits.data();
    for (std::size_t i = 0; i < e - s; ++i) {
      const auto row = v.subspan(i * c, c);
      out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

inline double accuracy_pct(const std::vector<int>& pred, const std::vector<EvalInput>& items) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < items.size(); ++i) hit += pred[i] == items[i].label;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(items.size());
}

/// Clean accuracy and one cell per (noise set, SNR). Each cell draws its
/// noise clips and offsets from its own seeded stream, so results do not
/// depend on batch size or on which other cells are present. Items with no
/// signal energy are scored as they are.
inline EvalReport evaluate(const KwsModel& model, const std::vector<EvalInput>& items,
                           const std::vector<NoiseSet>& noise, const EvalOptions& opt) {
  if (items.empty()) throw InputError("evaluate: no items");
  if (opt.batch_size == 0) throw ConfigError("evaluate: batch size must be positive");
  EvalReport rep;
  rep.seed = opt.seed;
  rep.checkpoint = opt.checkpoint;
  std::vector<Clip> clean;
  for (const auto& it : items) clean.push_back(it.clip);
  rep.cells.push_back({"clean", std::numeric_limits<double>::infinity(),
                       accuracy_pct(predict(model, clean, opt.batch_size), items)});
  for (std::size_t s = 0; s < noise.size(); ++s) {
    for (std::size_t j = 0; j < opt.snr_grid.size(); ++j) {
      EvalCell cell{noise[s].name, opt.snr_grid[j], std::nullopt};
      const auto& pool = noise[s].pool;
      if (pool && !pool->empty()) {
        Rng rng = make_rng(opt.seed, Stream::kNoise,
                           static_cast<std::uint32_t>(s * opt.snr_grid.size() + j));
        std::uniform_int_distribution<std::size_t> pick(0, pool->size() - 1);
        std::vector<Clip> mixed;
        for (const auto& c : clean) {
          const Clip& n = pool->clip(pick(rng));
          if (rms_power(c.samples) > 0.0) {
            mixed.push_back(mix_at_snr(c, n, opt.snr_grid[j], rng).mixed);
          } else {
            mixed.push_back(c);
          }
        }
        cell.accuracy_pct = accuracy_pct(predict(model, mixed, opt.batch_size), items);
      }
      rep.cells.push_back(std::move(cell));
    }
  }
  double sum = 0;
  std::size_t n = 0;
  for (const auto& c : rep.cells) {
    if (c.accuracy_pct) {
      sum += *c.accuracy_pct;
      ++n;
    }
  }
  rep.average_pct = sum / static_cast<double>(n);
  return rep;
}

/// Loads clips for an evaluation set built by make_eval_set.
inline std::vector<EvalInput> load_eval_inputs(const DatasetIndex& index,
                                               const std::vector<EvalItem>& items,
                                               const ClipLoader& loader = load_entry) {
  std::vector<EvalInput> out;
  out.reserve(items.size());
  for (const auto& it : items) {
    if (it.entry >= 0) {
      out.push_back({it.label, loader(index.entries[static_cast<std::size_t>(it.entry)])});
    } else {
      Clip c;
      c.samples = it.samples;
      c.label = it.label;
      out.push_back({it.label, std::move(c)});
    }
  }
  return out;
}

/// One noise set per directory, named by its last path component. Sets that
/// yield no usable audio are kept without a pool.
inline std::vector<NoiseSet> load_noise_sets(const std::vector<std::string>& dirs,
                                             std::ostream& log = std::cerr) {
  std::vector<NoiseSet> sets;
  for (const auto& d : dirs) {
    auto name = std::filesystem::path(d).filename().string();
    if (name.empty()) name = std::filesystem::path(d).parent_path().filename().string();
    NoiseSet s{name, std::nullopt};
    try {
      s.pool = build_noise_pool({d}, log);
    } catch (const InputError& e) {
      log << "noise set '" << name << "' absent: " << e.what() << '\n';
    }
    sets.push_back(std::move(s));
  }
  return sets;
}

inline std::string format_pct(std::optional<double> v) {
  if (!v) return "absent";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

inline std::string format_snr(double snr) {
  return std::isinf(snr) ? "inf" : detail::format_real(snr);
}

/// Condition rows followed by an `average` row with an empty snr field.
inline std::string report_csv(const EvalReport& r) {
  std::ostringstream o;
  o << "noise,snr_db,accuracy_pct\n";
  for (const auto& c : r.cells) {
    o << c.noise << ',' << format_snr(c.snr_db) << ',' << format_pct(c.accuracy_pct) << '\n';
  }
  o << "average,," << format_pct(r.average_pct) << '\n';
  return o.str();
}

struct RepeatSummary {
  std::vector<EvalCell> mean, max;  // same layout as each report's cells
  double average_mean = 0, average_max = 0;
};

/// Per-condition mean and max over reports sharing one layout.
inline RepeatSummary summarize(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw InputError("summarize: no reports");
  RepeatSummary s;
  s.mean = s.max = reports[0].cells;
  for (std::size_t k = 0; k < s.mean.size(); ++k) {
    double sum = 0, best = -1;
    std::size_t n = 0;
    for (const auto& r : reports) {
      if (r.cells.size() != s.mean.size()) throw InputError("summarize: report layouts differ");
      if (const auto& a = r.cells[k].accuracy_pct) {
        sum += *a;
        best = std::max(best, *a);
        ++n;
      }
    }
    s.mean[k].accuracy_pct = n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
    s.max[k].accuracy_pct = n ? std::optional<double>(best) : std::nullopt;
  }
  s.average_max = -1;
  for (const auto& r : reports) {
    s.average_mean += r.average_pct / static_cast<double>(reports.size());
    s.average_max = std::max(s.average_max, r.average_pct);
  }
  return s;
}

inline std::string summary_csv(const RepeatSummary& s) {
  std::ostringstream o;
  o << "noise,snr_db,accuracy_pct_mean,accuracy_pct_max\n";
  for (std::size_t k = 0; k < s.mean.size(); ++k) {
    o << s.mean[k].noise << ',' << format_snr(s.mean[k].snr_db) << ','
      << format_pct(s.mean[k].accuracy_pct) << ',' << format_pct(s.max[k].accuracy_pct) << '\n';
  }
  o << "average,," << format_pct(s.average_mean) << ',' << format_pct(s.average_max) << '\n';
  return o.str();
}

}  // namespace orthokws

#endif  // ORTHOKWS_EVALUATE_HPP_
