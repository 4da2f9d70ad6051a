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

#ifndef ORTHOKWS_DATASET_HPP_
#define ORTHOKWS_DATASET_HPP_

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "orthokws/audio.hpp"
#include "orthokws/random.hpp"
#include "orthokws/tensor.hpp"

namespace orthokws {

class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a split or pool has nothing to draw from.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Split { kTrain, kVal, kTest };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw IngestionError("unknown split '" + s + "'");
}

inline constexpr const char* kBackgroundNoiseDir = "_background_noise_";

// ---------------------------------------------------------------------------
// Class map

/// Target keywords take ids 0..K-1, then unknown = K and silence = K+1.
class ClassMap {
 public:
  ClassMap() : ClassMap(default_keywords()) {}
  explicit ClassMap(std::vector<std::string> keywords) : keywords_(std::move(keywords)) {
    if (keywords_.empty()) throw ConfigError("class map needs at least one keyword");
    for (std::size_t i = 0; i < keywords_.size(); ++i) {
      if (!ids_.emplace(keywords_[i], static_cast<int>(i)).second) {
        throw ConfigError("duplicate keyword '" + keywords_[i] + "'");
      }
    }
  }

  static std::vector<std::string> default_keywords() {
    return {"yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go"};
  }

  int num_keywords() const { return static_cast<int>(keywords_.size()); }
  int unknown_id() const { return num_keywords(); }
  int silence_id() const { return num_keywords() + 1; }
  int num_classes() const { return num_keywords() + 2; }
  const std::vector<std::string>& keywords() const { return keywords_; }

  /// Class id of a source word; anything outside the target set is unknown.
  int label_of(const std::string& word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? unknown_id() : it->second;
  }

  std::string name_of(int id) const {
    if (id >= 0 && id < num_keywords()) return keywords_[static_cast<std::size_t>(id)];
    if (id == unknown_id()) return "unknown";
    if (id == silence_id()) return "silence";
    throw std::out_of_range("class id " + std::to_string(id));
  }

 private:
  std::vector<std::string> keywords_;
  std::map<std::string, int> ids_;
};

// ---------------------------------------------------------------------------
// Hash split

/// Bucket in [0, 100] from the file name with everything from `_nohash_`
/// on removed, so all takes of one speaker share a bucket.
inline double split_percentage(const std::string& file_name) {
  std::string stem = std::filesystem::path(file_name).filename().string();
  if (auto p = stem.find("_nohash_"); p != std::string::npos) stem.resize(p);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(stem.data(), stem.size(), md, &len, EVP_sha1(), nullptr) != 1 || len < 4) {
    throw std::runtime_error("sha1 digest failed");
  }
  constexpr std::uint64_t kMaxPerClass = (1u << 27) - 1;
  std::uint64_t tail = 0;
  for (unsigned int i = len - 4; i < len; ++i) tail = (tail << 8) | md[i];
  const std::uint64_t bucket = tail % (kMaxPerClass + 1);
  return static_cast<double>(bucket) * (100.0 / static_cast<double>(kMaxPerClass));
}

inline Split assign_split(const std::string& file_name, double val_pct = 10.0,
                          double test_pct = 10.0) {
  const double p = split_percentage(file_name);
  if (p < val_pct) return Split::kVal;
  if (p < val_pct + test_pct) return Split::kTest;
  return Split::kTrain;
}

// ---------------------------------------------------------------------------
// Index

struct IndexEntry {
  std::string path;
  std::string word;  // source directory name
  Split split = Split::kTrain;
};

struct DatasetIndex {
  std::vector<IndexEntry> entries;  // sorted by path
  std::vector<std::string> noise_files;

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(std::count_if(
        entries.begin(), entries.end(), [s](const IndexEntry& e) { return e.split == s; }));
  }
};

inline DatasetIndex scan_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw IngestionError("dataset root '" + root + "' is not a directory");
  }
  DatasetIndex index;
  std::vector<std::string> seen;
  for (const auto& dir : fs::directory_iterator(root)) {
    const std::string name = dir.path().filename().string();
    seen.push_back(dir.is_directory() ? name + "/" : name);
    if (!dir.is_directory()) continue;
    const bool noise = name == kBackgroundNoiseDir;
    if (!noise && name.starts_with('_')) continue;
    for (const auto& f : fs::directory_iterator(dir.path())) {
      if (!f.is_regular_file() || f.path().extension() != ".wav") continue;
      if (noise) {
        index.noise_files.push_back(f.path().string());
      } else {
        index.entries.push_back(
            {f.path().string(), name, assign_split(f.path().filename().string())});
      }
    }
  }
  if (index.entries.empty()) {
    std::sort(seen.begin(), seen.end());
    std::string listing;
    for (const auto& s : seen) listing += (listing.empty() ? "" : ", ") + s;
    throw IngestionError("no word directories with .wav files under '" + root + "'; found: [" +
                         listing + "]");
  }
  std::sort(index.entries.begin(), index.entries.end(),
            [](const IndexEntry& a, const IndexEntry& b) { return a.path < b.path; });
  std::sort(index.noise_files.begin(), index.noise_files.end());
  return index;
}

/// `path<TAB>word<TAB>split` per entry. Background noise files are listed
/// with the word `_background_noise_` and split `-`.
inline void write_index(const DatasetIndex& index, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write index '" + path + "'");
  for (const auto& e : index.entries)
    out << e.path << '\t' << e.word << '\t' << split_name(e.split) << '\n';
  for (const auto& n : index.noise_files) out << n << '\t' << kBackgroundNoiseDir << "\t-\n";
}

inline DatasetIndex read_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot read index '" + path + "'");
  DatasetIndex index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw IngestionError(path + ":" + std::to_string(lineno) +
                           ": expected 3 tab-separated fields");
    }
    std::string file = line.substr(0, t1), word = line.substr(t1 + 1, t2 - t1 - 1),
                split = line.substr(t2 + 1);
    if (word == kBackgroundNoiseDir) {
      index.noise_files.push_back(file);
    } else {
      index.entries.push_back({file, word, parse_split(split)});
    }
  }
  return index;
}

// ---------------------------------------------------------------------------
// Noise pools

class NoisePool {
 public:
  void add(std::string name, Clip clip) {
    names_.push_back(std::move(name));
    clips_.push_back(std::move(clip));
  }
  bool empty() const { return clips_.empty(); }
  std::size_t size() const { return clips_.size(); }
  const Clip& clip(std::size_t i) const { return clips_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }

  /// n samples of clip i from offset, wrapping around short clips.
  std::vector<double> crop(std::size_t i, std::size_t offset, std::size_t n = kClipSamples) const {
    return noise_segment(clips_.at(i).samples, offset, n);
  }

  /// Random clip and offset; the offset keeps the crop inside the clip when
  /// the clip is long enough.
  template <typename R>
  std::pair<std::size_t, std::size_t> pick(R& rng, std::size_t n = kClipSamples) const {
    if (empty()) throw InputError("noise pool is empty");
    std::uniform_int_distribution<std::size_t> which(0, clips_.size() - 1);
    const std::size_t i = which(rng);
    const std::size_t len = clips_[i].samples.size();
    std::uniform_int_distribution<std::size_t> at(0, len > n ? len - n : len - 1);
    return {i, at(rng)};
  }

  template <typename R>
  std::vector<double> random_crop(R& rng, std::size_t n = kClipSamples) const {
    auto [i, off] = pick(rng, n);
    return crop(i, off, n);
  }

 private:
  std::vector<std::string> names_;
  std::vector<Clip> clips_;
};

/// Loads every .wav in the given files or directories. Files that cannot be
/// decoded or are not 16 kHz are reported on `log` and skipped.
inline NoisePool build_noise_pool(const std::vector<std::string>& sources,
                                  std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& s : sources) {
    std::error_code ec;
    if (fs::is_directory(s, ec)) {
      for (const auto& f : fs::directory_iterator(s)) {
        if (f.is_regular_file() && f.path().extension() == ".wav")
          files.push_back(f.path().string());
      }
    } else if (fs::is_regular_file(s, ec)) {
      files.push_back(s);
    } else {
      log << "noise: skipping missing source " << s << '\n';
    }
  }
  std::sort(files.begin(), files.end());
  NoisePool pool;
  for (const auto& f : files) {
    try {
      Clip c = read_wav(f);
      if (c.sample_rate != kSampleRate) {
        log << "noise: skipping " << f << " (" << c.sample_rate << " Hz)\n";
        continue;
      }
      if (c.samples.empty()) {
        log << "noise: skipping empty " << f << '\n';
        continue;
      }
      pool.add(f, std::move(c));
    } catch (const AudioInputError& e) {
      log << "noise: skipping " << f << ": " << e.what() << '\n';
    }
  }
  if (pool.empty()) throw InputError("noise pool is empty");
  return pool;
}

// ---------------------------------------------------------------------------
// Batches

struct AugmentPolicy {
  double silence_fraction = 0.1;
  double unknown_fraction = 0.1;
  bool augment = true;
  double time_shift_ms = 100.0;
  double noise_prob = 0.8;
  double noise_volume = 0.1;
};

struct Batch {
  Tensor features;  // [M x 40 x T]
  std::vector<int> labels;
};

/// Every random choice for one example, fixed before any audio is touched.
struct SlotPlan {
  int label = 0;
  std::ptrdiff_t entry = -1;  // none for silence
  std::ptrdiff_t shift = 0;
  std::ptrdiff_t noise_clip = -1;  // none means no background
  std::size_t noise_offset = 0;
  double noise_volume = 0.0;
};

/// Draws a class for one slot: silence, then unknown, then uniform keywords.
template <typename R>
int draw_slot_class(const ClassMap& map, const AugmentPolicy& p, R& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  if (r < p.silence_fraction) return map.silence_id();
  if (r < p.silence_fraction + p.unknown_fraction) return map.unknown_id();
  std::uniform_int_distribution<int> kw(0, map.num_keywords() - 1);
  return kw(rng);
}

/// Stacks feature maps of equal shape into [M x C x T].
inline Tensor stack_features(const std::vector<FeatureMap>& maps) {
  if (maps.empty()) throw InputError("stack_features: no maps");
  const std::size_t c = maps[0].n_coeffs, t = maps[0].n_frames;
  std::vector<double> data;
  data.reserve(maps.size() * c * t);
  for (const auto& m : maps) {
    if (m.n_coeffs != c || m.n_frames != t) throw DimensionError("stack_features: ragged maps");
    data.insert(data.end(), m.values.begin(), m.values.end());
  }
  return Tensor({maps.size(), c, t}, std::move(data));
}

using ClipLoader = std::function<Clip(const IndexEntry&)>;

inline Clip load_entry(const IndexEntry& e) { return load_clip(e.path); }

class BatchSampler {
 public:
  BatchSampler(const DatasetIndex& index, ClassMap map, Split split, AugmentPolicy policy,
               const NoisePool* background, ClipLoader loader = load_entry)
      : index_(index),
        map_(std::move(map)),
        policy_(policy),
        background_(background),
        loader_(std::move(loader)),
        keyword_entries_(static_cast<std::size_t>(map_.num_keywords())) {
    std::map<std::string, std::vector<std::size_t>> unknown;
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
      const auto& e = index.entries[i];
      if (e.split != split) continue;
      const int id = map_.label_of(e.word);
      if (id == map_.unknown_id()) {
        unknown[e.word].push_back(i);
      } else {
        keyword_entries_[static_cast<std::size_t>(id)].push_back(i);
      }
    }
    for (auto& [w, v] : unknown) unknown_words_.push_back(std::move(v));
    for (int k = 0; k < map_.num_keywords(); ++k) {
      if (keyword_entries_[static_cast<std::size_t>(k)].empty()) {
        throw InputError(std::string("split '") + split_name(split) + "' has no clips of '" +
                         map_.keywords()[static_cast<std::size_t>(k)] + "'");
      }
    }
    if (policy_.unknown_fraction > 0 && unknown_words_.empty()) {
      throw InputError(std::string("split '") + split_name(split) + "' has no non-target words");
    }
    const bool needs_noise =
        policy_.silence_fraction > 0 || (policy_.augment && policy_.noise_prob > 0);
    if (needs_noise && (background_ == nullptr || background_->empty())) {
      throw InputError("silence slots or noise augmentation need a background noise pool");
    }
  }

  const ClassMap& class_map() const { return map_; }

  template <typename R>
  std::vector<SlotPlan> plan(std::size_t m, R& rng) const {
    std::vector<SlotPlan> slots(m);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto max_shift = static_cast<std::ptrdiff_t>(
        std::floor(policy_.time_shift_ms * kSampleRate / 1000.0));
    for (auto& s : slots) {
      s.label = draw_slot_class(map_, policy_, rng);
      if (s.label == map_.silence_id()) {
        std::tie(s.noise_clip, s.noise_offset) = pick_noise(rng);
        s.noise_volume = u(rng);
        continue;
      }
      const std::vector<std::size_t>* pool;
      if (s.label == map_.unknown_id()) {
        std::uniform_int_distribution<std::size_t> w(0, unknown_words_.size() - 1);
        pool = &unknown_words_[w(rng)];
      } else {
        pool = &keyword_entries_[static_cast<std::size_t>(s.label)];
      }
      std::uniform_int_distribution<std::size_t> pick(0, pool->size() - 1);
      s.entry = static_cast<std::ptrdiff_t>((*pool)[pick(rng)]);
      if (!policy_.augment) continue;
      if (max_shift > 0) {
        std::uniform_int_distribution<std::ptrdiff_t> sh(-max_shift, max_shift);
        s.shift = sh(rng);
      }
      if (policy_.noise_prob > 0 && u(rng) < policy_.noise_prob) {
        std::tie(s.noise_clip, s.noise_offset) = pick_noise(rng);
        s.noise_volume = u(rng) * policy_.noise_volume;
      }
    }
    return slots;
  }

  Clip render_clip(const SlotPlan& s) const {
    Clip c;
    if (s.entry >= 0) {
      c = shift_samples(loader_(index_.entries[static_cast<std::size_t>(s.entry)]), s.shift);
    } else {
      c.samples.assign(kClipSamples, 0.0);
    }
    c.label = s.label;
    if (s.noise_clip >= 0) {
      const auto noise = background_->crop(static_cast<std::size_t>(s.noise_clip), s.noise_offset,
                                           c.samples.size());
      for (std::size_t i = 0; i < c.samples.size(); ++i) {
        c.samples[i] = std::clamp(c.samples[i] + s.noise_volume * noise[i], -1.0, 1.0);
      }
    }
    return c;
  }

  Batch render(const std::vector<SlotPlan>& slots) const {
    std::vector<FeatureMap> maps;
    maps.reserve(slots.size());
    Batch b;
    for (const auto& s : slots) {
      maps.push_back(mfcc(render_clip(s)));
      b.labels.push_back(s.label);
    }
    b.features = stack_features(maps);
    return b;
  }

  template <typename R>
  Batch sample(std::size_t m, R& rng) const {
    return render(plan(m, rng));
  }

 private:
  template <typename R>
  std::pair<std::ptrdiff_t, std::size_t> pick_noise(R& rng) const {
    auto [i, off] = background_->pick(rng);
    return {static_cast<std::ptrdiff_t>(i), off};
  }

  const DatasetIndex& index_;
  ClassMap map_;
  AugmentPolicy policy_;
  const NoisePool* background_;
  ClipLoader loader_;
  std::vector<std::vector<std::size_t>> keyword_entries_;
  std::vector<std::vector<std::size_t>> unknown_words_;
};

template <typename R>
Batch make_batch(const DatasetIndex& index, const ClassMap& map, Split split, std::size_t m,
                 R& rng, const AugmentPolicy& aug, const NoisePool* background = nullptr) {
  return BatchSampler(index, map, split, aug, background).sample(m, rng);
}

// ---------------------------------------------------------------------------
// Evaluation sets

struct EvalItem {
  int label = 0;
  std::ptrdiff_t entry = -1;
  std::vector<double> samples;  // filled for silence items only
};

/// All keyword clips of the split, plus unknown and silence items sized as
/// fractions of the keyword count. Unknown clips are a seeded sample of the
/// non-target words; silence items are background crops at a random volume,
/// or digital silence when no background is available.
inline std::vector<EvalItem> make_eval_set(const DatasetIndex& index, const ClassMap& map,
                                           Split split, const AugmentPolicy& policy,
                                           const NoisePool* background, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::kEval);
  std::vector<EvalItem> items;
  std::vector<std::size_t> unknown;
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    const auto& e = index.entries[i];
    if (e.split != split) continue;
    const int id = map.label_of(e.word);
    if (id == map.unknown_id()) {
      unknown.push_back(i);
    } else {
      items.push_back({id, static_cast<std::ptrdiff_t>(i), {}});
    }
  }
  if (items.empty()) throw InputError(std::string("split '") + split_name(split) + "' is empty");
  const double n = static_cast<double>(items.size());
  std::shuffle(unknown.begin(), unknown.end(), rng);
  const auto n_unknown =
      std::min(unknown.size(), static_cast<std::size_t>(std::ceil(n * policy.unknown_fraction)));
  for (std::size_t i = 0; i < n_unknown; ++i) {
    items.push_back({map.unknown_id(), static_cast<std::ptrdiff_t>(unknown[i]), {}});
  }
  const auto n_silence = static_cast<std::size_t>(std::ceil(n * policy.silence_fraction));
  std::uniform_real_distribution<double> vol(0.0, 1.0);
  for (std::size_t i = 0; i < n_silence; ++i) {
    EvalItem it{map.silence_id(), -1, std::vector<double>(kClipSamples, 0.0)};
    if (background != nullptr && !background->empty()) {
      it.samples = background->random_crop(rng);
      const double v = vol(rng);
      for (double& s : it.samples) s *= v;
    }
    items.push_back(std::move(it));
  }
  return items;
}

}  // namespace orthokws

#endif  // ORTHOKWS_DATASET_HPP_
