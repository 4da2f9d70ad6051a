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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "orthokws/dataset.hpp"

namespace orthokws {
namespace {

namespace fs = std::filesystem;

Clip tone_clip(double hz, std::size_t n = kClipSamples, double amp = 0.3) {
  Clip c;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] =
        amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / kSampleRate);
  }
  return c;
}

std::string speaker(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(i * 2654435761u));
  return buf;
}

class Corpus : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "orthokws_corpus_test";
    fs::remove_all(root_);
    const std::map<std::string, double> words = {
        {"yes", 300}, {"no", 500}, {"bed", 700}, {"cat", 900}, {"tree", 1100}};
    for (const auto& [w, hz] : words) {
      fs::create_directories(root_ / w);
      for (int s = 0; s < 40; ++s) {
        write_wav((root_ / w / (speaker(s) + "_nohash_0.wav")).string(), tone_clip(hz + s));
      }
    }
    fs::create_directories(root_ / kBackgroundNoiseDir);
    Clip noise;
    noise.samples.resize(10 * kClipSamples);
    Rng rng(3);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (double& v : noise.samples) v = u(rng);
    write_wav((root_ / kBackgroundNoiseDir / "white.wav").string(), noise);
    std::ofstream(root_ / kBackgroundNoiseDir / "README.md") << "not audio\n";
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static NoisePool background(const DatasetIndex& index) {
    std::ostringstream log;
    return build_noise_pool(index.noise_files, log);
  }

  static fs::path root_;
};

fs::path Corpus::root_;

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(SplitHash, MatchesReferenceBuckets) {
  // Reference values from SHA-1 of the stem before `_nohash_`, low 27 bits.
  EXPECT_NEAR(split_percentage("0a7c2a8d_nohash_0.wav"), 56.836387193474074, 1e-12);
  EXPECT_NEAR(split_percentage("ffd2ba2f_nohash_1.wav"), 55.30171137527906, 1e-12);
  EXPECT_NEAR(split_percentage("00000000_nohash_0.wav"), 9.555729549793373, 1e-12);
  EXPECT_NEAR(split_percentage("nofile.wav"), 77.91761813996447, 1e-12);
  EXPECT_EQ(assign_split("00000000_nohash_0.wav"), Split::kVal);
  EXPECT_EQ(assign_split("9e3779b1_nohash_0.wav"), Split::kVal);
  EXPECT_EQ(assign_split("be1e0823_nohash_0.wav"), Split::kTest);
  EXPECT_EQ(assign_split("c6ef3620_nohash_0.wav"), Split::kTest);
  EXPECT_EQ(assign_split("b5cf6ea8_nohash_0.wav"), Split::kTrain);
}

TEST(SplitHash, SpeakerTakesShareASplit) {
  for (int s = 0; s < 200; ++s) {
    const auto a = assign_split(speaker(s) + "_nohash_0.wav");
    for (int take = 1; take < 5; ++take) {
      EXPECT_EQ(assign_split(speaker(s) + "_nohash_" + std::to_string(take) + ".wav"), a);
    }
    EXPECT_EQ(assign_split("/some/dir/" + speaker(s) + "_nohash_0.wav"), a);
  }
}

TEST(SplitHash, FractionsNearEightyTenTen) {
  std::map<Split, int> n;
  const int total = 40000;
  for (int s = 0; s < total; ++s) ++n[assign_split(speaker(s) + "_nohash_0.wav")];
  EXPECT_NEAR(n[Split::kTrain] / double(total), 0.8, 0.015);
  EXPECT_NEAR(n[Split::kVal] / double(total), 0.1, 0.015);
  EXPECT_NEAR(n[Split::kTest] / double(total), 0.1, 0.015);
}

TEST(ClassMapTest, DefaultAndCustom) {
  ClassMap m;
  EXPECT_EQ(m.num_classes(), 12);
  EXPECT_EQ(m.label_of("yes"), 0);
  EXPECT_EQ(m.label_of("go"), 9);
  EXPECT_EQ(m.label_of("marvin"), 10);
  EXPECT_EQ(m.silence_id(), 11);
  EXPECT_EQ(m.name_of(11), "silence");
  ClassMap two({"yes", "no"});
  EXPECT_EQ(two.num_classes(), 4);
  EXPECT_EQ(two.label_of("up"), two.unknown_id());
  EXPECT_THROW(ClassMap({"a", "a"}), ConfigError);
}

TEST_F(Corpus, ScanIsStableAndDisjoint) {
  DatasetIndex a = scan_dataset(root_.string());
  DatasetIndex b = scan_dataset(root_.string());
  ASSERT_EQ(a.entries.size(), 200u);
  EXPECT_EQ(a.noise_files.size(), 1u);
  std::set<std::string> paths;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].path, b.entries[i].path);
    EXPECT_EQ(a.entries[i].split, b.entries[i].split);
    EXPECT_TRUE(paths.insert(a.entries[i].path).second);
    EXPECT_NE(a.entries[i].word, kBackgroundNoiseDir);
  }
  EXPECT_GT(a.count(Split::kTrain), 0u);
}

TEST_F(Corpus, AddingUnrelatedFilesKeepsAssignments) {
  DatasetIndex before = scan_dataset(root_.string());
  fs::create_directories(root_ / "wow");
  write_wav((root_ / "wow" / "deadbeef_nohash_0.wav").string(), tone_clip(200));
  std::ofstream(root_ / "LICENSE") << "x\n";
  DatasetIndex after = scan_dataset(root_.string());
  fs::remove_all(root_ / "wow");
  fs::remove(root_ / "LICENSE");
  std::map<std::string, Split> split_of;
  for (const auto& e : after.entries) split_of[e.path] = e.split;
  EXPECT_EQ(after.entries.size(), before.entries.size() + 1);
  for (const auto& e : before.entries) EXPECT_EQ(split_of.at(e.path), e.split);
}

TEST_F(Corpus, IndexCacheRoundTrip) {
  DatasetIndex a = scan_dataset(root_.string());
  const auto path = fs::temp_directory_path() / "orthokws_index.tsv";
  write_index(a, path.string());
  DatasetIndex b = read_index(path.string());
  fs::remove(path);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].path, b.entries[i].path);
    EXPECT_EQ(a.entries[i].word, b.entries[i].word);
    EXPECT_EQ(a.entries[i].split, b.entries[i].split);
  }
  EXPECT_EQ(a.noise_files, b.noise_files);
}

TEST(Scan, ErrorsListWhatWasFound) {
  EXPECT_THROW(scan_dataset("/nonexistent/orthokws"), IngestionError);
  const auto dir = fs::temp_directory_path() / "orthokws_empty_root";
  fs::remove_all(dir);
  fs::create_directories(dir / "docs");
  std::ofstream(dir / "notes.txt") << "hello\n";
  try {
    scan_dataset(dir.string());
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("notes.txt"), std::string::npos) << msg;
    EXPECT_NE(msg.find("docs/"), std::string::npos) << msg;
  }
  fs::remove_all(dir);
}

TEST_F(Corpus, NonTargetWordsAreUnknown) {
  DatasetIndex index = scan_dataset(root_.string());
  ClassMap map({"yes", "no"});
  AugmentPolicy p;
  p.silence_fraction = 0;
  p.unknown_fraction = 1.0;
  p.augment = false;
  BatchSampler s(index, map, Split::kTrain, p, nullptr);
  Rng rng(1);
  std::set<std::string> words;
  for (const auto& slot : s.plan(200, rng)) {
    EXPECT_EQ(slot.label, map.unknown_id());
    words.insert(index.entries[static_cast<std::size_t>(slot.entry)].word);
  }
  EXPECT_EQ(words, (std::set<std::string>{"bed", "cat", "tree"}));
}

TEST_F(Corpus, ClassFrequenciesOverTenThousandBatches) {
  DatasetIndex index = scan_dataset(root_.string());
  NoisePool bg = background(index);
  ClassMap map({"yes", "no"});
  AugmentPolicy p;
  BatchSampler s(index, map, Split::kTrain, p, &bg);
  Rng rng(11);
  std::vector<double> count(static_cast<std::size_t>(map.num_classes()), 0.0);
  const int batches = 10000, m = 100;
  for (int b = 0; b < batches; ++b) {
    for (const auto& slot : s.plan(m, rng)) count[static_cast<std::size_t>(slot.label)] += 1;
  }
  const double total = double(batches) * m;
  EXPECT_NEAR(count[0] / total, 0.4, 0.02);
  EXPECT_NEAR(count[1] / total, 0.4, 0.02);
  EXPECT_NEAR(count[2] / total, 0.1, 0.02);
  EXPECT_NEAR(count[3] / total, 0.1, 0.02);
}

TEST(SlotClass, TwelveClassFrequencies) {
  ClassMap map;
  AugmentPolicy p;
  Rng rng(12);
  std::vector<double> count(12, 0.0);
  const int n = 10000 * 100;
  for (int i = 0; i < n; ++i) count[static_cast<std::size_t>(draw_slot_class(map, p, rng))] += 1;
  for (int k = 0; k < 10; ++k) EXPECT_NEAR(count[static_cast<std::size_t>(k)] / n, 0.08, 0.02);
  EXPECT_NEAR(count[10] / n, 0.1, 0.02);
  EXPECT_NEAR(count[11] / n, 0.1, 0.02);
}

TEST_F(Corpus, NoSilenceWhenFractionZero) {
  DatasetIndex index = scan_dataset(root_.string());
  AugmentPolicy p;
  p.augment = false;
  p.silence_fraction = 0;
  Rng rng(2);
  ClassMap map({"yes", "no"});
  Batch b = make_batch(index, map, Split::kTrain, 64, rng, p);
  EXPECT_EQ(b.features.shape(), (Shape{64, 40, 98}));
  for (int l : b.labels) {
    EXPECT_GE(l, 0);
    EXPECT_LT(l, map.silence_id());
  }
}

TEST_F(Corpus, ZeroVolumeSilenceIsConstant) {
  DatasetIndex index = scan_dataset(root_.string());
  NoisePool bg = background(index);
  ClassMap map({"yes", "no"});
  BatchSampler s(index, map, Split::kTrain, AugmentPolicy{}, &bg);
  SlotPlan slot;
  slot.label = map.silence_id();
  slot.noise_clip = 0;
  slot.noise_volume = 0.0;
  FeatureMap fm = mfcc(s.render_clip(slot));
  for (std::size_t k = 0; k < fm.n_coeffs; ++k) {
    for (std::size_t t = 1; t < fm.n_frames; ++t) EXPECT_EQ(fm.at(k, t), fm.at(k, 0));
  }
}

TEST_F(Corpus, SeededBatchesAreIdentical) {
  DatasetIndex index = scan_dataset(root_.string());
  NoisePool bg = background(index);
  ClassMap map({"yes", "no"});
  BatchSampler s(index, map, Split::kTrain, AugmentPolicy{}, &bg);
  Rng r1(77), r2(77);
  Batch a = s.sample(16, r1), b = s.sample(16, r2);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(values(a.features), values(b.features));
  Batch c = s.sample(16, r1);
  EXPECT_NE(values(a.features), values(c.features));
}

TEST_F(Corpus, AugmentedSlotsStayInRange) {
  DatasetIndex index = scan_dataset(root_.string());
  NoisePool bg = background(index);
  ClassMap map({"yes", "no"});
  BatchSampler s(index, map, Split::kTrain, AugmentPolicy{}, &bg);
  Rng rng(5);
  int noisy = 0, speech = 0;
  for (const auto& slot : s.plan(2000, rng)) {
    if (slot.label == map.silence_id()) {
      EXPECT_GE(slot.noise_volume, 0.0);
      EXPECT_LE(slot.noise_volume, 1.0);
      continue;
    }
    ++speech;
    EXPECT_LE(std::abs(slot.shift), 1600);
    if (slot.noise_clip >= 0) {
      ++noisy;
      EXPECT_LE(slot.noise_volume, 0.1);
    }
  }
  EXPECT_NEAR(noisy / double(speech), 0.8, 0.04);
}

TEST_F(Corpus, MissingNoisePoolIsAnError) {
  DatasetIndex index = scan_dataset(root_.string());
  EXPECT_THROW(
      BatchSampler(index, ClassMap({"yes", "no"}), Split::kTrain, AugmentPolicy{}, nullptr),
      InputError);
  EXPECT_THROW(
      BatchSampler(index, ClassMap({"yes", "up"}), Split::kTrain, AugmentPolicy{}, nullptr),
      InputError);
}

TEST_F(Corpus, NoisePoolCrops) {
  DatasetIndex index = scan_dataset(root_.string());
  std::ostringstream log;
  std::vector<std::string> sources = {(root_ / kBackgroundNoiseDir).string(), "/nonexistent.wav"};
  std::ofstream(root_ / "broken.wav") << "RIFF junk";
  sources.push_back((root_ / "broken.wav").string());
  NoisePool pool = build_noise_pool(sources, log);
  fs::remove(root_ / "broken.wav");
  EXPECT_EQ(pool.size(), 1u);
  EXPECT_NE(log.str().find("broken.wav"), std::string::npos);
  EXPECT_NE(log.str().find("/nonexistent.wav"), std::string::npos);
  Rng rng(9);
  auto [i1, o1] = pool.pick(rng);
  auto [i2, o2] = pool.pick(rng);
  EXPECT_NE(o1, o2);
  EXPECT_LE(o1 + kClipSamples, pool.clip(0).samples.size());
  auto crop = pool.crop(i1, o1);
  ASSERT_EQ(crop.size(), kClipSamples);
  const auto& src = pool.clip(0).samples;
  std::vector<double> region(src.begin() + static_cast<std::ptrdiff_t>(o1),
                             src.begin() + static_cast<std::ptrdiff_t>(o1 + kClipSamples));
  EXPECT_EQ(rms_power(crop), rms_power(region));
  std::ostringstream quiet;
  EXPECT_THROW(build_noise_pool({}, quiet), InputError);
}

TEST_F(Corpus, EvalSetComposition) {
  DatasetIndex index = scan_dataset(root_.string());
  NoisePool bg = background(index);
  ClassMap map({"yes", "no"});
  AugmentPolicy p;
  auto items = make_eval_set(index, map, Split::kTrain, p, &bg, 4);
  std::map<int, int> n;
  for (const auto& it : items) ++n[it.label];
  const int kw = n[0] + n[1];
  EXPECT_EQ(n[map.unknown_id()], static_cast<int>(std::ceil(kw * 0.1)));
  EXPECT_EQ(n[map.silence_id()], static_cast<int>(std::ceil(kw * 0.1)));
  auto again = make_eval_set(index, map, Split::kTrain, p, &bg, 4);
  ASSERT_EQ(again.size(), items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(items[i].entry, again[i].entry);
    EXPECT_EQ(items[i].samples, again[i].samples);
  }
}

}  // namespace
}  // namespace orthokws
