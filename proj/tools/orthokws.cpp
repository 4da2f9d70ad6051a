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

// orthokws command line: dataset indexing, training, noisy evaluation,
// gradient checks, model accounting and SNR mixing.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "orthokws/audio.hpp"
#include "orthokws/checkpoint.hpp"
#include "orthokws/config.hpp"
#include "orthokws/dataset.hpp"
#include "orthokws/evaluate.hpp"
#include "orthokws/gradcheck_suite.hpp"
#include "orthokws/models.hpp"
#include "orthokws/trainer.hpp"

namespace fs = std::filesystem;
using namespace orthokws;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

DatasetIndex load_dataset(const TrainConfig& cfg) {
  if (!cfg.index.empty()) return read_index(cfg.index);
  if (cfg.data_root.empty()) throw ConfigError("config sets neither data_root nor index");
  return scan_dataset(cfg.data_root);
}

std::optional<NoisePool> background_pool(const DatasetIndex& index) {
  if (index.noise_files.empty()) return std::nullopt;
  return build_noise_pool(index.noise_files, std::cerr);
}

int cmd_prepare(const std::string& root, std::string out) {
  const DatasetIndex index = scan_dataset(root);
  if (out.empty()) out = (fs::path(root) / "orthokws_index.tsv").string();
  write_index(index, out);
  std::map<std::string, std::size_t> words;
  for (const auto& e : index.entries) ++words[e.word];
  std::cout << "index: " << out << '\n'
            << "words: " << words.size() << '\n'
            << "train: " << index.count(Split::kTrain) << '\n'
            << "val: " << index.count(Split::kVal) << '\n'
            << "test: " << index.count(Split::kTest) << '\n'
            << "background: " << index.noise_files.size() << '\n';
  return kOk;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              std::size_t repeats) {
  TrainConfig base = load_config(config_path);
  if (seed) base.seed = *seed;
  if (repeats == 0) throw UsageError("--repeats must be at least 1");
  const DatasetIndex index = load_dataset(base);
  const auto bg = background_pool(index);
  for (std::size_t r = 0; r < repeats; ++r) {
    TrainConfig cfg = base;
    cfg.seed = base.seed + r;
    if (repeats > 1) {
      cfg.checkpoint_dir = (fs::path(base.checkpoint_dir) / ("run" + std::to_string(r))).string();
    }
    fs::create_directories(cfg.checkpoint_dir);
    save_config(cfg, (fs::path(cfg.checkpoint_dir) / "config.txt").string());
    const ClassMap map(cfg.keywords);
    const BatchSampler sampler(index, map, Split::kTrain, cfg.augment_policy(),
                               bg ? &*bg : nullptr);
    KwsModel model = make_model(cfg);
    Trainer trainer(cfg, model, sampler_source(sampler, cfg.batch_size));
    trainer.on_step = [&](const StepRecord& s) {
      if (s.step % 100 == 0 || s.step == cfg.total_steps) {
        std::fprintf(stderr, "seed %llu step %zu lr %.3g loss %.5f (ce %.5f)\n",
                     static_cast<unsigned long long>(cfg.seed), s.step, s.lr, s.l_total, s.l_ce);
      }
    };
    const auto res = trainer.run();
    std::cout << res.final_checkpoint << '\n';
  }
  return kOk;
}

std::vector<std::string> checkpoint_list(const std::string& path) {
  if (!fs::is_directory(path)) return {path};
  if (fs::exists(fs::path(path) / "final.ckpt")) return {(fs::path(path) / "final.ckpt").string()};
  std::vector<std::string> out;
  for (const auto& d : fs::directory_iterator(path)) {
    const auto f = d.path() / "final.ckpt";
    if (d.is_directory() && d.path().filename().string().starts_with("run") && fs::exists(f)) {
      out.push_back(f.string());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw CheckpointError("no final.ckpt under '" + path + "'");
  return out;
}

void write_text(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw IngestionError("cannot write '" + path + "'");
  f << text;
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path,
             std::optional<std::uint64_t> seed, std::size_t repeats, const std::string& out) {
  const TrainConfig cfg = load_config(config_path);
  if (repeats == 0) throw UsageError("--repeats must be at least 1");
  const std::uint64_t base_seed = seed.value_or(cfg.seed);
  const DatasetIndex index = load_dataset(cfg);
  const auto bg = background_pool(index);
  const auto noise = load_noise_sets(cfg.noise_dirs, std::cerr);
  std::vector<EvalReport> reports;
  for (const auto& path : checkpoint_list(ckpt_path)) {
    const Checkpoint ck = load_checkpoint(path);
    const KwsModel model = model_from_checkpoint(ck);
    const ClassMap map(detail::split_list(ck.meta.at("keywords")));
    for (std::size_t r = 0; r < repeats; ++r) {
      EvalOptions opt;
      opt.snr_grid = cfg.snr_grid;
      opt.batch_size = cfg.eval_batch_size;
      opt.seed = base_seed + r;
      opt.checkpoint = path;
      const auto items = make_eval_set(index, map, parse_split(cfg.eval_split),
                                       cfg.augment_policy(), bg ? &*bg : nullptr, opt.seed);
      reports.push_back(evaluate(model, load_eval_inputs(index, items), noise, opt));
      std::fprintf(stderr, "checkpoint %s seed %llu average %.4f\n", path.c_str(),
                   static_cast<unsigned long long>(opt.seed), reports.back().average_pct);
    }
  }
  if (reports.size() == 1) {
    write_text(report_csv(reports[0]), out);
    return kOk;
  }
  if (!out.empty()) {
    const fs::path p(out);
    for (std::size_t k = 0; k < reports.size(); ++k) {
      const auto leaf = p.stem().string() + "_" + std::to_string(k) + p.extension().string();
      write_text(report_csv(reports[k]), (p.parent_path() / leaf).string());
    }
  }
  write_text(summary_csv(summarize(reports)), out);
  return kOk;
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed, bool inject_fault) {
  if (scope != "ops" && scope != "losses" && scope != "models" && scope != "all") {
    throw UsageError("unknown scope '" + scope + "' (expected ops, losses, models or all)");
  }
  auto cases = gradcheck_cases(scope);
  if (inject_fault) cases.push_back(corrupted_case());
  bool ok = true;
  std::printf("%-28s %14s  %s\n", "case", "max_rel_error", "result");
  for (const auto& r : run_gradcheck(cases, seed)) {
    std::printf("%-28s %14.3e  %s\n", r.name.c_str(), r.max_rel_error, r.pass ? "pass" : "FAIL");
    ok = ok && r.pass;
  }
  return ok ? kOk : kNumeric;
}

int cmd_count(const std::string& name, std::size_t frames) {
  const auto opt = model_by_name(name);
  if (!opt) throw UsageError("unknown model '" + name + "' (expected tenet12 or ldy-tenet12)");
  const KwsModel model(*opt, 0);
  const FlopCount inf = model.flops(frames, true), train = model.flops(frames, false);
  std::cout << "model: " << name << '\n'
            << "frames: " << frames << '\n'
            << "params: " << count_params(model, true) << '\n'
            << "flops: " << inf.flops() << '\n'
            << "macs: " << inf.macs << '\n'
            << "training_params: " << count_params(model, false) << '\n'
            << "training_flops: " << train.flops() << '\n';
  return kOk;
}

int cmd_mix(const std::string& in, const std::string& noise, double snr, const std::string& out,
            std::uint64_t seed) {
  const Clip signal = read_wav(in);
  const Clip n = read_wav(noise);
  Rng rng = make_rng(seed, Stream::kNoise);
  const MixResult m = mix_at_snr(signal, n, snr, rng);
  write_wav(out, m.mixed);
  std::cout << "gain: " << detail::format_real(m.gain) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"orthokws: keyword spotting with dynamic filters and embedding losses"};
  app.require_subcommand(1);

  std::string root, out, config, ckpt, scope = "all", model, in_wav, noise_wav, out_wav;
  std::optional<std::uint64_t> seed;
  std::uint64_t gc_seed = 0, mix_seed = 0;
  std::size_t repeats = 1, frames = 98;
  double snr = 0;
  bool inject_fault = false;

  auto* prepare = app.add_subcommand("prepare", "Scan a dataset root and write the index cache");
  prepare->add_option("root", root, "Dataset root")->required();
  prepare->add_option("--out", out, "Index path (default <root>/orthokws_index.tsv)");

  auto* train = app.add_subcommand("train", "Train from a config file");
  train->add_option("config", config, "Config file")->required();
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--repeats", repeats, "Independent runs with seeds seed..seed+N-1");

  auto* eval = app.add_subcommand("eval", "Evaluate on clean and noisy test conditions");
  eval->add_option("checkpoint", ckpt, "Checkpoint file, or a directory of run*/final.ckpt")
      ->required();
  eval->add_option("config", config, "Config file")->required();
  eval->add_option("--seed", seed, "Evaluation seed (default: config seed)");
  eval->add_option("--repeats", repeats, "Evaluation seeds per checkpoint");
  eval->add_option("--out", out, "Report CSV path (default stdout)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("scope", scope, "ops, losses, models or all");
  gradcheck->add_option("--seed", gc_seed, "Probe seed");
  gradcheck->add_flag("--inject-fault", inject_fault)->group("");

  auto* count = app.add_subcommand("count", "Parameter and FLOP counts");
  count->add_option("model", model, "tenet12 or ldy-tenet12")->required();
  count->add_option("--frames", frames, "Input frames")->check(CLI::PositiveNumber);

  auto* mix = app.add_subcommand("mix", "Mix a noise file into a clip at a given SNR");
  mix->add_option("in", in_wav, "Input wav")->required();
  mix->add_option("noise", noise_wav, "Noise wav")->required();
  mix->add_option("snr_db", snr, "Target SNR in dB")->required();
  mix->add_option("out", out_wav, "Output wav")->required();
  mix->add_option("--seed", mix_seed, "Noise offset seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*prepare) return cmd_prepare(root, out);
    if (*train) return cmd_train(config, seed, repeats);
    if (*eval) return cmd_eval(ckpt, config, seed, repeats, out);
    if (*gradcheck) return cmd_gradcheck(scope, gc_seed, inject_fault);
    if (*count) return cmd_count(model, frames);
    if (*mix) return cmd_mix(in_wav, noise_wav, snr, out_wav, mix_seed);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const UsageError& e) {
    std::cerr << "usage: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "data: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
