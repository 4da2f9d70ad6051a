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

#ifndef ORTHOKWS_TRAINER_HPP_
#define ORTHOKWS_TRAINER_HPP_

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "orthokws/checkpoint.hpp"
#include "orthokws/config.hpp"
#include "orthokws/dataset.hpp"
#include "orthokws/models.hpp"
#include "orthokws/objective.hpp"
#include "orthokws/optim.hpp"
#include "orthokws/random.hpp"

namespace orthokws {

struct StepRecord {
  std::size_t step = 0;
  double lr = 0, l_ce = 0, l_m = 0, l_i = 0, l_o = 0, l_total = 0;
};

inline constexpr const char* kLossLogHeader = "step,lr,l_ce,l_m,l_i,l_o,l_total";

inline std::string format_record(const StepRecord& r) {
  using detail::format_real;
  return std::to_string(r.step) + ',' + format_real(r.lr) + ',' + format_real(r.l_ce) + ',' +
         format_real(r.l_m) + ',' + format_real(r.l_i) + ',' + format_real(r.l_o) + ',' +
         format_real(r.l_total);
}

/// Builds the model named in the config, sized for its class map.
inline KwsModel make_model(const TrainConfig& c) {
  auto opt = model_by_name(c.model);
  if (!opt) throw ConfigError("unknown model '" + c.model + "'");
  opt->tenet.num_classes = static_cast<std::size_t>(ClassMap(c.keywords).num_classes());
  return KwsModel(*opt, c.seed);
}

/// Metadata recorded with every checkpoint so `eval` can rebuild the model.
inline void stamp_checkpoint(Checkpoint& ck, const TrainConfig& c, std::size_t step) {
  ck.meta["model"] = c.model;
  ck.meta["keywords"] = detail::join(c.keywords);
  ck.meta["seed"] = std::to_string(c.seed);
  ck.meta["step"] = std::to_string(step);
}

/// Rebuilds a model from a checkpoint written by the trainer.
inline KwsModel model_from_checkpoint(const Checkpoint& ck) {
  TrainConfig c;
  auto get = [&](const std::string& k) {
    auto it = ck.meta.find(k);
    if (it == ck.meta.end()) throw CheckpointError("checkpoint lacks meta key '" + k + "'");
    return it->second;
  };
  c.model = get("model");
  c.keywords = detail::split_list(get("keywords"));
  KwsModel m = make_model(c);
  load_weights(m, ck);
  return m;
}

using BatchSource = std::function<Batch(std::size_t step, Rng& rng)>;

struct TrainResult {
  std::vector<StepRecord> log;
  std::string final_checkpoint;
};

/// Runs cfg.total_steps Adam updates on the combined objective.
///
/// Each step draws one batch from `source`, which receives the data stream.
/// When cfg.checkpoint_dir is non-empty the loss log goes to loss_log.csv
/// there, weights are saved every cfg.checkpoint_every steps and at the end.
/// A non-finite loss, or a NumericError raised by the objective, stops the
/// run with NumericError after saving the current (pre-update) weights as
/// last_good.ckpt and a diagnostic dump.
class Trainer {
 public:
  Trainer(TrainConfig cfg, KwsModel& model, BatchSource source)
      : cfg_(std::move(cfg)), model_(model), source_(std::move(source)) {
    validate_config(cfg_);
    obj_.weights = cfg_.loss_weights();
    obj_.power_iters = cfg_.power_iters;
    obj_.ce_only = cfg_.ce_only;
  }

  std::function<void(const StepRecord&)> on_step;

  TrainResult run() {
    namespace fs = std::filesystem;
    const bool persist = !cfg_.checkpoint_dir.empty();
    std::ofstream log;
    if (persist) {
      fs::create_directories(cfg_.checkpoint_dir);
      log.open(dir("loss_log.csv"));
      if (!log) throw std::runtime_error("cannot write " + dir("loss_log.csv"));
      log << kLossLogHeader << '\n';
    }
    std::vector<Tensor> params = model_.tensors();
    AdamState adam;
    Rng data_rng = make_rng(cfg_.seed, Stream::kData);
    TrainResult result;
    for (std::size_t step = 1; step <= cfg_.total_steps; ++step) {
      const Batch batch = source_(step, data_rng);
      LossTerms t;
      StepRecord r{step, cfg_.lr_at(step)};
      try {
        t = objective(model_, batch.features, batch.labels, obj_);
      } catch (const NumericError& e) {
        if (persist) dump_failure(r, e.what());
        throw NumericError("step " + std::to_string(step) + ": " + e.what());
      }
      r.l_ce = t.ce.item();
      r.l_m = t.lm.item();
      r.l_i = t.li.item();
      r.l_o = t.lo.item();
      r.l_total = t.total.item();
      if (!std::isfinite(r.l_total)) {
        if (persist) dump_failure(r, "non-finite loss");
        throw NumericError("non-finite loss at step " + std::to_string(step) + " (" +
                           format_record(r) + ")");
      }
      zero_grads(params);
      backward(t.total);
      adam_step(params, adam, r.lr);
      result.log.push_back(r);
      if (persist) log << format_record(r) << '\n';
      if (on_step) on_step(r);
      if (persist && cfg_.checkpoint_every > 0 && step % cfg_.checkpoint_every == 0) {
        save(step, dir(step_name(step)));
      }
    }
    if (persist) {
      log.flush();
      result.final_checkpoint = dir("final.ckpt");
      save(cfg_.total_steps, result.final_checkpoint);
    }
    return result;
  }

  static std::string step_name(std::size_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%06zu.ckpt", step);
    return buf;
  }

 private:
  std::string dir(const std::string& leaf) const {
    return (std::filesystem::path(cfg_.checkpoint_dir) / leaf).string();
  }

  void save(std::size_t step, const std::string& path) const {
    Checkpoint ck = model_checkpoint(model_);
    stamp_checkpoint(ck, cfg_, step);
    save_checkpoint(ck, path);
  }

  void dump_failure(const StepRecord& r, const std::string& reason) const {
    bool finite_weights = true;
    std::ofstream d(dir("diagnostic.txt"));
    d << "failed_step = " << r.step << '\n'
      << "reason = " << reason << '\n'
      << kLossLogHeader << '\n'
      << format_record(r) << '\n';
    for (const auto& p : model_.parameters()) {
      double sq = 0;
      std::size_t bad = 0;
      for (double v : p.value.data()) {
        if (std::isfinite(v)) sq += v * v;
        else ++bad;
      }
      finite_weights = finite_weights && bad == 0;
      d << p.name << " norm = " << detail::format_real(std::sqrt(sq)) << " non_finite = " << bad
        << '\n';
    }
    if (finite_weights) save(r.step - 1, dir("last_good.ckpt"));
  }

  TrainConfig cfg_;
  KwsModel& model_;
  BatchSource source_;
  ObjectiveOptions obj_;
};

/// Batch source drawing augmented training batches from an indexed corpus.
inline BatchSource sampler_source(const BatchSampler& sampler, std::size_t batch_size) {
  return [&sampler, batch_size](std::size_t, Rng& rng) { return sampler.sample(batch_size, rng); };
}

}  // namespace orthokws

#endif  // ORTHOKWS_TRAINER_HPP_
