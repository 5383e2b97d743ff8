// Copyright 2026 The vseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Mini-batch training with synchronous data parallelism, inference and Dice
// evaluation.
//
// Each iteration samples a batch with replacement, shards it over W worker
// replicas, and lets every worker run forward + backward on its shard. Batch
// statistics (BN moments, pseudo-Dice sums) are all-reduced across workers, so
// the loss is the pseudo-Dice of the whole batch and the per-worker gradients
// are partial sums of its gradient. The coordinator adds them in worker order
// and applies one Adam step.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "vseg/adam.hpp"
#include "vseg/augment.hpp"
#include "vseg/error.hpp"
#include "vseg/network.hpp"
#include "vseg/objective.hpp"
#include "vseg/reducer.hpp"
#include "vseg/rng.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct TrainConfig {
  std::size_t iterations = 1000;
  std::size_t batch_size = 4;
  std::size_t workers = 4;
  std::size_t eval_every = 50;
  bool augmentation = true;
  bool bn_recalibrate = true;  // re-estimate running statistics before each evaluation
  std::uint64_t seed = 0;
  NetworkConfig network;
  AdamHyper adam;
  AugmentParams augment;

  void validate() const {
    if (iterations < 1) throw UsageError("train.iterations must be >= 1");
    if (batch_size < 1) throw UsageError("train.batch_size must be >= 1");
    if (workers < 1) throw UsageError("train.workers must be >= 1");
    if (batch_size % workers != 0)
      throw UsageError("train.batch_size " + std::to_string(batch_size) + " is not divisible by train.workers " +
                       std::to_string(workers));
    network.validate();
    adam.validate();
    augment.validate();
  }
};

/// A preprocessed case at the network input size.
struct Case {
  std::string id;
  ImageVolume image;
  LabelVolume label;
};

struct MetricRow {
  std::size_t iteration = 0;
  double loss = 0.0;               // mean training loss since the previous row
  double train_dice = 0.0;         // thresholded, Infer mode
  double test_dice = 0.0;
  double seconds = 0.0;
  double train_pseudo_dice = 0.0;  // soft predictions, Infer mode
};

struct MetricLog {
  std::vector<MetricRow> rows;

  void append(const MetricRow& r) {
    if (!rows.empty() && r.iteration <= rows.back().iteration)
      throw ContractError("metric log: iteration " + std::to_string(r.iteration) + " does not increase");
    rows.push_back(r);
  }

  std::string to_csv() const {
    std::string out = "iteration,loss,train_dice,test_dice,seconds,train_pseudo_dice\n";
    char line[256];
    for (const MetricRow& r : rows) {
      std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.3f,%.9g\n", r.iteration, r.loss, r.train_dice,
                    r.test_dice, r.seconds, r.train_pseudo_dice);
      out += line;
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Evaluation primitives

/// 1 where p >= t, else 0.
template <class T>
LabelVolume threshold(const Volume<T>& prob, double t = 0.5) {
  LabelVolume out(prob.dims, 0, prob.spacing);
  for (std::size_t i = 0; i < prob.size(); ++i) out.values[i] = static_cast<double>(prob.values[i]) >= t ? 1 : 0;
  return out;
}

/// 2|A n B| / (|A| + |B|); two empty masks score 1.
inline double dice_score(const LabelVolume& pred, const LabelVolume& label) {
  if (!pred.same_shape(label))
    throw ContractError("dice: shape mismatch " + dims_str(pred.dims) + " vs " + dims_str(label.dims));
  check_binary(pred, "dice prediction");
  check_binary(label, "dice label");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    a += pred.values[i];
    b += label.values[i];
    both += pred.values[i] & label.values[i];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

struct EvalStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  std::vector<std::pair<std::string, double>> per_case;
};

inline EvalStats summarize(std::vector<std::pair<std::string, double>> scores) {
  if (scores.empty()) throw ContractError("evaluate: no cases");
  EvalStats s;
  s.min = s.max = scores.front().second;
  double sum = 0.0;
  for (const auto& [id, v] : scores) {
    sum += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = sum / double(scores.size());
  double var = 0.0;
  for (const auto& [id, v] : scores) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / double(scores.size()));
  s.per_case = std::move(scores);
  return s;
}

/// "mean ± std [min, max]" in percent with one decimal.
inline std::string format_stats(const EvalStats& s) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.1f ± %.1f [%.1f, %.1f]", 100.0 * s.mean, 100.0 * s.std, 100.0 * s.min,
                100.0 * s.max);
  return buf;
}

/// Inverse of format_stats, values back in percent.
inline std::array<double, 4> parse_stats(const std::string& line) {
  std::array<double, 4> v{};
  const std::string pm = "±";
  const auto p = line.find(pm);
  if (p == std::string::npos) throw UsageError("stats line lacks '±': " + line);
  std::string rest = line.substr(0, p) + " " + line.substr(p + pm.size());
  std::replace(rest.begin(), rest.end(), '[', ' ');
  std::replace(rest.begin(), rest.end(), ']', ' ');
  std::replace(rest.begin(), rest.end(), ',', ' ');
  std::istringstream in(rest);
  for (double& x : v)
    if (!(in >> x)) throw UsageError("malformed stats line: " + line);
  return v;
}

// ---------------------------------------------------------------------------
// Tensors from volumes

template <class T, class V>
Tensor5<T> stack_volumes(const std::vector<const Volume<V>*>& vols) {
  if (vols.empty()) throw ContractError("stack: no volumes");
  const auto dims = vols.front()->dims;
  Tensor5<T> t(Shape5{vols.size(), 1, dims[0], dims[1], dims[2]});
  for (std::size_t n = 0; n < vols.size(); ++n) {
    if (vols[n]->dims != dims) throw ContractError("stack: volume shapes differ");
    std::transform(vols[n]->values.begin(), vols[n]->values.end(), t.channel(n, 0).begin(),
                   [](V x) { return static_cast<T>(x); });
  }
  return t;
}

/// Infer-mode probability map of one volume.
template <class T>
ImageVolume infer(const Network<T>& net, const ImageVolume& image) {
  const Tensor5<T> out = net.infer(stack_volumes<T>(std::vector<const ImageVolume*>{&image}));
  ImageVolume prob(image.dims, 0.0f, image.spacing);
  std::transform(out.data(), out.data() + out.size(), prob.values.begin(), [](T x) { return static_cast<float>(x); });
  return prob;
}

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `threads` threads; rethrows the first failure.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

struct CaseScores {
  std::vector<std::pair<std::string, double>> dice;
  double mean_pseudo_dice = 0.0;
};

template <class T>
CaseScores score_cases(const Network<T>& net, const std::vector<Case>& cases, std::size_t threads = 1) {
  std::vector<double> dice(cases.size()), soft(cases.size());
  detail::parallel_for(cases.size(), threads, [&](std::size_t i) {
    const ImageVolume prob = infer(net, cases[i].image);
    dice[i] = dice_score(threshold(prob), cases[i].label);
    DiceSums s;
    for (std::size_t k = 0; k < prob.size(); ++k) {
      const double p = prob.values[k], g = cases[i].label.values[k];
      s.intersection += p * g;
      s.pred_sq += p * p;
      s.target_sq += g * g;
    }
    soft[i] = s.score();
  });
  CaseScores out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    out.dice.emplace_back(cases[i].id, dice[i]);
    out.mean_pseudo_dice += soft[i] / double(cases.size());
  }
  return out;
}

/// infer -> threshold -> Dice for every case.
template <class T>
EvalStats evaluate(const Network<T>& net, const std::vector<Case>& cases, std::size_t threads = 1) {
  return summarize(score_cases(net, cases, threads).dice);
}

// ---------------------------------------------------------------------------
// Training

/// One batch entry after optional augmentation.
struct BatchItem {
  const ImageVolume* image;
  const LabelVolume* label;
  AugmentedPair augmented;
};

template <class T>
class Trainer {
 public:
  Trainer(TrainConfig config, Network<T> initial)
      : config_(std::move(config)), master_(std::move(initial)), group_(config_.workers) {
    config_.validate();
    require(master_.config() == config_.network, "trainer: network does not match the training configuration");
    for (std::size_t w = 0; w < config_.workers; ++w) replicas_.push_back(master_);
  }

  /// Indices of the batch drawn at `iteration` (with replacement).
  std::vector<std::size_t> sample_batch(std::size_t iteration, std::size_t cases) const {
    Rng rng = make_rng(config_.seed, {streams::kBatch, iteration});
    std::uniform_int_distribution<std::size_t> pick(0, cases - 1);
    std::vector<std::size_t> idx(config_.batch_size);
    for (std::size_t& i : idx) i = pick(rng);
    return idx;
  }

  /// Forward + backward of one batch across the workers; leaves the summed
  /// gradient in the master parameters and returns the batch loss. Running
  /// statistics of the master are taken from worker 0.
  double compute_gradients(const std::vector<std::size_t>& batch, const std::vector<Case>& cases,
                           std::size_t iteration) {
    const std::size_t W = config_.workers;
    const std::size_t shard = config_.batch_size / W;
    require(batch.size() == config_.batch_size, "trainer: batch size mismatch");
    std::vector<double> loss(W, 0.0);
    std::vector<std::exception_ptr> failure(W);
    auto work = [&](std::size_t w) {
      try {
        Network<T>& net = replicas_[w];
        net.zero_grad();
        std::vector<const ImageVolume*> images;
        std::vector<const LabelVolume*> labels;
        std::vector<AugmentedPair> augmented;
        augmented.reserve(shard);
        for (std::size_t s = 0; s < shard; ++s) {
          const std::size_t slot = w * shard + s;
          const Case& c = cases.at(batch[slot]);
          if (config_.augmentation) {
            augmented.push_back(augment_pair(c.image, c.label, config_.augment,
                                             stream_seed(config_.seed, {streams::kAugment, iteration, slot})));
            images.push_back(&augmented.back().image);
            labels.push_back(&augmented.back().label);
          } else {
            images.push_back(&c.image);
            labels.push_back(&c.label);
          }
        }
        Tape<T> tape(W > 1 ? &group_.reducer(w) : nullptr);
        const Var x = tape.leaf(stack_volumes<T>(images));
        const Var p = net.forward(tape, x, Mode::Train);
        const Var l = pseudo_dice_loss(tape, p, stack_volumes<T>(labels));
        loss[w] = static_cast<double>(tape.value(l)[0]);
        tape.backward(l);
      } catch (...) {
        failure[w] = std::current_exception();
        if (W > 1) group_.leave();
      }
    };
    if (W == 1) {
      work(0);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < W; ++w) pool.emplace_back(work, w);
    }
    for (auto& f : failure)
      if (f) std::rethrow_exception(f);

    auto dst = master_.parameters();
    for (Parameter<T>* p : dst) p->zero_grad();
    for (std::size_t w = 0; w < W; ++w) {
      auto src = replicas_[w].parameters();
      for (std::size_t i = 0; i < dst.size(); ++i)
        if (src[i]->has_grad) dst[i]->accumulate(src[i]->grad.values());
    }
    auto bd = master_.batch_norms();
    auto bs = replicas_[0].batch_norms();
    for (std::size_t i = 0; i < bd.size(); ++i) {
      bd[i]->running_mean = bs[i]->running_mean;
      bd[i]->running_var = bs[i]->running_var;
      bd[i]->initialized = bs[i]->initialized;
    }
    return loss[0];
  }

  /// compute_gradients + Adam + replica refresh.
  double step(const std::vector<Case>& cases, std::size_t iteration) {
    if (cases.empty()) throw ContractError("trainer: no training cases");
    const double loss = compute_gradients(sample_batch(iteration, cases.size()), cases, iteration);
    auto params = master_.parameters();
    adam_step<T>(params, optimizer_, config_.adam);
    for (Network<T>& r : replicas_) r.assign_state(master_);
    return loss;
  }

  /// Replaces the running statistics with the average batch statistics of
  /// Train-mode forwards over `cases`, taken in order in chunks of the batch
  /// size, at the current weights.
  void recalibrate_batch_norm(const std::vector<Case>& cases) {
    if (cases.empty()) throw ContractError("trainer: no cases to recalibrate on");
    auto bns = master_.batch_norms();
    std::vector<double> momentum;
    for (BatchNorm<T>* b : bns) {
      momentum.push_back(b->momentum);
      b->initialized = false;
    }
    const std::size_t B = config_.batch_size;
    for (std::size_t start = 0, k = 1; start < cases.size(); start += B, ++k) {
      for (BatchNorm<T>* b : bns) b->momentum = double(k - 1) / double(k);
      std::vector<const ImageVolume*> images;
      for (std::size_t i = start; i < std::min(cases.size(), start + B); ++i) images.push_back(&cases[i].image);
      Tape<T> tape;
      master_.forward(tape, tape.leaf(stack_volumes<T>(images)), Mode::Train);
    }
    for (std::size_t i = 0; i < bns.size(); ++i) bns[i]->momentum = momentum[i];
    for (Network<T>& r : replicas_) r.assign_state(master_);
  }

  const Network<T>& network() const noexcept { return master_; }
  Network<T>& network() noexcept { return master_; }
  const AdamState<T>& optimizer() const noexcept { return optimizer_; }
  const TrainConfig& config() const noexcept { return config_; }

 private:
  TrainConfig config_;
  Network<T> master_;
  AdamState<T> optimizer_;
  std::vector<Network<T>> replicas_;
  WorkerGroup group_;
};

template <class T>
struct TrainResult {
  Network<T> network;
  AdamState<T> optimizer;
  MetricLog log;
  std::vector<double> losses;  // one per iteration
};

/// Full loop with evaluation every `eval_every` iterations and after the last.
template <class T = float>
TrainResult<T> train(const TrainConfig& config, const std::vector<Case>& train_cases,
                     const std::vector<Case>& test_cases,
                     const std::function<void(const MetricRow&)>& on_eval = nullptr) {
  config.validate();
  for (const auto* set : {&train_cases, &test_cases})
    for (const Case& c : *set) {
      const std::size_t n = config.network.input_size;
      if (c.image.dims != Dims3{n, n, n} || c.label.dims != Dims3{n, n, n})
        throw ContractError("train: case '" + c.id + "' is " + dims_str(c.image.dims) + ", expected " +
                            dims_str({n, n, n}));
    }
  Trainer<T> trainer(config, Network<T>::build(config.network, config.seed));
  TrainResult<T> result;
  const auto start = std::chrono::steady_clock::now();
  double window = 0.0;
  std::size_t window_count = 0;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    const double loss = trainer.step(train_cases, it);
    result.losses.push_back(loss);
    window += loss;
    ++window_count;
    const bool eval_now = (config.eval_every > 0 && it % config.eval_every == 0) || it == config.iterations;
    if (!eval_now) continue;
    MetricRow row;
    row.iteration = it;
    row.loss = window / double(window_count);
    window = 0.0;
    window_count = 0;
    if (config.bn_recalibrate) trainer.recalibrate_batch_norm(train_cases);
    const CaseScores tr = score_cases(trainer.network(), train_cases, config.workers);
    row.train_dice = summarize(tr.dice).mean;
    row.train_pseudo_dice = tr.mean_pseudo_dice;
    row.test_dice = test_cases.empty() ? 0.0 : evaluate(trainer.network(), test_cases, config.workers).mean;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.append(row);
    if (on_eval) on_eval(row);
  }
  result.network = trainer.network();
  result.optimizer = trainer.optimizer();
  return result;
}

}  // namespace vseg
