#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "pscn/network.hpp"
#include "pscn/optim.hpp"

namespace pscn {

/// One training example. The class label lives in cloud.label; part labels
/// (segmentation only) run parallel to cloud.positions.
struct Sample {
  PointCloud cloud;
  std::vector<int> part_labels;
};

struct TrainOptions {
  std::size_t epochs = 200;
  std::size_t batch_size = 24;
  AdamOptions adam;
  double lr_decay = 0.9;
  std::size_t lr_decay_every = 20;
  std::uint64_t seed = kDefaultSeed;
  // Stop once end-of-epoch training accuracy reaches this value.
  std::optional<double> stop_at_accuracy;
};

inline TrainOptions train_options(const NetworkConfig& c) {
  TrainOptions o;
  o.epochs = c.epochs;
  o.batch_size = c.batch_size;
  o.adam.lr = c.lr;
  o.adam.weight_decay = c.weight_decay;
  o.lr_decay = c.lr_decay;
  o.lr_decay_every = c.lr_decay_every;
  o.seed = c.seed;
  return o;
}

/// Step decay: base * decay^floor(epoch / every), epochs counted from 0.
inline double scheduled_lr(double base, double decay, std::size_t every, std::size_t epoch) {
  return base * std::pow(decay, static_cast<double>(epoch / every));
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;        // eval-mode mean loss over the training set after the epoch
  double accuracy = 0.0;    // eval-mode training accuracy after the epoch
  double train_loss = 0.0;  // mean loss seen during the epoch (train mode, with dropout)
};

inline std::span<const int> targets_of(const Model& model, const Sample& s) {
  if (model.config().task == Task::classify) {
    if (!s.cloud.label) throw InputError("classification sample without a label");
    return {&*s.cloud.label, 1};
  }
  if (s.part_labels.size() != s.cloud.size()) {
    throw InputError("segmentation sample needs one part label per point");
  }
  return s.part_labels;
}

// 1 x classes for classification, N x part_classes for segmentation.
inline Tensor sample_logits(Model& model, const Sample& s, Mode mode) {
  return model.config().task == Task::classify ? model.forward_classify(s.cloud, mode)
                                                : model.forward_segment(s.cloud, mode);
}

inline Tensor sample_loss(Model& model, const Sample& s, Mode mode) {
  const auto targets = targets_of(model, s);
  return cross_entropy(sample_logits(model, s, mode), targets);
}

inline std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

struct Evaluation {
  double loss = 0.0;      // mean per-sample loss
  double accuracy = 0.0;  // fraction of correct clouds (classification) or points (segmentation)
};

inline Evaluation evaluate(Model& model, std::span<const Sample> data) {
  Evaluation e;
  std::size_t hit = 0, total = 0;
  for (const auto& s : data) {
    const auto targets = targets_of(model, s);
    const Tensor logits = sample_logits(model, s, Mode::eval);
    e.loss += cross_entropy(logits, targets).item();
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < logits.dim(0); ++i) {
      hit += static_cast<int>(argmax_row(logits.data().subspan(i * k, k))) == targets[i];
      ++total;
    }
  }
  if (!data.empty()) e.loss /= static_cast<double>(data.size());
  e.accuracy = total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
  return e;
}

inline double evaluate_accuracy(Model& model, std::span<const Sample> data) {
  return evaluate(model, data).accuracy;
}

/// Mini-batch Adam training. Each cloud is forwarded and back-propagated on
/// its own with its loss scaled by 1/batch, so gradients equal the batch mean
/// while only one cloud's graph is alive at a time.
inline std::vector<EpochRecord> train(Model& model, std::span<const Sample> data, const TrainOptions& opt,
                                      const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (data.empty()) throw InputError("train: empty dataset");
  if (opt.batch_size == 0) throw ConfigError("train: batch size must be positive");
  auto named = model.parameters();
  std::vector<Tensor> params;
  for (auto& p : named) params.push_back(p.tensor);
  AdamState state = AdamState::for_params(params, opt.adam);
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> losses(data.size());
  std::vector<EpochRecord> history;

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    state.options.lr = scheduled_lr(opt.adam.lr, opt.lr_decay, opt.lr_decay_every, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opt.batch_size);
      const double inv = 1.0 / static_cast<double>(stop - start);
      model.zero_grad();
      for (std::size_t b = start; b < stop; ++b) {
        const Tensor loss = sample_loss(model, data[order[b]], Mode::train);
        losses[order[b]] = loss.item();
        scale(loss, inv).backward();
      }
      adam_step(params, state);
    }
    // Summed in dataset order so the record does not depend on the shuffle.
    const double train_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
    const Evaluation ev = evaluate(model, data);
    const EpochRecord rec{epoch, ev.loss, ev.accuracy, train_loss};
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (opt.stop_at_accuracy && rec.accuracy >= *opt.stop_at_accuracy) break;
  }
  return history;
}

/// `epoch,loss,accuracy` CSV with a header row.
inline void write_loss_history(std::ostream& os, std::span<const EpochRecord> history) {
  os << "epoch,loss,accuracy\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.10f,%.6f\n", r.epoch, r.loss, r.accuracy);
    os << buf;
  }
}

}  // namespace pscn
