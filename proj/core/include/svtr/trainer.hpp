#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "svtr/ctc.hpp"
#include "svtr/model.hpp"
#include "svtr/optim.hpp"
#include "svtr/synth.hpp"

namespace svtr {

struct SampleResult {
  std::string id;
  LabelSeq truth;
  LabelSeq prediction;
  bool exact = false;
  double norm_edit_sim = 0.0;
};

struct EvalResult {
  double word_accuracy = 0.0;
  double norm_edit_sim = 0.0;
  std::vector<SampleResult> samples;
  std::vector<std::string> warnings;
};

/// Greedy-decodes every sample in eval mode; the model's previous mode is
/// restored afterwards. An empty dataset scores 0 with a warning.
EvalResult evaluate(SvtrModel& model, const std::vector<LabeledSample>& dataset,
                    std::size_t batch_size = 32);

/// [b,3,H,W] batch from samples[indices].
Tensor stack_images(const std::vector<LabeledSample>& samples, const std::vector<std::size_t>& indices);

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 42;
  std::optional<double> peak_lr;  // default: 5e-4 * batch / 2048
  std::size_t warmup_epochs = 2;
  std::optional<std::uint64_t> warmup_steps;  // overrides warmup_epochs
  AdamWParams adamw;
  double clip_norm = 5.0;  // <= 0 disables clipping
  /// Stop once held-out word accuracy reaches this value.
  std::optional<double> target_accuracy;
  /// When set, `last.ckpt` is written after every epoch and `best.ckpt`
  /// whenever held-out accuracy improves.
  std::filesystem::path checkpoint_dir;
  /// When set, metrics are appended here as JSON lines.
  std::filesystem::path log_path;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double mean_loss = 0.0;
  double word_accuracy = 0.0;
  double norm_edit_sim = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double best_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeded mini-batch training: forward, log-softmax, CTC, backward, clip,
/// AdamW with warmup-cosine schedule. Word accuracy is measured on
/// `heldout` after every epoch. Throws kDiverged on a non-finite loss.
TrainLog train(SvtrModel& model, const std::vector<LabeledSample>& dataset,
               const std::vector<LabeledSample>& heldout, const TrainOptions& options,
               const EpochCallback& on_epoch = {});

/// Deterministic split: the last `fraction` of a seeded permutation becomes
/// the held-out part.
std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split_dataset(
    const std::vector<LabeledSample>& dataset, double fraction, std::uint64_t seed);

}  // namespace svtr
