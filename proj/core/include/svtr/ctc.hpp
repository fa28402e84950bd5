#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "svtr/tensor.hpp"

namespace svtr {

inline constexpr int kBlank = 0;

/// Class indices of one transcription; never contains the blank.
struct LabelSeq {
  std::vector<int> indices;

  std::size_t size() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }
  friend bool operator==(const LabelSeq&, const LabelSeq&) = default;
};

/// Fewest steps any alignment of `label` needs: one per symbol plus a
/// separating blank between equal neighbours.
std::size_t ctc_min_steps(const LabelSeq& label);

/// Merge consecutive repeats, then drop blanks.
LabelSeq collapse(std::span<const int> path);

/// Per row: argmax over classes (ties to the lower index), then collapse.
template <typename T>
std::vector<LabelSeq> greedy_decode(const BasicTensor<T>& logits);

/// Argmax path of each row, before collapsing.
template <typename T>
std::vector<std::vector<int>> best_path(const BasicTensor<T>& logits);

/// Negative log-likelihood of one label under per-step log-probabilities
/// laid out [T, N]. Requires ctc_min_steps(label) <= T.
template <typename T>
double ctc_nll(std::span<const T> log_probs, std::size_t steps, std::size_t classes,
               const LabelSeq& label);

/// Mean over the batch of per-sample CTC negative log-likelihood.
/// log_probs is [b, T, N] of log-softmax rows. The gradient with respect to
/// log_probs comes from the alpha-beta posteriors.
template <typename T>
BasicTensor<T> ctc_loss(const BasicTensor<T>& log_probs, const std::vector<LabelSeq>& labels);

struct EditScore {
  bool exact = false;
  double norm_edit_sim = 0.0;  // 1 - levenshtein / max(len); 1 for two empty sequences
};

std::size_t levenshtein(std::span<const int> a, std::span<const int> b);
EditScore edit_accuracy(const LabelSeq& pred, const LabelSeq& truth);

}  // namespace svtr
