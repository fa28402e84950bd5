#include "svtr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "svtr/error.hpp"
#include "svtr/graph.hpp"

namespace svtr {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

std::vector<int> extend_with_blanks(const LabelSeq& label) {
  std::vector<int> ext(2 * label.size() + 1, kBlank);
  for (std::size_t i = 0; i < label.size(); ++i) ext[2 * i + 1] = label.indices[i];
  return ext;
}

bool can_skip(const std::vector<int>& ext, std::size_t s) {
  return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
}

void check_label(const LabelSeq& label, std::size_t steps, std::size_t classes,
                 std::size_t sample) {
  const std::size_t needed = ctc_min_steps(label);
  SVTR_REQUIRE(needed <= steps, ErrorKind::kFeasibility,
               "sample " + std::to_string(sample) + ": label of length " +
                   std::to_string(label.size()) + " needs " + std::to_string(needed) +
                   " steps, only " + std::to_string(steps) + " available");
  for (int c : label.indices)
    SVTR_REQUIRE(c >= 1 && static_cast<std::size_t>(c) < classes, ErrorKind::kContract,
                 "sample " + std::to_string(sample) + ": class index " + std::to_string(c) +
                     " outside [1," + std::to_string(classes - 1) + "]");
}

struct Lattice {
  std::vector<int> ext;
  std::vector<double> alpha;  // [T, S], includes the emission at t
  double log_likelihood = kNegInf;
};

template <typename T>
Lattice forward_lattice(std::span<const T> lp, std::size_t steps, std::size_t classes,
                        const LabelSeq& label) {
  Lattice lat;
  lat.ext = extend_with_blanks(label);
  const std::size_t S = lat.ext.size();
  lat.alpha.assign(steps * S, kNegInf);
  auto emit = [&](std::size_t t, std::size_t s) {
    return static_cast<double>(lp[t * classes + static_cast<std::size_t>(lat.ext[s])]);
  };
  lat.alpha[0] = emit(0, 0);
  if (S > 1) lat.alpha[1] = emit(0, 1);
  for (std::size_t t = 1; t < steps; ++t) {
    const double* prev = lat.alpha.data() + (t - 1) * S;
    double* cur = lat.alpha.data() + t * S;
    for (std::size_t s = 0; s < S; ++s) {
      double acc = prev[s];
      if (s >= 1) acc = log_add(acc, prev[s - 1]);
      if (can_skip(lat.ext, s)) acc = log_add(acc, prev[s - 2]);
      cur[s] = acc == kNegInf ? kNegInf : acc + emit(t, s);
    }
  }
  const double* last = lat.alpha.data() + (steps - 1) * S;
  lat.log_likelihood = S > 1 ? log_add(last[S - 1], last[S - 2]) : last[0];
  return lat;
}

// d(-log p)/d(log_probs) for one sample, [T, N].
template <typename T>
std::vector<double> lattice_gradient(std::span<const T> lp, std::size_t steps,
                                     std::size_t classes, const Lattice& lat) {
  const std::size_t S = lat.ext.size();
  std::vector<double> beta(steps * S, kNegInf);  // excludes the emission at t
  beta[(steps - 1) * S + S - 1] = 0.0;
  if (S > 1) beta[(steps - 1) * S + S - 2] = 0.0;
  auto emit = [&](std::size_t t, std::size_t s) {
    return static_cast<double>(lp[t * classes + static_cast<std::size_t>(lat.ext[s])]);
  };
  for (std::size_t t = steps - 1; t-- > 0;) {
    const double* next = beta.data() + (t + 1) * S;
    double* cur = beta.data() + t * S;
    for (std::size_t s = 0; s < S; ++s) {
      double acc = next[s] == kNegInf ? kNegInf : next[s] + emit(t + 1, s);
      if (s + 1 < S && next[s + 1] != kNegInf) acc = log_add(acc, next[s + 1] + emit(t + 1, s + 1));
      if (s + 2 < S && can_skip(lat.ext, s + 2) && next[s + 2] != kNegInf)
        acc = log_add(acc, next[s + 2] + emit(t + 1, s + 2));
      cur[s] = acc;
    }
  }
  std::vector<double> grad(steps * classes, 0.0);
  std::vector<double> occupancy(classes);
  for (std::size_t t = 0; t < steps; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kNegInf);
    for (std::size_t s = 0; s < S; ++s) {
      const std::size_t k = static_cast<std::size_t>(lat.ext[s]);
      occupancy[k] = log_add(occupancy[k], lat.alpha[t * S + s] + beta[t * S + s]);
    }
    for (std::size_t k = 0; k < classes; ++k)
      if (occupancy[k] != kNegInf)
        grad[t * classes + k] = -std::exp(occupancy[k] - lat.log_likelihood);
  }
  return grad;
}

}  // namespace

std::size_t ctc_min_steps(const LabelSeq& label) {
  std::size_t n = label.size();
  for (std::size_t i = 1; i < label.size(); ++i)
    if (label.indices[i] == label.indices[i - 1]) ++n;
  return n;
}

LabelSeq collapse(std::span<const int> path) {
  LabelSeq out;
  int previous = -1;
  for (int c : path) {
    if (c != previous && c != kBlank) out.indices.push_back(c);
    previous = c;
  }
  return out;
}

template <typename T>
std::vector<std::vector<int>> best_path(const BasicTensor<T>& logits) {
  SVTR_REQUIRE(logits.rank() == 3 && logits.dim(2) >= 2, ErrorKind::kShape,
               "greedy decoding expects [b,T,N] with N >= 2, got " + shape_str(logits.shape()));
  const std::size_t b = logits.dim(0), steps = logits.dim(1), classes = logits.dim(2);
  std::vector<std::vector<int>> paths(b, std::vector<int>(steps));
  const T* d = logits.data().data();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t t = 0; t < steps; ++t) {
      const T* row = d + (i * steps + t) * classes;
      std::size_t best = 0;
      for (std::size_t k = 1; k < classes; ++k)
        if (row[k] > row[best]) best = k;
      paths[i][t] = static_cast<int>(best);
    }
  return paths;
}

template <typename T>
std::vector<LabelSeq> greedy_decode(const BasicTensor<T>& logits) {
  std::vector<LabelSeq> out;
  for (const auto& path : best_path(logits)) out.push_back(collapse(path));
  return out;
}

template <typename T>
double ctc_nll(std::span<const T> log_probs, std::size_t steps, std::size_t classes,
               const LabelSeq& label) {
  SVTR_REQUIRE(log_probs.size() == steps * classes && steps > 0, ErrorKind::kShape,
               "ctc_nll: expected " + std::to_string(steps * classes) + " values");
  check_label(label, steps, classes, 0);
  return -forward_lattice(log_probs, steps, classes, label).log_likelihood;
}

template <typename T>
BasicTensor<T> ctc_loss(const BasicTensor<T>& log_probs, const std::vector<LabelSeq>& labels) {
  SVTR_REQUIRE(log_probs.rank() == 3, ErrorKind::kShape,
               "ctc_loss expects log_probs [b,T,N], got " + shape_str(log_probs.shape()));
  const std::size_t batch = log_probs.dim(0), steps = log_probs.dim(1),
                    classes = log_probs.dim(2);
  SVTR_REQUIRE(labels.size() == batch, ErrorKind::kShape,
               "ctc_loss: " + std::to_string(labels.size()) + " labels for a batch of " +
                   std::to_string(batch));
  for (std::size_t i = 0; i < batch; ++i) check_label(labels[i], steps, classes, i);

  const bool track = Graph::active() != nullptr && log_probs.requires_grad();
  std::vector<double> grad;
  if (track) grad.assign(log_probs.numel(), 0.0);
  double total = 0.0;
  const std::size_t stride = steps * classes;
  for (std::size_t i = 0; i < batch; ++i) {
    auto lp = log_probs.data().subspan(i * stride, stride);
    const Lattice lat = forward_lattice(lp, steps, classes, labels[i]);
    total -= lat.log_likelihood;
    if (track) {
      const auto g = lattice_gradient(lp, steps, classes, lat);
      std::copy(g.begin(), g.end(), grad.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  auto out = BasicTensor<T>::scalar(static_cast<T>(total * inv_batch));
  if (track) {
    out.set_requires_grad(true);
    Graph::Node node;
    node.op = "ctc_loss";
    node.inputs = {log_probs.id()};
    node.output = out.id();
    node.backward = [o = out.impl(), in = log_probs.impl(), grad = std::move(grad), inv_batch]() {
      in->ensure_grad();
      if (o->grad.empty()) return;
      const double upstream = static_cast<double>(o->grad[0]) * inv_batch;
      for (std::size_t j = 0; j < grad.size(); ++j)
        in->grad[j] += static_cast<T>(grad[j] * upstream);
    };
    Graph::active()->record(std::move(node));
  }
  return out;
}

std::size_t levenshtein(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

EditScore edit_accuracy(const LabelSeq& pred, const LabelSeq& truth) {
  EditScore score;
  score.exact = pred == truth;
  const std::size_t longest = std::max(pred.size(), truth.size());
  score.norm_edit_sim =
      longest == 0 ? 1.0
                   : 1.0 - static_cast<double>(levenshtein(pred.indices, truth.indices)) /
                               static_cast<double>(longest);
  return score;
}

#define SVTR_INSTANTIATE_CTC(T)                                                              \
  template std::vector<std::vector<int>> best_path(const BasicTensor<T>&);                   \
  template std::vector<LabelSeq> greedy_decode(const BasicTensor<T>&);                       \
  template double ctc_nll(std::span<const T>, std::size_t, std::size_t, const LabelSeq&);    \
  template BasicTensor<T> ctc_loss(const BasicTensor<T>&, const std::vector<LabelSeq>&);

SVTR_INSTANTIATE_CTC(float)
SVTR_INSTANTIATE_CTC(double)

#undef SVTR_INSTANTIATE_CTC

}  // namespace svtr
